#include "batlas/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "batlas/error.hpp"

namespace batlas {

namespace {

struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> samples;
};

std::string describe(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + describe(path));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Raster decode_pgm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw IoError("PGM header value too large in " + describe(path));
      ++pos;
      any = true;
    }
    if (!any) throw IoError("malformed PGM header in " + describe(path));
    return static_cast<int>(v);
  };
  Raster r;
  r.width = read_int();
  r.height = read_int();
  const int maxval = read_int();
  if (maxval < 1 || maxval > 65535) throw IoError("bad PGM maxval in " + describe(path));
  ++pos;  // single whitespace before the raster
  const std::size_t count = static_cast<std::size_t>(r.width) * r.height;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + count * bpp) throw IoError("truncated PGM raster in " + describe(path));
  r.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.samples[i] = bpp == 1 ? bytes[pos + i]
                            : static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) |
                                                         bytes[pos + 2 * i + 1]);
  }
  return r;
}

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->bytes->size()) png_error(png, "unexpected end of PNG data");
  std::copy_n(st->bytes->data() + st->pos, len, out);
  st->pos += len;
}

struct PngError {
  char message[256] = {0};
};

void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<PngError*>(png_get_error_ptr(png));
  std::snprintf(err->message, sizeof(err->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

Raster decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  PngError err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  if (!png) throw IoError("cannot initialise PNG reader");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("cannot initialise PNG reader");
  }
  PngReadState st{&bytes, 0};
  Raster r;
  std::vector<std::uint8_t> buf;
  std::vector<png_bytep> rows;
  int depth = 8;
  bool color = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode PNG " + describe(path) + ": " + err.message);
  }
  png_set_read_fn(png, &st, png_read_from_memory);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  color = (color_type & PNG_COLOR_MASK_COLOR) != 0;
  if (!color) {
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buf.resize(rowbytes * r.height);
    rows.resize(r.height);
    for (int y = 0; y < r.height; ++y) rows[y] = buf.data() + rowbytes * y;
    png_read_image(png, rows.data());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (color) throw IoError("color PNG not supported: " + describe(path));

  r.samples.resize(static_cast<std::size_t>(r.width) * r.height);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * r.width + x;
      r.samples[i] = depth == 16
                         ? static_cast<std::uint16_t>(rows[y][2 * x] | (rows[y][2 * x + 1] << 8))
                         : rows[y][x];
    }
  }
  return r;
}

Raster read_raster(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  throw IoError("unsupported image format (expected binary PGM or PNG): " + describe(path));
}

void write_png(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& samples) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write " + describe(path));
  PngError err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("cannot initialise PNG writer");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("cannot encode PNG " + describe(path) + ": " + err.message);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png,
                  const_cast<png_bytep>(samples.data() + static_cast<std::size_t>(y) * width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("write failed for " + describe(path));
}

void write_gray8(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint8_t>& samples) {
  if (path.extension() == ".png") {
    write_png(path, width, height, samples);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + describe(path));
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size()));
  if (!out) throw IoError("write failed for " + describe(path));
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  Raster r = read_raster(path);
  std::vector<double> data(r.samples.begin(), r.samples.end());
  return GrayImage(r.width, r.height, std::move(data));
}

BinaryMask read_mask(const std::filesystem::path& path) {
  Raster r = read_raster(path);
  BinaryMask mask(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (r.samples[i] != 0) mask.set(i);
  }
  return mask;
}

void write_image(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> samples(img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i]), 0L, 255L));
  }
  write_gray8(path, img.width(), img.height(), samples);
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> samples(mask.size());
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = mask.test(i) ? 255 : 0;
  write_gray8(path, mask.width(), mask.height(), samples);
}

}  // namespace batlas
