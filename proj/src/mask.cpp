#include "batlas/mask.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <string>

#include "batlas/error.hpp"

namespace batlas {

namespace {

std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("mask dimension mismatch: " + std::to_string(a.width()) + "x" +
                          std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                          "x" + std::to_string(b.height()));
  }
}

// 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const double* f, double* d, int n, int* v, double* z) {
  auto intersect = [f](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
           (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InvalidArgument("negative mask dimensions");
  words_.assign(word_count(size()), fill ? ~std::uint64_t{0} : 0);
  clear_padding();
}

BinaryMask BinaryMask::from_bytes(int width, int height, std::span<const std::uint8_t> bytes) {
  BinaryMask m(width, height);
  if (bytes.size() != m.size()) throw InvalidArgument("mask byte count does not match dimensions");
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0) m.set(i);
  }
  return m;
}

void BinaryMask::clear_padding() {
  const std::size_t rem = size() & 63;
  if (rem != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool BinaryMask::is_empty() const {
  return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

std::optional<Box> BinaryMask::bounding_box() const {
  Box box{width_, height_, -1, -1};
  bool any = false;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!get(x, y)) continue;
      any = true;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  if (!any) return std::nullopt;
  return box;
}

BinaryMask BinaryMask::complement() const {
  BinaryMask out = *this;
  for (auto& w : out.words_) w = ~w;
  out.clear_padding();
  return out;
}

std::vector<std::uint8_t> BinaryMask::to_bytes() const {
  std::vector<std::uint8_t> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = test(i) ? 1 : 0;
  return out;
}

std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  std::size_t n = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) n += std::popcount(wa[i] & wb[i]);
  return n;
}

std::size_t union_count(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  std::size_t n = 0;
  auto wa = a.words();
  auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) n += std::popcount(wa[i] | wb[i]);
  return n;
}

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  bool current = false;
  std::uint32_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool v = mask.test(i);
    if (v != current) {
      runs.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

BinaryMask rle_decode(int width, int height, std::span<const std::uint32_t> runs) {
  BinaryMask mask(width, height);
  std::size_t pos = 0;
  bool value = false;
  for (auto run : runs) {
    if (pos + run > mask.size()) throw InvalidArgument("RLE runs overflow the mask");
    if (value) {
      for (std::size_t i = pos; i < pos + run; ++i) mask.set(i);
    }
    pos += run;
    value = !value;
  }
  if (pos != mask.size()) throw InvalidArgument("RLE runs do not cover the mask");
  return mask;
}

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  constexpr double kFar = 1e20;
  std::vector<double> grid(mask.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask.test(i) ? 0.0 : kFar;

  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f.data(), d.data(), h, v.data(), z.data());
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, f.begin());
    edt_1d(f.data(), row, w, v.data(), z.data());
  }
  return grid;
}

BinaryMask dilate_disk(const BinaryMask& mask, int radius) {
  if (radius < 0) throw InvalidArgument("negative morphology radius");
  if (radius == 0 || mask.is_empty()) return mask;
  const auto dist = squared_distance_transform(mask);
  const double r2 = static_cast<double>(radius) * radius;
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= r2) out.set(i);
  }
  return out;
}

BinaryMask erode_disk(const BinaryMask& mask, int radius) {
  if (radius < 0) throw InvalidArgument("negative morphology radius");
  if (radius == 0) return mask;
  // A pixel survives iff no background pixel (including the outside frame)
  // lies within the disk; pad by one pixel so the frame counts as background.
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  BinaryMask background(w, h, true);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.get(x, y)) background.set(x + 1, y + 1, false);
    }
  }
  const auto dist = squared_distance_transform(background);
  const double r2 = static_cast<double>(radius) * radius;
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (dist[static_cast<std::size_t>(y + 1) * w + x + 1] > r2) out.set(x, y);
    }
  }
  return out;
}

}  // namespace batlas
