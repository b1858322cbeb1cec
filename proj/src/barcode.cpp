#include "batlas/barcode.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <sstream>

#include "batlas/error.hpp"

namespace batlas {

namespace {

struct CodeNames {
  CodeType type;
  std::string_view cli;
  std::string_view label;
};

constexpr CodeNames kNames[] = {
    {CodeType::kRbcLocal, "rbc-local", "RBC-LOCAL"},
    {CodeType::kRbcIncremental, "rbc-incr", "RBC-INCR"},
    {CodeType::kRbcGlobal, "rbc-global", "RBC-GLOBAL"},
    {CodeType::kLbp, "lbp", "LBP"},
};

const CodeNames& names_of(CodeType type) {
  for (const auto& n : kNames) {
    if (n.type == type) return n;
  }
  throw InvalidArgument("unknown code type");
}

void require_sinogram(const Sinogram& sino) {
  if (sino.num_angles < 1 || sino.bins_per_angle < 1 ||
      sino.values.size() != static_cast<std::size_t>(sino.num_angles) * sino.bins_per_angle) {
    throw InvalidArgument("malformed sinogram");
  }
}

Barcode empty_code(CodeType type, const Sinogram& sino) {
  return Barcode(type, sino.image_size, sino.num_angles, sino.values.size());
}

void threshold_into(Barcode& code, std::span<const double> values, double threshold,
                    std::size_t offset) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > threshold) code.set_bit(offset + i, true);
  }
}

}  // namespace

std::string_view code_type_cli_name(CodeType type) { return names_of(type).cli; }
std::string_view code_type_label(CodeType type) { return names_of(type).label; }

CodeType parse_code_type(std::string_view name) {
  for (const auto& n : kNames) {
    if (name == n.cli || name == n.label) return n.type;
  }
  throw InvalidArgument("unknown code type '" + std::string(name) + "'");
}

bool is_radon(CodeType type) { return type != CodeType::kLbp; }

std::size_t barcode_length(const BarcodeParams& params) {
  const auto n = static_cast<std::size_t>(params.norm_size);
  if (params.code == CodeType::kLbp) return (n - 2) * (n - 2) * 9;
  return static_cast<std::size_t>(params.num_angles) * radon_bin_count(params.norm_size);
}

Barcode::Barcode(CodeType type, int norm_size, int num_angles, std::size_t bit_len)
    : type_(type),
      norm_size_(norm_size),
      num_angles_(type == CodeType::kLbp ? 0 : num_angles),
      bit_len_(bit_len),
      words_((bit_len + 63) / 64, 0) {}

void Barcode::set_bit(std::size_t i, bool v) {
  const std::uint64_t mask = std::uint64_t{1} << (i & 63);
  if (v) {
    words_[i >> 6] |= mask;
  } else {
    words_[i >> 6] &= ~mask;
  }
}

std::size_t Barcode::popcount() const {
  std::size_t n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

std::vector<std::uint8_t> Barcode::to_bytes() const {
  std::vector<std::uint8_t> out((bit_len_ + 7) / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8)));
  }
  return out;
}

Barcode Barcode::from_bytes(const BarcodeParams& params, std::size_t bit_len,
                            std::span<const std::uint8_t> bytes) {
  if (bytes.size() != (bit_len + 7) / 8) throw InvalidArgument("barcode byte count mismatch");
  Barcode code(params.code, params.norm_size, params.num_angles, bit_len);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    code.words_[i / 8] |= static_cast<std::uint64_t>(bytes[i]) << (8 * (i % 8));
  }
  const std::size_t rem = bit_len & 63;
  if (rem != 0 && (code.words_.back() >> rem) != 0) {
    throw InvalidArgument("barcode padding bits are not zero");
  }
  return code;
}

double nonzero_median(std::span<const double> values, bool* found) {
  std::vector<double> nz;
  nz.reserve(values.size());
  for (double v : values) {
    if (v > 0.0) nz.push_back(v);
  }
  if (found) *found = !nz.empty();
  if (nz.empty()) return 0.0;
  const std::size_t mid = nz.size() / 2;
  std::nth_element(nz.begin(), nz.begin() + mid, nz.end());
  const double upper = nz[mid];
  if (nz.size() % 2 == 1) return upper;
  const double lower = *std::max_element(nz.begin(), nz.begin() + mid);
  return 0.5 * (lower + upper);
}

Barcode rbc_local(const Sinogram& sino) {
  require_sinogram(sino);
  Barcode code = empty_code(CodeType::kRbcLocal, sino);
  for (int k = 0; k < sino.num_angles; ++k) {
    const auto proj = sino.projection(k);
    bool found = false;
    const double t = nonzero_median(proj, &found);
    if (!found) continue;
    threshold_into(code, proj, t, static_cast<std::size_t>(k) * sino.bins_per_angle);
  }
  return code;
}

Barcode rbc_incremental(const Sinogram& sino) {
  require_sinogram(sino);
  Barcode code = empty_code(CodeType::kRbcIncremental, sino);
  for (int k = 0; k < sino.num_angles; ++k) {
    const auto proj = sino.projection(k);
    const std::size_t offset = static_cast<std::size_t>(k) * sino.bins_per_angle;
    for (std::size_t i = 1; i < proj.size(); ++i) {
      if (proj[i] > proj[i - 1]) code.set_bit(offset + i, true);
    }
  }
  return code;
}

Barcode rbc_global(const Sinogram& sino) {
  require_sinogram(sino);
  Barcode code = empty_code(CodeType::kRbcGlobal, sino);
  bool found = false;
  const double t = nonzero_median(sino.values, &found);
  if (found) threshold_into(code, sino.values, t, 0);
  return code;
}

Barcode lbp_barcode(const GrayImage& img) {
  if (!img.is_square() || img.width() < 3) {
    throw InvalidArgument("lbp_barcode: need a square image of side >= 3");
  }
  const int n = img.width();
  Barcode code(CodeType::kLbp, n, 0, static_cast<std::size_t>(n - 2) * (n - 2) * 9);
  std::size_t bit = 0;
  for (int y = 1; y < n - 1; ++y) {
    for (int x = 1; x < n - 1; ++x) {
      const double center = img.at(x, y);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (img.at(x + dx, y + dy) >= center) code.set_bit(bit, true);
          ++bit;
        }
      }
    }
  }
  return code;
}

Barcode compute_barcode(const GrayImage& img, const BarcodeParams& params) {
  if (params.norm_size < 3) throw InvalidArgument("normalized size must be at least 3");
  const GrayImage norm = normalize_image(img, params.norm_size);
  if (params.code == CodeType::kLbp) return lbp_barcode(norm);
  if (params.num_angles < 1) throw InvalidArgument("number of projection angles must be >= 1");
  const Sinogram sino = radon_transform(norm, params.num_angles);
  switch (params.code) {
    case CodeType::kRbcLocal:
      return rbc_local(sino);
    case CodeType::kRbcIncremental:
      return rbc_incremental(sino);
    case CodeType::kRbcGlobal:
      return rbc_global(sino);
    case CodeType::kLbp:
      break;
  }
  throw InvalidArgument("unknown code type");
}

void require_compatible(const Barcode& a, const Barcode& b) {
  if (a.bit_len() != b.bit_len() || a.code_type() != b.code_type()) {
    throw IncompatibleBarcodeError(
        "incompatible barcodes: " + std::string(code_type_label(a.code_type())) + "/" +
        std::to_string(a.bit_len()) + " vs " + std::string(code_type_label(b.code_type())) +
        "/" + std::to_string(b.bit_len()));
  }
}

std::size_t hamming_distance(const Barcode& a, const Barcode& b) {
  require_compatible(a, b);
  const auto wa = a.words();
  const auto wb = b.words();
  std::size_t d = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) d += std::popcount(wa[i] ^ wb[i]);
  return d;
}

double hamming_similarity(const Barcode& a, const Barcode& b) {
  const std::size_t d = hamming_distance(a, b);
  if (a.bit_len() == 0) throw IncompatibleBarcodeError("cannot compare zero-length barcodes");
  return 1.0 - static_cast<double>(d) / static_cast<double>(a.bit_len());
}

std::string to_text(const Barcode& code) {
  std::string out;
  out.reserve(code.bit_len() + 48);
  out += code_type_label(code.code_type());
  out += " N=" + std::to_string(code.norm_size());
  out += " NP=" + std::to_string(code.num_angles());
  out += " LEN=" + std::to_string(code.bit_len());
  out += '\n';
  for (std::size_t i = 0; i < code.bit_len(); ++i) out += code.bit(i) ? '1' : '0';
  out += '\n';
  return out;
}

Barcode parse_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string label, n_field, np_field, len_field, bits;
  if (!(in >> label >> n_field >> np_field >> len_field)) {
    throw InvalidArgument("barcode text: malformed header");
  }
  auto field = [](const std::string& f, std::string_view key) {
    if (f.rfind(key, 0) != 0) throw InvalidArgument("barcode text: expected " + std::string(key));
    long long v = 0;
    const char* first = f.data() + key.size();
    const char* last = f.data() + f.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || v < 0) {
      throw InvalidArgument("barcode text: bad value in " + f);
    }
    return v;
  };
  const CodeType type = parse_code_type(label);
  const auto n = static_cast<int>(field(n_field, "N="));
  const auto np = static_cast<int>(field(np_field, "NP="));
  const auto len = static_cast<std::size_t>(field(len_field, "LEN="));
  in >> bits;
  if (bits.size() != len) throw InvalidArgument("barcode text: bit string length mismatch");
  Barcode code(type, n, np, len);
  for (std::size_t i = 0; i < len; ++i) {
    if (bits[i] == '1') {
      code.set_bit(i, true);
    } else if (bits[i] != '0') {
      throw InvalidArgument("barcode text: bits must be 0 or 1");
    }
  }
  return code;
}

}  // namespace batlas
