#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batlas/image.hpp"
#include "batlas/radon.hpp"

namespace batlas {

enum class CodeType : std::uint8_t {
  kRbcLocal = 0,
  kRbcIncremental = 1,
  kRbcGlobal = 2,
  kLbp = 3,
};

// CLI spelling: rbc-local, rbc-incr, rbc-global, lbp.
std::string_view code_type_cli_name(CodeType type);
// Text-header spelling: RBC-LOCAL, RBC-INCR, RBC-GLOBAL, LBP.
std::string_view code_type_label(CodeType type);
CodeType parse_code_type(std::string_view name);  // accepts either spelling
bool is_radon(CodeType type);

struct BarcodeParams {
  CodeType code = CodeType::kRbcIncremental;
  int norm_size = 32;
  int num_angles = 8;  // ignored (stored as 0) for LBP

  bool operator==(const BarcodeParams&) const = default;
};

// Bits a barcode of these parameters carries (392 for RBC at 32/8, 8100 for LBP at 32).
std::size_t barcode_length(const BarcodeParams& params);

// Packed bit string, bit i at word i/64, position i%64. Padding bits are zero.
class Barcode {
 public:
  Barcode() = default;
  Barcode(CodeType type, int norm_size, int num_angles, std::size_t bit_len);

  CodeType code_type() const { return type_; }
  int norm_size() const { return norm_size_; }
  int num_angles() const { return num_angles_; }
  std::size_t bit_len() const { return bit_len_; }
  BarcodeParams params() const { return {type_, norm_size_, num_angles_}; }

  bool bit(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(std::size_t i, bool v);
  std::size_t popcount() const;

  std::span<const std::uint64_t> words() const { return words_; }

  // ceil(bit_len/8) bytes, LSB-first within each byte.
  std::vector<std::uint8_t> to_bytes() const;
  static Barcode from_bytes(const BarcodeParams& params, std::size_t bit_len,
                            std::span<const std::uint8_t> bytes);

  bool operator==(const Barcode&) const = default;

 private:
  CodeType type_ = CodeType::kRbcIncremental;
  int norm_size_ = 0;
  int num_angles_ = 0;
  std::size_t bit_len_ = 0;
  std::vector<std::uint64_t> words_;
};

// Median of the strictly positive entries (mean of the two middles for an
// even count); nullopt-like 0 with `found=false` when none are positive.
double nonzero_median(std::span<const double> values, bool* found = nullptr);

// Per-angle threshold at the median of that angle's nonzero bins; bit = value > T.
Barcode rbc_local(const Sinogram& sino);
// bit_i = g[i] > g[i-1]; the first bin of every angle is 0.
Barcode rbc_incremental(const Sinogram& sino);
// One threshold: median of all nonzero bins over every angle; bit = value > T.
Barcode rbc_global(const Sinogram& sino);
// 9 bits per interior pixel of an N x N image: the 3x3 window (row-major,
// centre included) compared with the centre, bit = neighbour >= centre.
Barcode lbp_barcode(const GrayImage& img);

// Normalizes `img` to params.norm_size and encodes it.
Barcode compute_barcode(const GrayImage& img, const BarcodeParams& params);

void require_compatible(const Barcode& a, const Barcode& b);
std::size_t hamming_distance(const Barcode& a, const Barcode& b);
// 1 - |a xor b| / bit_len. Throws IncompatibleBarcodeError on mismatch.
double hamming_similarity(const Barcode& a, const Barcode& b);

// "RBC-INCR N=32 NP=8 LEN=392\n0101...\n"
std::string to_text(const Barcode& code);
Barcode parse_text(std::string_view text);

}  // namespace batlas
