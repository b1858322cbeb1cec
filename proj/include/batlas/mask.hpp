#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace batlas {

// Inclusive pixel rectangle.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const Box&) const = default;
};

// Row-major bit raster packed into 64-bit words, LSB first. Bits past
// width*height in the last word are always zero so word-wise set algebra
// (AND/OR/XOR + popcount) is exact.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);

  // Any nonzero byte is true.
  static BinaryMask from_bytes(int width, int height, std::span<const std::uint8_t> bytes);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return static_cast<std::size_t>(width_) * height_; }

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  bool get(int x, int y) const { return test(index(x, y)); }
  void set(std::size_t i, bool value = true) {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (value) {
      words_[i >> 6] |= bit;
    } else {
      words_[i >> 6] &= ~bit;
    }
  }
  void set(int x, int y, bool value = true) { set(index(x, y), value); }

  std::size_t count() const;
  bool is_empty() const;
  bool same_shape(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  // Tight bounding box of the true pixels; nullopt for an empty mask.
  std::optional<Box> bounding_box() const;

  BinaryMask complement() const;

  std::span<const std::uint64_t> words() const { return words_; }
  std::vector<std::uint8_t> to_bytes() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }
  void clear_padding();

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint64_t> words_;
};

std::size_t intersection_count(const BinaryMask& a, const BinaryMask& b);
std::size_t union_count(const BinaryMask& a, const BinaryMask& b);

// Run lengths alternating false/true, starting with a (possibly zero) false run.
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
// Throws InvalidArgument when the runs do not cover width*height exactly.
BinaryMask rle_decode(int width, int height, std::span<const std::uint32_t> runs);

// Squared Euclidean distance from every pixel to the nearest true pixel of
// `mask` (exact, separable lower-envelope algorithm). Pixels of an empty mask
// get a very large value.
std::vector<double> squared_distance_transform(const BinaryMask& mask);

// Morphology with the digital disk {dx^2 + dy^2 <= r^2}. Pixels outside the
// image count as background for both operations.
BinaryMask dilate_disk(const BinaryMask& mask, int radius);
BinaryMask erode_disk(const BinaryMask& mask, int radius);

}  // namespace batlas
