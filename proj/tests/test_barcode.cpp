#include <algorithm>
#include <random>

#include "batlas/barcode.hpp"
#include "batlas/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace batlas;
using batlas::testing::random_barcode;
using batlas::testing::random_image;

namespace {

Sinogram make_sino(int num_angles, std::vector<double> values) {
  Sinogram s;
  s.image_size = 4;
  s.num_angles = num_angles;
  s.bins_per_angle = static_cast<int>(values.size()) / num_angles;
  s.values = std::move(values);
  return s;
}

std::string bits_of(const Barcode& c) {
  std::string s;
  for (std::size_t i = 0; i < c.bit_len(); ++i) s += c.bit(i) ? '1' : '0';
  return s;
}

// Sort-based median of strictly positive values, independent of nth_element.
double sorted_median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !(x > 0); }), v.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("rbc_local: per-angle nonzero median with strict comparison") {
  CHECK(bits_of(rbc_local(make_sino(1, {2, 4, 6, 8, 0}))) == "00110");
  CHECK(bits_of(rbc_local(make_sino(2, {0, 0, 0, 0, 1, 2, 3, 0}))) == "00000010");
  CHECK(rbc_local(make_sino(3, std::vector<double>(30, 0.0))).popcount() == 0);
}

TEST_CASE("rbc_local: random images agree with a sort-based median oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Sinogram s = radon_transform(random_image(32, 32, rng), 8);
    const Barcode code = rbc_local(s);
    CHECK(code.bit_len() == 392);
    for (int k = 0; k < 8; ++k) {
      const auto proj = s.projection(k);
      const double t = sorted_median({proj.begin(), proj.end()});
      std::size_t nonzero = 0, ones = 0;
      for (int i = 0; i < 49; ++i) {
        nonzero += proj[i] > 0;
        const bool bit = code.bit(k * 49 + i);
        ones += bit;
        CHECK(bit == (proj[i] > t));
      }
      CHECK(ones <= (nonzero + 1) / 2);
    }
  }
}

TEST_CASE("rbc_incremental: marks strict increases, first bin is 0") {
  CHECK(bits_of(rbc_incremental(make_sino(1, {1, 3, 2, 2}))) == "0100");
  CHECK(bits_of(rbc_incremental(make_sino(1, {1, 2, 3, 4, 5}))) == "01111");
  CHECK(bits_of(rbc_incremental(make_sino(2, {1, 2, 3, 3, 2, 1}))) == "011000");
  const Sinogram flat = radon_transform(GrayImage(32, 32, 9.0), 8);
  const Barcode code = rbc_incremental(flat);
  for (int i = 0; i < 49; ++i) {
    // Only the step from the zero flank onto the band rises at theta = 0.
    CHECK(code.bit(i) == (i == 9));
  }
}

TEST_CASE("rbc_global: one pooled median") {
  CHECK(bits_of(rbc_global(make_sino(2, {1, 1, 9, 9, 0, 5, 5, 0}))) == "00110000");
  CHECK(rbc_global(make_sino(2, std::vector<double>(10, 0.0))).popcount() == 0);

  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const Sinogram s = radon_transform(random_image(32, 32, rng), 8);
    const double t = sorted_median(s.values);
    const Barcode code = rbc_global(s);
    for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(code.bit(i) == (s.values[i] > t));
  }
}

TEST_CASE("RBC fragments are never all ones and ignore global intensity scale") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const GrayImage img = random_image(48, 40, rng);
    std::vector<double> scaled(img.pixels().begin(), img.pixels().end());
    const double k = 0.25 + trial;
    for (auto& v : scaled) v *= k;
    const GrayImage bright(48, 40, scaled);
    for (CodeType type : {CodeType::kRbcLocal, CodeType::kRbcIncremental, CodeType::kRbcGlobal}) {
      const BarcodeParams params{type, 32, 8};
      const Barcode a = compute_barcode(img, params);
      CHECK(a == compute_barcode(img, params));
      CHECK(a == compute_barcode(bright, params));
      for (int f = 0; f < 8; ++f) {
        std::size_t ones = 0;
        for (int i = 0; i < 49; ++i) ones += a.bit(f * 49 + i);
        CHECK(ones < 49u);
      }
    }
  }
}

TEST_CASE("lbp_barcode: layout and window oracle") {
  std::mt19937_64 rng(24);
  const Barcode big = lbp_barcode(random_image(32, 32, rng));
  CHECK(big.bit_len() == 8100);
  CHECK(big.num_angles() == 0);

  const Barcode flat = lbp_barcode(GrayImage(10, 10, 3.0));
  CHECK(flat.popcount() == flat.bit_len());

  GrayImage spot(5, 5, 0.0);
  spot.set(2, 2, 100.0);
  const Barcode code = lbp_barcode(spot);
  CHECK(code.bit_len() == 81);
  std::size_t bit = 0;
  for (int y = 1; y <= 3; ++y) {
    for (int x = 1; x <= 3; ++x) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const bool expect = spot.at(x + dx, y + dy) >= spot.at(x, y);
          CHECK(code.bit(bit) == expect);
          ++bit;
        }
      }
    }
  }
  // Centre window: only its own centre bit; every other window: all 9 bits.
  CHECK(code.popcount() == 8 * 9 + 1);
  CHECK_THROWS_AS(lbp_barcode(GrayImage(2, 2, 1.0)), InvalidArgument);
  CHECK_THROWS_AS(lbp_barcode(GrayImage(4, 3, 1.0)), InvalidArgument);
}

TEST_CASE("barcode lengths at the reference settings") {
  CHECK(barcode_length({CodeType::kRbcIncremental, 32, 8}) == 392);
  CHECK(barcode_length({CodeType::kLbp, 32, 0}) == 8100);
  std::mt19937_64 rng(25);
  const GrayImage img = random_image(100, 80, rng);
  CHECK(compute_barcode(img, {CodeType::kRbcLocal, 32, 8}).bit_len() == 392);
  CHECK(compute_barcode(img, {CodeType::kLbp, 32, 8}).bit_len() == 8100);
}

TEST_CASE("hamming_similarity: examples and errors") {
  std::mt19937_64 rng(26);
  const BarcodeParams p{CodeType::kRbcIncremental, 32, 8};
  const Barcode a = random_barcode(p, rng);
  CHECK(hamming_similarity(a, a) == 1.0);
  Barcode inv = a;
  for (std::size_t i = 0; i < a.bit_len(); ++i) inv.set_bit(i, !a.bit(i));
  CHECK(hamming_similarity(a, inv) == 0.0);
  Barcode part = a;
  for (std::size_t i = 0; i < 98; ++i) part.set_bit(i * 4, !a.bit(i * 4));
  CHECK(hamming_similarity(a, part) == 0.75);

  const Barcode lbp = random_barcode({CodeType::kLbp, 32, 0}, rng);
  CHECK_THROWS_AS(hamming_similarity(a, lbp), IncompatibleBarcodeError);
  const Barcode other_type = random_barcode({CodeType::kRbcLocal, 32, 8}, rng);
  CHECK_THROWS_AS(hamming_similarity(a, other_type), IncompatibleBarcodeError);
}

TEST_CASE("hamming: symmetric, bounded, and the distance is a metric") {
  std::mt19937_64 rng(27);
  for (int trial = 0; trial < 200; ++trial) {
    const BarcodeParams p{trial % 2 ? CodeType::kLbp : CodeType::kRbcGlobal, 16, 5};
    const Barcode a = random_barcode(p, rng);
    const Barcode b = random_barcode(p, rng);
    const Barcode c = random_barcode(p, rng);
    const double ab = hamming_similarity(a, b);
    CHECK(ab == hamming_similarity(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c));
  }
}

TEST_CASE("barcode byte and text forms") {
  std::mt19937_64 rng(28);
  const BarcodeParams p{CodeType::kRbcIncremental, 32, 8};
  const Barcode a = random_barcode(p, rng);
  const auto bytes = a.to_bytes();
  CHECK(bytes.size() == 49);
  CHECK((bytes[0] & 1) == a.bit(0));
  CHECK(((bytes[0] >> 7) & 1) == a.bit(7));
  CHECK(Barcode::from_bytes(p, 392, bytes) == a);

  const std::string text = to_text(a);
  CHECK(text.rfind("RBC-INCR N=32 NP=8 LEN=392\n", 0) == 0);
  CHECK(text.size() == 27 + 392 + 1);
  CHECK(parse_text(text) == a);

  auto padded = bytes;
  padded.back() |= 0x80;  // bit 391 is used, 392.. are padding; 392 bits = 49 full bytes
  CHECK(Barcode::from_bytes(p, 392, padded).bit(391) == true);
  const std::vector<std::uint8_t> odd{0xFF, 0xFF};
  CHECK_THROWS_AS(Barcode::from_bytes(p, 12, odd), InvalidArgument);

  CHECK(parse_code_type("rbc-incr") == CodeType::kRbcIncremental);
  CHECK(parse_code_type("LBP") == CodeType::kLbp);
  CHECK_THROWS_AS(parse_code_type("minmax"), InvalidArgument);
}
