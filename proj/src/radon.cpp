#include "batlas/radon.hpp"

#include <cmath>
#include <numbers>

#include "batlas/error.hpp"

namespace batlas {

int radon_center(int n) { return (n - 1) / 2; }

int radon_bin_count(int n) {
  const int reach = n - radon_center(n) - 1;
  return 2 * static_cast<int>(std::ceil(std::numbers::sqrt2 * reach)) + 3;
}

namespace {

// cos/sin with exact zeros and ones on the axes, so axis-aligned projections
// do not leak 1e-17 mass into neighbouring bins.
void exact_trig(double degrees, double& c, double& s) {
  const double rad = degrees * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
  const double quarter = degrees / 90.0;
  if (quarter == std::floor(quarter)) {
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    const int q = static_cast<int>(std::fmod(quarter, 4.0) + 4) % 4;
    c = kCos[q];
    s = kSin[q];
  }
}

}  // namespace

Sinogram radon_transform(const GrayImage& img, int num_angles) {
  if (img.empty()) throw InvalidArgument("radon_transform: empty image");
  if (!img.is_square()) throw InvalidArgument("radon_transform: image must be square");
  if (num_angles < 1) throw InvalidArgument("radon_transform: need at least one angle");

  const int n = img.width();
  const int center = radon_center(n);
  const int bins = radon_bin_count(n);
  const double origin = (bins - 1) / 2;

  Sinogram sino;
  sino.image_size = n;
  sino.num_angles = num_angles;
  sino.bins_per_angle = bins;
  sino.values.assign(static_cast<std::size_t>(num_angles) * bins, 0.0);

  for (int k = 0; k < num_angles; ++k) {
    double c = 0.0;
    double s = 0.0;
    exact_trig(sino.angle_degrees(k), c, s);
    double* proj = sino.values.data() + static_cast<std::size_t>(k) * bins;
    for (int y = 0; y < n; ++y) {
      const double ys = (y - center) * s;
      for (int x = 0; x < n; ++x) {
        const double v = img.at(x, y);
        if (v == 0.0) continue;
        double pos = (x - center) * c + ys + origin;
        const double rounded = std::round(pos);
        if (std::abs(pos - rounded) < 1e-9) pos = rounded;
        const int lo = static_cast<int>(std::floor(pos));
        const double frac = pos - lo;
        proj[lo] += v * (1.0 - frac);
        if (frac > 0.0) proj[lo + 1] += v * frac;
      }
    }
  }
  return sino;
}

}  // namespace batlas
