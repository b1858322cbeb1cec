#pragma once

#include <span>
#include <vector>

#include "batlas/image.hpp"

namespace batlas {

// Stacked projections g(rho, theta_k), angle-major. theta_k = k * 180 / num_angles degrees.
struct Sinogram {
  int image_size = 0;  // side length N of the square source image
  int num_angles = 0;
  int bins_per_angle = 0;
  std::vector<double> values;

  double angle_degrees(int k) const { return k * 180.0 / num_angles; }
  std::span<const double> projection(int k) const {
    return std::span<const double>(values).subspan(
        static_cast<std::size_t>(k) * bins_per_angle, bins_per_angle);
  }
};

// Rotation centre floor((N-1)/2).
int radon_center(int n);
// Bins per projection for an N x N image: 2*ceil(sqrt2 * (N - c - 1)) + 3.
int radon_bin_count(int n);

// Forward projection by pixel splitting: each pixel's intensity lands on the
// two bins bracketing rho = (x-c)cos(theta) + (y-c)sin(theta), weighted
// linearly. Mass per angle equals the image sum. Throws InvalidArgument for
// non-square input or num_angles < 1.
Sinogram radon_transform(const GrayImage& img, int num_angles);

}  // namespace batlas
