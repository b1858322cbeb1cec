#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "batlas/image.hpp"
#include "batlas/mask.hpp"
#include "batlas/random.hpp"

namespace batlas {

// Star-convex shape given by relative radii at K equally spaced angles
// 2*pi*k/K (image coordinates, y down). Interpolated with a periodic
// Catmull-Rom spline.
struct ShapePrior {
  std::string name;
  std::vector<double> radii;
};

// Bank of prostate-like profiles compiled into the library.
const std::vector<ShapePrior>& default_priors();
// "name r0 r1 ... rK-1" per line, '#' comments. Throws InvalidArgument.
std::vector<ShapePrior> parse_priors(std::string_view text);

// Periodic Catmull-Rom evaluation of control values at angle phi (radians).
double periodic_spline(std::span<const double> values, double phi);

struct RadialContour {
  double cx = 0.0;
  double cy = 0.0;
  double rotation = 0.0;      // radians, added to the control angles
  std::vector<double> radii;  // pixels

  // Never below kMinRadius.
  double radius_at(double phi) const;
  static constexpr double kMinRadius = 0.5;
};

// Pixel centres (x, y) with distance to (cx, cy) <= r(angle). The pixel
// nearest the centre is always set when it lies inside the image.
BinaryMask rasterize(const RadialContour& contour, int width, int height);

struct Pose {
  double cx = 0.0;
  double cy = 0.0;
  double rotation = 0.0;  // radians
  double scale = 1.0;     // pixels per relative radius unit
};

// Pointwise weighted sum of the priors' radial functions, placed at `pose`.
// Priors must share K; weights are used as given (not renormalised).
RadialContour blend_priors(std::span<const ShapePrior> priors, std::span<const double> weights,
                           const Pose& pose);

struct UserSimConfig {
  double scale_coeff = 0.15;        // size change per unit tendency at experience 0
  double rotation_deg = 5.0;        // rotation sigma at attention 0
  double jitter_coeff = 4.0;        // radial jitter sigma / (difficulty * r_eq) at experience 0
  int jitter_smoothing = 2;         // [1 2 1]/4 passes over the control points
  double gross_error_fraction = 0.10;  // of the equivalent radius
};

struct GenConfig {
  int image_size = 256;
  int num_priors = 8;            // first m priors of the bank are blended
  double dirichlet_alpha = 1.0;  // symmetric blend-weight concentration
  double base_radius = 56.0;     // pixels
  double scale_range = 0.08;     // relative size spread, uniform +-
  double translation_range = 6.0;   // pixels, uniform +- on each axis
  double rotation_range = 10.0;     // degrees, uniform +-
  double radial_noise = 0.02;       // relative, smoothed per control point
  double background = 70.0;
  double contrast = 60.0;           // interior level minus background
  double rim_width = 3.0;           // pixels
  double rim_darkening = 0.4;       // fractional dimming at the boundary
  double speckle = 0.2;             // variance of the unit-mean gamma noise
  int shadow_count = 1;
  double shadow_intensity = 0.4;    // fractional dimming inside a wedge
  double shadow_width_deg = 8.0;
  double blur_sigma = 1.0;
  int max_retries = 100;
  std::uint64_t seed = 42;
  UserSimConfig user;

  void validate() const;  // throws InvalidArgument
};

struct GoldShape {
  BinaryMask mask;
  RadialContour contour;
};

// Dirichlet blend + pose + radial noise, resampled until the area is within
// [1%, 50%] of the image. Throws GenerationError when retries run out.
GoldShape generate_gold(std::span<const ShapePrior> priors, const GenConfig& cfg, Rng& rng);

GrayImage render_image(const BinaryMask& gold, const GenConfig& cfg, Rng& rng);

struct UserModel {
  double experience = 1.0;      // (0, 1]
  double attention = 1.0;       // [0, 1]
  double size_tendency = 0.0;   // [-1, 1]
  double error_probability = 0.0;  // [0, 0.05]
  double anatomical_difficulty = 0.2;
  int morph_kernel = 1;         // odd, 1..21

  void validate() const;  // throws InvalidArgument
  bool operator==(const UserModel&) const = default;
};

// Twenty hand-set users spanning expert to novice.
const std::vector<UserModel>& default_user_bank();
UserModel random_user(Rng& rng);
// First min(n, 20) users of the default bank, the rest drawn from `seed`.
std::vector<UserModel> make_user_bank(int n, std::uint64_t seed);

BinaryMask simulate_user_segment(const GoldShape& gold, const UserModel& user,
                                 const UserSimConfig& cfg, Rng& rng);

}  // namespace batlas
