#include "batlas/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "batlas/error.hpp"

namespace batlas {

namespace detail {
extern const char* const kDefaultPriorsText;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

void smooth_periodic(std::vector<double>& v, int passes) {
  const std::size_t k = v.size();
  if (k < 3) return;
  std::vector<double> tmp(k);
  for (int p = 0; p < passes; ++p) {
    for (std::size_t i = 0; i < k; ++i) {
      tmp[i] = 0.25 * v[(i + k - 1) % k] + 0.5 * v[i] + 0.25 * v[(i + 1) % k];
    }
    v.swap(tmp);
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

std::vector<ShapePrior> parse_priors(std::string_view text) {
  std::vector<ShapePrior> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    ShapePrior p;
    if (!(fields >> p.name)) continue;
    double r;
    while (fields >> r) {
      if (!(r > 0.0)) {
        throw InvalidArgument("prior '" + p.name + "': radii must be positive (line " +
                              std::to_string(line_no) + ")");
      }
      p.radii.push_back(r);
    }
    if (!fields.eof()) {
      throw InvalidArgument("prior '" + p.name + "': bad number on line " + std::to_string(line_no));
    }
    if (p.radii.size() < 3) {
      throw InvalidArgument("prior '" + p.name + "': needs at least 3 radii");
    }
    if (!out.empty() && out.front().radii.size() != p.radii.size()) {
      throw InvalidArgument("prior '" + p.name + "': control point count differs from the first prior");
    }
    out.push_back(std::move(p));
  }
  return out;
}

const std::vector<ShapePrior>& default_priors() {
  static const std::vector<ShapePrior> bank = parse_priors(detail::kDefaultPriorsText);
  return bank;
}

double periodic_spline(std::span<const double> values, double phi) {
  const int k = static_cast<int>(values.size());
  double t = phi / kTwoPi * k;
  t -= std::floor(t / k) * k;
  int i1 = static_cast<int>(std::floor(t));
  double f = t - i1;
  if (i1 >= k) {  // t rounded up to exactly k
    i1 = 0;
    f = 0.0;
  }
  const double p0 = values[(i1 + k - 1) % k];
  const double p1 = values[i1];
  const double p2 = values[(i1 + 1) % k];
  const double p3 = values[(i1 + 2) % k];
  return p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                                        f * (3.0 * (p1 - p2) + p3 - p0)));
}

double RadialContour::radius_at(double phi) const {
  return std::max(kMinRadius, periodic_spline(radii, phi - rotation));
}

BinaryMask rasterize(const RadialContour& contour, int width, int height) {
  BinaryMask mask(width, height);
  if (contour.radii.empty()) return mask;
  const double reach = *std::max_element(contour.radii.begin(), contour.radii.end()) * 1.5 + 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(contour.cx - reach)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(contour.cx + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(contour.cy - reach)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(contour.cy + reach)));
  for (int y = y0; y <= y1; ++y) {
    const double dy = y - contour.cy;
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - contour.cx;
      const double d2 = dx * dx + dy * dy;
      const double r = contour.radius_at(std::atan2(dy, dx));
      if (d2 <= r * r) mask.set(x, y);
    }
  }
  const int cx = static_cast<int>(std::lround(contour.cx));
  const int cy = static_cast<int>(std::lround(contour.cy));
  if (cx >= 0 && cx < width && cy >= 0 && cy < height) mask.set(cx, cy);
  return mask;
}

RadialContour blend_priors(std::span<const ShapePrior> priors, std::span<const double> weights,
                           const Pose& pose) {
  if (priors.empty()) throw InvalidArgument("blend_priors: no priors");
  if (weights.size() != priors.size()) {
    throw InvalidArgument("blend_priors: weight count does not match prior count");
  }
  const std::size_t k = priors.front().radii.size();
  RadialContour c;
  c.cx = pose.cx;
  c.cy = pose.cy;
  c.rotation = pose.rotation;
  c.radii.assign(k, 0.0);
  for (std::size_t p = 0; p < priors.size(); ++p) {
    if (priors[p].radii.size() != k) {
      throw InvalidArgument("blend_priors: prior '" + priors[p].name + "' has a different K");
    }
    for (std::size_t i = 0; i < k; ++i) c.radii[i] += weights[p] * priors[p].radii[i];
  }
  for (auto& r : c.radii) r *= pose.scale;
  return c;
}

void GenConfig::validate() const {
  require(image_size >= 8, "image_size must be >= 8");
  require(num_priors >= 2, "num_priors must be >= 2");
  require(dirichlet_alpha > 0.0, "dirichlet_alpha must be positive");
  require(base_radius > 0.0, "base_radius must be positive");
  require(scale_range >= 0.0 && scale_range < 1.0, "scale_range must be in [0, 1)");
  require(translation_range >= 0.0, "translation_range must be non-negative");
  require(rotation_range >= 0.0, "rotation_range must be non-negative");
  require(radial_noise >= 0.0, "radial_noise must be non-negative");
  require(background >= 0.0 && contrast >= 0.0, "intensity levels must be non-negative");
  require(rim_width >= 0.0, "rim_width must be non-negative");
  require(rim_darkening >= 0.0 && rim_darkening <= 1.0, "rim_darkening must be in [0, 1]");
  require(speckle >= 0.0, "speckle must be non-negative");
  require(shadow_count >= 0, "shadow_count must be non-negative");
  require(shadow_intensity >= 0.0 && shadow_intensity <= 1.0, "shadow_intensity must be in [0, 1]");
  require(shadow_width_deg >= 0.0, "shadow_width_deg must be non-negative");
  require(blur_sigma >= 0.0, "blur_sigma must be non-negative");
  require(max_retries >= 1, "max_retries must be >= 1");
  require(user.scale_coeff >= 0.0, "user_scale_coeff must be non-negative");
  require(user.rotation_deg >= 0.0, "user_rotation_deg must be non-negative");
  require(user.jitter_coeff >= 0.0, "user_jitter_coeff must be non-negative");
  require(user.jitter_smoothing >= 0, "user_jitter_smoothing must be non-negative");
  require(user.gross_error_fraction >= 0.0, "user_gross_error_fraction must be non-negative");
}

GoldShape generate_gold(std::span<const ShapePrior> priors, const GenConfig& cfg, Rng& rng) {
  if (priors.size() < 2) throw InvalidArgument("generate_gold: need at least 2 priors");
  cfg.validate();
  const int n = cfg.image_size;
  const double area = static_cast<double>(n) * n;
  const double mid = (n - 1) / 2.0;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const auto weights = rng.dirichlet(cfg.dirichlet_alpha, priors.size());
    Pose pose;
    pose.cx = mid + rng.uniform(-cfg.translation_range, cfg.translation_range);
    pose.cy = mid + rng.uniform(-cfg.translation_range, cfg.translation_range);
    pose.rotation = deg2rad(rng.uniform(-cfg.rotation_range, cfg.rotation_range));
    pose.scale = cfg.base_radius * (1.0 + rng.uniform(-cfg.scale_range, cfg.scale_range));
    RadialContour contour = blend_priors(priors, weights, pose);
    std::vector<double> noise(contour.radii.size());
    for (auto& v : noise) v = rng.normal() * cfg.radial_noise;
    smooth_periodic(noise, 2);
    for (std::size_t i = 0; i < noise.size(); ++i) {
      contour.radii[i] = std::max(RadialContour::kMinRadius, contour.radii[i] * (1.0 + noise[i]));
    }
    BinaryMask mask = rasterize(contour, n, n);
    const double frac = static_cast<double>(mask.count()) / area;
    if (frac >= 0.01 && frac <= 0.50) return {std::move(mask), std::move(contour)};
  }
  throw GenerationError("generate_gold: area constraint not met after " +
                        std::to_string(cfg.max_retries) + " attempts");
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + r];
  }
  for (auto& v : k) v /= total;
  return k;
}

void blur(std::vector<double>& px, int w, int h, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(px.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xx = std::clamp(x + i, 0, w - 1);
        acc += k[i + r] * px[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = std::clamp(y + i, 0, h - 1);
        acc += k[i + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      px[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

}  // namespace

GrayImage render_image(const BinaryMask& gold, const GenConfig& cfg, Rng& rng) {
  if (gold.is_empty()) throw EmptyMaskError("render_image: gold mask is empty");
  cfg.validate();
  const int w = gold.width();
  const int h = gold.height();
  const std::size_t n = gold.size();
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = cfg.background + (gold.test(i) ? cfg.contrast : 0.0);
  }

  if (cfg.rim_darkening > 0.0 && cfg.rim_width > 0.0) {
    const auto to_inside = squared_distance_transform(gold);
    const auto to_outside = squared_distance_transform(gold.complement());
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::sqrt(gold.test(i) ? to_outside[i] : to_inside[i]) - 0.5;
      const double t = 1.0 - d / cfg.rim_width;
      if (t > 0.0) px[i] *= 1.0 - cfg.rim_darkening * std::min(1.0, t);
    }
  }

  if (cfg.speckle > 0.0) {
    const double shape = 1.0 / cfg.speckle;
    for (auto& v : px) v *= rng.gamma(shape) * cfg.speckle;
  }

  // Wedges fan out from a probe just below the bottom edge and start some
  // way up, as if cast by an occluder.
  const double probe_x = (w - 1) / 2.0;
  const double probe_y = static_cast<double>(h);
  for (int s = 0; s < cfg.shadow_count; ++s) {
    const double dir = deg2rad(rng.uniform(-35.0, 35.0));
    const double start = h * rng.uniform(0.2, 0.7);
    const double half = deg2rad(cfg.shadow_width_deg) / 2.0;
    const double keep = 1.0 - cfg.shadow_intensity;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x - probe_x;
        const double up = probe_y - y;
        if (std::hypot(dx, up) < start) continue;
        if (std::abs(std::atan2(dx, up) - dir) <= half) px[static_cast<std::size_t>(y) * w + x] *= keep;
      }
    }
  }

  if (cfg.blur_sigma > 0.0) blur(px, w, h, cfg.blur_sigma);
  for (auto& v : px) v = std::clamp(std::round(v), 0.0, 255.0);
  return GrayImage(w, h, std::move(px));
}

void UserModel::validate() const {
  require(experience > 0.0 && experience <= 1.0, "user experience must be in (0, 1]");
  require(attention >= 0.0 && attention <= 1.0, "user attention must be in [0, 1]");
  require(size_tendency >= -1.0 && size_tendency <= 1.0, "user size_tendency must be in [-1, 1]");
  require(error_probability >= 0.0 && error_probability <= 0.05,
          "user error_probability must be in [0, 0.05]");
  require(anatomical_difficulty >= 0.0 && anatomical_difficulty <= 1.0,
          "user anatomical_difficulty must be in [0, 1]");
  require(morph_kernel >= 1 && morph_kernel <= 21 && morph_kernel % 2 == 1,
          "user morph_kernel must be odd and in 1..21");
}

const std::vector<UserModel>& default_user_bank() {
  // experience, attention, size_tendency, error_probability, difficulty, kernel
  static const std::vector<UserModel> bank = {
      {0.65, 0.70, 0.60, 0.02, 0.2, 11},
      {0.60, 0.70, -0.40, 0.02, 0.2, 11},
      {0.74, 0.85, 0.40, 0.01, 0.2, 7},
      {0.72, 0.80, -0.30, 0.01, 0.2, 7},
      {0.60, 0.60, -0.50, 0.02, 0.2, 11},
      {0.55, 0.60, 0.70, 0.03, 0.2, 13},
      {0.45, 0.50, 0.70, 0.03, 0.2, 15},
      {0.72, 0.80, -0.50, 0.02, 0.2, 9},
      {0.82, 0.90, 0.30, 0.00, 0.2, 5},
      {0.25, 0.40, 0.80, 0.04, 0.2, 17},
      {0.80, 0.90, 0.20, 0.01, 0.2, 5},
      {0.40, 0.50, -0.60, 0.03, 0.2, 15},
      {0.02, 0.05, -1.00, 0.05, 0.2, 21},
      {0.70, 0.75, 0.30, 0.01, 0.2, 9},
      {0.28, 0.40, -0.70, 0.04, 0.2, 17},
      {0.25, 0.35, -0.90, 0.04, 0.2, 19},
      {0.22, 0.30, 0.60, 0.05, 0.2, 19},
      {0.20, 0.30, -0.80, 0.05, 0.2, 19},
      {0.80, 0.85, -0.20, 0.00, 0.2, 5},
      {0.55, 0.65, -0.50, 0.02, 0.2, 11},
  };
  return bank;
}

UserModel random_user(Rng& rng) {
  UserModel u;
  u.experience = 1.0 - rng.uniform();  // (0, 1]
  u.attention = rng.uniform();
  u.size_tendency = rng.uniform(-1.0, 1.0);
  u.error_probability = rng.uniform(0.0, 0.05);
  u.anatomical_difficulty = 0.2;
  u.morph_kernel = 2 * rng.uniform_int(0, 10) + 1;
  return u;
}

std::vector<UserModel> make_user_bank(int n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("make_user_bank: need at least one user");
  const auto& bank = default_user_bank();
  std::vector<UserModel> users;
  for (int j = 0; j < n; ++j) {
    if (j < static_cast<int>(bank.size())) {
      users.push_back(bank[j]);
    } else {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j), 0x5553));
      users.push_back(random_user(rng));
    }
  }
  return users;
}

BinaryMask simulate_user_segment(const GoldShape& gold, const UserModel& user,
                                 const UserSimConfig& cfg, Rng& rng) {
  user.validate();
  if (gold.mask.is_empty()) throw EmptyMaskError("simulate_user_segment: gold mask is empty");
  const double inexperience = 1.0 - user.experience;
  const double r_eq = std::sqrt(static_cast<double>(gold.mask.count()) / std::numbers::pi);
  RadialContour c = gold.contour;
  const std::size_t k = c.radii.size();

  // Every random value is drawn unconditionally so a user's stream stays
  // aligned regardless of which branches fire.
  const double rot = rng.normal() * (1.0 - user.attention) * cfg.rotation_deg;
  std::vector<double> jitter(k);
  for (auto& v : jitter) v = rng.normal();
  const bool gross = rng.bernoulli(user.error_probability);
  const double sector_at = rng.uniform(0.0, kTwoPi);
  const double sector_half = rng.uniform(std::numbers::pi / 8.0, std::numbers::pi / 4.0);
  const double shift = rng.uniform(-1.0, 1.0) * cfg.gross_error_fraction * r_eq;
  const int side = rng.uniform_int(1, user.morph_kernel);

  const double scale = 1.0 + user.size_tendency * cfg.scale_coeff * inexperience;
  for (auto& r : c.radii) r *= scale;
  c.rotation += deg2rad(rot);

  const double amp = cfg.jitter_coeff * user.anatomical_difficulty * inexperience * r_eq;
  for (auto& v : jitter) v *= amp;
  smooth_periodic(jitter, cfg.jitter_smoothing);
  for (std::size_t i = 0; i < k; ++i) c.radii[i] += jitter[i];

  if (gross) {
    for (std::size_t i = 0; i < k; ++i) {
      const double phi = kTwoPi * static_cast<double>(i) / static_cast<double>(k);
      const double d = std::remainder(phi - sector_at, kTwoPi);
      if (std::abs(d) < sector_half) {
        c.radii[i] += shift * 0.5 * (1.0 + std::cos(std::numbers::pi * d / sector_half));
      }
    }
  }
  for (auto& r : c.radii) r = std::max(RadialContour::kMinRadius, r);

  BinaryMask s = rasterize(c, gold.mask.width(), gold.mask.height());

  const double eff_side = 1.0 + (side - 1) * inexperience;
  const int radius = static_cast<int>(std::lround((eff_side - 1.0) / 2.0));
  if (radius > 0 && user.size_tendency > 0.0) {
    s = dilate_disk(s, radius);
  } else if (radius > 0 && user.size_tendency < 0.0) {
    s = erode_disk(s, radius);
  }

  if (intersection_count(s, gold.mask) == 0) {
    const int cx = std::clamp(static_cast<int>(std::lround(gold.contour.cx)), 0, s.width() - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(gold.contour.cy)), 0, s.height() - 1);
    s.set(cx, cy);
    if (!gold.mask.get(cx, cy)) {
      const auto bb = gold.mask.bounding_box();
      for (int y = bb->y0; y <= bb->y1 && intersection_count(s, gold.mask) == 0; ++y) {
        for (int x = bb->x0; x <= bb->x1; ++x) {
          if (gold.mask.get(x, y)) {
            s.set(x, y);
            break;
          }
        }
      }
    }
  }
  return s;
}

}  // namespace batlas
