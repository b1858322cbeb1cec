#pragma once

#include <span>
#include <utility>
#include <vector>

#include "batlas/mask.hpp"

namespace batlas {

enum class PriorMode {
  kMeanOfMasks,  // per pixel: fraction of raters marking it, clamped to [0.01, 0.99]
  kFixed,        // spatially constant fixed_prior
};

struct StapleParams {
  int max_iters = 100;
  double tol = 1e-6;  // on the mean absolute change of the posterior
  double init_sensitivity = 0.9999;
  double init_specificity = 0.9999;
  PriorMode prior_mode = PriorMode::kMeanOfMasks;
  double fixed_prior = 0.5;
  double decision_threshold = 0.5;  // foreground iff W >= threshold

  void validate() const;  // throws InvalidArgument
};

struct RaterPerformance {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct ConsensusResult {
  BinaryMask mask;
  std::vector<double> posterior;  // W, one value per pixel
  std::vector<RaterPerformance> per_rater;
  int iters = 0;
  bool converged = false;

  double mean_posterior() const;
};

// Sensitivity and specificity estimates are clamped to [1e-6, 1 - 1e-6].
inline constexpr double kRaterClamp = 1e-6;

// Binary STAPLE (EM over the latent true segmentation). Pixels sharing the
// same rater vote pattern share a posterior, so EM runs over distinct
// patterns. Needs >= 2 masks of identical size.
ConsensusResult staple(std::span<const BinaryMask> masks, const StapleParams& params = {});

// True iff strictly more than half the raters mark the pixel.
BinaryMask majority_vote(std::span<const BinaryMask> masks);

// |a ∩ b| / |a ∪ b|, 1 for two empty masks.
double jaccard(const BinaryMask& a, const BinaryMask& b);
// 2|a ∩ b| / (|a| + |b|), 1 for two empty masks.
double dice(const BinaryMask& a, const BinaryMask& b);

}  // namespace batlas
