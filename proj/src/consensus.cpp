#include "batlas/consensus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "batlas/error.hpp"

namespace batlas {

void StapleParams::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (max_iters < 1) throw InvalidArgument("STAPLE max_iters must be >= 1");
  if (!(tol > 0.0)) throw InvalidArgument("STAPLE tolerance must be positive");
  if (!open_unit(init_sensitivity) || !open_unit(init_specificity)) {
    throw InvalidArgument("STAPLE initial sensitivity/specificity must lie in (0, 1)");
  }
  if (prior_mode == PriorMode::kFixed && !open_unit(fixed_prior)) {
    throw InvalidArgument("STAPLE fixed prior must lie in (0, 1)");
  }
  if (!(decision_threshold >= 0.0 && decision_threshold <= 1.0)) {
    throw InvalidArgument("STAPLE decision threshold must lie in [0, 1]");
  }
}

double ConsensusResult::mean_posterior() const {
  if (posterior.empty()) return 0.0;
  return std::accumulate(posterior.begin(), posterior.end(), 0.0) /
         static_cast<double>(posterior.size());
}

namespace {

void require_uniform(std::span<const BinaryMask> masks, std::size_t min_count, const char* who) {
  if (masks.size() < min_count) {
    throw InvalidArgument(std::string(who) + " needs at least " + std::to_string(min_count) +
                          " masks");
  }
  for (const auto& m : masks) {
    if (!m.same_shape(masks.front())) {
      throw InvalidArgument(std::string(who) + ": mask dimension mismatch");
    }
  }
}

// Distinct vote patterns with their pixel counts and, per pixel, its pattern.
struct PatternTable {
  std::size_t key_words = 0;
  std::vector<std::uint64_t> keys;  // pattern u occupies [u*key_words, (u+1)*key_words)
  std::vector<std::size_t> counts;
  std::vector<std::uint32_t> pixel_pattern;

  bool vote(std::size_t u, std::size_t rater) const {
    return (keys[u * key_words + (rater >> 6)] >> (rater & 63)) & 1u;
  }
};

PatternTable tabulate(std::span<const BinaryMask> masks) {
  const std::size_t n_pixels = masks.front().size();
  const std::size_t kw = (masks.size() + 63) / 64;
  std::vector<std::uint64_t> pixel_keys(n_pixels * kw, 0);
  for (std::size_t j = 0; j < masks.size(); ++j) {
    const auto words = masks[j].words();
    const std::uint64_t bit = std::uint64_t{1} << (j & 63);
    for (std::size_t w = 0; w < words.size(); ++w) {
      std::uint64_t word = words[w];
      while (word) {
        const std::size_t p = w * 64 + static_cast<std::size_t>(std::countr_zero(word));
        pixel_keys[p * kw + (j >> 6)] |= bit;
        word &= word - 1;
      }
    }
  }
  auto key_less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(pixel_keys.begin() + a * kw,
                                        pixel_keys.begin() + (a + 1) * kw,
                                        pixel_keys.begin() + b * kw,
                                        pixel_keys.begin() + (b + 1) * kw);
  };
  std::vector<std::size_t> order(n_pixels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), key_less);

  PatternTable t;
  t.key_words = kw;
  t.pixel_pattern.resize(n_pixels);
  for (std::size_t i = 0; i < n_pixels; ++i) {
    const std::size_t p = order[i];
    if (i == 0 || key_less(order[i - 1], p)) {
      t.keys.insert(t.keys.end(), pixel_keys.begin() + p * kw, pixel_keys.begin() + (p + 1) * kw);
      t.counts.push_back(0);
    }
    t.counts.back() += 1;
    t.pixel_pattern[p] = static_cast<std::uint32_t>(t.counts.size() - 1);
  }
  return t;
}

double clamp_rate(double v) { return std::clamp(v, kRaterClamp, 1.0 - kRaterClamp); }

}  // namespace

ConsensusResult staple(std::span<const BinaryMask> masks, const StapleParams& params) {
  params.validate();
  require_uniform(masks, 2, "staple");
  const std::size_t n_raters = masks.size();
  const std::size_t n_pixels = masks.front().size();
  const int width = masks.front().width();
  const int height = masks.front().height();

  ConsensusResult result;
  if (std::all_of(masks.begin(), masks.end(), [](const BinaryMask& m) { return m.is_empty(); })) {
    result.mask = BinaryMask(width, height);
    result.posterior.assign(n_pixels, 0.0);
    result.per_rater.assign(n_raters, RaterPerformance{params.init_sensitivity, 1.0});
    result.converged = true;
    return result;
  }

  const PatternTable table = tabulate(masks);
  const std::size_t n_patterns = table.counts.size();

  std::vector<double> prior(n_patterns);
  for (std::size_t u = 0; u < n_patterns; ++u) {
    if (params.prior_mode == PriorMode::kFixed) {
      prior[u] = params.fixed_prior;
    } else {
      std::size_t votes = 0;
      for (std::size_t w = 0; w < table.key_words; ++w) {
        votes += std::popcount(table.keys[u * table.key_words + w]);
      }
      prior[u] = std::clamp(static_cast<double>(votes) / n_raters, 0.01, 0.99);
    }
  }

  std::vector<double> sens(n_raters, params.init_sensitivity);
  std::vector<double> spec(n_raters, params.init_specificity);
  std::vector<double> weight(n_patterns, 0.0);
  std::vector<double> previous(n_patterns, 0.0);
  std::vector<double> log_sens(n_raters), log_miss(n_raters), log_spec(n_raters),
      log_false(n_raters);

  for (int it = 1; it <= params.max_iters; ++it) {
    // E-step in the log domain.
    for (std::size_t j = 0; j < n_raters; ++j) {
      log_sens[j] = std::log(sens[j]);
      log_miss[j] = std::log1p(-sens[j]);
      log_spec[j] = std::log(spec[j]);
      log_false[j] = std::log1p(-spec[j]);
    }
    for (std::size_t u = 0; u < n_patterns; ++u) {
      double log_fg = std::log(prior[u]);
      double log_bg = std::log1p(-prior[u]);
      for (std::size_t j = 0; j < n_raters; ++j) {
        if (table.vote(u, j)) {
          log_fg += log_sens[j];
          log_bg += log_false[j];
        } else {
          log_fg += log_miss[j];
          log_bg += log_spec[j];
        }
      }
      weight[u] = 1.0 / (1.0 + std::exp(log_bg - log_fg));
    }

    double delta = 0.0;
    for (std::size_t u = 0; u < n_patterns; ++u) {
      delta += static_cast<double>(table.counts[u]) * std::abs(weight[u] - previous[u]);
    }
    delta /= static_cast<double>(n_pixels);

    // M-step.
    double total_fg = 0.0;
    double total_bg = 0.0;
    for (std::size_t u = 0; u < n_patterns; ++u) {
      total_fg += table.counts[u] * weight[u];
      total_bg += table.counts[u] * (1.0 - weight[u]);
    }
    for (std::size_t j = 0; j < n_raters; ++j) {
      double marked_fg = 0.0;
      double unmarked_bg = 0.0;
      for (std::size_t u = 0; u < n_patterns; ++u) {
        if (table.vote(u, j)) {
          marked_fg += table.counts[u] * weight[u];
        } else {
          unmarked_bg += table.counts[u] * (1.0 - weight[u]);
        }
      }
      if (total_fg > 0.0) sens[j] = clamp_rate(marked_fg / total_fg);
      if (total_bg > 0.0) spec[j] = clamp_rate(unmarked_bg / total_bg);
    }

    result.iters = it;
    if (it > 1 && delta < params.tol) {
      result.converged = true;
      break;
    }
    previous = weight;
  }

  result.mask = BinaryMask(width, height);
  result.posterior.resize(n_pixels);
  for (std::size_t p = 0; p < n_pixels; ++p) {
    const double w = weight[table.pixel_pattern[p]];
    result.posterior[p] = w;
    if (w >= params.decision_threshold) result.mask.set(p);
  }
  result.per_rater.resize(n_raters);
  for (std::size_t j = 0; j < n_raters; ++j) result.per_rater[j] = {sens[j], spec[j]};
  return result;
}

BinaryMask majority_vote(std::span<const BinaryMask> masks) {
  require_uniform(masks, 1, "majority_vote");
  const std::size_t n = masks.front().size();
  std::vector<std::uint32_t> votes(n, 0);
  for (const auto& m : masks) {
    const auto words = m.words();
    for (std::size_t w = 0; w < words.size(); ++w) {
      std::uint64_t word = words[w];
      while (word) {
        ++votes[w * 64 + static_cast<std::size_t>(std::countr_zero(word))];
        word &= word - 1;
      }
    }
  }
  BinaryMask out(masks.front().width(), masks.front().height());
  for (std::size_t p = 0; p < n; ++p) {
    if (2 * static_cast<std::size_t>(votes[p]) > masks.size()) out.set(p);
  }
  return out;
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t uni = union_count(a, b);
  if (uni == 0) return 1.0;
  return static_cast<double>(intersection_count(a, b)) / static_cast<double>(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t inter = intersection_count(a, b);
  const std::size_t total = a.count() + b.count();
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

}  // namespace batlas
