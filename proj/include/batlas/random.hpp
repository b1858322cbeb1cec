#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace batlas {

// Recorded in dataset manifests. All distributions below are implemented by
// hand on top of the raw 64-bit engine output, because the standard library
// distributions are not specified bit-for-bit across implementations.
inline constexpr std::string_view kRngAlgorithm =
    "mt19937_64+splitmix64-streams/box-muller/marsaglia-tsang";

// splitmix64 finaliser chain; mixes a counter into an independent seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t item, std::uint64_t stream = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive range, unbiased.
  int uniform_int(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  // Gamma(shape, scale = 1).
  double gamma(double shape);
  std::vector<double> dirichlet(double alpha, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace batlas
