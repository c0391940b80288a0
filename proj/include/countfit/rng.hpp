#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace countfit {

/// xoshiro256** generator seeded through SplitMix64.
///
/// Every sampler below is implemented here rather than through <random>
/// distributions, whose algorithms differ between standard libraries; a
/// given seed therefore produces the same stream on every platform.
///
/// Stream splitting: `Rng(seed, stream)` seeds SplitMix64 with
/// `seed ^ (0x9E3779B97F4A7C15 * (stream + 1))` and draws the four state
/// words from it. Callers assign one fixed stream id per purpose
/// (covariates, group effects, counts, ...), so adding draws to one purpose
/// never perturbs another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1); never returns 0.
  double uniform_open();

 private:
  std::array<std::uint64_t, 4> state_;
};

/// Stable 64-bit id for a named stream (FNV-1a of the name).
std::uint64_t stream_id(std::string_view name);

double standard_normal(Rng& rng);
double normal(Rng& rng, double mean, double sd);
double uniform(Rng& rng, double lo, double hi);
bool bernoulli(Rng& rng, double p);

/// Gamma(shape, scale) by Marsaglia–Tsang, with the u^(1/shape) boost for shape < 1.
double gamma(Rng& rng, double shape, double scale);

/// Poisson(mean): sequential inversion below mean 10, Hörmann's PTRS above.
std::int64_t poisson(Rng& rng, double mean);

}  // namespace countfit
