#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "countfit/rng.hpp"

namespace countfit {

/// Negative binomial in the mean/dispersion parameterization. θ is the
/// stored parameter; α = 1/θ is derived. θ → ∞ is the Poisson limit.
class NbParams {
 public:
  NbParams(double mean, double theta);

  double mean() const noexcept { return mean_; }
  double theta() const noexcept { return theta_; }
  double alpha() const noexcept { return 1.0 / theta_; }

 private:
  double mean_;
  double theta_;
};

/// Point mass at zero with probability `zero_prob`, NB otherwise.
class ZinbParams {
 public:
  ZinbParams(NbParams nb, double zero_prob);

  const NbParams& nb() const noexcept { return nb_; }
  double zero_prob() const noexcept { return zero_prob_; }

 private:
  NbParams nb_;
  double zero_prob_;
};

using CountDistribution = std::variant<NbParams, ZinbParams>;

/// log P(k) = log Γ(k+θ) − log Γ(θ) − log k! + θ log(θ/(θ+λ)) + k log(λ/(θ+λ)).
double nb_log_pmf(std::int64_t k, const NbParams& p);
double nb_pmf(std::int64_t k, const NbParams& p);
double nb_variance(const NbParams& p);

double zinb_pmf(std::int64_t k, const ZinbParams& p);
double zinb_log_pmf(std::int64_t k, const ZinbParams& p);

double pmf(std::int64_t k, const CountDistribution& d);
double mean(const CountDistribution& d);
double variance(const CountDistribution& d);

inline constexpr double kDefaultTailBudget = 1e-9;
inline constexpr std::int64_t kMaxSupport = 10000;

/// Upper bound on P(X > k_max), from the geometric bound on the pmf ratio
/// beyond k_max.
double tail_mass_bound(const CountDistribution& d, std::int64_t k_max);

/// Smallest k_max whose tail bound is below `budget`, capped at kMaxSupport.
std::int64_t tail_k_max(const CountDistribution& d, double budget = kDefaultTailBudget);

/// pmf(0..k_max).
std::vector<double> pmf_table(const CountDistribution& d, std::int64_t k_max);

/// Σ_{k ≤ k_max} k·pmf(k). Throws ToleranceError when the tail beyond k_max
/// exceeds `budget`.
double truncated_mean(const CountDistribution& d, std::int64_t k_max,
                      double budget = kDefaultTailBudget);

/// NB draw as Poisson(λ·G), G ~ Gamma(θ, 1/θ); ZINB gates with Bernoulli(w) first.
std::int64_t sample(const CountDistribution& d, Rng& rng);

}  // namespace countfit
