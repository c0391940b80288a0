#pragma once

#include <cstdint>

namespace countfit::special {

/// log Γ(x + k) − log Γ(x) for integer k ≥ 0, x > 0. Summed term by term for
/// small k so that the difference stays accurate when x is huge (the Poisson
/// limit of the negative binomial).
double log_rising_factorial(double x, std::int64_t k);

/// ψ(x + k) − ψ(x) for integer k ≥ 0, x > 0.
double digamma_rising_difference(double x, std::int64_t k);

double digamma(double x);

/// log(1 + e^x) without overflow.
double log1pexp(double x);

/// 1 / (1 + e^-x).
double logistic(double x);

/// log(e^a + e^b).
double log_add_exp(double a, double b);

double normal_cdf(double x);

/// P(|Z| ≥ |z|) for standard normal Z.
double two_sided_normal_p(double z);

}  // namespace countfit::special
