#include "countfit/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace countfit::special {

namespace {
// Below this count the rising factorial is summed directly.
constexpr std::int64_t kDirectSumLimit = 256;
}  // namespace

double log_rising_factorial(double x, std::int64_t k) {
  if (k <= 0) return 0.0;
  if (k < kDirectSumLimit) {
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += std::log(x + static_cast<double>(j));
    return s;
  }
  return std::lgamma(x + static_cast<double>(k)) - std::lgamma(x);
}

double digamma(double x) {
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  result += std::log(x) - 0.5 / x -
            f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
  return result;
}

double digamma_rising_difference(double x, std::int64_t k) {
  if (k <= 0) return 0.0;
  if (k < kDirectSumLimit) {
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += 1.0 / (x + static_cast<double>(j));
    return s;
  }
  return digamma(x + static_cast<double>(k)) - digamma(x);
}

double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double two_sided_normal_p(double z) { return std::erfc(std::fabs(z) / std::numbers::sqrt2); }

}  // namespace countfit::special
