#include "countfit/distributions.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "countfit/errors.hpp"
#include "countfit/special_functions.hpp"

namespace countfit {

NbParams::NbParams(double mean, double theta) : mean_(mean), theta_(theta) {
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw DomainError("negative binomial mean must be positive and finite");
  }
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw DomainError("negative binomial theta must be positive and finite");
  }
}

ZinbParams::ZinbParams(NbParams nb, double zero_prob) : nb_(nb), zero_prob_(zero_prob) {
  if (!(zero_prob >= 0.0 && zero_prob <= 1.0)) {
    throw DomainError("zero-inflation probability must lie in [0, 1]");
  }
}

namespace {

constexpr std::int64_t kDirectSumLimit = 256;

// log of pmf(k+1)/pmf(k).
double log_step_ratio(std::int64_t k, const NbParams& p) {
  const double kk = static_cast<double>(k);
  return std::log(kk + p.theta()) - std::log(kk + 1.0) + std::log(p.mean()) -
         std::log(p.theta() + p.mean());
}

}  // namespace

double nb_log_pmf(std::int64_t k, const NbParams& p) {
  if (k < 0) throw DomainError("count must be non-negative");
  const double lambda = p.mean();
  const double theta = p.theta();
  const double kk = static_cast<double>(k);
  // [log Γ(k+θ) − log Γ(θ)] − k log(θ+λ), summed as Σ log((θ+j)/(θ+λ)) for small k.
  double rising;
  if (k < kDirectSumLimit) {
    rising = 0.0;
    const double denom = theta + lambda;
    for (std::int64_t j = 0; j < k; ++j) {
      rising += std::log1p((static_cast<double>(j) - lambda) / denom);
    }
  } else {
    rising = std::lgamma(kk + theta) - std::lgamma(theta) - kk * std::log(theta + lambda);
  }
  return rising + kk * std::log(lambda) - std::lgamma(kk + 1.0) -
         theta * std::log1p(lambda / theta);
}

double nb_pmf(std::int64_t k, const NbParams& p) { return std::exp(nb_log_pmf(k, p)); }

double nb_variance(const NbParams& p) { return p.mean() * (1.0 + p.mean() / p.theta()); }

double zinb_pmf(std::int64_t k, const ZinbParams& p) {
  const double w = p.zero_prob();
  if (k == 0) return w + (1.0 - w) * nb_pmf(0, p.nb());
  return (1.0 - w) * nb_pmf(k, p.nb());
}

double zinb_log_pmf(std::int64_t k, const ZinbParams& p) {
  const double w = p.zero_prob();
  const double log_nb = nb_log_pmf(k, p.nb());
  const double log_keep = w < 1.0 ? std::log1p(-w) : -std::numeric_limits<double>::infinity();
  if (k == 0) {
    const double log_w = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    return special::log_add_exp(log_w, log_keep + log_nb);
  }
  return log_keep + log_nb;
}

double pmf(std::int64_t k, const CountDistribution& d) {
  return std::visit(
      [k](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NbParams>) return nb_pmf(k, p);
        else return zinb_pmf(k, p);
      },
      d);
}

double mean(const CountDistribution& d) {
  if (const auto* nb = std::get_if<NbParams>(&d)) return nb->mean();
  const auto& z = std::get<ZinbParams>(d);
  return (1.0 - z.zero_prob()) * z.nb().mean();
}

double variance(const CountDistribution& d) {
  if (const auto* nb = std::get_if<NbParams>(&d)) return nb_variance(*nb);
  const auto& z = std::get<ZinbParams>(d);
  const double w = z.zero_prob();
  const double m = z.nb().mean();
  // E[X²] = (1−w)(Var_nb + m²)
  const double second = (1.0 - w) * (nb_variance(z.nb()) + m * m);
  const double mu = (1.0 - w) * m;
  return second - mu * mu;
}

namespace {

const NbParams& nb_component(const CountDistribution& d) {
  if (const auto* nb = std::get_if<NbParams>(&d)) return *nb;
  return std::get<ZinbParams>(d).nb();
}

double nb_share(const CountDistribution& d) {
  if (std::holds_alternative<NbParams>(d)) return 1.0;
  return 1.0 - std::get<ZinbParams>(d).zero_prob();
}

// Geometric bound given log pmf(k_max + 1) of the NB component.
double nb_tail_bound(const NbParams& p, std::int64_t k_max, double log_next) {
  const double r_next = std::exp(log_step_ratio(k_max + 1, p));
  const double r_limit = p.mean() / (p.theta() + p.mean());
  const double r = std::max(r_next, r_limit);
  if (r >= 1.0) return std::numeric_limits<double>::infinity();
  return std::exp(log_next) / (1.0 - r);
}

}  // namespace

double tail_mass_bound(const CountDistribution& d, std::int64_t k_max) {
  if (k_max < 0) return 1.0;
  const double share = nb_share(d);
  if (share == 0.0) return 0.0;
  const auto& nb = nb_component(d);
  return share * std::min(1.0, nb_tail_bound(nb, k_max, nb_log_pmf(k_max + 1, nb)));
}

std::int64_t tail_k_max(const CountDistribution& d, double budget) {
  const double share = nb_share(d);
  if (share == 0.0) return 0;
  const auto& nb = nb_component(d);
  double log_next = nb_log_pmf(1, nb);  // log pmf(k + 1) for k = 0
  for (std::int64_t k = 0; k < kMaxSupport; ++k) {
    if (share * nb_tail_bound(nb, k, log_next) < budget) return k;
    log_next += log_step_ratio(k + 1, nb);
  }
  return kMaxSupport;
}

std::vector<double> pmf_table(const CountDistribution& d, std::int64_t k_max) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k_max + 1));
  for (std::int64_t k = 0; k <= k_max; ++k) out.push_back(pmf(k, d));
  return out;
}

double truncated_mean(const CountDistribution& d, std::int64_t k_max, double budget) {
  const double remaining = tail_mass_bound(d, k_max);
  if (remaining >= budget) {
    throw ToleranceError("tail mass beyond k_max = " + std::to_string(k_max) + " is up to " +
                             std::to_string(remaining) + ", budget " + std::to_string(budget),
                         remaining);
  }
  double total = 0.0;
  for (std::int64_t k = 1; k <= k_max; ++k) total += static_cast<double>(k) * pmf(k, d);
  return total;
}

std::int64_t sample(const CountDistribution& d, Rng& rng) {
  if (const auto* z = std::get_if<ZinbParams>(&d)) {
    if (bernoulli(rng, z->zero_prob())) return 0;
    return sample(CountDistribution{z->nb()}, rng);
  }
  const auto& nb = std::get<NbParams>(d);
  const double g = gamma(rng, nb.theta(), 1.0 / nb.theta());
  return poisson(rng, nb.mean() * g);
}

}  // namespace countfit
