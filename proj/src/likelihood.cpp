#include "countfit/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "countfit/errors.hpp"
#include "countfit/special_functions.hpp"

namespace countfit {

ParameterLayout ParameterLayout::for_design(const DesignMatrix& d) {
  ParameterLayout l;
  l.family = d.family;
  l.n_count = d.X.cols();
  l.n_zero = d.family == Family::ZINB ? d.Z.cols() : 0;
  return l;
}

std::vector<std::string> ParameterLayout::names(const DesignMatrix& d) const {
  std::vector<std::string> out(d.count_columns.begin(), d.count_columns.end());
  if (family == Family::ZINB) {
    for (const auto& c : d.zero_columns) out.push_back("zero:" + c);
  }
  out.emplace_back("log(theta)");
  if (has_sigma()) out.emplace_back("log(sigma)");
  return out;
}

NbPoint nb_point(std::int64_t y, double eta, double theta) {
  const double yy = static_cast<double>(y);
  const double lambda = std::exp(eta);
  const double denom = theta + lambda;
  const double log1p_ratio = std::log1p(lambda / theta);
  NbPoint out;
  out.log_p = special::log_rising_factorial(theta, y) - yy * std::log(denom) + yy * eta -
              std::lgamma(yy + 1.0) - theta * log1p_ratio;
  out.d_eta = theta * (yy - lambda) / denom;
  out.d_log_theta = theta * (special::digamma_rising_difference(theta, y) - log1p_ratio +
                             (lambda - yy) / denom);
  return out;
}

LogLikelihood::LogLikelihood(const DesignMatrix& design, int quadrature_points)
    : design_(design), layout_(ParameterLayout::for_design(design)) {
  log_factorial_.reserve(design.y.size());
  for (auto y : design.y) log_factorial_.push_back(std::lgamma(static_cast<double>(y) + 1.0));
  if (design.family == Family::GLMM_NB) {
    rule_ = gauss_hermite(quadrature_points);
    groups_.assign(design.group_names.size(), {});
    for (std::size_t i = 0; i < design.group_index.size(); ++i) {
      groups_[static_cast<std::size_t>(design.group_index[i])].push_back(
          static_cast<Eigen::Index>(i));
    }
  }
}

double LogLikelihood::operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  grad.setZero(layout_.size());
  switch (layout_.family) {
    case Family::NB: return nb(x, &grad, nullptr);
    case Family::ZINB: return zinb(x, &grad, nullptr);
    case Family::GLMM_NB: return glmm(x, &grad);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double LogLikelihood::value(const Eigen::VectorXd& x) const {
  switch (layout_.family) {
    case Family::NB: return nb(x, nullptr, nullptr);
    case Family::ZINB: return zinb(x, nullptr, nullptr);
    case Family::GLMM_NB: return glmm(x, nullptr);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Eigen::VectorXd LogLikelihood::pointwise(const Eigen::VectorXd& x) const {
  Eigen::VectorXd point(design_.n());
  switch (layout_.family) {
    case Family::NB: nb(x, nullptr, &point); break;
    case Family::ZINB: zinb(x, nullptr, &point); break;
    case Family::GLMM_NB:
      throw ValidationError("pointwise log-likelihood is not defined for the GLMM family");
  }
  return point;
}

double LogLikelihood::nb(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                         Eigen::VectorXd* point) const {
  const auto& X = design_.X;
  const Eigen::VectorXd eta = X * x.head(layout_.n_count) + design_.offset;
  const double theta = std::exp(x[layout_.log_theta()]);
  Eigen::VectorXd d_eta;
  if (grad) d_eta.resize(eta.size());
  double total = 0.0;
  double d_log_theta = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const auto pt = nb_point(design_.y[static_cast<std::size_t>(i)], eta[i], theta);
    total += pt.log_p;
    if (point) (*point)[i] = pt.log_p;
    if (grad) {
      d_eta[i] = pt.d_eta;
      d_log_theta += pt.d_log_theta;
    }
  }
  if (grad) {
    grad->head(layout_.n_count) = X.transpose() * d_eta;
    (*grad)[layout_.log_theta()] = d_log_theta;
  }
  return total;
}

double LogLikelihood::zinb(const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                           Eigen::VectorXd* point) const {
  const auto& X = design_.X;
  const auto& Z = design_.Z;
  const Eigen::VectorXd eta = X * x.head(layout_.n_count) + design_.offset;
  const Eigen::VectorXd zeta = Z * x.segment(layout_.zero_begin(), layout_.n_zero);
  const double theta = std::exp(x[layout_.log_theta()]);
  Eigen::VectorXd d_eta, d_zeta;
  if (grad) {
    d_eta.resize(eta.size());
    d_zeta.resize(eta.size());
  }
  double total = 0.0;
  double d_log_theta = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const auto y = design_.y[static_cast<std::size_t>(i)];
    const auto pt = nb_point(y, eta[i], theta);
    const double log_keep = -special::log1pexp(zeta[i]);  // log(1 − w)
    double lp;
    if (y == 0) {
      const double log_w = -special::log1pexp(-zeta[i]);
      const double nb_part = log_keep + pt.log_p;
      lp = special::log_add_exp(log_w, nb_part);
      if (grad) {
        const double w = special::logistic(zeta[i]);
        const double r_w = std::exp(log_w - lp);
        const double r_nb = std::exp(nb_part - lp);
        d_zeta[i] = r_w * (1.0 - w) - r_nb * w;
        d_eta[i] = r_nb * pt.d_eta;
        d_log_theta += r_nb * pt.d_log_theta;
      }
    } else {
      lp = log_keep + pt.log_p;
      if (grad) {
        d_zeta[i] = -special::logistic(zeta[i]);
        d_eta[i] = pt.d_eta;
        d_log_theta += pt.d_log_theta;
      }
    }
    total += lp;
    if (point) (*point)[i] = lp;
  }
  if (grad) {
    grad->head(layout_.n_count) = X.transpose() * d_eta;
    grad->segment(layout_.zero_begin(), layout_.n_zero) = Z.transpose() * d_zeta;
    (*grad)[layout_.log_theta()] = d_log_theta;
  }
  return total;
}

// Random-intercept NB: each group contributes
//   log ∫ Π_i NB(y_i | η_i + σu, θ) φ(u) du
// by adaptive Gauss–Hermite quadrature centred at the mode û of
//   h(u) = Σ_i log NB(y_i | η_i + σu) − u²/2
// and scaled by s = (−h''(û))^{-1/2}. The gradient differentiates the
// quadrature formula itself, including the dependence of û and s on the
// parameters (implicit function theorem), so it is exact for every node
// count.
double LogLikelihood::glmm(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  const auto p = layout_.n_count;
  const auto P = layout_.size();
  const auto it = layout_.log_theta();
  const auto is = layout_.log_sigma();
  const auto& X = design_.X;
  const auto& y = design_.y;
  const Eigen::VectorXd eta = X * x.head(p) + design_.offset;
  const double theta = std::exp(x[it]);
  const double sigma = std::exp(x[is]);
  const double sigma2 = sigma * sigma;
  const auto K = static_cast<Eigen::Index>(rule_.nodes.size());

  const auto n = eta.size();
  std::vector<double> rising(static_cast<std::size_t>(n));
  std::vector<double> psi_diff(grad ? static_cast<std::size_t>(n) : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto yi = y[static_cast<std::size_t>(i)];
    rising[static_cast<std::size_t>(i)] = special::log_rising_factorial(theta, yi);
    if (grad) psi_diff[static_cast<std::size_t>(i)] = special::digamma_rising_difference(theta, yi);
  }

  const double log_norm = -0.5 * std::log(std::numbers::pi);
  double total = 0.0;
  std::vector<double> lw(static_cast<std::size_t>(K));
  Eigen::MatrixXd node_beta(p, K);
  Eigen::VectorXd node_theta(K), node_s1(K), node_u(K);
  Eigen::VectorXd d2x(p), d3x(p);
  Eigen::VectorXd dhp(P), dhpp(P), g_group(P);

  for (const auto& members : groups_) {
    // Mode of h by Newton; h is strictly concave.
    double u = 0.0;
    double s1 = 0.0, s2 = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      s1 = 0.0;
      s2 = 0.0;
      for (auto i : members) {
        const double yy = static_cast<double>(y[static_cast<std::size_t>(i)]);
        const double lam = std::exp(eta[i] + sigma * u);
        const double den = theta + lam;
        s1 += theta * (yy - lam) / den;
        s2 -= theta * lam * (theta + yy) / (den * den);
      }
      const double hp = sigma * s1 - u;
      const double hpp = sigma2 * s2 - 1.0;
      double delta = -hp / hpp;
      if (!std::isfinite(delta)) return std::numeric_limits<double>::quiet_NaN();
      delta = std::clamp(delta, -2.0, 2.0);
      u += delta;
      if (std::fabs(delta) < 1e-14 * (1.0 + std::fabs(u))) break;
    }

    // Derivatives of h at the mode.
    double s3 = 0.0, t1 = 0.0, t2 = 0.0;
    s1 = 0.0;
    s2 = 0.0;
    d2x.setZero();
    d3x.setZero();
    for (auto i : members) {
      const double yy = static_cast<double>(y[static_cast<std::size_t>(i)]);
      const double lam = std::exp(eta[i] + sigma * u);
      const double den = theta + lam;
      const double den2 = den * den;
      const double d1 = theta * (yy - lam) / den;
      const double d2 = -theta * lam * (theta + yy) / den2;
      const double d3 = d2 * (theta - lam) / den;
      s1 += d1;
      s2 += d2;
      s3 += d3;
      if (grad) {
        d2x += d2 * X.row(i).transpose();
        d3x += d3 * X.row(i).transpose();
        t1 += theta * (yy - lam) * lam / den2;
        t2 -= theta * lam * (2.0 * theta * lam + yy * lam - theta * yy) / (den2 * den);
      }
    }
    const double tau = 1.0 - sigma2 * s2;
    const double scale = 1.0 / std::sqrt(tau);

    double lse = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      const double xk = rule_.nodes[static_cast<std::size_t>(k)];
      const double uk = u + std::numbers::sqrt2 * scale * xk;
      const double shift = sigma * uk;
      double h = -0.5 * uk * uk;
      double a_theta = 0.0, a_s1 = 0.0;
      if (grad) node_beta.col(k).setZero();
      for (auto i : members) {
        const auto si = static_cast<std::size_t>(i);
        const double yy = static_cast<double>(y[si]);
        const double e = eta[i] + shift;
        const double lam = std::exp(e);
        const double den = theta + lam;
        const double l1p = std::log1p(lam / theta);
        h += rising[si] - yy * std::log(den) + yy * e - log_factorial_[si] - theta * l1p;
        if (grad) {
          const double d1 = theta * (yy - lam) / den;
          a_s1 += d1;
          node_beta.col(k) += d1 * X.row(i).transpose();
          a_theta += theta * (psi_diff[si] - l1p + (lam - yy) / den);
        }
      }
      lw[static_cast<std::size_t>(k)] =
          std::log(rule_.weights[static_cast<std::size_t>(k)]) + xk * xk + h;
      lse = special::log_add_exp(lse, lw[static_cast<std::size_t>(k)]);
      if (grad) {
        node_theta[k] = a_theta;
        node_s1[k] = a_s1;
        node_u[k] = uk;
      }
    }
    total += std::log(scale) + log_norm + lse;
    if (!grad) continue;

    // ∂h'/∂ψ and ∂h''/∂ψ at the mode.
    dhp.head(p) = sigma * d2x;
    dhp[it] = sigma * t1;
    dhp[is] = sigma * s1 + sigma2 * u * s2;
    dhpp.head(p) = sigma2 * d3x;
    dhpp[it] = sigma2 * t2;
    dhpp[is] = 2.0 * sigma2 * s2 + sigma2 * sigma * u * s3;
    const double hppp = sigma2 * sigma * s3;
    const Eigen::VectorXd du = dhp / tau;
    const Eigen::VectorXd dh2 = dhpp + hppp * du;
    const Eigen::VectorXd ds_over_s = 0.5 * scale * scale * dh2;
    const Eigen::VectorXd ds = scale * ds_over_s;

    g_group = ds_over_s;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double pik = std::exp(lw[static_cast<std::size_t>(k)] - lse);
      if (pik == 0.0) continue;
      const double xk = rule_.nodes[static_cast<std::size_t>(k)];
      const double hprime = sigma * node_s1[k] - node_u[k];
      g_group.head(p) += pik * node_beta.col(k);
      g_group[it] += pik * node_theta[k];
      g_group[is] += pik * sigma * node_u[k] * node_s1[k];
      g_group += (pik * hprime) * (du + std::numbers::sqrt2 * xk * ds);
    }
    *grad += g_group;
  }
  return total;
}

}  // namespace countfit
