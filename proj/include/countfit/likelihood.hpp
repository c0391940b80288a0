#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "countfit/model_data.hpp"
#include "countfit/quadrature.hpp"

namespace countfit {

/// Position of each parameter block in the unconstrained vector the
/// optimizer sees: [β | γ (ZINB) | log θ | log σ (GLMM)].
struct ParameterLayout {
  Family family = Family::NB;
  Eigen::Index n_count = 0;
  Eigen::Index n_zero = 0;

  static ParameterLayout for_design(const DesignMatrix& d);

  Eigen::Index size() const { return n_count + n_zero + 1 + (has_sigma() ? 1 : 0); }
  Eigen::Index zero_begin() const { return n_count; }
  Eigen::Index log_theta() const { return n_count + n_zero; }
  Eigen::Index log_sigma() const { return n_count + n_zero + 1; }
  bool has_sigma() const { return family == Family::GLMM_NB; }

  std::vector<std::string> names(const DesignMatrix& d) const;
};

/// Log-likelihood of the rate model for one family, evaluated with its
/// analytic gradient with respect to the unconstrained parameters.
class LogLikelihood {
 public:
  /// `quadrature_points` is used by the GLMM family only.
  LogLikelihood(const DesignMatrix& design, int quadrature_points = 15);

  const ParameterLayout& layout() const { return layout_; }

  /// Returns LL(x) and writes ∂LL/∂x into `grad`.
  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  double value(const Eigen::VectorXd& x) const;

  /// Per-observation log-likelihood contributions (NB and ZINB only).
  Eigen::VectorXd pointwise(const Eigen::VectorXd& x) const;

 private:
  double nb(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::VectorXd* point) const;
  double zinb(const Eigen::VectorXd& x, Eigen::VectorXd* grad, Eigen::VectorXd* point) const;
  double glmm(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;

  const DesignMatrix& design_;
  ParameterLayout layout_;
  GaussHermiteRule rule_;
  std::vector<double> log_factorial_;             // lgamma(y + 1)
  std::vector<std::vector<Eigen::Index>> groups_;  // GLMM members per group
};

/// NB log-pmf with derivatives with respect to the log mean η and log θ.
struct NbPoint {
  double log_p;
  double d_eta;
  double d_log_theta;
};

NbPoint nb_point(std::int64_t y, double eta, double theta);

}  // namespace countfit
