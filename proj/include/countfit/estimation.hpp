#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "countfit/model_data.hpp"
#include "countfit/optimizer.hpp"

namespace countfit {

inline constexpr int kFitSchemaVersion = 1;

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;  ///< NaN when not identified
  double z = 0.0;
  double p_value = 0.0;

  bool operator==(const Coefficient&) const = default;
};

/// Everything a fit reports. `aic`/`bic` are always derived from
/// `log_likelihood`, `n_params` and `n_obs`; `finalize()` sets them.
struct FitResult {
  Family family = Family::NB;
  std::vector<Coefficient> count_coefficients;
  std::vector<Coefficient> zero_coefficients;
  double theta = 0.0;
  double theta_std_error = 0.0;
  double random_intercept_sd = 0.0;
  double random_intercept_sd_std_error = 0.0;
  double log_likelihood = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  long n_obs = 0;
  long n_params = 0;
  bool converged = false;
  int iterations = 0;
  double max_gradient_norm = 0.0;
  double gradient_tolerance = 1e-6;
  int quadrature_points = 0;
  std::vector<std::string> diagnostics;
  ModelSpec model_spec;
  std::string data_checksum;

  /// Sets aic and bic from the log-likelihood.
  void finalize();
  /// Throws ValidationError when aic/bic or the convergence invariant fail.
  void check_invariants() const;

  Eigen::VectorXd count_estimates() const;
  Eigen::VectorXd zero_estimates() const;

  bool operator==(const FitResult&) const = default;
};

double aic(double log_likelihood, long n_params);
double bic(double log_likelihood, long n_params, long n_obs);

FitResult fit_nb(const DesignMatrix& design, const OptimizerConfig& cfg = {});
FitResult fit_zinb(const DesignMatrix& design, const OptimizerConfig& cfg = {});
FitResult fit_glmm_nb(const DesignMatrix& design, const OptimizerConfig& cfg = {});

/// Dispatches on design.family.
FitResult fit(const DesignMatrix& design, const OptimizerConfig& cfg = {});

/// Builds the design for `spec`, fits it and records the spec in the result.
FitResult fit_model(const std::vector<SectionRecord>& records, const ModelSpec& spec,
                    const OptimizerConfig& cfg = {});

/// Unconstrained parameter vector [β | γ | log θ | log σ] of a fit.
Eigen::VectorXd parameter_vector(const FitResult& fit);

/// Fitted means λ̂_i. NB and GLMM use fixed effects only; ZINB returns the
/// unconditional mean (1 − ŵ_i)·exp(x_i β̂ + offset_i).
Eigen::VectorXd predict_mean(const FitResult& fit, const DesignMatrix& design);

/// Linear predictor x_i β̂ + offset_i.
Eigen::VectorXd linear_predictor(const FitResult& fit, const DesignMatrix& design);

/// ŵ_i for ZINB fits; zeros for the other families.
Eigen::VectorXd zero_probabilities(const FitResult& fit, const DesignMatrix& design);

/// NB deviance residuals at the fitted (fixed-effect) means.
Eigen::VectorXd deviance_residuals(const FitResult& fit, const DesignMatrix& design);

/// 2·(saturated LL − model LL) for the NB family with the fitted θ.
double nb_deviance(const FitResult& fit, const DesignMatrix& design);

/// Per-observation log-likelihood contributions (NB and ZINB).
Eigen::VectorXd pointwise_log_likelihood(const FitResult& fit, const DesignMatrix& design);

struct VuongResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Uncorrected Vuong statistic; positive values favour `a`. `design_a` and
/// `design_b` must be built from the same dataset.
VuongResult vuong_test(const FitResult& a, const DesignMatrix& design_a, const FitResult& b,
                       const DesignMatrix& design_b);

nlohmann::json to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& j);

}  // namespace countfit
