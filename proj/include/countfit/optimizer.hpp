#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace countfit {

struct OptimizerConfig {
  double gradient_tolerance = 1e-6;  ///< on max |∂LL/∂param|
  int max_iterations = 200;
  int max_step_halvings = 30;
  int quadrature_points = 15;  ///< GLMM only; odd, 1 = Laplace

  /// Throws ValidationError.
  void validate() const;
};

/// Returns the objective and writes its gradient.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OptimizationResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// BFGS ascent with backtracking (Armijo) line search. Converged means
/// max |gradient| < cfg.gradient_tolerance.
OptimizationResult maximize_bfgs(const ObjectiveFn& f, Eigen::VectorXd x0,
                                 const OptimizerConfig& cfg);

/// Central-difference Jacobian of the gradient, relative step `rel_step`,
/// symmetrized.
Eigen::MatrixXd numerical_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                  double rel_step = 1e-5);

/// Up to `max_steps` damped Newton steps using the numerical Hessian; used
/// to finish off a BFGS run whose line search stalled in round-off.
OptimizationResult newton_polish(const ObjectiveFn& f, OptimizationResult start,
                                 const OptimizerConfig& cfg, int max_steps = 8);

}  // namespace countfit
