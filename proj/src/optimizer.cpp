#include "countfit/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "countfit/errors.hpp"

namespace countfit {

void OptimizerConfig::validate() const {
  if (!(gradient_tolerance > 0.0)) throw ValidationError("gradient_tolerance must be positive");
  if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
  if (max_step_halvings <= 0) throw ValidationError("max_step_halvings must be positive");
  if (quadrature_points <= 0 || quadrature_points % 2 == 0) {
    throw ValidationError("quadrature_points must be a positive odd integer");
  }
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kMaxStep = 5.0;  // largest move of any single coordinate per iteration

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Accept when the objective rose by the Armijo fraction, allowing for
// round-off in the sum that defines it.
bool sufficient_increase(double f_old, double f_new, double alpha, double slope) {
  if (!std::isfinite(f_new)) return false;
  const double noise = 1e-13 * std::max(1.0, std::fabs(f_old));
  return f_new >= f_old + kArmijo * alpha * slope - noise;
}

}  // namespace

OptimizationResult maximize_bfgs(const ObjectiveFn& f, Eigen::VectorXd x0,
                                 const OptimizerConfig& cfg) {
  const auto p = x0.size();
  OptimizationResult res;
  res.x = std::move(x0);
  res.gradient = Eigen::VectorXd::Zero(p);
  res.value = f(res.x, res.gradient);
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    res.message = "objective is not finite at the starting point";
    return res;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(p, p);
  bool fresh = true;
  Eigen::VectorXd g_new(p);

  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    if (max_abs(res.gradient) < cfg.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient below tolerance";
      return res;
    }

    Eigen::VectorXd d = H * res.gradient;
    double slope = res.gradient.dot(d);
    if (!(slope > 0.0)) {
      H.setIdentity();
      fresh = true;
      d = res.gradient;
      slope = res.gradient.dot(d);
    }
    if (const double len = max_abs(d); len > kMaxStep) {
      d *= kMaxStep / len;
      slope = res.gradient.dot(d);
    }

    double alpha = 1.0;
    double f_new = 0.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_step_halvings; ++h) {
      x_new = res.x + alpha * d;
      f_new = f(x_new, g_new);
      if (sufficient_increase(res.value, f_new, alpha, slope) && g_new.allFinite()) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        continue;
      }
      res.message = "line search failed to increase the objective";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd yv = res.gradient - g_new;  // gradient change of −f
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (fresh) {
        H = Eigen::MatrixXd::Identity(p, p) * (sy / yv.squaredNorm());
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
          rho * s * s.transpose();
    }
    res.x = std::move(x_new);
    res.value = f_new;
    res.gradient = g_new;
  }
  res.converged = max_abs(res.gradient) < cfg.gradient_tolerance;
  res.message = res.converged ? "gradient below tolerance" : "iteration limit reached";
  return res;
}

Eigen::MatrixXd numerical_hessian(const ObjectiveFn& f, const Eigen::VectorXd& x,
                                  double rel_step) {
  const auto p = x.size();
  Eigen::MatrixXd Hm(p, p);
  Eigen::VectorXd gp(p), gm(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = rel_step * std::max(1.0, std::fabs(x[j]));
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    f(xp, gp);
    f(xm, gm);
    Hm.col(j) = (gp - gm) / (xp[j] - xm[j]);
  }
  return 0.5 * (Hm + Hm.transpose());
}

OptimizationResult newton_polish(const ObjectiveFn& f, OptimizationResult res,
                                 const OptimizerConfig& cfg, int max_steps) {
  Eigen::VectorXd g_new(res.x.size());
  for (int step = 0; step < max_steps; ++step) {
    if (max_abs(res.gradient) < cfg.gradient_tolerance) break;
    const Eigen::MatrixXd Hm = numerical_hessian(f, res.x);
    Eigen::LLT<Eigen::MatrixXd> llt(-Hm);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd d = llt.solve(res.gradient);
    if (const double len = max_abs(d); len > kMaxStep) d *= kMaxStep / len;
    const double slope = res.gradient.dot(d);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_step_halvings; ++h) {
      const Eigen::VectorXd x_new = res.x + alpha * d;
      const double f_new = f(x_new, g_new);
      if (sufficient_increase(res.value, f_new, alpha, slope) && g_new.allFinite()) {
        res.x = x_new;
        res.value = f_new;
        res.gradient = g_new;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++res.iterations;
    if (!accepted) break;
  }
  res.converged = max_abs(res.gradient) < cfg.gradient_tolerance;
  if (res.converged) res.message = "gradient below tolerance";
  return res;
}

}  // namespace countfit
