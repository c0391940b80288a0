#include "countfit/quadrature.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "countfit/errors.hpp"

namespace countfit {

GaussHermiteRule gauss_hermite(int n) {
  if (n <= 0) throw ValidationError("quadrature needs at least one node");
  GaussHermiteRule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {std::sqrt(std::numbers::pi)};
    return rule;
  }
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * k);
    J(k - 1, k) = b;
    J(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = eig.eigenvalues()[k];
    const double v0 = eig.eigenvectors()(0, k);
    rule.weights[k] = std::sqrt(std::numbers::pi) * v0 * v0;
  }
  // Symmetrize: the rule is exactly symmetric about 0.
  for (int k = 0; k < n / 2; ++k) {
    const int m = n - 1 - k;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[m] = x;
    rule.weights[k] = w;
    rule.weights[m] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace countfit
