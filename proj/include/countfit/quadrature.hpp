#pragma once

#include <vector>

namespace countfit {

/// Gauss–Hermite rule for ∫ f(x) e^{-x²} dx (physicists' weight).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point rule from the Golub–Welsch eigenproblem. Nodes ascending; the
/// odd-n middle node is exactly 0.
GaussHermiteRule gauss_hermite(int n);

}  // namespace countfit
