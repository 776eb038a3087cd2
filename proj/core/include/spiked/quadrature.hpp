#pragma once

#include <Eigen/Dense>
#include <vector>

namespace spiked {

// Probability-normalized quadrature rule: E f(X) ~= sum_i weights[i] * f(nodes[i]).
struct GaussQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;
};

// Rule for the standard Gaussian N(0, 1), 1 <= order <= 256. Nodes come from the
// symmetric Jacobi matrix of the probabilists' Hermite recurrence (Golub-Welsch);
// weights from the Christoffel function, which keeps every weight positive.
GaussQuadrature gauss_hermite(int order);

// Rule for the uniform probability measure on [-1, 1].
GaussQuadrature gauss_legendre(int order);

// Tensor product of a one-dimensional rule: nodes is (points x dim).
struct TensorQuadrature {
  Eigen::MatrixXd nodes;
  Eigen::VectorXd weights;
};

TensorQuadrature tensor_product(const GaussQuadrature& axis, int dim);

}  // namespace spiked
