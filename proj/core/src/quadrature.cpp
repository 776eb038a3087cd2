#include "spiked/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "spiked/error.hpp"

namespace spiked {
namespace {

// beta[k] is the k-th off-diagonal of the Jacobi matrix of an orthonormal family
// with zero recurrence diagonal (symmetric measures); beta[0] is unused.
GaussQuadrature golub_welsch(int order, const std::vector<double>& beta) {
  GaussQuadrature rule;
  rule.order = order;
  if (order == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub[k - 1] = beta[k];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& x = solver.eigenvalues();

  std::vector<double> nodes(order), weights(order);
  for (int i = 0; i < order; ++i) {
    // Christoffel weight 1 / sum_k p_k(x)^2 with orthonormal p_k.
    double prev = 0.0, cur = 1.0, sum = 1.0;
    for (int k = 0; k + 1 < order; ++k) {
      const double next = (x[i] * cur - (k > 0 ? beta[k] * prev : 0.0)) / beta[k + 1];
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    nodes[i] = x[i];
    weights[i] = 1.0 / sum;
  }
  // Exact reflection symmetry so odd moments vanish to roundoff.
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double a = 0.5 * (nodes[j] - nodes[i]);
    const double w = 0.5 * (weights[i] + weights[j]);
    nodes[i] = -a;
    nodes[j] = a;
    weights[i] = weights[j] = w;
  }
  if (order % 2 == 1) nodes[order / 2] = 0.0;
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  rule.nodes = std::move(nodes);
  rule.weights = std::move(weights);
  return rule;
}

}  // namespace

GaussQuadrature gauss_hermite(int order) {
  require(order >= 1 && order <= 256,
          "gauss_hermite: order must be in [1, 256], got " + std::to_string(order));
  std::vector<double> beta(order);
  for (int k = 1; k < order; ++k) beta[k] = std::sqrt(static_cast<double>(k));
  return golub_welsch(order, beta);
}

GaussQuadrature gauss_legendre(int order) {
  require(order >= 1 && order <= 256,
          "gauss_legendre: order must be in [1, 256], got " + std::to_string(order));
  std::vector<double> beta(order);
  for (int k = 1; k < order; ++k) {
    const double kk = static_cast<double>(k);
    beta[k] = kk / std::sqrt(4.0 * kk * kk - 1.0);
  }
  return golub_welsch(order, beta);
}

TensorQuadrature tensor_product(const GaussQuadrature& axis, int dim) {
  require(dim >= 1, "tensor_product: dim must be positive");
  const int n = static_cast<int>(axis.nodes.size());
  long points = 1;
  for (int d = 0; d < dim; ++d) points *= n;
  TensorQuadrature t;
  t.nodes.resize(points, dim);
  t.weights.resize(points);
  for (long p = 0; p < points; ++p) {
    long rest = p;
    double w = 1.0;
    for (int d = dim - 1; d >= 0; --d) {
      const int i = static_cast<int>(rest % n);
      rest /= n;
      t.nodes(p, d) = axis.nodes[i];
      w *= axis.weights[i];
    }
    t.weights[p] = w;
  }
  return t;
}

}  // namespace spiked
