#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/quadrature.hpp"

namespace spiked {

inline constexpr int kDefaultScalarOrder = 64;
inline constexpr int kDefaultTensorOrder = 24;
inline constexpr int kMaxQuadratureDim = 3;
inline constexpr long kMaxProductAtoms = 1L << 20;

// All k^M atom vectors of the product prior P_X^{(x)M}, one per column.
struct ProductAtoms {
  Eigen::MatrixXd values;       // M x K
  Eigen::VectorXd weights;      // K
  Eigen::VectorXd log_weights;  // K
};

ProductAtoms product_atoms(const Prior& prior, int dim);

// Symmetric PSD noise covariance Sigma of the vector channel x0 + Sigma^{1/2} z.
class NoiseCovariance {
 public:
  static NoiseCovariance from_matrix(Eigen::MatrixXd sigma);
  static NoiseCovariance diagonal(const std::vector<double>& variances);

  const Eigen::MatrixXd& sigma() const { return sigma_; }
  int dimension() const { return static_cast<int>(sigma_.rows()); }
  double normalized_trace() const { return sigma_.trace() / dimension(); }

 private:
  explicit NoiseCovariance(Eigen::MatrixXd s) : sigma_(std::move(s)) {}
  Eigen::MatrixXd sigma_;
};

// I(x0; sqrt(s) x0 + z) in nats, x0 ~ prior, z ~ N(0, 1).
double mi_scalar_signal(const Prior& prior, double s, const GaussQuadrature& quad);

// I(x0; x0 + sqrt(t) z) = mi_scalar_signal(prior, 1/t); t > 0.
double mi_scalar_noise(const Prior& prior, double t, const GaussQuadrature& quad);

// E (x0 - E[x0 | y])^2 for y = sqrt(s) x0 + z.
double mmse_scalar(const Prior& prior, double s, const GaussQuadrature& quad);

// Posterior mean E[x0 | sqrt(s) x0 + z = y].
double denoiser_scalar(const Prior& prior, double y, double s);

struct McOptions {
  std::size_t samples = 200000;
  std::uint64_t seed = 0;
};

struct MiEstimate {
  double value = 0.0;
  double std_err = 0.0;  // 0 on the quadrature path
  bool monte_carlo = false;
};

// I(x0; B x0 + z) for x0 ~ P_X^{(x)M}, z ~ N(0, I_M), with B = signal (M x M).
// Tensor quadrature with `axis` per coordinate for M <= 3, Monte Carlo beyond.
MiEstimate mi_vector_signal(const Prior& prior, const Eigen::MatrixXd& signal,
                            const GaussQuadrature& axis, const McOptions& mc = {});

// I(x0; x0 + Sigma^{1/2} z). Sigma must be positive definite.
MiEstimate mi_vector(const Prior& prior, int dim, const NoiseCovariance& sigma,
                     const GaussQuadrature& axis, const McOptions& mc = {});

// Smallest central second difference of t -> I(x0; x0 + sqrt(t) z) on a
// uniform grid lying in [D^2, inf).
double check_mi_convexity(const Prior& prior, const std::vector<double>& t_grid,
                          const GaussQuadrature& quad);

}  // namespace spiked
