#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spiked/channel.hpp"
#include "spiked/replica.hpp"
#include "spiked/rng.hpp"

namespace spiked {

inline constexpr double kQuadratureTol = 1e-6;
inline constexpr double kEqualityTol = 1e-8;
inline constexpr double kSupGapTol = 1e-3;
inline constexpr double kIsotropyTol = 1e-2;
inline constexpr double kConvexityTol = 1e-7;

// mi_vector(Sigma) - sum_i mi_scalar_noise(Sigma_ii). Both sides share `axis`.
double check_lemma1(const Prior& prior, const NoiseCovariance& sigma, const GaussQuadrature& axis,
                    const McOptions& mc = {});

// mi_vector(Sigma) - M mi_scalar_noise(Tr Sigma / M). Requires Sigma_ii >= D^2.
double check_cor1(const Prior& prior, const NoiseCovariance& sigma, const GaussQuadrature& axis,
                  const McOptions& mc = {});

// A A^T / M + shift I with A i.i.d. standard Gaussian.
Eigen::MatrixXd random_covariance(int dim, double shift, Philox4x32& stream);

// As above, with the diagonal lifted so that min_i Sigma_ii >= floor + extra.
Eigen::MatrixXd random_covariance_above(int dim, double floor, double extra, Philox4x32& stream);

struct BatchResult {
  int samples = 0;
  double min_residual = 0.0;          // over random Sigma
  double max_equality_residual = 0.0;  // |residual| over the equality cases
  bool pass = false;
};

struct BatchOptions {
  int samples = 200;
  int axis_order = kDefaultTensorOrder;
  double shift = 0.05;
  std::uint64_t seed = 0;
};

// Random PSD batch plus diagonal equality cases.
BatchResult lemma1_batch(const Prior& prior, int dim, const BatchOptions& options);

// Random batch with Sigma_ii >= D^2 plus Sigma = sigma I equality cases.
BatchResult cor1_batch(const Prior& prior, int dim, const BatchOptions& options);

// Minimum second difference of t -> I over a uniform grid on [D^2, 5 D^2].
double convexity_check(const Prior& prior, int points, const GaussQuadrature& quad);

struct ReductionPass {
  bool gap = false;
  bool isotropy = false;  // true when skipped at the critical cell
  bool lemma1 = true;
  bool cor1 = true;
  bool convexity = true;
};

struct ReductionReport {
  std::string prior_label;
  int dim = 0;
  double lambda = 0.0;
  double fm_sup_value = 0.0;
  double f1_sup_value = 0.0;
  double gap = 0.0;
  double q_star = 0.0;
  double maximizer_isotropy = 0.0;
  bool isotropy_skipped = false;
  std::optional<double> lemma1_min_residual;
  std::optional<double> cor1_min_residual;
  std::optional<double> convexity_min_second_diff;
  ReductionPass pass;
};

struct ReductionOptions {
  FmSupOptions sup;
  int scalar_order = kDefaultScalarOrder;
  // Grid cell [lo, hi] in which the isotropy check is skipped.
  std::optional<std::pair<double, double>> critical_cell;
  // Attach the covariance-trimming, trace-bound and convexity batches to every row when set.
  std::optional<BatchOptions> batches;
  int convexity_points = 41;
};

std::vector<ReductionReport> reduction_sweep(const Prior& prior, int dim,
                                             const std::vector<double>& lambda_grid,
                                             const ReductionOptions& options = {});

}  // namespace spiked
