#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "spiked/channel.hpp"
#include "spiked/priors.hpp"
#include "spiked/quadrature.hpp"

namespace spiked {

// Symmetric PSD overlap matrix Q on S_M.
class OverlapMatrix {
 public:
  static OverlapMatrix from_matrix(Eigen::MatrixXd q);
  static OverlapMatrix isotropic(int dim, double tau);

  const Eigen::MatrixXd& matrix() const { return q_; }
  int dimension() const { return static_cast<int>(q_.rows()); }

 private:
  explicit OverlapMatrix(Eigen::MatrixXd q) : q_(std::move(q)) {}
  Eigen::MatrixXd q_;
};

struct PotentialEvaluation {
  double value_logz = 0.0;  // (1/M) E ln Z_M^RS - (lambda/4M) Tr Q^2
  double value_mi = 0.0;    // mutual-information form of the same potential
  double std_err = 0.0;     // Monte Carlo error (0 on the quadrature path)
  double lambda = 0.0;
  Eigen::MatrixXd overlap;
};

struct FixedPointResult {
  Eigen::MatrixXd overlap;  // 1x1 in the scalar case
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double potential_value = 0.0;
  std::vector<double> trace;  // residual per iteration
};

// ---- rank one -------------------------------------------------------------

// F_1^RS(tau, lambda) for tau in [0, rho].
double f1_rs(const Prior& prior, double tau, double lambda, const GaussQuadrature& quad);

// E_{z,x0} x0 <x>_RS at overlap q: the scalar state-evolution map.
double f1_overlap_map(const Prior& prior, double q, double lambda, const GaussQuadrature& quad);

struct ScalarSup {
  double value = 0.0;
  double q_star = 0.0;
};

// Global max of tau -> F_1^RS on [0, rho]: 512-point grid, then golden-section
// refinement to 1e-10. Ties within 1e-10 resolve to the smallest tau.
ScalarSup f1_sup(const Prior& prior, double lambda, const GaussQuadrature& quad);

FixedPointResult f1_fixed_point(const Prior& prior, double lambda, double q0, double damping,
                                const GaussQuadrature& quad);

struct MmsePrediction {
  bool unique = false;
  std::optional<double> value;   // rho^2 - q*^2 when the argmax is unique
  std::vector<double> maximizers;
};

MmsePrediction mmse_prediction(const Prior& prior, double lambda, const GaussQuadrature& quad);

// ---- rank M ---------------------------------------------------------------

// Rank-M replica-symmetric system at fixed (prior, M, lambda). Expectations over
// x0 are exact sums over the k^M product atoms; over z a tensor Gauss-Hermite
// rule for M <= 3, Monte Carlo with `mc.samples` draws for 3 < M <= 6.
class ReplicaSystem {
 public:
  ReplicaSystem(const Prior& prior, int dim, double lambda, const GaussQuadrature& axis,
                const McOptions& mc = {});

  int dimension() const { return dim_; }
  double lambda() const { return lambda_; }
  const Prior& prior() const { return prior_; }

  struct LogPartition {
    double mean;
    double std_err;
  };
  LogPartition expected_log_partition(const Eigen::MatrixXd& q) const;

  // (1/M) E ln Z_M^RS - (lambda / 4M) Tr Q^2.
  double potential(const Eigen::MatrixXd& q) const;

  // E_{z,x0} <x x0^T>_{RS,M}(Q), symmetrized.
  Eigen::MatrixXd overlap_map(const Eigen::MatrixXd& q) const;

 private:
  template <class Visit>
  double sweep(const Eigen::MatrixXd& q, Visit&& visit) const;

  Prior prior_;
  int dim_;
  double lambda_;
  ProductAtoms atoms_;
  Eigen::MatrixXd nodes_;   // G x M
  Eigen::VectorXd weights_;
  std::vector<std::pair<Eigen::Index, double>> x0_terms_;  // (atom index, weight)
  bool monte_carlo_ = false;
};

PotentialEvaluation fm_rs(const Prior& prior, const OverlapMatrix& q, double lambda,
                          const GaussQuadrature& axis, const McOptions& mc = {});

// Per-eigenvalue residuals q_i^{1/2} (O_i^T E<x x0^T> O_i - q_i).
std::vector<double> criticality_residuals(const ReplicaSystem& system, const Eigen::MatrixXd& q);

struct MatrixFixedPointOptions {
  double damping = 0.5;
  double tolerance = 1e-8;
  int max_iterations = 10000;
};

FixedPointResult fm_fixed_point(const Prior& prior, double lambda, const OverlapMatrix& q0,
                                const GaussQuadrature& axis,
                                const MatrixFixedPointOptions& options = {});

struct FmSupOptions {
  int eigen_points = 0;     // 0: 32 for M = 2, 12 for M = 3
  int angle_points = 0;     // 0: 24 for M = 2, 6 per Euler angle for M = 3
  int coarse_order = 0;     // 0: 12 for M = 2, 5 for M = 3
  int refine_order = 0;     // 0: 16 for M = 2, 10 for M = 3
  int final_order = kDefaultTensorOrder;
  int refine_starts = 3;
  int refine_sweeps = 8;
};

struct MatrixSup {
  double value = 0.0;
  Eigen::MatrixXd q_star;
  Eigen::VectorXd eigenvalues;
};

// Maximum of F_M^RS over S_M[0, rho] for M in {2, 3}, searched in the
// eigen-parametrization Q = O diag(q) O^T.
MatrixSup fm_sup(const Prior& prior, int dim, double lambda, const FmSupOptions& options = {});

struct PhasePoint {
  double lambda;
  double q_star;
  double value;
  double dq_dlambda;
  std::optional<double> mmse;
};

struct PhaseScan {
  std::vector<PhasePoint> points;
  // Grid cell [lambda_i, lambda_{i+1}] holding the largest jump of q*, reported
  // only when q* leaves 0 in that cell.
  std::optional<std::pair<double, double>> transition;
};

PhaseScan phase_scan(const Prior& prior, const std::vector<double>& lambda_grid,
                     const GaussQuadrature& quad);

}  // namespace spiked
