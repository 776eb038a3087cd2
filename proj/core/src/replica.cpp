#include "spiked/replica.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "spiked/error.hpp"
#include "spiked/linalg.hpp"
#include "spiked/numeric.hpp"

namespace spiked {
namespace {

constexpr int kScalarGridPoints = 512;
constexpr double kScalarRefineTol = 1e-10;
constexpr double kTieTol = 1e-10;
constexpr double kUniquenessGap = 1e-8;
constexpr double kScalarFixedPointTol = 1e-10;
constexpr int kMaxFixedPointIterations = 10000;
constexpr int kMaxMonteCarloDim = 6;

double clamp_tau(double tau, double rho) { return std::clamp(tau, 0.0, rho); }

std::vector<double> scalar_grid(double rho) {
  std::vector<double> g(kScalarGridPoints);
  for (int i = 0; i < kScalarGridPoints; ++i) g[i] = rho * i / (kScalarGridPoints - 1);
  return g;
}

// Refined local maximum around grid index i.
GoldenResult refine_scalar(const Prior& prior, double lambda, const GaussQuadrature& quad,
                           const std::vector<double>& grid, std::size_t i) {
  const double rho = prior.second_moment();
  const double lo = grid[i == 0 ? 0 : i - 1];
  const double hi = grid[std::min(i + 1, grid.size() - 1)];
  return golden_max([&](double t) { return f1_rs(prior, clamp_tau(t, rho), lambda, quad); }, lo,
                    hi, kScalarRefineTol);
}

}  // namespace

// ---------------------------------------------------------------------------
// Rank one

double f1_rs(const Prior& prior, double tau, double lambda, const GaussQuadrature& quad) {
  const double rho = prior.second_moment();
  require(lambda >= 0.0, "f1_rs: lambda must be non-negative");
  require(tau >= -1e-12 && tau <= rho + 1e-12, "f1_rs: tau must lie in [0, rho]");
  if (tau <= 0.0 || lambda == 0.0) return 0.0;
  const double s = lambda * tau;
  const double rs = std::sqrt(s);
  const auto atoms = prior.atoms();
  std::vector<double> expo(atoms.size());
  double total = 0.0;
  for (const Atom& a0 : atoms) {
    double inner = 0.0;
    for (std::size_t g = 0; g < quad.nodes.size(); ++g) {
      const double z = quad.nodes[g];
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double x = atoms[i].value;
        expo[i] = std::log(atoms[i].weight) + rs * z * x + s * a0.value * x - 0.5 * s * x * x;
      }
      inner += quad.weights[g] * log_sum_exp(expo);
    }
    total += a0.weight * inner;
  }
  return total - 0.25 * lambda * tau * tau;
}

double f1_overlap_map(const Prior& prior, double q, double lambda, const GaussQuadrature& quad) {
  const double s = lambda * std::max(q, 0.0);
  if (s == 0.0) return 0.0;
  const double rs = std::sqrt(s);
  double total = 0.0;
  for (const Atom& a0 : prior.atoms()) {
    double inner = 0.0;
    for (std::size_t g = 0; g < quad.nodes.size(); ++g)
      inner += quad.weights[g] * denoiser_scalar(prior, rs * a0.value + quad.nodes[g], s);
    total += a0.weight * a0.value * inner;
  }
  return total;
}

ScalarSup f1_sup(const Prior& prior, double lambda, const GaussQuadrature& quad) {
  require(lambda >= 0.0, "f1_sup: lambda must be non-negative");
  if (lambda == 0.0) return {0.0, 0.0};
  const std::vector<double> grid = scalar_grid(prior.second_moment());
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = f1_rs(prior, grid[i], lambda, quad);
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
  const GoldenResult refined = refine_scalar(prior, lambda, quad, grid, best);

  const double top = std::max(values[best], refined.value);
  ScalarSup out{top, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (values[i] >= top - kTieTol && grid[i] < out.q_star) {
      out.q_star = grid[i];
      out.value = values[i];
    }
  }
  if (refined.value >= top - kTieTol && refined.x < out.q_star) {
    out.q_star = clamp_tau(refined.x, prior.second_moment());
    out.value = refined.value;
  }
  // Report the supremum itself even when the tie-broken argmax sits a hair lower.
  out.value = top;
  return out;
}

FixedPointResult f1_fixed_point(const Prior& prior, double lambda, double q0, double damping,
                                const GaussQuadrature& quad) {
  const double rho = prior.second_moment();
  require(q0 >= 0.0 && q0 <= rho + 1e-12, "f1_fixed_point: q0 must lie in [0, rho]");
  require(damping > 0.0 && damping <= 1.0, "f1_fixed_point: damping must lie in (0, 1]");
  require(lambda >= 0.0, "f1_fixed_point: lambda must be non-negative");
  FixedPointResult r;
  double q = q0;
  for (int it = 0; it <= kMaxFixedPointIterations; ++it) {
    const double next = f1_overlap_map(prior, q, lambda, quad);
    const double res = std::abs(next - q);
    r.trace.push_back(res);
    r.iterations = it;
    r.residual = res;
    if (res <= kScalarFixedPointTol) {
      r.converged = true;
      break;
    }
    if (it == kMaxFixedPointIterations) break;
    q = clamp_tau((1.0 - damping) * q + damping * next, rho);
  }
  r.overlap = Eigen::MatrixXd::Constant(1, 1, q);
  r.potential_value = f1_rs(prior, clamp_tau(q, rho), lambda, quad);
  return r;
}

MmsePrediction mmse_prediction(const Prior& prior, double lambda, const GaussQuadrature& quad) {
  require(lambda >= 0.0, "mmse_prediction: lambda must be non-negative");
  const double rho = prior.second_moment();
  MmsePrediction out;
  if (lambda == 0.0) {
    out.unique = true;
    out.value = rho * rho;
    out.maximizers = {0.0};
    return out;
  }
  const std::vector<double> grid = scalar_grid(rho);
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = f1_rs(prior, grid[i], lambda, quad);

  std::vector<GoldenResult> local;
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || values[i] >= values[i - 1];
    const bool right_ok = i + 1 == n || values[i] > values[i + 1];
    if (!(left_ok && right_ok)) continue;
    GoldenResult g = refine_scalar(prior, lambda, quad, grid, i);
    if (values[i] >= g.value) g = {grid[i], values[i]};
    local.push_back(g);
  }
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& g : local) top = std::max(top, g.value);
  const double spacing = grid[1] - grid[0];
  for (const auto& g : local) {
    if (g.value < top - kUniquenessGap) continue;
    const double x = clamp_tau(g.x, rho);
    bool duplicate = false;
    for (double m : out.maximizers) duplicate |= std::abs(m - x) <= 2.0 * spacing;
    if (!duplicate) out.maximizers.push_back(x);
  }
  out.unique = out.maximizers.size() == 1;
  if (out.unique) {
    const double q = f1_sup(prior, lambda, quad).q_star;
    out.value = rho * rho - q * q;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank M

OverlapMatrix OverlapMatrix::from_matrix(Eigen::MatrixXd q) {
  require(q.rows() == q.cols() && q.rows() >= 1, "overlap: matrix must be square and non-empty");
  require(is_symmetric(q), "overlap: matrix is not symmetric");
  require(min_eigenvalue(q) >= kPsdFloor, "overlap: matrix is not PSD");
  return OverlapMatrix(0.5 * (q + q.transpose()));
}

OverlapMatrix OverlapMatrix::isotropic(int dim, double tau) {
  return from_matrix(tau * Eigen::MatrixXd::Identity(dim, dim));
}

ReplicaSystem::ReplicaSystem(const Prior& prior, int dim, double lambda,
                             const GaussQuadrature& axis, const McOptions& mc)
    : prior_(prior), dim_(dim), lambda_(lambda) {
  require(lambda >= 0.0, "replica: lambda must be non-negative");
  require(dim >= 1 && dim <= kMaxMonteCarloDim,
          "replica: dimension overflow (M must be in [1, 6]), got " + std::to_string(dim));
  atoms_ = product_atoms(prior, dim);
  const Eigen::Index count = atoms_.values.cols();
  if (dim <= kMaxQuadratureDim) {
    TensorQuadrature tq = tensor_product(axis, dim);
    nodes_ = std::move(tq.nodes);
    weights_ = std::move(tq.weights);
    // Symmetric prior and symmetric nodes: (x0, z) -> (-x0, -z) leaves every
    // summand unchanged, so mirrored atom pairs are summed once with weight 2.
    if (prior.is_symmetric()) {
      const long k = static_cast<long>(prior.size());
      for (Eigen::Index c = 0; c < count; ++c) {
        long rest = c, mirror = 0, scale = 1;
        for (int d = 0; d < dim; ++d) {
          mirror += (k - 1 - rest % k) * scale;
          rest /= k;
          scale *= k;
        }
        if (c < mirror) x0_terms_.emplace_back(c, 2.0 * atoms_.weights[c]);
        if (c == mirror) x0_terms_.emplace_back(c, atoms_.weights[c]);
      }
      return;
    }
  } else {
    require(mc.samples >= 2, "replica: Monte Carlo needs at least 2 samples");
    monte_carlo_ = true;
    Philox4x32 stream = make_stream(mc.seed, stream_tag("replica"), 0);
    std::normal_distribution<double> gauss;
    nodes_.resize(static_cast<Eigen::Index>(mc.samples), dim);
    for (Eigen::Index g = 0; g < nodes_.rows(); ++g)
      for (int d = 0; d < dim; ++d) nodes_(g, d) = gauss(stream);
    weights_ = Eigen::VectorXd::Constant(nodes_.rows(), 1.0 / static_cast<double>(nodes_.rows()));
  }
  for (Eigen::Index c = 0; c < count; ++c) x0_terms_.emplace_back(c, atoms_.weights[c]);
}

// Calls visit(x0 index, x0 weight, lse per node, exponent matrix) for every x0 term.
// Exponents: sqrt(lambda) x^T sqrt(Q) z + lambda x0^T Q x - lambda/2 x^T Q x + log P(x).
template <class Visit>
double ReplicaSystem::sweep(const Eigen::MatrixXd& q, Visit&& visit) const {
  require(q.rows() == dim_ && q.cols() == dim_, "replica: overlap dimension mismatch");
  const Eigen::MatrixXd u = std::sqrt(lambda_) * psd_sqrt(q) * atoms_.values;  // M x K
  const Eigen::MatrixXd a = nodes_ * u;                                          // G x K
  const Eigen::RowVectorXd c =
      atoms_.log_weights.transpose() - 0.5 * u.colwise().squaredNorm();
  const Eigen::MatrixXd cross = u.transpose() * u;  // K x K
  Eigen::MatrixXd expo(a.rows(), a.cols());
  double total = 0.0;
  for (const auto& [j, w] : x0_terms_) {
    expo = a;
    expo.rowwise() += c + cross.row(j);
    const Eigen::VectorXd lse = row_log_sum_exp(expo);
    total += w * weights_.dot(lse);
    visit(j, w, lse, expo);
  }
  return total;
}

ReplicaSystem::LogPartition ReplicaSystem::expected_log_partition(const Eigen::MatrixXd& q) const {
  if (!monte_carlo_) return {sweep(q, [](auto, auto, const auto&, const auto&) {}), 0.0};
  Eigen::VectorXd per_node = Eigen::VectorXd::Zero(nodes_.rows());
  const double mean = sweep(q, [&](Eigen::Index, double w, const Eigen::VectorXd& lse,
                                   const Eigen::MatrixXd&) { per_node += w * lse; });
  std::vector<double> v(per_node.data(), per_node.data() + per_node.size());
  return {mean, summarize(v).std_err};
}

double ReplicaSystem::potential(const Eigen::MatrixXd& q) const {
  const double m = static_cast<double>(dim_);
  return expected_log_partition(q).mean / m - lambda_ / (4.0 * m) * (q * q).trace();
}

Eigen::MatrixXd ReplicaSystem::overlap_map(const Eigen::MatrixXd& q) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
  sweep(q, [&](Eigen::Index j, double w, const Eigen::VectorXd& lse, const Eigen::MatrixXd& expo) {
    // Posterior weights per node, averaged over nodes.
    const Eigen::MatrixXd post = (expo.colwise() - lse).array().exp().matrix();
    const Eigen::VectorXd avg = post.transpose() * weights_;
    const Eigen::VectorXd mean_x = atoms_.values * avg;
    out += w * mean_x * atoms_.values.col(j).transpose();
  });
  return 0.5 * (out + out.transpose());
}

PotentialEvaluation fm_rs(const Prior& prior, const OverlapMatrix& q, double lambda,
                          const GaussQuadrature& axis, const McOptions& mc) {
  const int dim = q.dimension();
  const ReplicaSystem system(prior, dim, lambda, axis, mc);
  const Eigen::MatrixXd& qm = q.matrix();
  const double m = static_cast<double>(dim);
  const double rho = prior.second_moment();

  PotentialEvaluation ev;
  ev.lambda = lambda;
  ev.overlap = qm;
  const auto lz = system.expected_log_partition(qm);
  ev.value_logz = lz.mean / m - lambda / (4.0 * m) * (qm * qm).trace();

  const MiEstimate mi =
      mi_vector_signal(prior, std::sqrt(lambda) * psd_sqrt(qm), axis, mc);
  const double frob = (qm - rho * Eigen::MatrixXd::Identity(dim, dim)).squaredNorm();
  ev.value_mi = -mi.value / m - lambda / (4.0 * m) * frob + lambda * rho * rho / 4.0;
  ev.std_err = std::hypot(lz.std_err / m, mi.std_err / m);
  return ev;
}

std::vector<double> criticality_residuals(const ReplicaSystem& system, const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd e = system.overlap_map(q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  std::vector<double> r;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const Eigen::VectorXd o = es.eigenvectors().col(i);
    const double qi = std::max(es.eigenvalues()[i], 0.0);
    r.push_back(std::sqrt(qi) * (o.dot(e * o) - qi));
  }
  return r;
}

FixedPointResult fm_fixed_point(const Prior& prior, double lambda, const OverlapMatrix& q0,
                                const GaussQuadrature& axis,
                                const MatrixFixedPointOptions& options) {
  const int dim = q0.dimension();
  require(dim <= kMaxQuadratureDim, "fm_fixed_point: requires M <= 3");
  require(options.damping > 0.0 && options.damping <= 1.0,
          "fm_fixed_point: damping must lie in (0, 1]");
  const ReplicaSystem system(prior, dim, lambda, axis);
  FixedPointResult r;
  Eigen::MatrixXd q = q0.matrix();
  for (int it = 0; it <= options.max_iterations; ++it) {
    const Eigen::MatrixXd next = system.overlap_map(q);
    const double res = (next - q).norm() / dim;
    r.trace.push_back(res);
    r.iterations = it;
    r.residual = res;
    if (res <= options.tolerance) {
      r.converged = true;
      break;
    }
    if (it == options.max_iterations) break;
    q = psd_project((1.0 - options.damping) * q + options.damping * next);
  }
  r.overlap = q;
  r.potential_value = system.potential(q);
  return r;
}

// ---------------------------------------------------------------------------
// Supremum over S_M[0, rho]

namespace {

struct EigenParams {
  std::vector<double> eig;
  std::vector<double> ang;
};

Eigen::MatrixXd assemble(int dim, const EigenParams& p) {
  const Eigen::MatrixXd r = rotation(dim, p.ang.data());
  Eigen::VectorXd d(dim);
  for (int i = 0; i < dim; ++i) d[i] = p.eig[i];
  Eigen::MatrixXd q = r * d.asDiagonal() * r.transpose();
  return 0.5 * (q + q.transpose());
}

int angle_count(int dim) { return dim == 2 ? 1 : 3; }

}  // namespace

MatrixSup fm_sup(const Prior& prior, int dim, double lambda, const FmSupOptions& opt_in) {
  require(dim == 2 || dim == 3, "fm_sup: M must be 2 or 3");
  require(lambda >= 0.0, "fm_sup: lambda must be non-negative");
  const double rho = prior.second_moment();
  MatrixSup out;
  if (lambda == 0.0) {
    out.q_star = Eigen::MatrixXd::Zero(dim, dim);
    out.eigenvalues = Eigen::VectorXd::Zero(dim);
    return out;
  }
  FmSupOptions opt = opt_in;
  if (opt.eigen_points == 0) opt.eigen_points = dim == 2 ? 32 : 12;
  if (opt.angle_points == 0) opt.angle_points = dim == 2 ? 24 : 6;
  if (opt.coarse_order == 0) opt.coarse_order = dim == 2 ? 12 : 5;
  if (opt.refine_order == 0) opt.refine_order = dim == 2 ? 16 : 10;
  require(opt.eigen_points >= 2 && opt.angle_points >= 1, "fm_sup: grid too small");

  const int n_ang = angle_count(dim);
  const double eig_step = rho / (opt.eigen_points - 1);
  // Angle ranges: theta in [0, pi) for M = 2; ZYZ (alpha, beta, gamma) in
  // [0, 2pi) x [0, pi) x [0, pi) for M = 3.
  std::vector<double> ang_range(n_ang, std::numbers::pi);
  if (dim == 3) ang_range[0] = 2.0 * std::numbers::pi;
  std::vector<double> ang_step(n_ang);
  for (int a = 0; a < n_ang; ++a) ang_step[a] = ang_range[a] / opt.angle_points;

  // Candidate list: descending eigenvalue tuples x rotation grid.
  std::vector<EigenParams> cand;
  std::vector<int> idx(dim, opt.eigen_points - 1);
  auto push_rotations = [&](const std::vector<double>& eig) {
    const bool isotropic = std::all_of(eig.begin(), eig.end(), [&](double v) { return v == eig[0]; });
    long rot = 1;
    if (!isotropic)
      for (int a = 0; a < n_ang; ++a) rot *= opt.angle_points;
    for (long r = 0; r < rot; ++r) {
      EigenParams p{eig, std::vector<double>(n_ang, 0.0)};
      long rest = r;
      for (int a = 0; a < n_ang; ++a) {
        p.ang[a] = ang_step[a] * static_cast<double>(rest % opt.angle_points);
        rest /= opt.angle_points;
      }
      cand.push_back(std::move(p));
    }
  };
  std::function<void(int, int)> rec = [&](int level, int upper) {
    if (level == dim) {
      std::vector<double> eig(dim);
      for (int i = 0; i < dim; ++i) eig[i] = eig_step * idx[i];
      push_rotations(eig);
      return;
    }
    for (int i = upper; i >= 0; --i) {
      idx[level] = i;
      rec(level + 1, i);
    }
  };
  rec(0, opt.eigen_points - 1);

  const ReplicaSystem coarse(prior, dim, lambda, gauss_hermite(opt.coarse_order));
  std::vector<double> values(cand.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < static_cast<long>(cand.size()); ++i)
    values[i] = coarse.potential(assemble(dim, cand[i]));

  std::vector<std::size_t> order(cand.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<std::size_t> starts;
  for (std::size_t i : order) {
    if (static_cast<int>(starts.size()) == opt.refine_starts) break;
    const Eigen::MatrixXd qi = assemble(dim, cand[i]);
    bool distinct = true;
    for (std::size_t s : starts) distinct &= (assemble(dim, cand[s]) - qi).norm() > 2.0 * eig_step;
    if (distinct) starts.push_back(i);
  }

  const ReplicaSystem refine(prior, dim, lambda, gauss_hermite(opt.refine_order));
  const ReplicaSystem final_sys(prior, dim, lambda, gauss_hermite(opt.final_order));
  std::vector<EigenParams> refined(starts.size());
  std::vector<double> final_values(starts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long s = 0; s < static_cast<long>(starts.size()); ++s) {
    EigenParams p = cand[starts[s]];
    double best = refine.potential(assemble(dim, p));
    for (int sweep = 0; sweep < opt.refine_sweeps; ++sweep) {
      const double shrink = std::ldexp(1.0, -sweep);
      for (int i = 0; i < dim; ++i) {
        const double h = eig_step * shrink;
        const double lo = std::max(0.0, p.eig[i] - h), hi = std::min(rho, p.eig[i] + h);
        EigenParams trial = p;
        const GoldenResult g = golden_max(
            [&](double v) {
              trial.eig[i] = v;
              return refine.potential(assemble(dim, trial));
            },
            lo, hi, std::max(1e-9, h * 1e-3));
        if (g.value > best) {
          best = g.value;
          p.eig[i] = g.x;
        }
      }
      for (int a = 0; a < n_ang; ++a) {
        const double h = ang_step[a] * shrink;
        EigenParams trial = p;
        const GoldenResult g = golden_max(
            [&](double v) {
              trial.ang[a] = v;
              return refine.potential(assemble(dim, trial));
            },
            p.ang[a] - h, p.ang[a] + h, std::max(1e-9, h * 1e-3));
        if (g.value > best) {
          best = g.value;
          p.ang[a] = g.x;
        }
      }
    }
    refined[s] = p;
    final_values[s] = final_sys.potential(assemble(dim, p));
  }

  const std::size_t winner = static_cast<std::size_t>(
      std::max_element(final_values.begin(), final_values.end()) - final_values.begin());
  out.value = final_values[winner];
  out.q_star = assemble(dim, refined[winner]);
  out.eigenvalues.resize(dim);
  for (int i = 0; i < dim; ++i) out.eigenvalues[i] = refined[winner].eig[i];
  return out;
}

// ---------------------------------------------------------------------------

PhaseScan phase_scan(const Prior& prior, const std::vector<double>& lambda_grid,
                     const GaussQuadrature& quad) {
  require(lambda_grid.size() >= 8, "phase_scan: need at least 8 grid points");
  require(std::is_sorted(lambda_grid.begin(), lambda_grid.end()) && lambda_grid.front() >= 0.0,
          "phase_scan: lambda grid must be sorted and non-negative");
  const std::size_t n = lambda_grid.size();
  PhaseScan scan;
  scan.points.resize(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const ScalarSup sup = f1_sup(prior, lambda_grid[i], quad);
    const MmsePrediction pred = mmse_prediction(prior, lambda_grid[i], quad);
    scan.points[i] = {lambda_grid[i], sup.q_star, sup.value, 0.0, pred.value};
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    const double dl = lambda_grid[hi] - lambda_grid[lo];
    scan.points[i].dq_dlambda = dl > 0.0 ? (scan.points[hi].q_star - scan.points[lo].q_star) / dl : 0.0;
  }
  std::size_t cell = 0;
  double jump = -1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = std::abs(scan.points[i + 1].q_star - scan.points[i].q_star);
    if (d > jump) {
      jump = d;
      cell = i;
    }
  }
  constexpr double kZeroOverlap = 1e-6;
  if (jump > kZeroOverlap && scan.points[cell].q_star <= kZeroOverlap)
    scan.transition = std::make_pair(lambda_grid[cell], lambda_grid[cell + 1]);
  return scan;
}

}  // namespace spiked
