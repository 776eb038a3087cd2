#include "spiked/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "spiked/error.hpp"

namespace spiked {

double check_lemma1(const Prior& prior, const NoiseCovariance& sigma, const GaussQuadrature& axis,
                    const McOptions& mc) {
  const int dim = sigma.dimension();
  const double joint = mi_vector(prior, dim, sigma, axis, mc).value;
  double split = 0.0;
  for (int i = 0; i < dim; ++i) split += mi_scalar_noise(prior, sigma.sigma()(i, i), axis);
  return joint - split;
}

double check_cor1(const Prior& prior, const NoiseCovariance& sigma, const GaussQuadrature& axis,
                  const McOptions& mc) {
  const int dim = sigma.dimension();
  const double d2 = prior.support_bound() * prior.support_bound();
  for (int i = 0; i < dim; ++i)
    require(sigma.sigma()(i, i) >= d2,
            "check_cor1: diagonal entry " + std::to_string(sigma.sigma()(i, i)) +
                " below D^2 = " + std::to_string(d2));
  const double joint = mi_vector(prior, dim, sigma, axis, mc).value;
  return joint - dim * mi_scalar_noise(prior, sigma.normalized_trace(), axis);
}

Eigen::MatrixXd random_covariance(int dim, double shift, Philox4x32& stream) {
  require(dim >= 1, "random_covariance: dim must be positive");
  require(shift >= 0.0, "random_covariance: shift must be non-negative");
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = gauss(stream);
  Eigen::MatrixXd s = a * a.transpose() / dim;
  s.diagonal().array() += shift;
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd random_covariance_above(int dim, double floor, double extra, Philox4x32& stream) {
  Eigen::MatrixXd s = random_covariance(dim, 0.0, stream);
  const double lift = std::max(0.0, floor - s.diagonal().minCoeff()) + extra;
  s.diagonal().array() += lift;
  return s;
}

namespace {

template <class Draw, class Check>
BatchResult run_batch(const BatchOptions& opt, const std::vector<Eigen::MatrixXd>& equality,
                      Draw&& draw, Check&& check) {
  require(opt.samples >= 0, "batch: sample count must be non-negative");
  BatchResult r;
  r.samples = opt.samples;
  std::vector<double> res(static_cast<std::size_t>(opt.samples));
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < opt.samples; ++i) {
    Philox4x32 stream = make_stream(opt.seed, stream_tag("reduction_batch"),
                                    static_cast<std::uint64_t>(i));
    res[static_cast<std::size_t>(i)] = check(NoiseCovariance::from_matrix(draw(stream)));
  }
  r.min_residual = res.empty() ? 0.0 : *std::min_element(res.begin(), res.end());
  for (const auto& s : equality)
    r.max_equality_residual =
        std::max(r.max_equality_residual, std::abs(check(NoiseCovariance::from_matrix(s))));
  r.pass = r.min_residual >= -kQuadratureTol && r.max_equality_residual <= kEqualityTol;
  return r;
}

}  // namespace

BatchResult lemma1_batch(const Prior& prior, int dim, const BatchOptions& opt) {
  const GaussQuadrature axis = gauss_hermite(opt.axis_order);
  std::vector<Eigen::MatrixXd> equality;
  for (double scale : {0.5, 1.0, 2.0}) {
    Eigen::VectorXd d(dim);
    for (int i = 0; i < dim; ++i) d[i] = scale * (1.0 + 0.5 * i);
    equality.push_back(d.asDiagonal());
  }
  return run_batch(
      opt, equality, [&](Philox4x32& s) { return random_covariance(dim, opt.shift, s); },
      [&](const NoiseCovariance& s) { return check_lemma1(prior, s, axis); });
}

BatchResult cor1_batch(const Prior& prior, int dim, const BatchOptions& opt) {
  const GaussQuadrature axis = gauss_hermite(opt.axis_order);
  const double d2 = prior.support_bound() * prior.support_bound();
  std::vector<Eigen::MatrixXd> equality;
  for (double scale : {1.0, 1.5, 3.0})
    equality.push_back(scale * d2 * Eigen::MatrixXd::Identity(dim, dim));
  return run_batch(
      opt, equality,
      [&](Philox4x32& s) {
        std::uniform_real_distribution<double> extra(0.0, d2);
        const double e = extra(s);
        return random_covariance_above(dim, d2, e, s);
      },
      [&](const NoiseCovariance& s) { return check_cor1(prior, s, axis); });
}

double convexity_check(const Prior& prior, int points, const GaussQuadrature& quad) {
  require(points >= 3, "convexity_check: need at least 3 grid points");
  const double d2 = prior.support_bound() * prior.support_bound();
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[i] = d2 * (1.0 + 4.0 * i / (points - 1));
  return check_mi_convexity(prior, grid, quad);
}

std::vector<ReductionReport> reduction_sweep(const Prior& prior, int dim,
                                             const std::vector<double>& lambda_grid,
                                             const ReductionOptions& options) {
  require(dim == 2 || dim == 3, "reduction_sweep: M must be 2 or 3");
  for (double l : lambda_grid) require(l >= 0.0, "reduction_sweep: lambda must be non-negative");
  const GaussQuadrature scalar = gauss_hermite(options.scalar_order);

  std::optional<BatchResult> lemma, cor;
  std::optional<double> convexity;
  if (options.batches) {
    lemma = lemma1_batch(prior, dim, *options.batches);
    cor = cor1_batch(prior, dim, *options.batches);
    convexity = convexity_check(prior, options.convexity_points, scalar);
  }

  std::vector<ReductionReport> out;
  for (double lambda : lambda_grid) {
    ReductionReport r;
    r.prior_label = prior.label();
    r.dim = dim;
    r.lambda = lambda;
    const ScalarSup one = f1_sup(prior, lambda, scalar);
    const MatrixSup many = fm_sup(prior, dim, lambda, options.sup);
    r.f1_sup_value = one.value;
    r.fm_sup_value = many.value;
    r.gap = std::abs(many.value - one.value);
    r.q_star = one.q_star;
    r.maximizer_isotropy =
        (many.q_star - one.q_star * Eigen::MatrixXd::Identity(dim, dim)).norm();
    r.isotropy_skipped = options.critical_cell && lambda >= options.critical_cell->first &&
                         lambda <= options.critical_cell->second;
    r.pass.gap = r.gap <= kSupGapTol;
    r.pass.isotropy = r.isotropy_skipped || r.maximizer_isotropy <= kIsotropyTol;
    if (lemma) {
      r.lemma1_min_residual = lemma->min_residual;
      r.pass.lemma1 = lemma->pass;
    }
    if (cor) {
      r.cor1_min_residual = cor->min_residual;
      r.pass.cor1 = cor->pass;
    }
    if (convexity) {
      r.convexity_min_second_diff = convexity;
      r.pass.convexity = *convexity >= -kConvexityTol;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace spiked
