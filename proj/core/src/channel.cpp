#include "spiked/channel.hpp"

#include <cmath>
#include <random>
#include <string>

#include "spiked/error.hpp"
#include "spiked/linalg.hpp"
#include "spiked/numeric.hpp"

namespace spiked {

ProductAtoms product_atoms(const Prior& prior, int dim) {
  require(dim >= 1, "product_atoms: dimension must be positive");
  const long k = static_cast<long>(prior.size());
  long count = 1;
  for (int d = 0; d < dim; ++d) {
    count *= k;
    if (count > kMaxProductAtoms)
      throw ValidationError("product_atoms: k^M exceeds 2^20 for M=" + std::to_string(dim));
  }
  ProductAtoms pa;
  pa.values.resize(dim, count);
  pa.weights.resize(count);
  pa.log_weights.resize(count);
  const auto atoms = prior.atoms();
  for (long c = 0; c < count; ++c) {
    long rest = c;
    double w = 1.0;
    for (int d = dim - 1; d >= 0; --d) {
      const Atom& a = atoms[rest % k];
      rest /= k;
      pa.values(d, c) = a.value;
      w *= a.weight;
    }
    pa.weights[c] = w;
    pa.log_weights[c] = std::log(w);
  }
  return pa;
}

NoiseCovariance NoiseCovariance::from_matrix(Eigen::MatrixXd sigma) {
  require(sigma.rows() == sigma.cols() && sigma.rows() >= 1,
          "noise covariance: matrix must be square and non-empty");
  require(is_symmetric(sigma), "noise covariance: matrix is not symmetric");
  require(min_eigenvalue(sigma) >= kPsdFloor, "noise covariance: matrix is not PSD");
  return NoiseCovariance(0.5 * (sigma + sigma.transpose()));
}

NoiseCovariance NoiseCovariance::diagonal(const std::vector<double>& variances) {
  Eigen::VectorXd d(variances.size());
  for (std::size_t i = 0; i < variances.size(); ++i) d[i] = variances[i];
  return from_matrix(d.asDiagonal());
}

double mi_scalar_signal(const Prior& prior, double s, const GaussQuadrature& quad) {
  require(s >= 0.0, "mi_scalar_signal: s must be non-negative");
  if (s == 0.0) return 0.0;
  const double rs = std::sqrt(s);
  const auto atoms = prior.atoms();
  const std::size_t k = atoms.size();
  std::vector<double> terms(k);
  double total = 0.0;
  for (const Atom& a0 : atoms) {
    double inner = 0.0;
    for (std::size_t g = 0; g < quad.nodes.size(); ++g) {
      const double z = quad.nodes[g];
      // log p(y|x0) - log p(y) = -log sum_x P(x) exp(-z sqrt(s) d - s d^2 / 2), d = x0 - x
      for (std::size_t i = 0; i < k; ++i) {
        const double d = a0.value - atoms[i].value;
        terms[i] = std::log(atoms[i].weight) - z * rs * d - 0.5 * s * d * d;
      }
      inner += quad.weights[g] * -log_sum_exp(terms);
    }
    total += a0.weight * inner;
  }
  return total;
}

double mi_scalar_noise(const Prior& prior, double t, const GaussQuadrature& quad) {
  require(t > 0.0, "mi_scalar_noise: noise variance must be positive");
  return mi_scalar_signal(prior, 1.0 / t, quad);
}

double denoiser_scalar(const Prior& prior, double y, double s) {
  require(s >= 0.0, "denoiser_scalar: s must be non-negative");
  const double rs = std::sqrt(s);
  const auto atoms = prior.atoms();
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> e(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double v = atoms[i].value;
    e[i] = std::log(atoms[i].weight) + rs * y * v - 0.5 * s * v * v;
    mx = std::max(mx, e[i]);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double w = std::exp(e[i] - mx);
    num += w * atoms[i].value;
    den += w;
  }
  return num / den;
}

double mmse_scalar(const Prior& prior, double s, const GaussQuadrature& quad) {
  require(s >= 0.0, "mmse_scalar: s must be non-negative");
  const double rs = std::sqrt(s);
  double total = 0.0;
  for (const Atom& a0 : prior.atoms()) {
    double inner = 0.0;
    for (std::size_t g = 0; g < quad.nodes.size(); ++g) {
      const double err = a0.value - denoiser_scalar(prior, rs * a0.value + quad.nodes[g], s);
      inner += quad.weights[g] * err * err;
    }
    total += a0.weight * inner;
  }
  return total;
}

namespace {

// Log-likelihood ratio log p(y|x0)/p(y) for y = U_j + z, summed against weights.
// `u` holds B x for every product atom (M x K).
double log_ratio(const Eigen::MatrixXd& u, const Eigen::VectorXd& log_w, Eigen::Index j,
                 const Eigen::VectorXd& z, Eigen::ArrayXd& scratch) {
  const Eigen::MatrixXd d = (-u).colwise() + u.col(j);
  scratch = log_w.array() - (z.transpose() * d).transpose().array() -
            0.5 * d.colwise().squaredNorm().transpose().array();
  return -log_sum_exp(scratch);
}

}  // namespace

MiEstimate mi_vector_signal(const Prior& prior, const Eigen::MatrixXd& signal,
                            const GaussQuadrature& axis, const McOptions& mc) {
  require(signal.rows() == signal.cols(), "mi_vector_signal: signal matrix must be square");
  const int dim = static_cast<int>(signal.rows());
  const ProductAtoms pa = product_atoms(prior, dim);
  const Eigen::MatrixXd u = signal * pa.values;
  const Eigen::Index count = u.cols();
  MiEstimate est;

  if (dim <= kMaxQuadratureDim) {
    const TensorQuadrature tq = tensor_product(axis, dim);
    double total = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::MatrixXd d = (-u).colwise() + u.col(j);  // U_j - U_x
      const Eigen::RowVectorXd base =
          pa.log_weights.transpose() - 0.5 * d.colwise().squaredNorm();
      Eigen::MatrixXd expo = -(tq.nodes * d);
      expo.rowwise() += base;
      const Eigen::VectorXd lse = row_log_sum_exp(expo);
      total += pa.weights[j] * -(tq.weights.dot(lse));
    }
    est.value = total;
    return est;
  }

  require(mc.samples >= 2, "mi_vector_signal: Monte Carlo needs at least 2 samples");
  Philox4x32 stream = make_stream(mc.seed, stream_tag("mi_vector"), 0);
  std::discrete_distribution<Eigen::Index> pick(pa.weights.data(), pa.weights.data() + count);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd z(dim);
  Eigen::ArrayXd scratch;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < mc.samples; ++n) {
    const Eigen::Index j = pick(stream);
    for (int d = 0; d < dim; ++d) z[d] = gauss(stream);
    const double v = log_ratio(u, pa.log_weights, j, z, scratch);
    const double delta = v - mean;
    mean += delta / static_cast<double>(n + 1);
    m2 += delta * (v - mean);
  }
  const double n = static_cast<double>(mc.samples);
  est.value = mean;
  est.std_err = std::sqrt(m2 / (n - 1.0) / n);
  est.monte_carlo = true;
  return est;
}

MiEstimate mi_vector(const Prior& prior, int dim, const NoiseCovariance& sigma,
                     const GaussQuadrature& axis, const McOptions& mc) {
  require(sigma.dimension() == dim, "mi_vector: covariance dimension does not match M");
  // x0 + Sigma^{1/2} z is equivalent to Sigma^{-1/2} x0 + z.
  return mi_vector_signal(prior, pd_inverse_sqrt(sigma.sigma()), axis, mc);
}

double check_mi_convexity(const Prior& prior, const std::vector<double>& t_grid,
                          const GaussQuadrature& quad) {
  require(t_grid.size() >= 3, "check_mi_convexity: need at least 3 grid points");
  const double d2 = prior.support_bound() * prior.support_bound();
  require(t_grid.front() >= d2 * (1.0 - 1e-12),
          "check_mi_convexity: grid enters t < D^2 where convexity is not guaranteed");
  const double h = t_grid[1] - t_grid[0];
  require(h > 0.0, "check_mi_convexity: grid must be increasing");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    require(std::abs((t_grid[i] - t_grid[i - 1]) - h) <= 1e-9 * std::max(1.0, std::abs(h)),
            "check_mi_convexity: grid must be uniformly spaced");
  }
  std::vector<double> mi(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) mi[i] = mi_scalar_noise(prior, t_grid[i], quad);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < t_grid.size(); ++i)
    best = std::min(best, mi[i - 1] - 2.0 * mi[i] + mi[i + 1]);
  return best;
}

}  // namespace spiked
