#include "spiked/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "spiked/error.hpp"

namespace spiked {
namespace {

void check_dims(int n, int m) {
  require(n >= 1, "N must be at least 1, got " + std::to_string(n));
  require(m >= 1, "M must be at least 1, got " + std::to_string(m));
}

void check_pert(const ModelInstance& inst, const PerturbationParams& pert) {
  require(pert.epsilon >= 0.0, "perturbation: epsilon must be non-negative");
  require(pert.ztilde.rows() == inst.n && pert.ztilde.cols() == inst.m,
          "perturbation: Ztilde must be N x M");
}

Eigen::MatrixXd assemble_y(double lambda, const Eigen::MatrixXd& x0, const Eigen::MatrixXd& z) {
  const double n = static_cast<double>(x0.rows());
  return std::sqrt(lambda / n) * x0 * x0.transpose() + z;
}

// Coefficients of log P(X) + H(X) for a fixed instance and Hamiltonian form.
struct EnergyModel {
  int n, m;
  double c1;              // sqrt(lambda / K)
  double c2;              // lambda / K
  double eps = 0.0;
  Eigen::MatrixXd z;      // N x N
  Eigen::MatrixXd x0;     // N x M
  Eigen::MatrixXd linear; // sqrt(eps) Zt + eps X0
  std::vector<double> values, log_weights;

  EnergyModel(const ModelInstance& inst, const PerturbationParams* pert, const Prior& prior)
      : n(inst.n), m(inst.m), z(inst.z), x0(inst.x0) {
    const double k = pert ? inst.n + 1.0 : static_cast<double>(inst.n);
    c1 = std::sqrt(inst.lambda / k);
    c2 = inst.lambda / k;
    linear = Eigen::MatrixXd::Zero(n, m);
    if (pert) {
      check_pert(inst, *pert);
      eps = pert->epsilon;
      linear = std::sqrt(eps) * pert->ztilde + eps * inst.x0;
    }
    for (const Atom& a : prior.atoms()) {
      values.push_back(a.value);
      log_weights.push_back(std::log(a.weight));
    }
  }
};

// Enumeration state with O(N + M^2) updates per changed digit.
class Walker {
 public:
  Walker(const EnergyModel& e, std::uint64_t start) : e_(e), digits_(e.n * e.m) {
    const std::uint64_t k = e.values.size();
    x_ = Eigen::MatrixXd::Zero(e.n, e.m);
    for (int p = 0; p < e.n * e.m; ++p) {
      digits_[p] = static_cast<int>(start % k);
      start /= k;
      x_(p / e.m, p % e.m) = e.values[digits_[p]];
      logp_ += e.log_weights[digits_[p]];
    }
    zx_ = e.z * x_;
    quad_ = (x_.array() * zx_.array()).sum();
    g_ = e.x0.transpose() * x_;
    gram_ = x_.transpose() * x_;
    lin_ = (e.linear.array() * x_.array()).sum();
  }

  double energy() const {
    return logp_ + 0.5 * (e_.c1 * quad_ + e_.c2 * g_.squaredNorm() -
                          0.5 * e_.c2 * gram_.squaredNorm()) +
           lin_ - 0.5 * e_.eps * gram_.trace();
  }

  void step(bool forward) {
    const int k = static_cast<int>(e_.values.size());
    int p = 0;
    if (forward) {
      while (digits_[p] == k - 1) set(p++, 0);
      set(p, digits_[p] + 1);
    } else {
      while (digits_[p] == 0) set(p++, k - 1);
      set(p, digits_[p] - 1);
    }
  }

  const Eigen::MatrixXd& overlap() const { return g_; }
  const Eigen::MatrixXd& x() const { return x_; }

 private:
  void set(int p, int d) {
    const int i = p / e_.m, a = p % e_.m;
    const double old = x_(i, a), now = e_.values[d];
    const double delta = now - old;
    logp_ += e_.log_weights[d] - e_.log_weights[digits_[p]];
    digits_[p] = d;
    if (delta == 0.0) return;
    quad_ += 2.0 * delta * zx_(i, a) + delta * delta * e_.z(i, i);
    zx_.col(a) += delta * e_.z.col(i);
    g_.col(a) += delta * e_.x0.row(i).transpose();
    for (int b = 0; b < e_.m; ++b) {
      if (b == a) continue;
      gram_(a, b) += delta * x_(i, b);
      gram_(b, a) = gram_(a, b);
    }
    gram_(a, a) += now * now - old * old;
    lin_ += delta * e_.linear(i, a);
    x_(i, a) = now;
  }

  const EnergyModel& e_;
  std::vector<int> digits_;
  Eigen::MatrixXd x_, zx_, g_, gram_;
  double quad_ = 0.0, lin_ = 0.0, logp_ = 0.0;
};

struct ChunkSums {
  double shift = -std::numeric_limits<double>::infinity();
  double weight = 0.0;
  Eigen::MatrixXd overlap;
  double overlap_sq = 0.0;
  Eigen::MatrixXd second;
};

ChunkSums enumerate_chunk(const EnergyModel& e, std::uint64_t lo, std::uint64_t hi,
                          const EnumerationOptions& opt) {
  const std::uint64_t len = hi - lo;
  const bool fwd = !opt.reverse;
  Walker w(e, fwd ? lo : hi - 1);
  std::vector<double> energy(len), overlap_sq(len);
  std::vector<Eigen::MatrixXd> overlap(len);
  std::vector<Eigen::MatrixXd> xs(opt.second_moment ? len : 0);
  for (std::uint64_t t = 0; t < len; ++t) {
    if (t) w.step(fwd);
    energy[t] = w.energy();
    overlap[t] = w.overlap();
    overlap_sq[t] = w.overlap().squaredNorm();
    if (opt.second_moment) xs[t] = w.x();
  }
  ChunkSums s;
  s.shift = *std::max_element(energy.begin(), energy.end());
  s.overlap = Eigen::MatrixXd::Zero(e.m, e.m);
  if (opt.second_moment) s.second = Eigen::MatrixXd::Zero(e.n, e.n);
  for (std::uint64_t t = 0; t < len; ++t) {
    const double p = std::exp(energy[t] - s.shift);
    s.weight += p;
    s.overlap += p * overlap[t];
    s.overlap_sq += p * overlap_sq[t];
    if (opt.second_moment) s.second.noalias() += p * xs[t] * xs[t].transpose();
  }
  return s;
}

PosteriorSummary enumerate(const ModelInstance& inst, const PerturbationParams* pert,
                           const Prior& prior, const EnumerationOptions& opt) {
  check_dims(inst.n, inst.m);
  require(opt.chunk >= 1, "enumeration: chunk size must be positive");
  const std::uint64_t total = configuration_count(prior, inst.n, inst.m);
  const EnergyModel model(inst, pert, prior);
  const std::uint64_t chunks = (total + opt.chunk - 1) / opt.chunk;
  std::vector<ChunkSums> parts(chunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (long c = 0; c < static_cast<long>(chunks); ++c) {
    const std::uint64_t lo = static_cast<std::uint64_t>(c) * opt.chunk;
    parts[c] = enumerate_chunk(model, lo, std::min(total, lo + opt.chunk), opt);
  }
  if (opt.reverse) std::reverse(parts.begin(), parts.end());

  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& p : parts) shift = std::max(shift, p.shift);
  double weight = 0.0, overlap_sq = 0.0;
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(inst.m, inst.m);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(inst.n, inst.n);
  for (const auto& p : parts) {
    const double scale = std::exp(p.shift - shift);
    weight += scale * p.weight;
    overlap += scale * p.overlap;
    overlap_sq += scale * p.overlap_sq;
    if (opt.second_moment) second += scale * p.second;
  }
  const double n = inst.n;
  PosteriorSummary s;
  s.config_count = total;
  s.log_partition = shift + std::log(weight);
  s.free_entropy = s.log_partition / (n * inst.m);
  s.mean_overlap = overlap / (weight * n);
  s.overlap_fluct = std::max(0.0, overlap_sq / (weight * n * n) - s.mean_overlap.squaredNorm());
  s.matrix_mmse = std::numeric_limits<double>::quiet_NaN();
  if (opt.second_moment) {
    const Eigen::MatrixXd diff = inst.x0 * inst.x0.transpose() - second / weight;
    s.matrix_mmse = diff.squaredNorm() / (n * n * inst.m);
  }
  return s;
}

// Column-by-column partition function:
//   Z = sum_{x^1..x^M} prod_j exp(phi_j(x^j)) prod_{j<k} K(x^j, x^k),
//   K(a, b) = exp(-(lambda / 2K) (a.b)^2).
// With a symmetric prior and no linear field, states are folded into sign classes.
double factorized_log_partition(const EnergyModel& e, const Prior& prior) {
  const int n = e.n, m = e.m;
  const int k = static_cast<int>(e.values.size());
  const bool fold = e.eps == 0.0 && prior.is_symmetric();
  std::uint64_t states = 1;
  for (int i = 0; i < n; ++i) states *= static_cast<std::uint64_t>(k);

  // Atom indices are sorted, so the mirror of digit d is k - 1 - d.
  std::vector<std::uint64_t> keep;
  std::vector<double> mult;
  for (std::uint64_t s = 0; s < states; ++s) {
    if (!fold) {
      keep.push_back(s);
      mult.push_back(1.0);
      continue;
    }
    std::uint64_t rest = s, mirror = 0, scale = 1;
    for (int i = 0; i < n; ++i) {
      mirror += (k - 1 - rest % k) * scale;
      rest /= k;
      scale *= k;
    }
    if (s < mirror) {
      keep.push_back(s);
      mult.push_back(2.0);
    } else if (s == mirror) {
      keep.push_back(s);
      mult.push_back(1.0);
    }
  }
  const Eigen::Index count = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd a(count, n);
  Eigen::VectorXd base(count);
  for (Eigen::Index r = 0; r < count; ++r) {
    std::uint64_t rest = keep[r];
    double lp = std::log(mult[r]);
    for (int i = 0; i < n; ++i) {
      const int d = static_cast<int>(rest % k);
      rest /= k;
      a(r, i) = e.values[d];
      lp += e.log_weights[d];
    }
    base[r] = lp;
  }
  const Eigen::VectorXd self = a.rowwise().squaredNorm();
  const Eigen::VectorXd zquad = ((a * e.z).array() * a.array()).rowwise().sum();
  const Eigen::VectorXd signal = (a * e.x0).rowwise().squaredNorm();
  base += 0.5 * e.c1 * zquad + 0.5 * e.c2 * signal -
          0.25 * e.c2 * self.array().square().matrix() - 0.5 * e.eps * self;

  std::vector<Eigen::VectorXd> col_weight(m);
  double total_shift = 0.0;
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd phi = base + a * e.linear.col(j);
    const double mx = phi.maxCoeff();
    total_shift += mx;
    col_weight[j] = (phi.array() - mx).exp().matrix();
  }
  if (m == 1) return total_shift + std::log(col_weight[0].sum());

  const Eigen::MatrixXd gram = a * a.transpose();
  const Eigen::MatrixXd kern = (-0.5 * e.c2 * gram.array().square()).exp().matrix();
  double t = 0.0;
  if (m == 2) {
    t = col_weight[0].dot(kern * col_weight[1]);
  } else {
    const Eigen::MatrixXd b = kern * col_weight[2].cwiseSqrt().asDiagonal();
    Eigen::MatrixXd kwk = Eigen::MatrixXd::Zero(count, count);
    kwk.selfadjointView<Eigen::Lower>().rankUpdate(b);
    kwk = kwk.selfadjointView<Eigen::Lower>();
    t = (col_weight[0].asDiagonal() * kern.cwiseProduct(kwk) * col_weight[1]).sum();
  }
  return total_shift + std::log(t);
}

double log_partition_impl(const ModelInstance& inst, const PerturbationParams* pert,
                          const Prior& prior) {
  check_dims(inst.n, inst.m);
  const EnergyModel model(inst, pert, prior);
  std::uint64_t states = 1;
  bool small = true;
  for (int i = 0; i < inst.n && small; ++i) {
    states *= prior.size();
    small = states <= kColumnStateBudget;
  }
  if (inst.m <= 3 && small) return factorized_log_partition(model, prior);
  EnumerationOptions opt;
  opt.second_moment = false;
  return enumerate(inst, pert, prior, opt).log_partition;
}

std::string number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

// ---------------------------------------------------------------------------

ModelInstance sample_instance(const Prior& prior, int n, int m, double lambda,
                              std::uint64_t seed, std::uint64_t replicate) {
  check_dims(n, m);
  require(lambda >= 0.0, "sample_instance: lambda must be non-negative");
  Philox4x32 stream = make_stream(seed, stream_tag("instance"), replicate);
  ModelInstance inst;
  inst.n = n;
  inst.m = m;
  inst.lambda = lambda;
  inst.seed = seed;
  inst.replicate = replicate;
  inst.prior_label = prior.label();
  const std::vector<double> draws = sample(prior, static_cast<std::size_t>(n) * m, stream);
  inst.x0.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) inst.x0(i, a) = draws[static_cast<std::size_t>(i) * m + a];
  std::normal_distribution<double> gauss;
  inst.z.resize(n, n);
  for (int i = 0; i < n; ++i) {
    inst.z(i, i) = std::sqrt(2.0) * gauss(stream);
    for (int j = i + 1; j < n; ++j) inst.z(i, j) = inst.z(j, i) = gauss(stream);
  }
  inst.y = assemble_y(lambda, inst.x0, inst.z);
  return inst;
}

ModelInstance restrict_instance(const ModelInstance& inst, int n, int m) {
  check_dims(n, m);
  require(n <= inst.n && m <= inst.m, "restrict_instance: block exceeds instance");
  ModelInstance out = inst;
  out.n = n;
  out.m = m;
  out.x0 = inst.x0.topLeftCorner(n, m);
  out.z = inst.z.topLeftCorner(n, n);
  out.y = assemble_y(inst.lambda, out.x0, out.z);
  return out;
}

PerturbationParams sample_perturbation(int n, int m, double epsilon, double s_n,
                                       std::uint64_t seed, std::uint64_t replicate) {
  check_dims(n, m);
  require(epsilon >= 0.0, "perturbation: epsilon must be non-negative");
  Philox4x32 stream = make_stream(seed, stream_tag("ztilde"), replicate);
  std::normal_distribution<double> gauss;
  PerturbationParams p;
  p.epsilon = epsilon;
  p.s_n = s_n;
  p.ztilde.resize(n, m);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) p.ztilde(i, a) = gauss(stream);
  return p;
}

PerturbationParams restrict_perturbation(const PerturbationParams& pert, int n, int m) {
  require(n <= pert.ztilde.rows() && m <= pert.ztilde.cols(),
          "restrict_perturbation: block exceeds Ztilde");
  PerturbationParams out = pert;
  out.ztilde = pert.ztilde.topLeftCorner(n, m);
  return out;
}

double perturbation_schedule(int n, double exponent) {
  require(n >= 1, "perturbation_schedule: N must be positive");
  require(exponent > 0.0, "perturbation_schedule: exponent must be positive");
  return std::pow(static_cast<double>(n), -exponent);
}

double hamiltonian(const ModelInstance& inst, const Eigen::MatrixXd& x,
                   std::optional<double> normalizer) {
  require(x.rows() == inst.n && x.cols() == inst.m, "hamiltonian: X must be N x M");
  const double k = normalizer.value_or(inst.n);
  require(k > 0.0, "hamiltonian: normalizer must be positive");
  const double quad = (x.transpose() * inst.z * x).trace();
  const double signal = (inst.x0.transpose() * x).squaredNorm();
  const double self = (x.transpose() * x).squaredNorm();
  const double l = inst.lambda;
  return 0.5 * (std::sqrt(l / k) * quad + (l / k) * signal - (l / (2.0 * k)) * self);
}

double perturbed_hamiltonian(const ModelInstance& inst, const PerturbationParams& pert,
                             const Eigen::MatrixXd& x) {
  check_pert(inst, pert);
  const double e = pert.epsilon;
  return hamiltonian(inst, x, inst.n + 1.0) +
         std::sqrt(e) * (x.array() * pert.ztilde.array()).sum() +
         e * (x.array() * inst.x0.array()).sum() - 0.5 * e * x.squaredNorm();
}

double aux_L(const ModelInstance& inst, const PerturbationParams& pert, const Eigen::MatrixXd& x) {
  check_pert(inst, pert);
  require(pert.epsilon > 0.0, "aux_L: epsilon must be positive");
  require(x.rows() == inst.n && x.cols() == inst.m, "aux_L: X must be N x M");
  const double d = (x.array() * pert.ztilde.array()).sum() / (2.0 * std::sqrt(pert.epsilon)) +
                   (x.array() * inst.x0.array()).sum() - 0.5 * x.squaredNorm();
  return -d / inst.n;
}

std::uint64_t configuration_count(const Prior& prior, int n, int m, std::uint64_t budget) {
  check_dims(n, m);
  const std::uint64_t k = prior.size();
  std::uint64_t total = 1;
  for (long p = 0; p < static_cast<long>(n) * m; ++p) {
    if (total > budget / k)
      throw BudgetError("enumeration budget exceeded: k^(N M) = " + std::to_string(k) + "^" +
                        std::to_string(static_cast<long>(n) * m) + " > " + std::to_string(budget));
    total *= k;
  }
  return total;
}

PosteriorSummary exact_posterior(const ModelInstance& inst, const Prior& prior,
                                 const EnumerationOptions& options) {
  return enumerate(inst, nullptr, prior, options);
}

PosteriorSummary exact_posterior(const ModelInstance& inst, const PerturbationParams& pert,
                                 const Prior& prior, const EnumerationOptions& options) {
  return enumerate(inst, &pert, prior, options);
}

double log_partition(const ModelInstance& inst, const Prior& prior) {
  return log_partition_impl(inst, nullptr, prior);
}

double log_partition(const ModelInstance& inst, const PerturbationParams& pert,
                     const Prior& prior) {
  return log_partition_impl(inst, &pert, prior);
}

bool log_partition_feasible(const Prior& prior, int n, int m) {
  check_dims(n, m);
  std::uint64_t states = 1;
  for (int i = 0; i < n && states <= kColumnStateBudget; ++i) states *= prior.size();
  if (m <= 3 && states <= kColumnStateBudget) return true;
  try {
    configuration_count(prior, n, m);
    return true;
  } catch (const BudgetError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_mc(int n, int m, double lambda, int replicates) {
  check_dims(n, m);
  require(lambda >= 0.0, "lambda must be non-negative");
  require(replicates >= 2, "need at least 2 replicates");
}

ReplicateEstimate finish(std::vector<double> samples) {
  ReplicateEstimate r;
  const MeanEstimate e = summarize(samples);
  r.mean = e.mean;
  r.std_err = e.std_err;
  r.samples = std::move(samples);
  return r;
}

void check_log_partition_budget(const Prior& prior, int n, int m) {
  if (!log_partition_feasible(prior, n, m)) configuration_count(prior, n, m);
}

}  // namespace

ReplicateEstimate free_entropy_mc(const Prior& prior, int n, int m, double lambda,
                                  std::optional<double> epsilon, int replicates,
                                  std::uint64_t seed) {
  check_mc(n, m, lambda, replicates);
  check_log_partition_budget(prior, n, m);
  if (epsilon) require(*epsilon >= 0.0, "free_entropy_mc: epsilon must be non-negative");
  std::vector<double> out(static_cast<std::size_t>(replicates));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < replicates; ++r) {
    const ModelInstance inst = sample_instance(prior, n, m, lambda, seed, r);
    double lz = 0.0;
    if (epsilon)
      lz = log_partition(inst, sample_perturbation(n, m, *epsilon, *epsilon, seed, r), prior);
    else
      lz = log_partition(inst, prior);
    out[r] = lz / (static_cast<double>(n) * m);
  }
  return finish(std::move(out));
}

ReplicateEstimate matrix_mmse_mc(const Prior& prior, int n, int m, double lambda, int replicates,
                                 std::uint64_t seed) {
  check_mc(n, m, lambda, replicates);
  configuration_count(prior, n, m);
  std::vector<double> out(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r)
    out[r] = exact_posterior(sample_instance(prior, n, m, lambda, seed, r), prior).matrix_mmse;
  return finish(std::move(out));
}

ConcentrationEstimate overlap_concentration(const Prior& prior, int n, int m, double lambda,
                                            double s_n, int n_eps, int replicates,
                                            std::uint64_t seed) {
  check_mc(n, m, lambda, replicates);
  require(n_eps >= 2, "overlap_concentration: n_eps must be at least 2");
  require(s_n > 0.0, "overlap_concentration: s_N must be positive");
  configuration_count(prior, n, m);
  EnumerationOptions opt;
  opt.second_moment = false;
  std::vector<double> out(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    const ModelInstance inst = sample_instance(prior, n, m, lambda, seed, r);
    PerturbationParams pert = sample_perturbation(n, m, s_n, s_n, seed, r);
    double acc = 0.0;
    for (int j = 0; j < n_eps; ++j) {
      pert.epsilon = s_n * (1.0 + (j + 0.5) / n_eps);
      acc += exact_posterior(inst, pert, prior, opt).overlap_fluct;
    }
    out[r] = acc / n_eps;
  }
  ConcentrationEstimate c;
  const MeanEstimate e = summarize(out);
  c.estimate = e.mean;
  c.std_err = e.std_err;
  c.gamma = static_cast<double>(m) * m / std::sqrt(n * s_n);
  c.samples = std::move(out);
  return c;
}

ReplicateEstimate perturbation_gap(const Prior& prior, int n, int m, double lambda, double s_n,
                                   int replicates, std::uint64_t seed) {
  check_mc(n, m, lambda, replicates);
  require(s_n >= 0.0, "perturbation_gap: s_N must be non-negative");
  check_log_partition_budget(prior, n, m);
  std::vector<double> out(static_cast<std::size_t>(replicates));
  const double scale = static_cast<double>(n) * m;
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < replicates; ++r) {
    const ModelInstance inst = sample_instance(prior, n, m, lambda, seed, r);
    const PerturbationParams pert = sample_perturbation(n, m, s_n, s_n, seed, r);
    out[r] = (log_partition(inst, pert, prior) - log_partition(inst, prior)) / scale;
  }
  return finish(std::move(out));
}

// ---------------------------------------------------------------------------

void write_instance(std::ostream& out, const ModelInstance& inst) {
  nlohmann::ordered_json header;
  header["N"] = inst.n;
  header["M"] = inst.m;
  header["lambda"] = inst.lambda;
  header["seed"] = inst.seed;
  header["replicate"] = inst.replicate;
  header["prior"] = inst.prior_label;
  out << header.dump() << '\n';
  auto block = [&](const char* name, const Eigen::MatrixXd& mat) {
    out << "# " << name << '\n';
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      for (Eigen::Index j = 0; j < mat.cols(); ++j) out << (j ? "," : "") << number(mat(i, j));
      out << '\n';
    }
  };
  block("X0", inst.x0);
  block("Z", inst.z);
}

ModelInstance read_instance(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "read_instance: missing header");
  const auto header = nlohmann::json::parse(line, nullptr, false);
  require(!header.is_discarded() && header.is_object(), "read_instance: malformed header");
  ModelInstance inst;
  try {
    inst.n = header.at("N").get<int>();
    inst.m = header.at("M").get<int>();
    inst.lambda = header.at("lambda").get<double>();
    inst.seed = header.at("seed").get<std::uint64_t>();
    inst.replicate = header.value("replicate", std::uint64_t{0});
    inst.prior_label = header.at("prior").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("read_instance: ") + e.what());
  }
  check_dims(inst.n, inst.m);
  auto block = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    require(std::getline(in, line) && line == "# " + name, "read_instance: expected block " + name);
    Eigen::MatrixXd mat(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      require(static_cast<bool>(std::getline(in, line)), "read_instance: truncated block " + name);
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (Eigen::Index j = 0; j < cols; ++j) {
        const auto r = std::from_chars(p, end, mat(i, j));
        require(r.ec == std::errc(), "read_instance: bad number in block " + name);
        p = r.ptr;
        if (j + 1 < cols) {
          require(p < end && *p == ',', "read_instance: short row in block " + name);
          ++p;
        }
      }
      require(p == end, "read_instance: long row in block " + name);
    }
    return mat;
  };
  inst.x0 = block("X0", inst.n, inst.m);
  inst.z = block("Z", inst.n, inst.n);
  require(inst.z == inst.z.transpose(), "read_instance: Z is not symmetric");
  inst.y = assemble_y(inst.lambda, inst.x0, inst.z);
  return inst;
}

}  // namespace spiked
