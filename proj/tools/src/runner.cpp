#include "spiked_cli/runner.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "spiked/cavity.hpp"
#include "spiked/channel.hpp"
#include "spiked/error.hpp"
#include "spiked/linalg.hpp"
#include "spiked/priors.hpp"
#include "spiked/quadrature.hpp"
#include "spiked/reduction.hpp"
#include "spiked/replica.hpp"
#include "spiked/simulator.hpp"

namespace spiked::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Output

using Value = std::variant<std::monostate, std::string, double, std::int64_t, bool>;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(const std::string& s) const {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  };
  return std::visit(Visitor{}, v);
}

Value opt(const std::optional<double>& v) { return v ? Value(*v) : Value(std::monostate{}); }
Value integer(long long v) { return Value(static_cast<std::int64_t>(v)); }

using Row = std::vector<std::pair<std::string, Value>>;

// One CSV file; the header is fixed by the first row. Rows are flushed as
// they arrive so a failed run leaves its completed rows behind.
class CsvSink {
 public:
  CsvSink(const fs::path& path, std::string hash, std::uint64_t seed)
      : out_(path), hash_(std::move(hash)), seed_(seed) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
  }

  void write(const Row& row) {
    if (header_.empty()) {
      header_ = {"config_hash", "seed"};
      for (const auto& [k, v] : row) header_.push_back(k);
      for (std::size_t i = 0; i < header_.size(); ++i) out_ << (i ? "," : "") << header_[i];
      out_ << '\n';
    }
    if (row.size() + 2 != header_.size())
      throw std::logic_error("csv schema changed mid-file");
    out_ << hash_ << ',' << seed_;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].first != header_[i + 2]) throw std::logic_error("csv schema changed mid-file");
      out_ << ',' << format(row[i].second);
    }
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::vector<std::string> header_;
  std::string hash_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Config access

class Config {
 public:
  Config(json body, std::string where) : body_(std::move(body)), where_(std::move(where)) {
    require(body_.is_object(), where_ + ": config must be a JSON object");
  }

  const json& body() const { return body_; }
  bool has(const std::string& key) const { return body_.contains(key); }

  void allow(std::set<std::string> keys) const {
    keys.insert({"subcommand", "seed", "threads", "out"});
    for (const auto& [k, v] : body_.items())
      require(keys.count(k) > 0, where_ + ": unknown config key '" + k + "'");
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return as<T>(body_.at(key), key);
  }

  template <class T>
  T as(const json& node, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        require(node.is_number(), where_ + ": '" + key + "' must be a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        require(node.is_number_integer(), where_ + ": '" + key + "' must be an integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        require(node.is_boolean(), where_ + ": '" + key + "' must be a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        require(node.is_string(), where_ + ": '" + key + "' must be a string");
      }
      return node.get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + ": '" + key + "': " + e.what());
    }
  }

  // A scalar, an array, or {"start", "stop", "count"} (inclusive linspace).
  std::vector<double> grid(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const json& node = body_.at(key);
    std::vector<double> out;
    if (node.is_number()) {
      out.push_back(node.get<double>());
    } else if (node.is_array()) {
      for (const auto& x : node) out.push_back(as<double>(x, key));
    } else if (node.is_object()) {
      const double start = as<double>(node.at("start"), key + ".start");
      const double stop = as<double>(node.at("stop"), key + ".stop");
      const int count = as<int>(node.at("count"), key + ".count");
      require(count >= 1, where_ + ": '" + key + ".count' must be positive");
      for (int i = 0; i < count; ++i)
        out.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
    } else {
      throw ValidationError(where_ + ": '" + key + "' must be a number, array or range object");
    }
    require(!out.empty(), where_ + ": '" + key + "' must not be empty");
    for (double v : out) require(std::isfinite(v), where_ + ": '" + key + "' must be finite");
    return out;
  }

  std::vector<int> ints(const std::string& key, std::vector<int> fallback) const {
    if (!has(key)) return fallback;
    const json& node = body_.at(key);
    std::vector<int> out;
    if (node.is_array()) {
      for (const auto& x : node) out.push_back(as<int>(x, key));
    } else {
      out.push_back(as<int>(node, key));
    }
    require(!out.empty(), where_ + ": '" + key + "' must not be empty");
    return out;
  }

  const std::string& where() const { return where_; }

 private:
  json body_;
  std::string where_;
};

Prior read_prior(const Config& cfg) {
  if (!cfg.has("prior")) return make_rademacher();
  const json& node = cfg.body().at("prior");
  if (node.is_string()) {
    const std::string kind = node.get<std::string>();
    require(kind == "rademacher", cfg.where() + ": prior string must be 'rademacher'");
    return make_rademacher();
  }
  Config p(node, cfg.where() + ".prior");
  const std::string kind = p.get<std::string>("kind", "rademacher");
  if (kind == "rademacher") {
    p.allow({"kind"});
    return make_rademacher();
  }
  if (kind == "sparse_rademacher") {
    p.allow({"kind", "p"});
    const double prob = p.get<double>("p", 0.5);
    require(prob > 0.0 && prob <= 1.0, p.where() + ": p must lie in (0, 1]");
    return make_sparse_rademacher(prob);
  }
  if (kind == "uniform") {
    p.allow({"kind", "bound", "nodes"});
    return make_discretized_uniform(p.get<double>("bound", 1.0), p.get<int>("nodes", 8));
  }
  if (kind == "atoms") {
    p.allow({"kind", "atoms", "label", "bound"});
    require(p.has("atoms") && p.body().at("atoms").is_array(),
            p.where() + ": 'atoms' must be an array of [value, weight]");
    std::vector<Atom> atoms;
    for (const auto& a : p.body().at("atoms")) {
      require(a.is_array() && a.size() == 2, p.where() + ": each atom is [value, weight]");
      atoms.push_back({p.as<double>(a[0], "atoms"), p.as<double>(a[1], "atoms")});
    }
    return Prior::from_atoms(std::move(atoms), p.get<std::string>("label", "custom"),
                             p.get<double>("bound", -1.0));
  }
  throw ValidationError(p.where() + ": unknown prior kind '" + kind + "'");
}

GaussQuadrature scalar_rule(const Config& cfg) {
  return gauss_hermite(cfg.get<int>("scalar_order", kDefaultScalarOrder));
}

GaussQuadrature tensor_rule(const Config& cfg) {
  return gauss_hermite(cfg.get<int>("tensor_order", kDefaultTensorOrder));
}

void require_sorted_nonneg(const std::vector<double>& g, const std::string& what) {
  require(std::is_sorted(g.begin(), g.end()), what + " must be sorted ascending");
  require(g.front() >= 0.0, what + " must be non-negative");
}

// ---------------------------------------------------------------------------
// Run context

struct Context {
  Config cfg;
  std::uint64_t seed;
  fs::path out;
  std::string hash;
  std::map<std::string, std::unique_ptr<CsvSink>> sinks;
  json extras = json::object();

  CsvSink& sink(const std::string& name) {
    auto& s = sinks[name];
    if (!s) s = std::make_unique<CsvSink>(out / (name + ".csv"), hash, seed);
    return *s;
  }
};

// Each subcommand: a validator that runs before any output exists, then the body.
struct Subcommand {
  std::function<void(const Config&)> validate;
  std::function<void(Context&)> body;
};

// ---- prior -----------------------------------------------------------------

void validate_prior(const Config& c) {
  c.allow({"prior"});
  read_prior(c);
}

void run_prior(Context& ctx) {
  const Prior p = read_prior(ctx.cfg);
  double m4 = 0.0;
  for (const Atom& a : p.atoms()) m4 += a.weight * std::pow(a.value, 4);
  ctx.sink("prior").write({{"label", p.label()},
                           {"atoms", integer(static_cast<long long>(p.size()))},
                           {"mean", p.mean()},
                           {"rho", p.second_moment()},
                           {"fourth_moment", m4},
                           {"support_bound", p.support_bound()},
                           {"symmetric", p.is_symmetric()}});
  for (const Atom& a : p.atoms())
    ctx.sink("prior_atoms").write({{"value", a.value}, {"weight", a.weight}});
}

// ---- mi ----------------------------------------------------------------------

void validate_mi(const Config& c) {
  c.allow({"prior", "snr", "step", "scalar_order"});
  read_prior(c);
  const double h = c.get<double>("step", 1e-3);
  require(h > 0.0, c.where() + ": step must be positive");
  for (double v : c.grid("snr", {0.5, 1.0, 2.0, 4.0}))
    require(v - h >= 0.0, c.where() + ": snr - step must be non-negative");
  scalar_rule(c);
}

void run_mi(Context& ctx) {
  const Prior p = read_prior(ctx.cfg);
  const GaussQuadrature q = scalar_rule(ctx.cfg);
  const double h = ctx.cfg.get<double>("step", 1e-3);
  for (double s : ctx.cfg.grid("snr", {0.5, 1.0, 2.0, 4.0})) {
    const double mi = mi_scalar_signal(p, s, q);
    const double mmse = mmse_scalar(p, s, q);
    const double slope = (mi_scalar_signal(p, s + h, q) - mi_scalar_signal(p, s - h, q)) / (2 * h);
    ctx.sink("mi").write({{"prior", p.label()},
                          {"snr", s},
                          {"mi", mi},
                          {"mmse", mmse},
                          {"dmi_dsnr", slope},
                          {"immse_residual", slope - 0.5 * mmse}});
  }
}

// ---- potential -------------------------------------------------------------

void validate_potential(const Config& c) {
  c.allow({"prior", "M", "lambda", "tau", "scalar_order", "tensor_order", "mc_samples"});
  const Prior p = read_prior(c);
  const int m = c.get<int>("M", 2);
  require(m >= 1 && m <= 6, c.where() + ": M must lie in [1, 6]");
  require_sorted_nonneg(c.grid("lambda", {2.0}), c.where() + ": lambda");
  for (double t : c.grid("tau", {0.0}))
    require(t >= 0.0 && t <= p.second_moment(), c.where() + ": tau must lie in [0, rho]");
  require(c.get<long long>("mc_samples", 200000) >= 2, c.where() + ": mc_samples must be >= 2");
  scalar_rule(c);
  tensor_rule(c);
}

void run_potential(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  const int m = c.get<int>("M", 2);
  const GaussQuadrature axis = tensor_rule(c);
  McOptions mc;
  mc.samples = static_cast<std::size_t>(c.get<long long>("mc_samples", 200000));
  mc.seed = ctx.seed;
  std::vector<double> taus;
  for (int i = 0; i <= 10; ++i) taus.push_back(p.second_moment() * i / 10.0);
  for (double lambda : c.grid("lambda", {2.0})) {
    for (double tau : c.grid("tau", taus)) {
      const PotentialEvaluation ev = fm_rs(p, OverlapMatrix::isotropic(m, tau), lambda, axis, mc);
      ctx.sink("potential").write({{"prior", p.label()},
                                   {"M", integer(m)},
                                   {"lambda", lambda},
                                   {"tau", tau},
                                   {"f1_rs", f1_rs(p, tau, lambda, axis)},
                                   {"fm_logz", ev.value_logz},
                                   {"fm_mi", ev.value_mi},
                                   {"identity_residual", ev.value_logz - ev.value_mi},
                                   {"std_err", ev.std_err}});
    }
  }
}

// ---- fixed-point -----------------------------------------------------------

void validate_fixed_point(const Config& c) {
  c.allow({"prior", "mode", "M", "lambda", "q0", "damping", "tolerance", "max_iterations",
           "fatal_nonconvergence", "scalar_order", "tensor_order"});
  const Prior p = read_prior(c);
  const std::string mode = c.get<std::string>("mode", "scalar");
  require(mode == "scalar" || mode == "matrix", c.where() + ": mode must be scalar or matrix");
  if (mode == "matrix") {
    const int m = c.get<int>("M", 2);
    require(m >= 1 && m <= 3, c.where() + ": matrix fixed point needs M in [1, 3]");
  }
  require_sorted_nonneg(c.grid("lambda", {4.0}), c.where() + ": lambda");
  const double q0 = c.get<double>("q0", p.second_moment());
  require(q0 >= 0.0 && q0 <= p.second_moment(), c.where() + ": q0 must lie in [0, rho]");
  const double d = c.get<double>("damping", 0.5);
  require(d > 0.0 && d <= 1.0, c.where() + ": damping must lie in (0, 1]");
  require(c.get<double>("tolerance", 1e-8) > 0.0, c.where() + ": tolerance must be positive");
  require(c.get<int>("max_iterations", 10000) >= 1, c.where() + ": max_iterations must be >= 1");
  c.get<bool>("fatal_nonconvergence", false);
  scalar_rule(c);
  tensor_rule(c);
}

void run_fixed_point(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  const std::string mode = c.get<std::string>("mode", "scalar");
  const double q0 = c.get<double>("q0", p.second_moment());
  const double damping = c.get<double>("damping", 0.5);
  const bool fatal = c.get<bool>("fatal_nonconvergence", false);
  const GaussQuadrature scalar = scalar_rule(c);
  std::vector<double> failed;
  for (double lambda : c.grid("lambda", {4.0})) {
    const double q_star = f1_sup(p, lambda, scalar).q_star;
    FixedPointResult r;
    int m = 1;
    if (mode == "scalar") {
      r = f1_fixed_point(p, lambda, q0, damping, scalar);
    } else {
      m = c.get<int>("M", 2);
      MatrixFixedPointOptions o;
      o.damping = damping;
      o.tolerance = c.get<double>("tolerance", 1e-8);
      o.max_iterations = c.get<int>("max_iterations", 10000);
      r = fm_fixed_point(p, lambda, OverlapMatrix::isotropic(m, q0), tensor_rule(c), o);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.overlap);
    const double iso = (r.overlap - q_star * Eigen::MatrixXd::Identity(m, m)).norm();
    ctx.sink("fixed_point").write({{"prior", p.label()},
                                   {"mode", mode},
                                   {"M", integer(m)},
                                   {"lambda", lambda},
                                   {"iterations", integer(r.iterations)},
                                   {"residual", r.residual},
                                   {"converged", r.converged},
                                   {"q_min", es.eigenvalues().minCoeff()},
                                   {"q_max", es.eigenvalues().maxCoeff()},
                                   {"potential", r.potential_value},
                                   {"q_star", q_star},
                                   {"distance_to_q_star", iso}});
    if (!r.converged) failed.push_back(lambda);
  }
  ctx.extras["nonconverged_lambdas"] = failed;
  if (fatal && !failed.empty())
    throw NonConvergenceError("fixed point did not converge at " + std::to_string(failed.size()) +
                              " lambda value(s)");
}

// ---- phase-scan ------------------------------------------------------------

const std::vector<double> kPhaseGrid = [] {
  std::vector<double> g;
  for (int i = 0; i <= 56; ++i) g.push_back(0.2 + 0.05 * i);
  return g;
}();

void validate_phase_scan(const Config& c) {
  c.allow({"prior", "lambda", "scalar_order"});
  read_prior(c);
  const auto g = c.grid("lambda", kPhaseGrid);
  require_sorted_nonneg(g, c.where() + ": lambda");
  require(g.size() >= 8, c.where() + ": lambda grid needs at least 8 points");
  scalar_rule(c);
}

void run_phase_scan(Context& ctx) {
  const Prior p = read_prior(ctx.cfg);
  const PhaseScan scan = phase_scan(p, ctx.cfg.grid("lambda", kPhaseGrid), scalar_rule(ctx.cfg));
  for (const PhasePoint& pt : scan.points) {
    const bool cell = scan.transition && pt.lambda >= scan.transition->first &&
                      pt.lambda <= scan.transition->second;
    ctx.sink("phase_scan").write({{"prior", p.label()},
                                  {"lambda", pt.lambda},
                                  {"q_star", pt.q_star},
                                  {"value", pt.value},
                                  {"dq_dlambda", pt.dq_dlambda},
                                  {"mmse", opt(pt.mmse)},
                                  {"transition_cell", cell}});
  }
  if (scan.transition)
    ctx.extras["transition_cell"] = {scan.transition->first, scan.transition->second};
  else
    ctx.extras["transition_cell"] = nullptr;
}

// ---- reduce ----------------------------------------------------------------

void validate_reduce(const Config& c) {
  c.allow({"prior", "M", "lambda", "batch_samples", "axis_order", "critical_cell",
           "scalar_order", "covariance_shift"});
  read_prior(c);
  for (int m : c.ints("M", {2, 3})) require(m == 2 || m == 3, c.where() + ": M must be 2 or 3");
  require_sorted_nonneg(c.grid("lambda", {0.5, 2.0, 4.0}), c.where() + ": lambda");
  require(c.get<int>("batch_samples", 200) >= 0, c.where() + ": batch_samples must be >= 0");
  require(c.get<double>("covariance_shift", 0.05) > 0.0,
          c.where() + ": covariance_shift must be positive");
  gauss_hermite(c.get<int>("axis_order", kDefaultTensorOrder));
  if (c.has("critical_cell")) {
    const auto cell = c.grid("critical_cell", {});
    require(cell.size() == 2 && cell[0] <= cell[1],
            c.where() + ": critical_cell must be [lo, hi] with lo <= hi");
  }
  scalar_rule(c);
}

void run_reduce(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  ReductionOptions o;
  o.scalar_order = c.get<int>("scalar_order", kDefaultScalarOrder);
  if (c.has("critical_cell")) {
    const auto cell = c.grid("critical_cell", {});
    o.critical_cell = std::make_pair(cell[0], cell[1]);
  }
  const int samples = c.get<int>("batch_samples", 200);
  if (samples > 0) {
    BatchOptions b;
    b.samples = samples;
    b.axis_order = c.get<int>("axis_order", kDefaultTensorOrder);
    b.shift = c.get<double>("covariance_shift", 0.05);
    b.seed = ctx.seed;
    o.batches = b;
  }
  for (int m : c.ints("M", {2, 3})) {
    for (const ReductionReport& r : reduction_sweep(p, m, c.grid("lambda", {0.5, 2.0, 4.0}), o)) {
      ctx.sink("reduction").write({{"prior", r.prior_label},
                                   {"M", integer(r.dim)},
                                   {"lambda", r.lambda},
                                   {"fm_sup", r.fm_sup_value},
                                   {"f1_sup", r.f1_sup_value},
                                   {"gap", r.gap},
                                   {"q_star", r.q_star},
                                   {"maximizer_isotropy", r.maximizer_isotropy},
                                   {"isotropy_skipped", r.isotropy_skipped},
                                   {"lemma1_min_residual", opt(r.lemma1_min_residual)},
                                   {"cor1_min_residual", opt(r.cor1_min_residual)},
                                   {"convexity_min_second_diff", opt(r.convexity_min_second_diff)},
                                   {"pass_gap", r.pass.gap},
                                   {"pass_isotropy", r.pass.isotropy},
                                   {"pass_lemma1", r.pass.lemma1},
                                   {"pass_cor1", r.pass.cor1},
                                   {"pass_convexity", r.pass.convexity}});
    }
  }
}

// ---- simulate --------------------------------------------------------------

void validate_simulate(const Config& c) {
  c.allow({"prior", "N", "M", "lambda", "replicates", "epsilon", "mmse", "save_instance",
           "scalar_order"});
  const Prior p = read_prior(c);
  const bool mmse = c.get<bool>("mmse", true);
  for (int n : c.ints("N", {4, 8}))
    for (int m : c.ints("M", {1})) {
      require(n >= 1 && m >= 1, c.where() + ": N and M must be positive");
      if (!log_partition_feasible(p, n, m)) configuration_count(p, n, m);
      if (mmse) configuration_count(p, n, m);
    }
  require_sorted_nonneg(c.grid("lambda", {2.0}), c.where() + ": lambda");
  require(c.get<int>("replicates", 200) >= 2, c.where() + ": replicates must be >= 2");
  if (c.has("epsilon")) require(c.get<double>("epsilon", 0.0) >= 0.0, c.where() + ": epsilon must be >= 0");
  c.get<bool>("save_instance", false);
  scalar_rule(c);
}

void run_simulate(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  const int reps = c.get<int>("replicates", 200);
  const bool mmse = c.get<bool>("mmse", true);
  const std::optional<double> eps =
      c.has("epsilon") ? std::optional(c.get<double>("epsilon", 0.0)) : std::nullopt;
  const GaussQuadrature scalar = scalar_rule(c);
  for (double lambda : c.grid("lambda", {2.0})) {
    const ScalarSup sup = f1_sup(p, lambda, scalar);
    const MmsePrediction pred = mmse_prediction(p, lambda, scalar);
    for (int n : c.ints("N", {4, 8})) {
      for (int m : c.ints("M", {1})) {
        const ReplicateEstimate f = free_entropy_mc(p, n, m, lambda, eps, reps, ctx.seed);
        std::optional<ReplicateEstimate> e;
        if (mmse) e = matrix_mmse_mc(p, n, m, lambda, reps, ctx.seed);
        ctx.sink("simulate").write(
            {{"prior", p.label()},
             {"N", integer(n)},
             {"M", integer(m)},
             {"lambda", lambda},
             {"epsilon", opt(eps)},
             {"replicates", integer(reps)},
             {"free_entropy", f.mean},
             {"free_entropy_se", f.std_err},
             {"f1_sup", sup.value},
             {"lower_bound_margin", f.mean - sup.value},
             {"matrix_mmse", e ? Value(e->mean) : Value()},
             {"matrix_mmse_se", e ? Value(e->std_err) : Value()},
             {"mmse_prediction", opt(pred.value)}});
        if (c.get<bool>("save_instance", false)) {
          std::ofstream file(ctx.out / ("instance_N" + std::to_string(n) + "_M" +
                                        std::to_string(m) + "_lambda" + format_number(lambda) +
                                        ".txt"));
          write_instance(file, sample_instance(p, n, m, lambda, ctx.seed, 0));
        }
      }
    }
  }
}

// ---- concentration ---------------------------------------------------------

void validate_concentration(const Config& c) {
  c.allow({"prior", "N", "M", "lambda", "n_eps", "replicates", "schedule_exponent",
           "perturbation_N", "perturbation_s"});
  const Prior p = read_prior(c);
  const int m = c.get<int>("M", 1);
  for (int n : c.ints("N", {6, 10, 14})) {
    require(n >= 1 && m >= 1, c.where() + ": N and M must be positive");
    configuration_count(p, n, m);
  }
  const double lambda = c.get<double>("lambda", 2.0);
  require(lambda >= 0.0, c.where() + ": lambda must be non-negative");
  require(c.get<int>("n_eps", 4) >= 2, c.where() + ": n_eps must be >= 2");
  require(c.get<int>("replicates", 300) >= 2, c.where() + ": replicates must be >= 2");
  require(c.get<double>("schedule_exponent", kDefaultScheduleExponent) > 0.0,
          c.where() + ": schedule_exponent must be positive");
  if (c.has("perturbation_s")) {
    for (double s : c.grid("perturbation_s", {})) require(s >= 0.0, c.where() + ": s must be >= 0");
    const int n = c.get<int>("perturbation_N", 10);
    require(n >= 1, c.where() + ": perturbation_N must be positive");
    if (!log_partition_feasible(p, n, m)) configuration_count(p, n, m);
  }
}

void run_concentration(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  const int m = c.get<int>("M", 1);
  const double lambda = c.get<double>("lambda", 2.0);
  const int reps = c.get<int>("replicates", 300);
  const int n_eps = c.get<int>("n_eps", 4);
  const double expo = c.get<double>("schedule_exponent", kDefaultScheduleExponent);
  for (int n : c.ints("N", {6, 10, 14})) {
    const double s = perturbation_schedule(n, expo);
    const ConcentrationEstimate e = overlap_concentration(p, n, m, lambda, s, n_eps, reps, ctx.seed);
    ctx.sink("concentration").write({{"prior", p.label()},
                                     {"N", integer(n)},
                                     {"M", integer(m)},
                                     {"lambda", lambda},
                                     {"s_N", s},
                                     {"n_eps", integer(n_eps)},
                                     {"replicates", integer(reps)},
                                     {"fluctuation", e.estimate},
                                     {"std_err", e.std_err},
                                     {"gamma", e.gamma},
                                     {"ratio", e.estimate / e.gamma}});
  }
  if (c.has("perturbation_s")) {
    const int n = c.get<int>("perturbation_N", 10);
    for (double s : c.grid("perturbation_s", {})) {
      const ReplicateEstimate g = perturbation_gap(p, n, m, lambda, s, reps, ctx.seed);
      ctx.sink("perturbation_gap").write({{"prior", p.label()},
                                          {"N", integer(n)},
                                          {"M", integer(m)},
                                          {"lambda", lambda},
                                          {"s_N", s},
                                          {"gap", g.mean},
                                          {"std_err", g.std_err}});
    }
  }
}

// ---- cavity ----------------------------------------------------------------

EpsilonPolicy read_policy(const Config& c) {
  EpsilonPolicy pol;
  if (!c.has("epsilon")) return pol;
  Config e(c.body().at("epsilon"), c.where() + ".epsilon");
  e.allow({"policy", "epsilon", "exponent"});
  const std::string kind = e.get<std::string>("policy", "none");
  if (kind == "none") {
    pol.kind = EpsilonKind::none;
  } else if (kind == "fixed") {
    pol.kind = EpsilonKind::fixed;
    pol.epsilon = e.get<double>("epsilon", 0.0);
    require(pol.epsilon >= 0.0, e.where() + ": epsilon must be >= 0");
  } else if (kind == "schedule") {
    pol.kind = EpsilonKind::schedule;
    pol.exponent = e.get<double>("exponent", kDefaultScheduleExponent);
    require(pol.exponent > 0.0, e.where() + ": exponent must be positive");
  } else {
    throw ValidationError(e.where() + ": policy must be none, fixed or schedule");
  }
  return pol;
}

void validate_cavity(const Config& c) {
  c.allow({"prior", "lambda", "alpha", "gamma", "N_max", "T", "replicates", "epsilon",
           "scalar_order"});
  const Prior p = read_prior(c);
  require(c.get<double>("lambda", 2.0) >= 0.0, c.where() + ": lambda must be non-negative");
  const DimensionSchedule s =
      dims_schedule(c.get<double>("alpha", 1.0), c.get<double>("gamma", 0.5), c.get<int>("N_max", 12));
  const int t = c.get<int>("T", 0);
  require(t >= 0 && t < s.n_max(), c.where() + ": T must lie in [0, N_max)");
  require(s.m_of_n().back() >= 1, c.where() + ": schedule gives M_N = 0 at N_max");
  require(c.get<int>("replicates", 200) >= 2, c.where() + ": replicates must be >= 2");
  read_policy(c);
  std::string over;
  for (const auto& [n, m] : required_entries(s, t))
    if (n > 0 && m > 0 && !log_partition_feasible(p, n, m))
      over += " (" + std::to_string(n) + ", " + std::to_string(m) + ")";
  if (!over.empty()) throw BudgetError("cavity: enumeration budget exceeded at" + over);
  scalar_rule(c);
}

void run_cavity(Context& ctx) {
  const Config& c = ctx.cfg;
  const Prior p = read_prior(c);
  const double lambda = c.get<double>("lambda", 2.0);
  const DimensionSchedule s =
      dims_schedule(c.get<double>("alpha", 1.0), c.get<double>("gamma", 0.5), c.get<int>("N_max", 12));
  const int t = c.get<int>("T", 0);
  const EpsilonPolicy pol = read_policy(c);
  const FreeEntropyTable table =
      build_table(p, lambda, s, pol, c.get<int>("replicates", 200), ctx.seed, t);
  for (const auto& [key, e] : table.entries)
    ctx.sink("cavity_table").write({{"n", integer(key.first)},
                                    {"m", integer(key.second)},
                                    {"L", e.value},
                                    {"std_err", e.std_err},
                                    {"replicates", integer(e.replicates)},
                                    {"epsilon_policy", pol.name()}});
  const CavityReport rep = cavity_report(p, lambda, s, table, scalar_rule(c), t);
  for (const CavityRow& r : rep.rows)
    ctx.sink("cavity_increments").write({{"n", integer(r.n)},
                                         {"m_n", integer(s.m_of_n()[r.n])},
                                         {"m_next", integer(r.rank)},
                                         {"delta_N", r.delta_n},
                                         {"delta_M", r.delta_m},
                                         {"normalized_N", opt(r.normalized_n)},
                                         {"normalized_M", opt(r.normalized_m)},
                                         {"gap_N", opt(r.gap_n)},
                                         {"gap_M", opt(r.gap_m)}});
  ctx.sink("cavity_summary").write({{"prior", p.label()},
                                    {"lambda", lambda},
                                    {"alpha", s.alpha()},
                                    {"gamma", s.gamma()},
                                    {"N_max", integer(s.n_max())},
                                    {"T", integer(t)},
                                    {"f1_sup", rep.f1_sup},
                                    {"w_N", rep.weights.w_n},
                                    {"w_M", rep.weights.w_m},
                                    {"average_N", rep.average_n},
                                    {"average_M", rep.average_m},
                                    {"combined", rep.combined},
                                    {"combined_se", rep.combined_std_err},
                                    {"plain_combined", rep.plain_combined},
                                    {"plain_combined_se", rep.plain_combined_std_err},
                                    {"free_entropy", rep.free_entropy},
                                    {"free_entropy_se", rep.free_entropy_std_err},
                                    {"pooled_se", rep.pooled_std_err},
                                    {"telescoping_residual", rep.telescoping_residual}});
}

// ---------------------------------------------------------------------------

const std::map<std::string, Subcommand>& registry() {
  static const std::map<std::string, Subcommand> r = {
      {"prior", {validate_prior, run_prior}},
      {"mi", {validate_mi, run_mi}},
      {"potential", {validate_potential, run_potential}},
      {"fixed-point", {validate_fixed_point, run_fixed_point}},
      {"phase-scan", {validate_phase_scan, run_phase_scan}},
      {"reduce", {validate_reduce, run_reduce}},
      {"simulate", {validate_simulate, run_simulate}},
      {"concentration", {validate_concentration, run_concentration}},
      {"cavity", {validate_cavity, run_cavity}},
  };
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot read config file '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, s] : registry()) v.push_back(k);
    return v;
  }();
  return names;
}

std::string content_hash(std::string_view content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + std::string(content);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned char b : digest) {
    hex += kHex[b >> 4];
    hex += kHex[b & 15];
  }
  return hex;
}

int run(const Invocation& inv) {
  const auto start = std::chrono::steady_clock::now();
  fs::path out = inv.out_dir.value_or("out");
  std::optional<Context> ctx;
  json manifest = json::object();
  auto fail = [&](const char* kind, int code, const std::string& message) {
    json record = {{"error", kind}, {"exit_code", code}, {"message", message},
                   {"subcommand", inv.subcommand}};
    std::cerr << record.dump() << '\n';
    std::error_code ec;
    fs::create_directories(out, ec);
    if (!ec) {
      write_json(out / "error.json", record);
      if (ctx) {
        manifest["partial"] = true;
        manifest["error"] = record;
        manifest["extras"] = ctx->extras;
        write_json(out / "manifest.json", manifest);
      }
    }
    return code;
  };

  try {
    const auto& reg = registry();
    const auto it = reg.find(inv.subcommand);
    require(it != reg.end(), "unknown subcommand '" + inv.subcommand + "'");

    json body = json::object();
    if (inv.config_path || inv.config_text) {
      const std::string text = inv.config_path ? read_file(*inv.config_path) : *inv.config_text;
      body = json::parse(text, nullptr, false);
      require(!body.is_discarded(), "config is not valid JSON");
      require(body.is_object(), "config must be a JSON object");
    }
    if (body.contains("subcommand"))
      require(body["subcommand"] == inv.subcommand,
              "config subcommand does not match '" + inv.subcommand + "'");
    if (inv.seed) body["seed"] = *inv.seed;
    if (!body.contains("seed")) body["seed"] = 0;
    require(body["seed"].is_number_unsigned() || body["seed"].is_number_integer(),
            "seed must be a non-negative integer");
    const std::uint64_t seed = body["seed"].get<std::uint64_t>();
    int threads = body.value("threads", 1);
    if (inv.threads) threads = *inv.threads;
    require(threads >= 1, "threads must be at least 1");
    if (!inv.out_dir && body.contains("out")) out = body["out"].get<std::string>();

    Config cfg(body, inv.subcommand);
    it->second.validate(cfg);

    // The hash covers everything that can change values: not threads or out.
    json hashed = body;
    hashed.erase("threads");
    hashed.erase("out");
    hashed["subcommand"] = inv.subcommand;
    const std::string hash = content_hash(hashed.dump());

#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
    fs::create_directories(out);
    fs::remove(out / "error.json");
    ctx.emplace(Context{cfg, seed, out, hash, {}, json::object()});
    manifest = {{"subcommand", inv.subcommand}, {"config", body},   {"config_hash", hash},
                {"seed", seed},                 {"threads", threads}, {"partial", false}};

    it->second.body(*ctx);

    std::vector<std::string> files;
    for (const auto& [name, s] : ctx->sinks) files.push_back(name + ".csv");
    manifest["outputs"] = files;
    manifest["extras"] = ctx->extras;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(out / "manifest.json", manifest);
    return kSuccess;
  } catch (const ValidationError& e) {
    return fail("validation", kValidationError, e.what());
  } catch (const BudgetError& e) {
    return fail("budget", kBudgetError, e.what());
  } catch (const NonConvergenceError& e) {
    return fail("nonconvergence", kNonConvergence, e.what());
  } catch (const std::exception& e) {
    return fail("internal", kInternalError, e.what());
  }
}

}  // namespace spiked::cli
