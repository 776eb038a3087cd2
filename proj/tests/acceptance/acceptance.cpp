// Acceptance driver: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: spiked_acceptance [criterion ids...]   (no ids: run all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spiked/cavity.hpp"
#include "spiked/channel.hpp"
#include "spiked/linalg.hpp"
#include "spiked/reduction.hpp"
#include "spiked/replica.hpp"
#include "spiked/simulator.hpp"
#include "spiked_cli/runner.hpp"

using namespace spiked;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const GaussQuadrature& scalar_rule() {
  static const GaussQuadrature q = gauss_hermite(kDefaultScalarOrder);
  return q;
}

std::vector<Prior> both_priors() { return {make_rademacher(), make_sparse_rademacher(0.3)}; }

double pooled(double a, double b) { return std::sqrt(a * a + b * b); }

// ---------------------------------------------------------------------------

Outcome subadditivity_suite() {
  Outcome o{true, ""};
  for (const Prior& p : both_priors())
    for (int dim : {2, 3}) {
      BatchOptions opt;
      opt.seed = kSeed;
      const BatchResult r = lemma1_batch(p, dim, opt);
      const bool ok = r.min_residual >= -1e-6 && r.max_equality_residual <= 1e-8;
      o.pass = o.pass && ok;
      o.detail += fmt("%s M=%d min=%.2e eq=%.1e; ", p.label().c_str(), dim, r.min_residual,
                      r.max_equality_residual);
    }
  return o;
}

Outcome isotropic_bound_suite() {
  Outcome o{true, ""};
  for (const Prior& p : both_priors()) {
    for (int dim : {2, 3}) {
      BatchOptions opt;
      opt.seed = kSeed;
      const BatchResult r = cor1_batch(p, dim, opt);
      const bool ok = r.min_residual >= -1e-6 && r.max_equality_residual <= 1e-8;
      o.pass = o.pass && ok;
      o.detail += fmt("%s M=%d min=%.2e eq=%.1e; ", p.label().c_str(), dim, r.min_residual,
                      r.max_equality_residual);
    }
    const double conv = convexity_check(p, 41, scalar_rule());
    o.pass = o.pass && conv >= -1e-7;
    o.detail += fmt("%s convexity=%.2e; ", p.label().c_str(), conv);
  }
  return o;
}

Outcome potential_forms() {
  auto stream = make_stream(kSeed, stream_tag("acceptance"), 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const GaussQuadrature axis = gauss_hermite(kDefaultTensorOrder);
  const std::vector<Prior> priors = both_priors();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = trial % 2 == 0 ? 2 : 3;
    const Prior& p = priors[(trial / 2) % 2];
    const double lambda = 0.2 + 4.8 * unit(stream);
    std::vector<double> angles(3);
    for (double& a : angles) a = 2.0 * std::numbers::pi * unit(stream);
    Eigen::VectorXd eig(dim);
    for (int i = 0; i < dim; ++i) eig[i] = p.second_moment() * unit(stream);
    const Eigen::MatrixXd rot = rotation(dim, angles.data());
    Eigen::MatrixXd q = rot * eig.asDiagonal() * rot.transpose();
    q = 0.5 * (q + q.transpose());
    const auto ev = fm_rs(p, OverlapMatrix::from_matrix(q), lambda, axis);
    worst = std::max(worst, std::abs(ev.value_logz - ev.value_mi));
  }
  return {worst <= 1e-6, fmt("max |logZ form - MI form| = %.2e over 100 draws", worst)};
}

std::optional<std::pair<double, double>> critical_cell(const Prior& p) {
  std::vector<double> grid;
  for (int i = 0; i <= 116; ++i) grid.push_back(0.2 + 0.05 * i);
  return phase_scan(p, grid, scalar_rule()).transition;
}

Outcome rank_one_reduction() {
  Outcome o{true, ""};
  for (const Prior& p : both_priors()) {
    ReductionOptions opt;
    opt.critical_cell = critical_cell(p);
    for (int dim : {2, 3}) {
      for (const ReductionReport& r : reduction_sweep(p, dim, {0.5, 2.0, 4.0}, opt)) {
        const bool ok = std::abs(r.gap) <= 1e-3 &&
                        (r.isotropy_skipped || r.maximizer_isotropy <= 1e-2);
        o.pass = o.pass && ok;
        o.detail += fmt("%s M=%d l=%g gap=%.1e iso=%.1e%s; ", p.label().c_str(), dim, r.lambda,
                        r.gap, r.maximizer_isotropy, r.isotropy_skipped ? "(skip)" : "");
      }
    }
  }
  return o;
}

Outcome matrix_fixed_point() {
  const Prior p = make_rademacher();
  const double q_star = f1_sup(p, 4.0, gauss_hermite(256)).q_star;
  const Eigen::MatrixXd target = q_star * Eigen::MatrixXd::Identity(2, 2);
  const auto r = fm_fixed_point(p, 4.0, OverlapMatrix::isotropic(2, 1.0), gauss_hermite(48));
  const double dist = (r.overlap - target).norm();
  const auto coarse =
      fm_fixed_point(p, 4.0, OverlapMatrix::isotropic(2, 1.0), gauss_hermite(kDefaultTensorOrder));
  return {r.converged && r.residual <= 1e-8 && dist <= 1e-4,
          fmt("M=2 order 48: residual=%.2e after %d its, |Q-q*I|_F=%.2e (order 24: %.2e)",
              r.residual, r.iterations, dist, (coarse.overlap - target).norm())};
}

Outcome phase_transition() {
  std::vector<double> grid;
  for (int i = 0; i <= 56; ++i) grid.push_back(0.2 + 0.05 * i);
  const Prior p = make_rademacher();
  const PhaseScan scan = phase_scan(p, grid, scalar_rule());
  int leaving = 0;
  for (std::size_t i = 0; i + 1 < scan.points.size(); ++i)
    if (scan.points[i].q_star <= 1e-8 && scan.points[i + 1].q_star > 1e-8) ++leaving;
  const double q05 = f1_sup(p, 0.5, scalar_rule()).q_star;
  const double q09 = f1_sup(p, 0.9, scalar_rule()).q_star;
  const double q15 = f1_sup(p, 1.5, scalar_rule()).q_star;
  const double oracle15 = oracle::rademacher_sup(1.5).first;
  const bool cell = scan.transition && scan.transition->first <= 1.0 + 1e-12 &&
                    scan.transition->second >= 1.0 - 1e-12;
  const bool pass = q05 <= 1e-8 && q09 <= 1e-8 && q15 >= 0.1 && std::abs(q15 - oracle15) <= 1e-4 &&
                    leaving == 1 && cell;
  return {pass, fmt("q*(0.5)=%.1e q*(0.9)=%.1e q*(1.5)=%.6f (grid oracle %.6f) cell=[%g, %g] "
                    "cells leaving 0: %d",
                    q05, q09, q15, oracle15, scan.transition ? scan.transition->first : NAN,
                    scan.transition ? scan.transition->second : NAN, leaving)};
}

Outcome i_mmse() {
  Outcome o{true, ""};
  const double h = 1e-3;
  for (const Prior& p : both_priors()) {
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
      const double d = (mi_scalar_signal(p, s + h, scalar_rule()) -
                        mi_scalar_signal(p, s - h, scalar_rule())) /
                       (2 * h);
      const double err = std::abs(d - 0.5 * mmse_scalar(p, s, scalar_rule()));
      o.pass = o.pass && err <= 1e-5;
      o.detail += fmt("%s s=%g %.1e; ", p.label().c_str(), s, err);
    }
  }
  return o;
}

Outcome hand_free_entropy() {
  Outcome o{true, ""};
  for (double lambda : {1.0, 4.0}) {
    const auto e = free_entropy_mc(make_rademacher(), 1, 1, lambda, std::nullopt, 10000, kSeed);
    const bool ok = std::abs(e.mean - lambda / 4) <= 3 * e.std_err;
    o.pass = o.pass && ok;
    o.detail += fmt("l=%g: %.5f +- %.5f vs %.4f; ", lambda, e.mean, e.std_err, lambda / 4);
  }
  return o;
}

Outcome lower_bound() {
  Outcome o{true, ""};
  const Prior p = make_rademacher();
  for (double lambda : {1.0, 2.0}) {
    const double sup = f1_sup(p, lambda, scalar_rule()).value;
    for (auto [n, m] : {std::pair{4, 1}, {8, 1}, {12, 1}, {8, 2}}) {
      const auto e = free_entropy_mc(p, n, m, lambda, std::nullopt, 300, kSeed);
      const bool ok = e.mean >= sup - 3 * e.std_err;
      o.pass = o.pass && ok;
      o.detail += fmt("(%d,%d,l=%g) %.4f>=%.4f; ", n, m, lambda, e.mean, sup);
    }
  }
  return o;
}

Outcome finite_size_trend() {
  const Prior p = make_rademacher();
  const double lambda = 2.0;
  const ScalarSup sup = f1_sup(p, lambda, scalar_rule());
  const double target = 1.0 - sup.q_star * sup.q_star;
  std::vector<ReplicateEstimate> fe, mm;
  for (int n : {4, 8, 12, 16}) {
    fe.push_back(free_entropy_mc(p, n, 1, lambda, std::nullopt, 400, kSeed));
    mm.push_back(matrix_mmse_mc(p, n, 1, lambda, 400, kSeed));
  }
  bool pass = true;
  std::string detail = "gap:";
  for (std::size_t i = 0; i < fe.size(); ++i) {
    detail += fmt(" %.4f", fe[i].mean - sup.value);
    if (i > 0)
      pass = pass && fe[i].mean - fe[i - 1].mean <= 3 * pooled(fe[i].std_err, fe[i - 1].std_err);
  }
  detail += fmt("; mmse (target %.4f):", target);
  for (std::size_t i = 0; i < mm.size(); ++i) {
    detail += fmt(" %.4f", mm[i].mean);
    if (i > 0)
      pass = pass && std::abs(mm[i].mean - target) - std::abs(mm[i - 1].mean - target) <=
                         3 * pooled(mm[i].std_err, mm[i - 1].std_err);
  }
  pass = pass && std::abs(mm.back().mean - target) < std::abs(mm.front().mean - target);
  return {pass, detail};
}

Outcome telescoping() {
  Outcome o{true, ""};
  struct Case {
    double alpha, gamma;
  };
  for (const Case c : {Case{1.0, 0.0}, Case{1.0, 0.5}, Case{0.25, 1.0}}) {
    const auto sched = dims_schedule(c.alpha, c.gamma, 12);
    const auto table = build_table(make_rademacher(), 2.0, sched, {}, 4, kSeed);
    double worst = 0.0;
    for (int n = 1; n <= 12; ++n)
      for (int t = 0; t < n; ++t) worst = std::max(worst, telescoping_check(table, sched, t, n));
    o.pass = o.pass && worst <= 1e-12;
    o.detail += fmt("gamma=%g alpha=%g max=%.1e; ", c.gamma, c.alpha, worst);
  }
  return o;
}

Outcome weights() {
  Outcome o{true, ""};
  for (double gamma : {1.0 / 3.0, 0.5, 1.0}) {
    const auto w = ass_weights(dims_schedule(1.0, gamma, 1), 100000, 10);
    const double en = std::abs(w.w_n - 1.0 / (1.0 + gamma));
    const double em = std::abs(w.w_m - gamma / (1.0 + gamma));
    o.pass = o.pass && en <= 1e-2 && em <= 1e-2;
    o.detail += fmt("gamma=%.3f w=(%.5f, %.5f); ", gamma, w.w_n, w.w_m);
  }
  return o;
}

Outcome cavity_sharpness() {
  const Prior p = make_rademacher();
  const auto sched = dims_schedule(1.0, 0.5, 12);
  const auto table = build_table(p, 2.0, sched, {}, 200, kSeed);
  const auto rep = cavity_report(p, 2.0, sched, table, scalar_rule());
  const double diff = std::abs(rep.combined - rep.free_entropy);
  const double plain = std::abs(rep.plain_combined - rep.free_entropy);
  return {diff <= 3 * rep.pooled_std_err,
          fmt("combined=%.5f free entropy=%.5f |diff|=%.4f pooled SE=%.4f (%.2f SE); "
              "unweighted combination %.5f (%.2f SE); w=(%.4f, %.4f) telescoping=%.1e",
              rep.combined, rep.free_entropy, diff, rep.pooled_std_err, diff / rep.pooled_std_err,
              rep.plain_combined,
              plain / pooled(rep.plain_combined_std_err, rep.free_entropy_std_err),
              rep.weights.w_n, rep.weights.w_m, rep.telescoping_residual)};
}

Outcome concentration() {
  const Prior p = make_rademacher();
  std::vector<ConcentrationEstimate> est;
  for (int n : {6, 10, 14})
    est.push_back(overlap_concentration(p, n, 1, 2.0, std::pow(n, -0.125), 4, 300, kSeed));
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double ratio = est[i].estimate / est[i].gamma;
    detail += fmt("N=%d fluct=%.4f+-%.4f ratio=%.4f; ", 6 + 4 * static_cast<int>(i),
                  est[i].estimate, est[i].std_err, ratio);
    if (i > 0) {
      pass = pass && est[i].estimate - est[i - 1].estimate <=
                         3 * pooled(est[i].std_err, est[i - 1].std_err);
      const double first = est[0].estimate / est[0].gamma;
      const double se = pooled(est[i].std_err / est[i].gamma, est[0].std_err / est[0].gamma);
      pass = pass && ratio <= first + 3 * se;
    }
  }
  return {pass, detail};
}

Outcome perturbation_negligible() {
  const Prior p = make_rademacher();
  const std::vector<double> s{0.05, 0.1, 0.2};
  std::vector<ReplicateEstimate> gaps;
  for (double sn : s) gaps.push_back(perturbation_gap(p, 10, 1, 2.0, sn, 400, kSeed));
  const auto offset = perturbation_gap(p, 10, 1, 2.0, 0.0, 400, kSeed);
  const double slope = std::abs(gaps.back().mean) / s.back();
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double linear = slope * s[i];
    const double ratio = std::abs(gaps[i].mean) / linear;
    pass = pass && ratio >= 1.0 / 3.0 && ratio <= 3.0;
    detail += fmt("s=%g gap=%.4f+-%.4f (|gap|/C's=%.2f); ", s[i], gaps[i].mean, gaps[i].std_err,
                  ratio);
  }
  detail += fmt("s=0 normalizer offset=%.4f+-%.4f; offset-corrected slopes:", offset.mean,
                offset.std_err);
  for (std::size_t i = 0; i < s.size(); ++i)
    detail += fmt(" %.3f", (gaps[i].mean - offset.mean) / s[i]);
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  struct Job {
    const char* sub;
    const char* config;
  };
  const Job jobs[] = {
      {"phase-scan", R"({"seed": 3})"},
      {"simulate", R"({"N": [4, 6], "M": [1, 2], "lambda": [1, 2], "replicates": 20, "seed": 3})"},
      {"concentration",
       R"({"N": [4, 6], "replicates": 20, "n_eps": 3, "perturbation_N": 5, "seed": 3})"},
      {"cavity", R"({"N_max": 6, "replicates": 10, "seed": 3})"},
      {"reduce", R"({"M": [2], "lambda": [2], "batch_samples": 10, "seed": 3})"},
  };
  const fs::path root = fs::temp_directory_path() / "spiked_acceptance_determinism";
  fs::remove_all(root);
  bool pass = true;
  int files = 0;
  for (const Job& job : jobs) {
    std::string bodies[3];
    for (int run = 0; run < 3; ++run) {
      cli::Invocation inv;
      inv.subcommand = job.sub;
      inv.config_text = job.config;
      inv.threads = run == 2 ? 2 : 1;
      const fs::path out = root / (std::string(job.sub) + std::to_string(run));
      inv.out_dir = out.string();
      if (cli::run(inv) != cli::kSuccess) return {false, fmt("%s failed to run", job.sub)};
      std::vector<fs::path> csvs;
      for (const auto& e : fs::directory_iterator(out))
        if (e.path().extension() == ".csv") csvs.push_back(e.path());
      std::sort(csvs.begin(), csvs.end());
      for (const auto& c : csvs) bodies[run] += c.filename().string() + "\n" + slurp(c);
      if (run == 0) files += static_cast<int>(csvs.size());
    }
    pass = pass && !bodies[0].empty() && bodies[0] == bodies[1] && bodies[0] == bodies[2];
  }
  fs::remove_all(root);
  return {pass, fmt("%d CSV files from 5 subcommands identical across 2 runs at 1 thread and "
                    "1 run at 2 threads",
                    files)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "subadditivity-suite", subadditivity_suite},
      {2, "isotropic-bound-suite", isotropic_bound_suite},
      {3, "potential-forms", potential_forms},
      {4, "rank-one-reduction", rank_one_reduction},
      {5, "matrix-fixed-point", matrix_fixed_point},
      {6, "phase-transition", phase_transition},
      {7, "i-mmse", i_mmse},
      {8, "hand-free-entropy", hand_free_entropy},
      {9, "finite-n-lower-bound", lower_bound},
      {10, "finite-size-trend", finite_size_trend},
      {11, "telescoping", telescoping},
      {12, "cavity-weights", weights},
      {13, "cavity-sharpness", cavity_sharpness},
      {14, "overlap-concentration", concentration},
      {15, "perturbation-negligible", perturbation_negligible},
      {16, "determinism", determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::stoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %-24s [%.1fs] %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
