#include "spiked/cavity.hpp"

#include <cmath>
#include <set>

#include "spiked/error.hpp"
#include "spiked/numeric.hpp"
#include "spiked/replica.hpp"

namespace spiked {
namespace {

// floor() with a relative guard so that exact powers such as 27^{1/3} land on
// the intended integer.
long guarded_floor(double x) { return static_cast<long>(std::floor(x + 1e-9 * std::max(1.0, x))); }

}  // namespace

DimensionSchedule::DimensionSchedule(double alpha, double gamma, int n_max)
    : alpha_(alpha), gamma_(gamma), n_max_(n_max) {
  require(alpha > 0.0, "dims_schedule: alpha must be positive");
  require(gamma >= 0.0, "dims_schedule: gamma must be non-negative");
  require(n_max >= 1, "dims_schedule: N_max must be at least 1");
  for (int n = 0; n <= n_max; ++n) m_of_n_.push_back(rank_at(n));
  for (int m = 0; m <= m_of_n_.back(); ++m) n_of_m_.push_back(size_at(m));
}

int DimensionSchedule::rank_at(long n) const {
  return static_cast<int>(guarded_floor(alpha_ * std::pow(static_cast<double>(n), gamma_)));
}

std::optional<long> DimensionSchedule::size_at(int m) const {
  if (gamma_ == 0.0) return std::nullopt;
  return guarded_floor(std::pow(static_cast<double>(m), 1.0 / gamma_) / alpha_);
}

DimensionSchedule dims_schedule(double alpha, double gamma, int n_max) {
  return DimensionSchedule(alpha, gamma, n_max);
}

AssWeights ass_weights(const DimensionSchedule& schedule, long n, long t) {
  require(t >= 0 && t < n, "ass_weights: need 0 <= T < N");
  const double rank = schedule.rank_at(n);
  require(rank > 0.0, "ass_weights: M_N must be positive");
  const double norm = static_cast<double>(n) * rank;
  AssWeights w;
  for (long k = t; k < n; ++k) w.w_n += schedule.rank_at(k);
  w.w_n /= norm;
  if (schedule.gamma() > 0.0) {
    for (int m = schedule.rank_at(t); m <= schedule.rank_at(n - 1); ++m)
      w.w_m += static_cast<double>(*schedule.size_at(m));
    w.w_m /= norm;
  }
  return w;
}

std::string EpsilonPolicy::name() const {
  switch (kind) {
    case EpsilonKind::none: return "none";
    case EpsilonKind::fixed: return "fixed";
    case EpsilonKind::schedule: return "schedule";
  }
  return "none";
}

std::optional<double> EpsilonPolicy::epsilon_at(int n) const {
  switch (kind) {
    case EpsilonKind::none: return std::nullopt;
    case EpsilonKind::fixed: return epsilon;
    case EpsilonKind::schedule: return 1.5 * perturbation_schedule(n, exponent);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

bool FreeEntropyTable::contains(int n, int m) const {
  return n == 0 || m == 0 || entries.count({n, m}) > 0;
}

double FreeEntropyTable::value(int n, int m) const {
  if (n == 0 || m == 0) return 0.0;
  const auto it = entries.find({n, m});
  require(it != entries.end(), "table: missing entry (" + std::to_string(n) + ", " +
                                   std::to_string(m) + ")");
  return it->second.value;
}

double FreeEntropyTable::sample(int n, int m, int r) const {
  if (n == 0 || m == 0) return 0.0;
  const auto it = entries.find({n, m});
  require(it != entries.end(), "table: missing entry (" + std::to_string(n) + ", " +
                                   std::to_string(m) + ")");
  return it->second.samples.at(static_cast<std::size_t>(r));
}

std::vector<IndexPair> required_entries(const DimensionSchedule& schedule, int t) {
  const auto& m = schedule.m_of_n();
  require(t >= 0 && t < schedule.n_max(), "required_entries: need 0 <= T < N_max");
  std::set<IndexPair> keys;
  for (int n = t; n < schedule.n_max(); ++n) {
    keys.insert({n + 1, m[n + 1]});
    keys.insert({n, m[n + 1]});
    keys.insert({n, m[n]});
  }
  return {keys.begin(), keys.end()};
}

FreeEntropyTable build_table(const Prior& prior, double lambda, const DimensionSchedule& schedule,
                             const EpsilonPolicy& policy, int replicates, std::uint64_t seed,
                             int t) {
  require(lambda >= 0.0, "build_table: lambda must be non-negative");
  require(replicates >= 2, "build_table: need at least 2 replicates");
  if (policy.kind == EpsilonKind::fixed)
    require(policy.epsilon >= 0.0, "build_table: epsilon must be non-negative");
  const std::vector<IndexPair> keys = required_entries(schedule, t);

  std::vector<IndexPair> work;
  std::string over;
  int n_top = 1, m_top = 1;
  for (const auto& [n, m] : keys) {
    if (n == 0 || m == 0) continue;
    if (!log_partition_feasible(prior, n, m))
      over += (over.empty() ? "" : ", ") + std::string("(") + std::to_string(n) + ", " +
              std::to_string(m) + ")";
    work.push_back({n, m});
    n_top = std::max(n_top, n);
    m_top = std::max(m_top, m);
  }
  if (!over.empty()) throw BudgetError("build_table: enumeration budget exceeded at " + over);

  std::vector<std::vector<double>> samples(work.size(),
                                           std::vector<double>(static_cast<std::size_t>(replicates)));
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < replicates; ++r) {
    const ModelInstance master = sample_instance(prior, n_top, m_top, lambda, seed, r);
    const PerturbationParams master_pert = sample_perturbation(n_top, m_top, 0.0, 0.0, seed, r);
    for (std::size_t w = 0; w < work.size(); ++w) {
      const auto [n, m] = work[w];
      const ModelInstance inst = restrict_instance(master, n, m);
      const std::optional<double> eps = policy.epsilon_at(n);
      if (eps) {
        PerturbationParams pert = restrict_perturbation(master_pert, n, m);
        pert.epsilon = *eps;
        pert.s_n = policy.kind == EpsilonKind::schedule ? *eps / 1.5 : *eps;
        samples[w][r] = log_partition(inst, pert, prior);
      } else {
        samples[w][r] = log_partition(inst, prior);
      }
    }
  }

  FreeEntropyTable table;
  table.lambda = lambda;
  table.prior_label = prior.label();
  table.policy = policy;
  table.replicates = replicates;
  for (const auto& key : keys) {
    TableEntry e;
    e.replicates = replicates;
    e.samples.assign(static_cast<std::size_t>(replicates), 0.0);
    table.entries[key] = e;
  }
  for (std::size_t w = 0; w < work.size(); ++w) {
    TableEntry& e = table.entries[work[w]];
    const MeanEstimate s = summarize(samples[w]);
    e.value = s.mean;
    e.std_err = s.std_err;
    e.samples = std::move(samples[w]);
  }
  return table;
}

// ---------------------------------------------------------------------------

CavityIncrements increments(const FreeEntropyTable& table, const DimensionSchedule& schedule,
                            int t) {
  const auto& m = schedule.m_of_n();
  require(t >= 0 && t < schedule.n_max(), "increments: need 0 <= T < N_max");
  CavityIncrements inc;
  inc.t = t;
  for (int n = t; n < schedule.n_max(); ++n) {
    for (const IndexPair& key : {IndexPair{n + 1, m[n + 1]}, IndexPair{n, m[n + 1]},
                                IndexPair{n, m[n]}})
      require(table.contains(key.first, key.second),
              "increments: table lacks (" + std::to_string(key.first) + ", " +
                  std::to_string(key.second) + ")");
    const double mid = table.value(n, m[n + 1]);
    const double dn = table.value(n + 1, m[n + 1]) - mid;
    const double dm = mid - table.value(n, m[n]);
    inc.n.push_back(n);
    inc.delta_n.push_back(dn);
    inc.delta_m.push_back(dm);
    inc.normalized_n.push_back(m[n + 1] > 0 ? std::optional(dn / m[n + 1]) : std::nullopt);
    inc.normalized_m.push_back(m[n + 1] > m[n] && n > 0 ? std::optional(dm / n) : std::nullopt);
  }
  return inc;
}

double telescoping_check(const FreeEntropyTable& table, const DimensionSchedule& schedule, int t,
                         int n) {
  require(t >= 0 && t < n && n <= schedule.n_max(), "telescoping_check: need 0 <= T < N <= N_max");
  const auto& m = schedule.m_of_n();
  const CavityIncrements inc = increments(table, schedule, t);
  double sum = 0.0;
  for (std::size_t i = 0; i < inc.n.size() && inc.n[i] < n; ++i)
    sum += inc.delta_n[i] + inc.delta_m[i];
  return std::abs(sum - (table.value(n, m[n]) - table.value(t, m[t])));
}

CavityReport cavity_report(const Prior& prior, double lambda, const DimensionSchedule& schedule,
                           const FreeEntropyTable& table, const GaussQuadrature& quad, int t) {
  const auto& m = schedule.m_of_n();
  const int n_max = schedule.n_max();
  require(m[n_max] > 0, "cavity_report: M_N must be positive");
  CavityReport rep;
  rep.f1_sup = f1_sup(prior, lambda, quad).value;
  rep.weights = ass_weights(schedule, n_max, t);
  const CavityIncrements inc = increments(table, schedule, t);

  for (std::size_t i = 0; i < inc.n.size(); ++i) {
    CavityRow row{inc.n[i], m[inc.n[i] + 1], inc.delta_n[i], inc.normalized_n[i], std::nullopt,
                  inc.delta_m[i], inc.normalized_m[i], std::nullopt};
    if (row.normalized_n) row.gap_n = *row.normalized_n - rep.f1_sup;
    if (row.normalized_m) row.gap_m = *row.normalized_m - rep.f1_sup;
    rep.rows.push_back(row);
  }

  // Per-replicate combination so the error bars follow the shared disorder.
  struct Combination {
    double weighted, plain, avg_n, avg_m, plain_n, plain_m;
  };
  auto combine = [&](auto&& value) {
    double wsum_n = 0.0, wsum_m = 0.0, wt_n = 0.0, wt_m = 0.0, psum_n = 0.0, psum_m = 0.0;
    int cnt_n = 0, cnt_m = 0;
    for (int n = t; n < n_max; ++n) {
      const double mid = value(n, m[n + 1]);
      if (m[n + 1] > 0) {
        const double x = (value(n + 1, m[n + 1]) - mid) / m[n + 1];
        wsum_n += m[n + 1] * x;
        wt_n += m[n + 1];
        psum_n += x;
        ++cnt_n;
      }
      if (m[n + 1] > m[n] && n > 0) {
        const double y = (mid - value(n, m[n])) / n;
        wsum_m += n * y;
        wt_m += n;
        psum_m += y;
        ++cnt_m;
      }
    }
    Combination c{};
    c.avg_n = wt_n > 0 ? wsum_n / wt_n : 0.0;
    c.avg_m = wt_m > 0 ? wsum_m / wt_m : 0.0;
    c.plain_n = cnt_n ? psum_n / cnt_n : 0.0;
    c.plain_m = cnt_m ? psum_m / cnt_m : 0.0;
    c.weighted = rep.weights.w_n * c.avg_n + rep.weights.w_m * c.avg_m;
    c.plain = rep.weights.w_n * c.plain_n + rep.weights.w_m * c.plain_m;
    return c;
  };
  const double norm = static_cast<double>(n_max) * m[n_max];
  const std::size_t reps = static_cast<std::size_t>(table.replicates);
  std::vector<double> weighted(reps), plain(reps), free(reps);
  for (int r = 0; r < table.replicates; ++r) {
    const Combination c = combine([&](int n, int k) { return table.sample(n, k, r); });
    weighted[r] = c.weighted;
    plain[r] = c.plain;
    free[r] = table.sample(n_max, m[n_max], r) / norm;
  }
  const Combination c = combine([&](int n, int k) { return table.value(n, k); });
  rep.average_n = c.avg_n;
  rep.average_m = c.avg_m;
  rep.combined = c.weighted;
  rep.combined_std_err = summarize(weighted).std_err;
  rep.plain_average_n = c.plain_n;
  rep.plain_average_m = c.plain_m;
  rep.plain_combined = c.plain;
  rep.plain_combined_std_err = summarize(plain).std_err;
  const MeanEstimate f = summarize(free);
  rep.free_entropy = table.value(n_max, m[n_max]) / norm;
  rep.free_entropy_std_err = f.std_err;
  rep.pooled_std_err = std::hypot(rep.combined_std_err, f.std_err);
  rep.telescoping_residual = telescoping_check(table, schedule, t, n_max);
  return rep;
}

}  // namespace spiked
