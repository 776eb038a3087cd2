#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spiked/priors.hpp"
#include "spiked/quadrature.hpp"
#include "spiked/simulator.hpp"

namespace spiked {

// m_n = floor(alpha n^gamma), n_m = floor(m^{1/gamma} / alpha).
class DimensionSchedule {
 public:
  DimensionSchedule(double alpha, double gamma, int n_max);

  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  int n_max() const { return n_max_; }

  // Closed forms, valid for any index (not only the stored range).
  int rank_at(long n) const;
  std::optional<long> size_at(int m) const;  // empty when gamma = 0

  const std::vector<int>& m_of_n() const { return m_of_n_; }            // n = 0..n_max
  const std::vector<std::optional<long>>& n_of_m() const { return n_of_m_; }  // m = 0..m_{n_max}

 private:
  double alpha_, gamma_;
  int n_max_;
  std::vector<int> m_of_n_;
  std::vector<std::optional<long>> n_of_m_;
};

DimensionSchedule dims_schedule(double alpha, double gamma, int n_max);

struct AssWeights {
  double w_n = 0.0;
  double w_m = 0.0;
};

// w_N = sum_{n=T}^{N-1} m_n / (N M), w_M = sum_{m=M_T}^{M_{N-1}} n_m / (N M), M = m_N.
AssWeights ass_weights(const DimensionSchedule& schedule, long n, long t);

enum class EpsilonKind { none, fixed, schedule };

struct EpsilonPolicy {
  EpsilonKind kind = EpsilonKind::none;
  double epsilon = 0.0;          // for `fixed`
  double exponent = kDefaultScheduleExponent;  // for `schedule`: eps = 1.5 n^{-exponent}

  std::string name() const;
  std::optional<double> epsilon_at(int n) const;
};

struct TableEntry {
  double value = 0.0;    // estimate of E ln Z_{n,m}
  double std_err = 0.0;
  int replicates = 0;
  std::vector<double> samples;  // per replicate (common random numbers across entries)
};

using IndexPair = std::pair<int, int>;

struct FreeEntropyTable {
  std::map<IndexPair, TableEntry> entries;
  double lambda = 0.0;
  std::string prior_label;
  EpsilonPolicy policy;
  int replicates = 0;

  bool contains(int n, int m) const;
  // Stored value; L(0, m) = L(n, 0) = 0.
  double value(int n, int m) const;
  // Per-replicate sample r of L(n, m).
  double sample(int n, int m, int r) const;
};

// Index pairs needed by the increments for n in [t, n_max).
std::vector<IndexPair> required_entries(const DimensionSchedule& schedule, int t = 0);

// One estimate per required (n, m), all from a shared master disorder per
// replicate (top-left blocks). Throws BudgetError naming every offending pair.
FreeEntropyTable build_table(const Prior& prior, double lambda, const DimensionSchedule& schedule,
                             const EpsilonPolicy& policy, int replicates, std::uint64_t seed,
                             int t = 0);

struct CavityIncrements {
  int t = 0;
  std::vector<int> n;            // n = t..N_max-1
  std::vector<double> delta_n;   // L(n+1, m_{n+1}) - L(n, m_{n+1})
  std::vector<double> delta_m;   // L(n, m_{n+1}) - L(n, m_n)
  std::vector<std::optional<double>> normalized_n;  // delta_n / m_{n+1}
  std::vector<std::optional<double>> normalized_m;  // delta_m / n at rank increments
};

CavityIncrements increments(const FreeEntropyTable& table, const DimensionSchedule& schedule,
                            int t = 0);

// |sum_{n=T}^{N-1} (delta_n + delta_m) - (L(N, m_N) - L(T, m_T))|.
double telescoping_check(const FreeEntropyTable& table, const DimensionSchedule& schedule, int t,
                         int n);

struct CavityRow {
  int n;
  int rank;  // m_{n+1}
  double delta_n;
  std::optional<double> normalized_n;
  std::optional<double> gap_n;  // normalized_n - sup F_1
  double delta_m;
  std::optional<double> normalized_m;
  std::optional<double> gap_m;
};

struct CavityReport {
  std::vector<CavityRow> rows;
  double f1_sup = 0.0;
  AssWeights weights;
  // Averages of the normalized increments weighted by their multiplicity in the
  // telescoping sum (m_{n+1} rows of length one, n-long columns at rank steps).
  double average_n = 0.0;
  double average_m = 0.0;  // 0 when the rank never increments
  double combined = 0.0;   // w_N average_n + w_M average_m
  double combined_std_err = 0.0;
  // Same combination with unweighted means, for reference.
  double plain_average_n = 0.0;
  double plain_average_m = 0.0;
  double plain_combined = 0.0;
  double plain_combined_std_err = 0.0;
  double free_entropy = 0.0;  // L(N, m_N) / (N m_N)
  double free_entropy_std_err = 0.0;
  double pooled_std_err = 0.0;  // sqrt of the sum of the two variances
  double telescoping_residual = 0.0;
};

CavityReport cavity_report(const Prior& prior, double lambda, const DimensionSchedule& schedule,
                           const FreeEntropyTable& table, const GaussQuadrature& quad, int t = 0);

}  // namespace spiked
