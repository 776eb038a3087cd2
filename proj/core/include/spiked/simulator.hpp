#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spiked/numeric.hpp"
#include "spiked/priors.hpp"

namespace spiked {

inline constexpr std::uint64_t kEnumerationBudget = 1ULL << 24;
inline constexpr std::uint64_t kColumnStateBudget = 1ULL << 12;
inline constexpr double kDefaultScheduleExponent = 0.125;

// Y = sqrt(lambda / N) X0 X0^T + Z.
struct ModelInstance {
  int n = 0;
  int m = 0;
  double lambda = 0.0;
  Eigen::MatrixXd x0;  // N x M
  Eigen::MatrixXd z;   // N x N, symmetric
  Eigen::MatrixXd y;   // N x N
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::string prior_label;
};

// Fresh disorder from stream (seed, "instance", replicate): X0 row-major, then
// the upper triangle of Z row by row with Z_ii ~ N(0, 2), Z_ij ~ N(0, 1).
ModelInstance sample_instance(const Prior& prior, int n, int m, double lambda, std::uint64_t seed,
                              std::uint64_t replicate = 0);

// Top-left n x m block of a larger instance, with Y reassembled at size n.
ModelInstance restrict_instance(const ModelInstance& inst, int n, int m);

struct PerturbationParams {
  double epsilon = 0.0;
  Eigen::MatrixXd ztilde;  // N x M
  double s_n = 0.0;
};

// Ztilde from stream (seed, "ztilde", replicate); shared across epsilon values.
PerturbationParams sample_perturbation(int n, int m, double epsilon, double s_n,
                                       std::uint64_t seed, std::uint64_t replicate = 0);

PerturbationParams restrict_perturbation(const PerturbationParams& pert, int n, int m);

// s_N = N^{-exponent}.
double perturbation_schedule(int n, double exponent = kDefaultScheduleExponent);

// (1/2) Tr(sqrt(lambda/K) Z X X^T + (lambda/K) X0 X0^T X X^T - (lambda/2K) (X X^T)^2),
// K = normalizer (defaults to N).
double hamiltonian(const ModelInstance& inst, const Eigen::MatrixXd& x,
                   std::optional<double> normalizer = std::nullopt);

// H with normalizer N + 1, plus Tr(sqrt(eps) X^T Zt + eps X^T X0 - (eps/2) X^T X).
double perturbed_hamiltonian(const ModelInstance& inst, const PerturbationParams& pert,
                             const Eigen::MatrixXd& x);

// -(1/N) d/d eps of the perturbed Hamiltonian; eps > 0.
double aux_L(const ModelInstance& inst, const PerturbationParams& pert, const Eigen::MatrixXd& x);

struct PosteriorSummary {
  double log_partition = 0.0;
  double free_entropy = 0.0;        // log_partition / (N M)
  Eigen::MatrixXd mean_overlap;     // <X^T X0 / N>
  double overlap_fluct = 0.0;       // <|R10 - <R10>|_F^2>
  double matrix_mmse = 0.0;         // |X0 X0^T - <X X^T>|_F^2 / (N^2 M); NaN if skipped
  std::uint64_t config_count = 0;
};

struct EnumerationOptions {
  bool reverse = false;         // walk configurations and chunks backwards
  bool second_moment = true;    // accumulate <X X^T> for matrix_mmse
  std::uint64_t chunk = 1 << 12;
};

// k^{N M}; throws BudgetError above `budget`.
std::uint64_t configuration_count(const Prior& prior, int n, int m,
                                  std::uint64_t budget = kEnumerationBudget);

// Exact Gibbs averages by enumerating every configuration. Without `pert` the
// plain Hamiltonian H_N is used; with it, the perturbed form.
PosteriorSummary exact_posterior(const ModelInstance& inst, const Prior& prior,
                                 const EnumerationOptions& options = {});
PosteriorSummary exact_posterior(const ModelInstance& inst, const PerturbationParams& pert,
                                 const Prior& prior, const EnumerationOptions& options = {});

// ln Z only. For M <= 3 and k^N <= 4096 sums column by column (exact, no
// enumeration of the k^{NM} joint configurations); otherwise enumerates.
double log_partition(const ModelInstance& inst, const Prior& prior);
double log_partition(const ModelInstance& inst, const PerturbationParams& pert, const Prior& prior);

// Whether log_partition can handle (N, M) within the budgets above.
bool log_partition_feasible(const Prior& prior, int n, int m);

struct ReplicateEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::vector<double> samples;  // per replicate, in replicate order
};

// Disorder average of ln Z / (N M). `epsilon` unset: plain H_N. Set: perturbed
// form with that epsilon and a fresh Ztilde per replicate.
ReplicateEstimate free_entropy_mc(const Prior& prior, int n, int m, double lambda,
                                  std::optional<double> epsilon, int replicates,
                                  std::uint64_t seed);

// Disorder average of the per-instance matrix MMSE (plain H_N).
ReplicateEstimate matrix_mmse_mc(const Prior& prior, int n, int m, double lambda, int replicates,
                                 std::uint64_t seed);

struct ConcentrationEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
  double gamma = 0.0;  // M^2 / sqrt(N s_N)
  std::vector<double> samples;
};

// Midpoint average over eps in [s_N, 2 s_N] (n_eps cells) of the disorder
// averaged posterior overlap fluctuation; one instance and Ztilde per replicate.
ConcentrationEstimate overlap_concentration(const Prior& prior, int n, int m, double lambda,
                                            double s_n, int n_eps, int replicates,
                                            std::uint64_t seed);

// Ftilde_N(eps = s_N) - F_N on common (X0, Z) per replicate.
ReplicateEstimate perturbation_gap(const Prior& prior, int n, int m, double lambda, double s_n,
                                   int replicates, std::uint64_t seed);

// One JSON header line, then "# X0" and "# Z" CSV blocks. Y is reassembled on read.
void write_instance(std::ostream& out, const ModelInstance& inst);
ModelInstance read_instance(std::istream& in);

}  // namespace spiked
