#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "spiked/error.hpp"
#include "spiked/simulator.hpp"

using namespace spiked;

namespace {
oracle::BruteModel brute(const ModelInstance& inst, const Prior& prior) {
  oracle::BruteModel b;
  b.x0 = inst.x0;
  b.z = inst.z;
  b.lambda = inst.lambda;
  b.normalizer = inst.n;
  for (const Atom& a : prior.atoms()) b.atoms.emplace_back(a.value, a.weight);
  return b;
}
}  // namespace

TEST(Instance, ShapesAndSymmetry) {
  const auto inst = sample_instance(make_rademacher(), 5, 2, 1.5, 9, 3);
  EXPECT_EQ(inst.x0.rows(), 5);
  EXPECT_EQ(inst.x0.cols(), 2);
  EXPECT_EQ(inst.z, inst.z.transpose());
  const Eigen::MatrixXd y = std::sqrt(1.5 / 5) * inst.x0 * inst.x0.transpose() + inst.z;
  EXPECT_LT((inst.y - y).norm(), 1e-14);
  EXPECT_EQ(inst.replicate, 3u);
  EXPECT_EQ(inst.prior_label, "rademacher");
  EXPECT_THROW(sample_instance(make_rademacher(), 0, 2, 1.0, 1), ValidationError);
}

TEST(Instance, NoiseVariances) {
  double diag = 0.0, off = 0.0;
  int nd = 0, no = 0;
  for (int r = 0; r < 200; ++r) {
    const auto inst = sample_instance(make_rademacher(), 10, 1, 1.0, 4, r);
    for (int i = 0; i < 10; ++i)
      for (int j = i; j < 10; ++j) {
        const double v = inst.z(i, j) * inst.z(i, j);
        if (i == j) diag += v, ++nd;
        else off += v, ++no;
      }
  }
  EXPECT_NEAR(diag / nd, 2.0, 0.15);
  EXPECT_NEAR(off / no, 1.0, 0.05);
}

TEST(Instance, RestrictionIsTopLeftBlock) {
  const auto big = sample_instance(make_sparse_rademacher(0.5), 6, 3, 2.0, 1, 0);
  const auto small = restrict_instance(big, 4, 2);
  EXPECT_EQ(small.x0, big.x0.topLeftCorner(4, 2));
  EXPECT_EQ(small.z, big.z.topLeftCorner(4, 4));
  const Eigen::MatrixXd y = std::sqrt(2.0 / 4) * small.x0 * small.x0.transpose() + small.z;
  EXPECT_LT((small.y - y).norm(), 1e-14);
  EXPECT_THROW(restrict_instance(big, 7, 1), ValidationError);
}

TEST(Instance, RoundTripThroughText) {
  const auto inst = sample_instance(make_sparse_rademacher(0.3), 4, 2, 1.7, 12, 5);
  std::stringstream buf;
  write_instance(buf, inst);
  const auto back = read_instance(buf);
  EXPECT_EQ(back.n, inst.n);
  EXPECT_EQ(back.m, inst.m);
  EXPECT_EQ(back.lambda, inst.lambda);
  EXPECT_EQ(back.x0, inst.x0);
  EXPECT_EQ(back.z, inst.z);
  EXPECT_EQ(back.y, inst.y);
  EXPECT_EQ(back.seed, inst.seed);
  EXPECT_EQ(back.prior_label, inst.prior_label);
  std::stringstream bad("{\"n\": 2}\n# X0\n1,1\n");
  EXPECT_THROW(read_instance(bad), ValidationError);
}

TEST(Hamiltonian, SingleSiteByHand) {
  ModelInstance inst;
  inst.n = inst.m = 1;
  inst.lambda = 2.0;
  inst.x0 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  inst.z = Eigen::MatrixXd::Constant(1, 1, 0.3);
  inst.y = inst.z.array() + std::sqrt(2.0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, -1.0);
  EXPECT_NEAR(hamiltonian(inst, x), 0.5 * (std::sqrt(2.0) * 0.3 + 2.0 - 1.0), 1e-15);
  EXPECT_NEAR(hamiltonian(inst, x, 2.0), 0.5 * (0.3 + 1.0 - 0.5), 1e-15);
}

TEST(Hamiltonian, AuxiliaryIsEpsilonDerivative) {
  const auto inst = sample_instance(make_rademacher(), 4, 2, 1.3, 2, 0);
  auto pert = sample_perturbation(4, 2, 0.4, 0.4, 2, 0);
  const auto x = sample_instance(make_rademacher(), 4, 2, 1.3, 99, 0).x0;
  const double d = oracle::central_difference(
      [&](double e) {
        PerturbationParams p = pert;
        p.epsilon = e;
        return perturbed_hamiltonian(inst, p, x);
      },
      0.4, 1e-5);
  EXPECT_NEAR(aux_L(inst, pert, x), -d / 4, 1e-8);
  pert.epsilon = 0.0;
  EXPECT_THROW(aux_L(inst, pert, x), ValidationError);
}

TEST(Enumeration, MatchesBruteForce) {
  const Prior rad = make_rademacher();
  const Prior sparse = make_sparse_rademacher(0.4);
  for (int rep = 0; rep < 3; ++rep) {
    const auto a = sample_instance(rad, 3, 2, 2.2, 17, rep);
    EXPECT_NEAR(exact_posterior(a, rad).log_partition, oracle::brute_log_partition(brute(a, rad)),
                1e-10);
    EXPECT_NEAR(log_partition(a, rad), oracle::brute_log_partition(brute(a, rad)), 1e-10);
    const auto b = sample_instance(sparse, 2, 3, 1.4, 17, rep);
    EXPECT_NEAR(exact_posterior(b, sparse).log_partition,
                oracle::brute_log_partition(brute(b, sparse)), 1e-10);
    EXPECT_NEAR(log_partition(b, sparse), oracle::brute_log_partition(brute(b, sparse)), 1e-10);
  }
}

TEST(Enumeration, PerturbedMatchesBruteForce) {
  const Prior skew = Prior::from_atoms({{-2.0, 1.0 / 3}, {1.0, 2.0 / 3}}, "skew");
  const auto inst = sample_instance(skew, 3, 2, 1.1, 8, 0);
  const auto pert = sample_perturbation(3, 2, 0.3, 0.3, 8, 0);
  auto b = brute(inst, skew);
  b.normalizer = 4;
  b.eps = 0.3;
  b.ztilde = pert.ztilde;
  const double want = oracle::brute_log_partition(b);
  EXPECT_NEAR(exact_posterior(inst, pert, skew).log_partition, want, 1e-10);
  EXPECT_NEAR(log_partition(inst, pert, skew), want, 1e-10);
}

TEST(Enumeration, ReverseOrderAgrees) {
  const Prior p = make_sparse_rademacher(0.5);
  const auto inst = sample_instance(p, 4, 2, 2.0, 1, 0);
  EnumerationOptions fwd, rev;
  fwd.chunk = 100;
  rev.chunk = 100;
  rev.reverse = true;
  const auto a = exact_posterior(inst, p, fwd);
  const auto b = exact_posterior(inst, p, rev);
  EXPECT_NEAR(a.log_partition, b.log_partition, 1e-12);
  EXPECT_LT((a.mean_overlap - b.mean_overlap).norm(), 1e-12);
  EXPECT_NEAR(a.overlap_fluct, b.overlap_fluct, 1e-12);
  EXPECT_NEAR(a.matrix_mmse, b.matrix_mmse, 1e-12);
  EXPECT_EQ(a.config_count, 6561u);
}

TEST(Enumeration, InvariantUnderSignAndColumnSwap) {
  const Prior p = make_rademacher();
  auto inst = sample_instance(p, 4, 2, 1.8, 3, 0);
  const double base = log_partition(inst, p);
  inst.x0.col(0) *= -1.0;
  EXPECT_NEAR(log_partition(inst, p), base, 1e-12);
  inst.x0.col(0).swap(inst.x0.col(1));
  EXPECT_NEAR(log_partition(inst, p), base, 1e-12);
}

TEST(Enumeration, NullSignal) {
  const Prior p = make_sparse_rademacher(0.5);
  const auto inst = sample_instance(p, 3, 2, 0.0, 6, 0);
  const auto s = exact_posterior(inst, p);
  EXPECT_NEAR(s.log_partition, 0.0, 1e-13);
  EXPECT_LT(s.mean_overlap.norm(), 1e-13);
  EnumerationOptions opt;
  opt.second_moment = false;
  EXPECT_TRUE(std::isnan(exact_posterior(inst, p, opt).matrix_mmse));
}

TEST(Enumeration, Budget) {
  EXPECT_EQ(configuration_count(make_rademacher(), 12, 2), 1u << 24);
  EXPECT_THROW(configuration_count(make_rademacher(), 13, 2), BudgetError);
  const auto inst = sample_instance(make_rademacher(), 13, 2, 1.0, 1, 0);
  EXPECT_THROW(exact_posterior(inst, make_rademacher()), BudgetError);
  EXPECT_TRUE(log_partition_feasible(make_rademacher(), 12, 3));
  EXPECT_FALSE(log_partition_feasible(make_rademacher(), 13, 3));
  EXPECT_TRUE(log_partition_feasible(make_rademacher(), 13, 1));
}

TEST(Enumeration, ColumnFactorizationAgreesWithEnumeration) {
  const Prior p = make_rademacher();
  const auto inst = sample_instance(p, 7, 3, 2.5, 21, 0);
  const auto pert = sample_perturbation(7, 3, 0.2, 0.2, 21, 0);
  EXPECT_NEAR(log_partition(inst, p), exact_posterior(inst, p).log_partition, 1e-9);
  EXPECT_NEAR(log_partition(inst, pert, p), exact_posterior(inst, pert, p).log_partition, 1e-9);
}

TEST(MonteCarlo, FreeEntropyIsReproducible) {
  const Prior p = make_rademacher();
  const auto a = free_entropy_mc(p, 4, 2, 1.5, std::nullopt, 8, 33);
  const auto b = free_entropy_mc(p, 4, 2, 1.5, std::nullopt, 8, 33);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.samples.size(), 8u);
  EXPECT_GT(a.std_err, 0.0);
  const auto inst = sample_instance(p, 4, 2, 1.5, 33, 5);
  EXPECT_NEAR(a.samples[5], log_partition(inst, p) / 8.0, 1e-14);
  EXPECT_NEAR(free_entropy_mc(p, 4, 2, 0.0, std::nullopt, 4, 1).mean, 0.0, 1e-13);
  EXPECT_THROW(free_entropy_mc(p, 4, 2, 1.0, std::nullopt, 1, 1), ValidationError);
}

TEST(MonteCarlo, PerturbationSchedule) {
  EXPECT_DOUBLE_EQ(perturbation_schedule(16, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(perturbation_schedule(1), 1.0);
  EXPECT_THROW(perturbation_schedule(0), ValidationError);
}

TEST(MonteCarlo, ConcentrationEstimate) {
  const auto c = overlap_concentration(make_rademacher(), 5, 1, 2.0, 0.5, 3, 6, 4);
  EXPECT_EQ(c.samples.size(), 6u);
  EXPECT_NEAR(c.gamma, 1.0 / std::sqrt(2.5), 1e-15);
  EXPECT_GE(c.estimate, 0.0);
  EXPECT_LE(c.estimate, 1.0);
}

TEST(MonteCarlo, PerturbationGapAtZeroIsNormalizerShift) {
  const Prior p = make_rademacher();
  const auto g = perturbation_gap(p, 4, 1, 2.0, 0.0, 4, 5);
  for (std::size_t r = 0; r < g.samples.size(); ++r) {
    const auto inst = sample_instance(p, 4, 1, 2.0, 5, r);
    const auto pert = sample_perturbation(4, 1, 0.0, 0.0, 5, r);
    const double want = (log_partition(inst, pert, p) - log_partition(inst, p)) / 4.0;
    EXPECT_NEAR(g.samples[r], want, 1e-13);
  }
}
