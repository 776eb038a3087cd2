#include <gtest/gtest.h>

#include <cmath>

#include "spiked/error.hpp"
#include "spiked/linalg.hpp"
#include "spiked/reduction.hpp"

using namespace spiked;

namespace {
const GaussQuadrature& axis() {
  static const GaussQuadrature q = gauss_hermite(kDefaultTensorOrder);
  return q;
}
NoiseCovariance cov(double a, double b, double c) {
  Eigen::MatrixXd s(2, 2);
  s << a, b, b, c;
  return NoiseCovariance::from_matrix(s);
}
}  // namespace

// Residuals frozen from scipy dblquad evaluations of the two-dimensional integrals.
TEST(Reduction, SubadditivityResidualMatchesOracle) {
  EXPECT_NEAR(check_lemma1(make_rademacher(), cov(1.0, 0.5, 1.0), axis()), 0.10240683997610578,
              kQuadratureTol);
}

TEST(Reduction, IsotropicBoundResidualMatchesOracle) {
  EXPECT_NEAR(check_cor1(make_rademacher(), cov(1.0, 0.0, 3.0), axis()), 0.07759175265318019,
              kQuadratureTol);
  EXPECT_NEAR(check_cor1(make_rademacher(), cov(1.5, 0.6, 2.5), axis()), 0.045611690642429537,
              kQuadratureTol);
}

TEST(Reduction, EqualityCases) {
  const Prior p = make_sparse_rademacher(0.4);
  EXPECT_NEAR(check_lemma1(p, NoiseCovariance::diagonal({0.3, 1.0, 2.5}), axis()), 0.0,
              kEqualityTol);
  EXPECT_NEAR(check_cor1(p, NoiseCovariance::diagonal({1.7, 1.7}), axis()), 0.0, kEqualityTol);
}

TEST(Reduction, IsotropicBoundNeedsLargeDiagonal) {
  EXPECT_THROW(check_cor1(make_rademacher(), cov(0.5, 0.0, 2.0), axis()), ValidationError);
}

TEST(Reduction, RandomCovariances) {
  auto s = make_stream(1, stream_tag("test_reduction"), 0);
  for (int i = 0; i < 20; ++i) {
    const Eigen::MatrixXd a = random_covariance(3, 0.05, s);
    EXPECT_TRUE(is_symmetric(a));
    EXPECT_GE(min_eigenvalue(a), 0.05 - 1e-12);
    const Eigen::MatrixXd b = random_covariance_above(2, 1.0, 0.5, s);
    EXPECT_GE(b.diagonal().minCoeff(), 1.5 - 1e-12);
    EXPECT_GT(min_eigenvalue(b), 0.0);
  }
}

TEST(Reduction, BatchesHold) {
  BatchOptions opt;
  opt.samples = 25;
  opt.seed = 5;
  const BatchResult lemma = lemma1_batch(make_sparse_rademacher(0.5), 2, opt);
  EXPECT_TRUE(lemma.pass);
  EXPECT_EQ(lemma.samples, 25);
  EXPECT_GE(lemma.min_residual, -kQuadratureTol);
  EXPECT_LE(lemma.max_equality_residual, kEqualityTol);
  const BatchResult cor = cor1_batch(make_rademacher(), 2, opt);
  EXPECT_TRUE(cor.pass);
  EXPECT_GE(cor.min_residual, -kQuadratureTol);
}

TEST(Reduction, ConvexityAboveSupportBound) {
  const GaussQuadrature q = gauss_hermite(kDefaultScalarOrder);
  EXPECT_GT(convexity_check(make_rademacher(), 41, q), -kConvexityTol);
  EXPECT_GT(convexity_check(make_discretized_uniform(1.5, 8), 21, q), -kConvexityTol);
}

TEST(Reduction, SweepReportsGap) {
  ReductionOptions opt;
  opt.critical_cell = std::make_pair(0.95, 1.05);
  const auto rows = reduction_sweep(make_rademacher(), 2, {0.5, 1.0, 2.0}, opt);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_LE(std::abs(r.gap), kSupGapTol) << r.lambda;
    EXPECT_TRUE(r.pass.gap);
    EXPECT_TRUE(r.pass.isotropy);
    EXPECT_FALSE(r.lemma1_min_residual.has_value());
  }
  EXPECT_TRUE(rows[1].isotropy_skipped);
  EXPECT_FALSE(rows[2].isotropy_skipped);
}
