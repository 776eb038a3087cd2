#include <gtest/gtest.h>

#include "spiked/error.hpp"
#include "spiked/linalg.hpp"

using namespace spiked;

TEST(Linalg, PsdSqrtSquaresBack) {
  Eigen::MatrixXd a(3, 3);
  a << 2, 0.5, 0.1, 0.5, 1, 0.2, 0.1, 0.2, 0.5;
  const Eigen::MatrixXd r = psd_sqrt(a);
  EXPECT_LT((r * r - a).norm(), 1e-13);
  EXPECT_LT((r - r.transpose()).norm(), 1e-14);
}

TEST(Linalg, PsdSqrtRejectsIndefinite) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2, 1;
  EXPECT_THROW(psd_sqrt(a), ValidationError);
}

TEST(Linalg, InverseSqrt) {
  Eigen::MatrixXd a(2, 2);
  a << 2, 0.3, 0.3, 1;
  const Eigen::MatrixXd b = pd_inverse_sqrt(a);
  EXPECT_LT((b * a * b - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-13);
  Eigen::MatrixXd s(2, 2);
  s << 1, 1, 1, 1;
  EXPECT_THROW(pd_inverse_sqrt(s), ValidationError);
}

TEST(Linalg, ProjectClipsNegativeEigenvalues) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2, 1;  // eigenvalues 3, -1
  const Eigen::MatrixXd p = psd_project(a);
  EXPECT_GE(min_eigenvalue(p), -1e-14);
  Eigen::MatrixXd expect(2, 2);
  expect << 1.5, 1.5, 1.5, 1.5;
  EXPECT_LT((p - expect).norm(), 1e-13);
}

TEST(Linalg, RotationsAreOrthogonal) {
  const double two[] = {0.7};
  const double three[] = {0.3, 1.1, -2.0};
  for (const auto& r : {rotation(2, two), rotation(3, three)}) {
    const auto n = r.rows();
    EXPECT_LT((r.transpose() * r - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-14);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
  }
}

TEST(Linalg, SymmetryCheck) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0.5, 0.5 + 1e-6, 1;
  EXPECT_FALSE(is_symmetric(a));
  a(1, 0) = 0.5;
  EXPECT_TRUE(is_symmetric(a));
}
