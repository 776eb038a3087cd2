#pragma once

#include <Eigen/Dense>

namespace spiked {

// Eigenvalues at or above this (negative) floor are treated as zero.
inline constexpr double kPsdFloor = -1e-10;
inline constexpr double kSymmetryTol = 1e-12;

bool is_symmetric(const Eigen::MatrixXd& a, double tol = kSymmetryTol);
double min_eigenvalue(const Eigen::MatrixXd& a);

// Square root of a symmetric PSD matrix; eigenvalues in [kPsdFloor, 0) are clipped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

// Inverse square root of a symmetric positive definite matrix.
Eigen::MatrixXd pd_inverse_sqrt(const Eigen::MatrixXd& a);

// Nearest PSD matrix in Frobenius norm: symmetrize, then clip eigenvalues at 0.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& a);

// 2x2 or 3x3 rotation from one angle (dim 2) or ZYZ Euler angles (dim 3).
Eigen::MatrixXd rotation(int dim, const double* angles);

}  // namespace spiked
