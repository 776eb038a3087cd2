#include "spiked/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "spiked/error.hpp"

namespace spiked {

bool is_symmetric(const Eigen::MatrixXd& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kPsdFloor) throw ValidationError("psd_sqrt: matrix is not positive semidefinite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd pd_inverse_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] <= 0.0) throw ValidationError("pd_inverse_sqrt: matrix is singular");
    ev[i] = 1.0 / std::sqrt(ev[i]);
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd rotation(int dim, const double* angles) {
  if (dim == 1) return Eigen::MatrixXd::Identity(1, 1);
  if (dim == 2) {
    const double c = std::cos(angles[0]), s = std::sin(angles[0]);
    Eigen::MatrixXd r(2, 2);
    r << c, -s, s, c;
    return r;
  }
  require(dim == 3, "rotation: only dimensions 1-3 are parametrized");
  auto rz = [](double t) {
    Eigen::Matrix3d m;
    m << std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0, 0, 0, 1;
    return m;
  };
  auto ry = [](double t) {
    Eigen::Matrix3d m;
    m << std::cos(t), 0, std::sin(t), 0, 1, 0, -std::sin(t), 0, std::cos(t);
    return m;
  };
  const Eigen::Matrix3d r = rz(angles[0]) * ry(angles[1]) * rz(angles[2]);
  return r;
}

}  // namespace spiked
