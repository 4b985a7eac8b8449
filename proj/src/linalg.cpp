#include "stablefield/linalg.hpp"

#include <cmath>
#include <string>

namespace stablefield {

Eigen::LLT<Eigen::MatrixXd> jittered_llt(const Eigen::MatrixXd& m,
                                         double* jitter_used) {
  const Eigen::Index n = m.rows();
  const double base = m.trace() / static_cast<double>(n);
  const double scale = base > 0.0 ? base : 1.0;

  Eigen::LLT<Eigen::MatrixXd> llt(m);
  double tau = 0.0;
  if (llt.info() != Eigen::Success) {
    for (double eps = 1e-12; eps <= 1.0000001e-6; eps *= 10.0) {
      tau = eps * scale;
      llt.compute(m + tau * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() == Eigen::Success) break;
    }
  }
  if (llt.info() != Eigen::Success)
    throw NotPSD("matrix is not positive definite even with maximal jitter");
  if (jitter_used) *jitter_used = tau;
  return llt;
}

SymmetricSolver::SymmetricSolver(const Eigen::MatrixXd& m, double cond_limit) {
  eig_.compute(m);
  if (eig_.info() != Eigen::Success)
    throw SingularSystem("eigendecomposition failed");
  const auto& ev = eig_.eigenvalues();
  double lo = ev.cwiseAbs().minCoeff();
  double hi = ev.cwiseAbs().maxCoeff();
  if (hi == 0.0 || lo == 0.0 || !(hi / lo < cond_limit)) {
    throw SingularSystem("system condition number " +
                         std::to_string(lo > 0.0 ? hi / lo : INFINITY) +
                         " exceeds guard");
  }
  cond_ = hi / lo;
}

Eigen::VectorXd SymmetricSolver::solve(const Eigen::VectorXd& rhs) const {
  return eig_.eigenvectors() *
         (eig_.eigenvalues().cwiseInverse().asDiagonal() *
          (eig_.eigenvectors().transpose() * rhs));
}

Eigen::MatrixXd SymmetricSolver::solve(const Eigen::MatrixXd& rhs) const {
  return eig_.eigenvectors() *
         (eig_.eigenvalues().cwiseInverse().asDiagonal() *
          (eig_.eigenvectors().transpose() * rhs));
}

}  // namespace stablefield
