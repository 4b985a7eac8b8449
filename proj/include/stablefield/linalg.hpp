#pragma once

#include <Eigen/Dense>

#include "stablefield/errors.hpp"

namespace stablefield {

// Smallest diagonal shift from the ladder eps * trace/n, eps in
// {0, 1e-12, 1e-11, ..., 1e-6}, that makes the Cholesky factorization
// succeed. Throws NotPSD when even the largest shift fails.
Eigen::LLT<Eigen::MatrixXd> jittered_llt(const Eigen::MatrixXd& m,
                                         double* jitter_used = nullptr);

// Dense symmetric solver used by the prediction systems. Factorizes once
// through an eigendecomposition (the ordinary-kriging bordered matrix is
// indefinite, so plain Cholesky is not enough) and refuses matrices whose
// condition number exceeds the guard.
class SymmetricSolver {
 public:
  explicit SymmetricSolver(const Eigen::MatrixXd& m, double cond_limit = 1e12);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  double condition() const { return cond_; }

 private:
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
  double cond_ = 0.0;
};

}  // namespace stablefield
