#pragma once

#include <memory>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace exmort {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

/// Fill-reducing (approximate minimum degree) ordering of a symmetric pattern.
Permutation fill_reducing_ordering(const SparseMatrix &pattern);

/// Cholesky factor L L' = P Q P' of a symmetric positive-definite sparse
/// matrix under a fixed permutation. Cheap to copy (shared factor).
class SparseCholesky {
  public:
    SparseCholesky() = default;

    /// Throws NumericalError when Q is not positive definite.
    SparseCholesky(const SparseMatrix &q, const Permutation &ordering);

    Eigen::Index size() const { return perm_.size(); }

    Eigen::VectorXd solve(const Eigen::VectorXd &b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd &b) const;

    /// P' L^{-T} z: a draw from N(0, Q^{-1}) when z is standard normal.
    Eigen::VectorXd whiten_inverse(const Eigen::VectorXd &z) const;

    double log_determinant() const { return log_det_; }

  private:
    using Factor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>;

    std::shared_ptr<const Factor> factor_;
    Permutation perm_;
    double log_det_ = 0;
};

} // namespace exmort
