#include "exmort/sparse_cholesky.hpp"

#include "exmort/errors.hpp"

#include <Eigen/OrderingMethods>

namespace exmort {

Permutation fill_reducing_ordering(const SparseMatrix &pattern) {
    SparseMatrix sym = pattern;
    sym.makeCompressed();
    Permutation perm;
    Eigen::AMDOrdering<int> amd;
    amd(sym.selfadjointView<Eigen::Lower>(), perm);
    // AMD yields the inverse permutation, as in Eigen's own analyzePattern.
    return perm.inverse();
}

SparseCholesky::SparseCholesky(const SparseMatrix &q, const Permutation &ordering)
    : perm_{ordering} {
    // P Q P' with P mapping old index i to perm_.indices()[i].
    SparseMatrix permuted(q.rows(), q.cols());
    permuted.selfadjointView<Eigen::Lower>() = q.selfadjointView<Eigen::Lower>().twistedBy(perm_);
    auto factor = std::make_shared<Factor>();
    factor->compute(permuted);
    if (factor->info() != Eigen::Success) {
        throw NumericalError("sparse Cholesky failed: matrix is not positive definite");
    }
    const Eigen::VectorXd diag = factor->matrixL().nestedExpression().diagonal();
    log_det_ = 2 * diag.array().log().sum();
    factor_ = std::move(factor);
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd &b) const {
    const Eigen::VectorXd pb = perm_ * b;
    const Eigen::VectorXd y = factor_->solve(pb);
    return perm_.transpose() * y;
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd &b) const {
    const Eigen::MatrixXd pb = perm_ * b;
    const Eigen::MatrixXd y = factor_->solve(pb);
    return perm_.transpose() * y;
}

Eigen::VectorXd SparseCholesky::whiten_inverse(const Eigen::VectorXd &z) const {
    const Eigen::VectorXd y = factor_->matrixU().solve(z);
    return perm_.transpose() * y;
}

} // namespace exmort
