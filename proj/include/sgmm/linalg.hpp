#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sgmm {

class SingularWeighting : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inverse of a moment covariance S used as the optimal weighting matrix.
struct WeightingInverse {
    Eigen::MatrixXd W;
    int rank = 0;              // eigenvalues retained
    int dropped = 0;           // eigenvalues below the floor
    bool ridge = false;        // true when S + lambda*I was inverted instead
    double condition = 0.0;    // largest / smallest eigenvalue actually inverted
};

/// Eigendecomposition pseudo-inverse of a symmetric PSD matrix. Eigenvalues
/// below 1e-10 * trace(S)/q are dropped. If that leaves fewer than
/// `min_rank` directions, S + lambda*I with lambda = 1e-8 * trace(S)/q is
/// inverted instead.
inline WeightingInverse regularized_inverse(const Eigen::MatrixXd& S, int min_rank) {
    const Eigen::Index q = S.rows();
    if (S.cols() != q || q == 0) throw std::invalid_argument("weighting source must be a non-empty square matrix");
    const double scale = S.trace() / static_cast<double>(q);
    if (!(scale > 0) || !std::isfinite(scale))
        throw SingularWeighting("moment covariance has zero or non-finite trace");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    if (eig.info() != Eigen::Success) throw SingularWeighting("eigendecomposition of moment covariance failed");
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const Eigen::MatrixXd& V = eig.eigenvectors();
    const double floor = 1e-10 * scale;

    WeightingInverse out;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(q);
    double lo = 0, hi = 0;
    for (Eigen::Index k = 0; k < q; ++k) {
        if (lambda(k) > floor) {
            inv(k) = 1.0 / lambda(k);
            ++out.rank;
            lo = out.rank == 1 ? lambda(k) : std::min(lo, lambda(k));
            hi = std::max(hi, lambda(k));
        }
    }
    out.dropped = static_cast<int>(q) - out.rank;
    if (out.rank < min_rank) {
        const double ridge = 1e-8 * scale;
        out.ridge = true;
        for (Eigen::Index k = 0; k < q; ++k) inv(k) = 1.0 / (std::max(lambda(k), 0.0) + ridge);
        lo = std::max(lambda.minCoeff(), 0.0) + ridge;
        hi = lambda.maxCoeff() + ridge;
        out.rank = static_cast<int>(q);
    }
    if (out.rank == 0) throw SingularWeighting("moment covariance has no eigenvalue above the floor");
    out.W = V * inv.asDiagonal() * V.transpose();
    out.W = (out.W + out.W.transpose()).eval() * 0.5;
    out.condition = hi / lo;
    return out;
}

/// Pseudo-inverse of a small symmetric matrix with a relative cutoff.
inline Eigen::MatrixXd symmetric_pinv(const Eigen::MatrixXd& A, double rel_tol = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig((A + A.transpose()) * 0.5);
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double cut = rel_tol * std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
    for (Eigen::Index k = 0; k < lambda.size(); ++k)
        if (std::abs(lambda(k)) > cut) inv(k) = 1.0 / lambda(k);
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace sgmm
