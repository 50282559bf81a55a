#include "flowroute/spectral.hpp"

#include <Eigen/Eigenvalues>

#include "flowroute/errors.hpp"

namespace flowroute {

RegularizedLaplacian::RegularizedLaplacian(const EdgeList& edges, const Vec& capacities,
                                           double delta)
    : delta_(delta) {
    if (capacities.size() != edges.n_edges())
        throw DimensionError("capacities length must equal edge count");
    if (delta <= 0.0) throw ValidationError("delta must be positive");
    for (int m = 0; m < capacities.size(); ++m)
        if (!(capacities[m] > 0.0))
            throw ValidationError("capacities must be strictly positive");

    const int n = edges.n_nodes;
    L_ = Mat::Zero(n, n);
    for (int m = 0; m < edges.n_edges(); ++m) {
        const auto [i, j] = edges.edges[m];
        const double c = capacities[m];
        L_(i, i) += c;
        L_(j, j) += c;
        L_(i, j) -= c;
        L_(j, i) -= c;
    }
    L_.diagonal().array() += delta;

    llt_.compute(L_);
    if (llt_.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization of regularized Laplacian failed");
}

Mat RegularizedLaplacian::solve(const Mat& rhs) const {
    if (rhs.rows() != L_.rows())
        throw DimensionError("solve rhs row count must equal N");
    Mat x = llt_.solve(rhs);
    // one refinement pass against the cached factor
    x += llt_.solve(rhs - L_ * x);
    return x;
}

Vec RegularizedLaplacian::solve(const Vec& rhs) const {
    if (rhs.size() != L_.rows())
        throw DimensionError("solve rhs length must equal N");
    Vec x = llt_.solve(rhs);
    x += llt_.solve(rhs - L_ * x);
    return x;
}

Mat laplacian_from_weights(const Mat& weights) {
    if (weights.rows() != weights.cols()) throw DimensionError("weight matrix must be square");
    const int n = static_cast<int>(weights.rows());
    Mat L = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double w = weights(i, j);
            L(i, j) = -w;
            L(i, i) += w;
        }
    }
    return L;
}

Mat pseudoinverse(const Mat& sym, double rank_tol) {
    if (sym.rows() != sym.cols()) throw DimensionError("pseudoinverse input must be square");
    if (!is_symmetric(sym, 1e-10))
        throw ValidationError("pseudoinverse input asymmetric beyond 1e-10");
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
    if (eig.info() != Eigen::Success)
        throw NumericalError("symmetric eigendecomposition did not converge");
    const Vec& lam = eig.eigenvalues();
    const double lmax = lam.cwiseAbs().maxCoeff();
    const double cutoff = rank_tol * lmax;
    Vec inv = Vec::Zero(lam.size());
    for (int k = 0; k < lam.size(); ++k)
        if (lam[k] > cutoff) inv[k] = 1.0 / lam[k];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace flowroute
