#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "flowroute/graph.hpp"

namespace flowroute {

// L = B^T C B + delta I, factorized once; every subsequent solve is a pair of
// triangular substitutions against the cached factor.
class RegularizedLaplacian {
public:
    RegularizedLaplacian(const EdgeList& edges, const Vec& capacities, double delta);

    const Mat& matrix() const { return L_; }
    double delta() const { return delta_; }
    int size() const { return static_cast<int>(L_.rows()); }

    // Solves L x = rhs (vector or N x k block). One step of iterative
    // refinement keeps the residual within the contract for small delta.
    Vec solve(const Vec& rhs) const;
    Mat solve(const Mat& rhs) const;

    // Lower-triangular Cholesky factor (for tests of the reconstruction
    // invariant).
    Mat factor_matrixL() const { return llt_.matrixL(); }

private:
    Mat L_;
    double delta_;
    Eigen::LLT<Mat> llt_;
};

// Laplacian of an undirected weighted graph, D - A, from a symmetric
// nonnegative weight matrix whose diagonal is ignored.
Mat laplacian_from_weights(const Mat& weights);

// Moore-Penrose pseudoinverse of a symmetric PSD matrix via symmetric
// eigendecomposition; eigenvalues below rank_tol * lambda_max are treated as
// zero.
Mat pseudoinverse(const Mat& sym, double rank_tol = 1e-10);

}  // namespace flowroute
