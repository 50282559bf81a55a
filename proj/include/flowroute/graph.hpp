#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace flowroute {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kSymmetryTol = 1e-12;

// One subject: structural weights, functional correlations, node features and
// an optional class label. Immutable after validate().
struct ConnectomePair {
    std::string id;
    int n_nodes = 0;
    Mat sc;        // N x N, symmetric, nonnegative, zero diagonal
    Mat fc;        // N x N, symmetric; diagonal ignored downstream
    Mat features;  // N x d_x
    std::optional<int> label;

    // Throws ValidationError on any violated invariant.
    void validate() const;
};

// Canonically oriented edge list: one entry per unordered pair with
// sc[i][j] > threshold, ordered lexicographically, i < j.
struct EdgeList {
    int n_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<double> weights;

    int n_edges() const { return static_cast<int>(edges.size()); }
};

EdgeList build_edge_list(const Mat& sc, double threshold = 0.0);

// Edge gradient: out[m] = v[i] - v[j] for edge m = (i, j). The incidence
// operator is applied matrix-free; dense B exists only in tests.
Vec apply_incidence(const EdgeList& edges, const Vec& v);

// Adjoint map: node accumulation of signed edge values, out = B^T f.
Vec apply_incidence_transpose(const EdgeList& edges, const Vec& f);

// Unweighted degree per node (count of incident edges).
std::vector<int> node_degrees(const EdgeList& edges);

bool is_connected(const EdgeList& edges);

// Symmetry check shared by SC/FC validation.
bool is_symmetric(const Mat& m, double tol = kSymmetryTol);

}  // namespace flowroute
