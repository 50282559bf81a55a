#include "flowroute/graph.hpp"

#include <queue>

#include "flowroute/errors.hpp"

namespace flowroute {

bool is_symmetric(const Mat& m, double tol) {
    if (m.rows() != m.cols()) return false;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    return true;
}

void ConnectomePair::validate() const {
    if (n_nodes < 2) throw ValidationError("connectome requires n_nodes >= 2");
    if (sc.rows() != n_nodes || sc.cols() != n_nodes)
        throw DimensionError("sc must be n_nodes x n_nodes");
    if (fc.rows() != n_nodes || fc.cols() != n_nodes)
        throw DimensionError("fc must be n_nodes x n_nodes");
    if (features.rows() != n_nodes)
        throw DimensionError("features row count must equal n_nodes");
    if (!is_symmetric(sc)) throw ValidationError("sc asymmetric beyond 1e-12");
    if (!is_symmetric(fc)) throw ValidationError("fc asymmetric beyond 1e-12");
    for (int i = 0; i < n_nodes; ++i) {
        if (sc(i, i) != 0.0) throw ValidationError("sc diagonal must be zero");
        for (int j = 0; j < n_nodes; ++j) {
            if (sc(i, j) < 0.0) throw ValidationError("sc entries must be nonnegative");
            if (!std::isfinite(sc(i, j)) || !std::isfinite(fc(i, j)))
                throw ValidationError("non-finite matrix entry");
        }
    }
}

EdgeList build_edge_list(const Mat& sc, double threshold) {
    if (sc.rows() != sc.cols()) throw DimensionError("sc must be square");
    if (!is_symmetric(sc)) throw ValidationError("sc asymmetric beyond 1e-12");
    if (threshold < 0.0) throw ValidationError("threshold must be nonnegative");

    EdgeList out;
    out.n_nodes = static_cast<int>(sc.rows());
    for (int i = 0; i < out.n_nodes; ++i) {
        for (int j = i + 1; j < out.n_nodes; ++j) {
            if (sc(i, j) > threshold) {
                out.edges.emplace_back(i, j);
                out.weights.push_back(sc(i, j));
            }
        }
    }
    if (out.edges.empty()) throw ValidationError("thresholded graph has no edges");
    return out;
}

Vec apply_incidence(const EdgeList& edges, const Vec& v) {
    if (v.size() != edges.n_nodes)
        throw DimensionError("incidence input length must equal n_nodes");
    Vec out(edges.n_edges());
    for (int m = 0; m < edges.n_edges(); ++m) {
        const auto [i, j] = edges.edges[m];
        out[m] = v[i] - v[j];
    }
    return out;
}

Vec apply_incidence_transpose(const EdgeList& edges, const Vec& f) {
    if (f.size() != edges.n_edges())
        throw DimensionError("incidence-transpose input length must equal n_edges");
    Vec out = Vec::Zero(edges.n_nodes);
    for (int m = 0; m < edges.n_edges(); ++m) {
        const auto [i, j] = edges.edges[m];
        out[i] += f[m];
        out[j] -= f[m];
    }
    return out;
}

std::vector<int> node_degrees(const EdgeList& edges) {
    std::vector<int> deg(edges.n_nodes, 0);
    for (const auto& [i, j] : edges.edges) {
        ++deg[i];
        ++deg[j];
    }
    return deg;
}

bool is_connected(const EdgeList& edges) {
    if (edges.n_nodes == 0) return false;
    std::vector<std::vector<int>> adj(edges.n_nodes);
    for (const auto& [i, j] : edges.edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<char> seen(edges.n_nodes, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const int w : adj[u]) {
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                q.push(w);
            }
        }
    }
    return count == edges.n_nodes;
}

}  // namespace flowroute
