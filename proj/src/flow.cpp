#include "flowroute/flow.hpp"

#include "flowroute/errors.hpp"

namespace flowroute {

DemandLaplacian build_demand_laplacian(const Mat& fc) {
    if (fc.rows() != fc.cols()) throw DimensionError("fc must be square");
    Mat w = fc.cwiseAbs();
    w.diagonal().setZero();
    return DemandLaplacian{laplacian_from_weights(w)};
}

Vec solve_potential(const RegularizedLaplacian& lap, int s, int t) {
    if (s == t) throw ValidationError("degenerate demand: source equals target");
    const int n = lap.size();
    if (s < 0 || t < 0 || s >= n || t >= n)
        throw DimensionError("source/target index out of range");
    Vec rhs = Vec::Zero(n);
    rhs[s] = 1.0;
    rhs[t] = -1.0;
    return lap.solve(rhs);
}

Vec pair_intensity(const RegularizedLaplacian& lap, const EdgeList& edges,
                   const Vec& capacities, int s, int t) {
    const Vec v = solve_potential(lap, s, t);
    const Vec diff = apply_incidence(edges, v);
    return capacities.array() * diff.array().square();
}

namespace {

Mat incidence_transpose_dense(const EdgeList& edges) {
    Mat bt = Mat::Zero(edges.n_nodes, edges.n_edges());
    for (int m = 0; m < edges.n_edges(); ++m) {
        const auto [i, j] = edges.edges[m];
        bt(i, m) = 1.0;
        bt(j, m) = -1.0;
    }
    return bt;
}

}  // namespace

FlowMap aggregate_flow_closed_form(const RegularizedLaplacian& lap, const EdgeList& edges,
                                   const Vec& capacities, const DemandLaplacian& demand,
                                   FlowForwardState* state) {
    const int m_edges = edges.n_edges();
    if (capacities.size() != m_edges)
        throw DimensionError("capacities length must equal edge count");
    if (demand.Lfc.rows() != edges.n_nodes)
        throw DimensionError("demand Laplacian size must equal n_nodes");

    const Mat G = lap.solve(incidence_transpose_dense(edges));
    const Mat Y = demand.Lfc * G;

    Vec phi(m_edges);
    for (int m = 0; m < m_edges; ++m)
        phi[m] = 2.0 * capacities[m] * G.col(m).dot(Y.col(m));
    phi = phi.cwiseMax(0.0);

    if (state) {
        state->valid = true;
        state->edges = edges;
        state->capacities = capacities;
        state->G = G;
        state->Y = Y;
        state->phi = phi;
    }
    return FlowMap{phi, capacities, std::nullopt, {}};
}

FlowMap aggregate_flow_oracle(const RegularizedLaplacian& lap, const EdgeList& edges,
                              const Vec& capacities, const Mat& fc, bool keep_per_pair) {
    const int n = edges.n_nodes;
    const int m_edges = edges.n_edges();
    if (capacities.size() != m_edges)
        throw DimensionError("capacities length must equal edge count");
    if (fc.rows() != n || fc.cols() != n)
        throw DimensionError("fc size must equal n_nodes");

    FlowMap out;
    out.capacities = capacities;
    out.phi = Vec::Zero(m_edges);
    if (keep_per_pair) out.per_pair = Mat::Zero(m_edges, n * (n - 1));

    int p = 0;
    for (int s = 0; s < n; ++s) {
        for (int t = 0; t < n; ++t) {
            if (s == t) continue;
            const Vec intensity = pair_intensity(lap, edges, capacities, s, t);
            out.phi += std::abs(fc(s, t)) * intensity;
            if (keep_per_pair) {
                out.per_pair->col(p) = intensity;
                out.pair_index.emplace_back(s, t);
            }
            ++p;
        }
    }
    return out;
}

FlowGradients flow_gradient_adjoint(const RegularizedLaplacian& lap,
                                    const FlowForwardState& state, const Vec& upstream) {
    if (!state.valid)
        throw ValidationError("flow gradient requires the cached forward state");
    const int m_edges = state.edges.n_edges();
    if (upstream.size() != m_edges)
        throw DimensionError("upstream length must equal edge count");

    // phi_m = 2 c_m g_m^T Lfc g_m with g_m = L^{-1} b_m. The capacity
    // gradient has a direct term plus the implicit term through g_m, which
    // collapses onto the adjoint block H = L^{-1} (Lfc G):
    //   d(u.phi)/dc_k = 2 u_k b_k^T h_k - 4 b_k^T [G diag(u.c) H^T] b_k.
    const Mat H = lap.solve(state.Y);

    const Vec uc = upstream.array() * state.capacities.array();
    const Mat S = state.G * uc.asDiagonal() * H.transpose();

    Vec d_cap(m_edges);
    for (int k = 0; k < m_edges; ++k) {
        const auto [i, j] = state.edges.edges[k];
        const double bh_kk = H(i, k) - H(j, k);
        const double bSb = S(i, i) + S(j, j) - S(i, j) - S(j, i);
        d_cap[k] = 2.0 * upstream[k] * bh_kk - 4.0 * bSb;
    }

    const Vec two_uc = 2.0 * uc;
    Mat d_demand = state.G * two_uc.asDiagonal() * state.G.transpose();
    return FlowGradients{std::move(d_cap), std::move(d_demand)};
}

}  // namespace flowroute
