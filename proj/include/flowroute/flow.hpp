#pragma once

#include <optional>

#include "flowroute/graph.hpp"
#include "flowroute/spectral.hpp"

namespace flowroute {

// Demand Laplacian L_fc = D_fc - |A_fc|, built from the FC matrix with its
// diagonal zeroed first (self-demand is excluded).
struct DemandLaplacian {
    Mat Lfc;
};

DemandLaplacian build_demand_laplacian(const Mat& fc);

// Aggregated information flow per edge plus the capacities it was computed
// with. per_pair carries the microscopic intensities I^(st) in oracle mode.
struct FlowMap {
    Vec phi;
    Vec capacities;
    std::optional<Mat> per_pair;                       // M x P
    std::vector<std::pair<int, int>> pair_index;       // ordered (s, t), oracle mode
};

// Cached forward state consumed by the adjoint backward pass: the edge
// response block G = L^{-1} B^T and Y = L_fc G.
struct FlowForwardState {
    bool valid = false;
    EdgeList edges;
    Vec capacities;
    Mat G;
    Mat Y;
    Vec phi;
};

struct FlowGradients {
    Vec d_capacities;  // d(upstream . phi) / dc
    Mat d_demand;      // d(upstream . phi) / dLfc, entrywise
};

// Node potentials for a unit source/target demand: L v = e_s - e_t.
Vec solve_potential(const RegularizedLaplacian& lap, int s, int t);

// Per-pair intensity I[m] = c_m (v[i] - v[j])^2.
Vec pair_intensity(const RegularizedLaplacian& lap, const EdgeList& edges,
                   const Vec& capacities, int s, int t);

// Closed form Phi[m] = 2 c_m g_m^T L_fc g_m with one N x M block solve.
// L_flow^{-1} L_fc L_flow^{-1} is never materialized.
FlowMap aggregate_flow_closed_form(const RegularizedLaplacian& lap, const EdgeList& edges,
                                   const Vec& capacities, const DemandLaplacian& demand,
                                   FlowForwardState* state = nullptr);

// Ground-truth brute force: explicit double loop over all ordered pairs
// (s, t), s != t, accumulating |fc[s][t]| * I^(st). Intended for small N.
FlowMap aggregate_flow_oracle(const RegularizedLaplacian& lap, const EdgeList& edges,
                              const Vec& capacities, const Mat& fc,
                              bool keep_per_pair = false);

// Adjoint backward pass reusing the cached factor; never differentiates
// through the factorization itself.
FlowGradients flow_gradient_adjoint(const RegularizedLaplacian& lap,
                                    const FlowForwardState& state, const Vec& upstream);

}  // namespace flowroute
