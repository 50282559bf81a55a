#pragma once

#include <string>
#include <vector>

#include "flowroute/graph.hpp"
#include "flowroute/rng.hpp"

namespace flowroute {

struct CheckResult {
    std::string name;
    double value = 0.0;      // measured deviation / violation
    double threshold = 0.0;  // pass iff value <= threshold
    bool pass = false;
};

// Random instance helpers (shared with the test suites).
Mat random_connected_sc(Rng& rng, int n, double p_edge);
Mat random_fc(Rng& rng, int n);

// Test-only reference route, independent of the Cholesky path.
Mat gauss_jordan_inverse(Mat a);

// Closed form vs ordered-all-pairs brute force, max relative deviation.
double flow_oracle_max_rel_dev(uint64_t seed, int instances, int n_min, int n_max);

// Max entrywise |sum_{s,t} |fc_st| (e_s - e_t)(e_s - e_t)^T - 2 L_fc|.
double demand_identity_max_abs_dev(uint64_t seed, int matrices, int n);

// Adjoint gradients vs central finite differences over every capacity and
// every demand-Laplacian entry; relative error with a 1e-6 absolute floor.
double adjoint_fd_max_rel_err(uint64_t seed, int graphs, int n);

// Hand-derived ERD example deviations (two-node, triangle, path/series law,
// parallel-path decrease).
double erd_examples_max_err();

// Metric axioms and edge-addition monotonicity over random connected
// graphs; returns the largest violation.
double erd_properties_max_violation(uint64_t seed, int graphs, int max_n);

// Weight-scaling law R(k sc) = R(sc) / k, max absolute deviation.
double erd_scaling_max_dev(uint64_t seed, int graphs, int max_n);

// Factor-based solve vs explicit dense inverse, max relative deviation.
double solver_consistency_max_rel_err(uint64_t seed, int systems, int max_n);

// Flipping random subsets of edge orientations must leave phi unchanged.
double orientation_flip_max_dev(uint64_t seed, int instances);

// Mask contract: range/symmetry/monotonicity plus the degenerate all-equal
// value and the sigma(4) max-edge value at tau=8, theta=0.5.
double mask_contract_max_err();

// Whole-model gradient check on a 6-node subject over sampled parameters.
double model_gradcheck_max_rel_err(uint64_t seed, int n_params);

// The fast numerical suite behind `flowroute selftest`.
std::vector<CheckResult> run_selftest(uint64_t seed);

}  // namespace flowroute
