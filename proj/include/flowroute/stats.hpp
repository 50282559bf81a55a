#pragma once

#include <vector>

#include "flowroute/graph.hpp"

namespace flowroute {

// Per-edge Welch two-sample statistics. `degenerate` marks the zero-variance
// unequal-means case (p pinned to 0).
struct EdgeTest {
    double t = 0.0;
    double p = 1.0;
    int direction = 0;  // sign(mean_a - mean_b)
    bool degenerate = false;
};

struct GroupStats {
    std::vector<EdgeTest> tests;
    std::vector<char> reject;  // after FDR at level q
    double q = 0.05;
};

// flows_a, flows_b: subjects x M matrices of per-edge values. Requires at
// least two subjects per group. Welch (unequal-variance) two-sided test with
// Welch-Satterthwaite degrees of freedom.
std::vector<EdgeTest> edge_ttest(const Mat& flows_a, const Mat& flows_b);

// Benjamini-Hochberg step-up at level q; returns the rejection mask.
std::vector<char> fdr_bh(const std::vector<double>& p, double q);

// Benjamini-Yekutieli variant for dependence robustness.
std::vector<char> fdr_by(const std::vector<double>& p, double q);

// Stable descending ranking by mean flow, ties broken lexicographically by
// (i, j). k is clamped to M; `clamped` reports whether that happened.
std::vector<int> topk_edges(const Vec& mean_phi,
                            const std::vector<std::pair<int, int>>& edges, int k,
                            bool* clamped = nullptr);

}  // namespace flowroute
