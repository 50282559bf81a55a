#pragma once

#include "flowroute/graph.hpp"

namespace flowroute {

// Effective resistance distance with SC weights as conductances:
// R[i][j] = (e_i - e_j)^T Ldag (e_i - e_j). Hard error on disconnected input
// unless `regularize` is set, in which case (L + delta I)^{-1} stands in for
// the pseudoinverse and the result is tagged.
struct ResistanceMatrix {
    Mat R;
    bool regularized = false;
};

ResistanceMatrix effective_resistance(const Mat& sc, bool regularize = false,
                                      double delta = 1e-6, double rank_tol = 1e-10);

}  // namespace flowroute
