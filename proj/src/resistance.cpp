#include "flowroute/resistance.hpp"

#include "flowroute/errors.hpp"
#include "flowroute/spectral.hpp"

namespace flowroute {

ResistanceMatrix effective_resistance(const Mat& sc, bool regularize, double delta,
                                      double rank_tol) {
    const EdgeList edges = build_edge_list(sc, 0.0);
    const bool connected = is_connected(edges);
    if (!connected && !regularize)
        throw ValidationError(
            "graph is disconnected: effective resistance is infinite across components "
            "(pass the regularized option to override)");

    Mat ldag;
    ResistanceMatrix out;
    if (!connected) {
        Mat L = laplacian_from_weights(sc);
        L.diagonal().array() += delta;
        ldag = L.inverse();
        out.regularized = true;
    } else {
        ldag = pseudoinverse(laplacian_from_weights(sc), rank_tol);
    }

    const int n = static_cast<int>(sc.rows());
    out.R = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double r = ldag(i, i) + ldag(j, j) - 2.0 * ldag(i, j);
            out.R(i, j) = r;
            out.R(j, i) = r;
        }
    }
    return out;
}

}  // namespace flowroute
