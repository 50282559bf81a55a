#include "flowroute/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "flowroute/errors.hpp"

namespace flowroute {

std::vector<EdgeTest> edge_ttest(const Mat& flows_a, const Mat& flows_b) {
    if (flows_a.cols() != flows_b.cols())
        throw DimensionError("edge count mismatch between groups");
    const Eigen::Index na = flows_a.rows(), nb = flows_b.rows();
    if (na < 2 || nb < 2)
        throw ValidationError("edge_ttest requires at least two subjects per group");

    std::vector<EdgeTest> out(flows_a.cols());
    for (Eigen::Index m = 0; m < flows_a.cols(); ++m) {
        const double ma = flows_a.col(m).mean();
        const double mb = flows_b.col(m).mean();
        const double va =
            (flows_a.col(m).array() - ma).square().sum() / static_cast<double>(na - 1);
        const double vb =
            (flows_b.col(m).array() - mb).square().sum() / static_cast<double>(nb - 1);

        EdgeTest& e = out[m];
        const double diff = ma - mb;
        e.direction = diff > 0 ? 1 : (diff < 0 ? -1 : 0);

        if (va == 0.0 && vb == 0.0) {
            if (diff == 0.0) {
                e.t = 0.0;
                e.p = 1.0;
            } else {
                e.t = diff > 0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
                e.p = 0.0;
                e.degenerate = true;
            }
            continue;
        }

        const double sa = va / static_cast<double>(na);
        const double sb = vb / static_cast<double>(nb);
        const double se2 = sa + sb;
        e.t = diff / std::sqrt(se2);
        const double df =
            se2 * se2 /
            (sa * sa / static_cast<double>(na - 1) + sb * sb / static_cast<double>(nb - 1));
        const boost::math::students_t dist(df);
        e.p = 2.0 * boost::math::cdf(dist, -std::abs(e.t));
    }
    return out;
}

namespace {

std::vector<char> fdr_step_up(const std::vector<double>& p, double q, double scale) {
    for (const double pi : p)
        if (!(pi >= 0.0 && pi <= 1.0))
            throw ValidationError("p-values must lie in [0,1]");
    const size_t m = p.size();
    std::vector<char> reject(m, 0);
    if (m == 0) return reject;

    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return p[a] < p[b]; });

    size_t cut = 0;  // number of rejected ranks
    for (size_t i = 0; i < m; ++i) {
        const double thresh =
            static_cast<double>(i + 1) * q / (static_cast<double>(m) * scale);
        if (p[order[i]] <= thresh) cut = i + 1;
    }
    for (size_t i = 0; i < cut; ++i) reject[order[i]] = 1;
    return reject;
}

}  // namespace

std::vector<char> fdr_bh(const std::vector<double>& p, double q) {
    return fdr_step_up(p, q, 1.0);
}

std::vector<char> fdr_by(const std::vector<double>& p, double q) {
    double harmonic = 0.0;
    for (size_t i = 1; i <= p.size(); ++i) harmonic += 1.0 / static_cast<double>(i);
    return fdr_step_up(p, q, std::max(harmonic, 1.0));
}

std::vector<int> topk_edges(const Vec& mean_phi,
                            const std::vector<std::pair<int, int>>& edges, int k,
                            bool* clamped) {
    if (mean_phi.size() != static_cast<Eigen::Index>(edges.size()))
        throw DimensionError("mean_phi length must equal edge count");
    const int m = static_cast<int>(edges.size());
    if (clamped) *clamped = k > m;
    k = std::min(k, m);

    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (mean_phi[a] != mean_phi[b]) return mean_phi[a] > mean_phi[b];
        return edges[a] < edges[b];
    });
    order.resize(k);
    return order;
}

}  // namespace flowroute
