#include "flowroute/selftest.hpp"

#include <cmath>

#include "flowroute/errors.hpp"
#include "flowroute/flow.hpp"
#include "flowroute/model.hpp"
#include "flowroute/resistance.hpp"
#include "flowroute/spectral.hpp"

namespace flowroute {

Mat random_connected_sc(Rng& rng, int n, double p_edge) {
    Mat sc = Mat::Zero(n, n);
    // random spanning tree first, then extra edges
    for (int i = 1; i < n; ++i) {
        const int j = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(i)));
        const double w = rng.uniform(0.5, 2.0);
        sc(i, j) = w;
        sc(j, i) = w;
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (sc(i, j) == 0.0 && rng.uniform() < p_edge) {
                const double w = rng.uniform(0.5, 2.0);
                sc(i, j) = w;
                sc(j, i) = w;
            }
    return sc;
}

Mat random_fc(Rng& rng, int n) {
    Mat fc = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        fc(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            const double v = rng.uniform(-1.0, 1.0);
            fc(i, j) = v;
            fc(j, i) = v;
        }
    }
    return fc;
}

Mat gauss_jordan_inverse(Mat a) {
    const Eigen::Index n = a.rows();
    Mat inv = Mat::Identity(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index piv = col;
        for (Eigen::Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0) throw NumericalError("singular matrix in inverse");
        a.row(col).swap(a.row(piv));
        inv.row(col).swap(inv.row(piv));
        const double d = a(col, col);
        a.row(col) /= d;
        inv.row(col) /= d;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f != 0.0) {
                a.row(r) -= f * a.row(col);
                inv.row(r) -= f * inv.row(col);
            }
        }
    }
    return inv;
}

double flow_oracle_max_rel_dev(uint64_t seed, int instances, int n_min, int n_max) {
    Rng rng(seed, "oracle-equiv");
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        const int n =
            n_min + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n_max - n_min + 1)));
        const Mat sc = random_connected_sc(rng, n, 0.4);
        const Mat fc = random_fc(rng, n);
        const EdgeList edges = build_edge_list(sc, 0.0);
        Vec caps(edges.n_edges());
        for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);

        const RegularizedLaplacian lap(edges, caps, 1e-6);
        const DemandLaplacian dem = build_demand_laplacian(fc);
        const FlowMap closed = aggregate_flow_closed_form(lap, edges, caps, dem);
        const FlowMap oracle = aggregate_flow_oracle(lap, edges, caps, fc);
        for (int m = 0; m < edges.n_edges(); ++m) {
            const double dev = std::abs(closed.phi[m] - oracle.phi[m]) /
                               std::max(std::abs(oracle.phi[m]), 1e-12);
            worst = std::max(worst, dev);
        }
    }
    return worst;
}

double demand_identity_max_abs_dev(uint64_t seed, int matrices, int n) {
    Rng rng(seed, "demand-identity");
    double worst = 0.0;
    for (int it = 0; it < matrices; ++it) {
        const Mat fc = random_fc(rng, n);
        Mat q = Mat::Zero(n, n);
        for (int s = 0; s < n; ++s)
            for (int t = 0; t < n; ++t) {
                if (s == t) continue;
                Vec e = Vec::Zero(n);
                e[s] = 1.0;
                e[t] = -1.0;
                q += std::abs(fc(s, t)) * (e * e.transpose());
            }
        const Mat lfc = build_demand_laplacian(fc).Lfc;
        worst = std::max(worst, (q - 2.0 * lfc).cwiseAbs().maxCoeff());
    }
    return worst;
}

double adjoint_fd_max_rel_err(uint64_t seed, int graphs, int n) {
    Rng rng(seed, "adjoint-fd");
    const double h = 1e-5;
    double worst = 0.0;
    for (int it = 0; it < graphs; ++it) {
        const Mat sc = random_connected_sc(rng, n, 0.4);
        const Mat fc = random_fc(rng, n);
        const EdgeList edges = build_edge_list(sc, 0.0);
        const int m_edges = edges.n_edges();
        Vec caps(m_edges);
        for (int m = 0; m < m_edges; ++m) caps[m] = rng.uniform(0.5, 2.0);
        Vec upstream(m_edges);
        for (int m = 0; m < m_edges; ++m) upstream[m] = rng.uniform(-1.0, 1.0);
        const DemandLaplacian dem = build_demand_laplacian(fc);

        const auto objective = [&](const Vec& c, const DemandLaplacian& d) {
            const RegularizedLaplacian lap(edges, c, 1e-6);
            return upstream.dot(aggregate_flow_closed_form(lap, edges, c, d).phi);
        };

        const RegularizedLaplacian lap(edges, caps, 1e-6);
        FlowForwardState state;
        aggregate_flow_closed_form(lap, edges, caps, dem, &state);
        const FlowGradients grads = flow_gradient_adjoint(lap, state, upstream);

        for (int k = 0; k < m_edges; ++k) {
            Vec cp = caps, cm = caps;
            cp[k] += h;
            cm[k] -= h;
            const double fd = (objective(cp, dem) - objective(cm, dem)) / (2.0 * h);
            const double err = std::abs(grads.d_capacities[k] - fd) /
                               std::max(std::abs(fd), 1e-6);
            worst = std::max(worst, err);
        }
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                DemandLaplacian dp{dem.Lfc}, dm{dem.Lfc};
                dp.Lfc(p, q) += h;
                dm.Lfc(p, q) -= h;
                const double fd = (objective(caps, dp) - objective(caps, dm)) / (2.0 * h);
                const double err =
                    std::abs(grads.d_demand(p, q) - fd) / std::max(std::abs(fd), 1e-6);
                worst = std::max(worst, err);
            }
    }
    return worst;
}

double erd_examples_max_err() {
    double worst = 0.0;

    Mat two = Mat::Zero(2, 2);
    two(0, 1) = two(1, 0) = 4.0;
    worst = std::max(worst, std::abs(effective_resistance(two).R(0, 1) - 0.25));

    Mat tri = Mat::Ones(3, 3);
    tri.diagonal().setZero();
    const Mat rt = effective_resistance(tri).R;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) worst = std::max(worst, std::abs(rt(i, j) - 2.0 / 3.0));

    Mat path = Mat::Zero(3, 3);
    path(0, 1) = path(1, 0) = 1.0;
    path(1, 2) = path(2, 1) = 1.0;
    const double r02 = effective_resistance(path).R(0, 2);
    worst = std::max(worst, std::abs(r02 - 2.0));
    Mat cycle = path;
    cycle(0, 2) = cycle(2, 0) = 1.0;
    const double r02_cycle = effective_resistance(cycle).R(0, 2);
    if (!(r02_cycle < r02)) worst = std::max(worst, 1.0);
    worst = std::max(worst, std::abs(r02_cycle - 2.0 / 3.0));

    return worst;
}

double erd_properties_max_violation(uint64_t seed, int graphs, int max_n) {
    Rng rng(seed, "erd-props");
    double worst = 0.0;
    for (int it = 0; it < graphs; ++it) {
        const int n =
            3 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_n - 2)));
        const Mat sc = random_connected_sc(rng, n, 0.35);
        const Mat r = effective_resistance(sc).R;

        for (int i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(r(i, i)));
            for (int j = 0; j < n; ++j) {
                worst = std::max(worst, std::abs(r(i, j) - r(j, i)));
                worst = std::max(worst, -r(i, j));  // nonnegativity
            }
        }
        // triangle inequality
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    worst = std::max(worst, r(i, k) - r(i, j) - r(j, k));

        // adding one random absent edge must not increase any resistance
        std::vector<std::pair<int, int>> absent;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (sc(i, j) == 0.0) absent.emplace_back(i, j);
        if (!absent.empty()) {
            const auto [ai, aj] =
                absent[rng.uniform_index(static_cast<uint64_t>(absent.size()))];
            Mat sc2 = sc;
            sc2(ai, aj) = sc2(aj, ai) = rng.uniform(0.5, 2.0);
            const Mat r2 = effective_resistance(sc2).R;
            worst = std::max(worst, (r2 - r).maxCoeff());
        }

    }
    return worst;
}

double erd_scaling_max_dev(uint64_t seed, int graphs, int max_n) {
    Rng rng(seed, "erd-scaling");
    double worst = 0.0;
    for (int it = 0; it < graphs; ++it) {
        const int n =
            3 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_n - 2)));
        const Mat sc = random_connected_sc(rng, n, 0.35);
        const Mat r = effective_resistance(sc).R;
        const double kf = rng.uniform(0.5, 3.0);
        const Mat rk = effective_resistance(Mat(kf * sc)).R;
        worst = std::max(worst, (rk * kf - r).cwiseAbs().maxCoeff());
    }
    return worst;
}

double solver_consistency_max_rel_err(uint64_t seed, int systems, int max_n) {
    Rng rng(seed, "solver");
    double worst = 0.0;
    for (int it = 0; it < systems; ++it) {
        const int n =
            3 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_n - 2)));
        const Mat sc = random_connected_sc(rng, n, 0.4);
        const EdgeList edges = build_edge_list(sc, 0.0);
        Vec caps(edges.n_edges());
        for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
        const RegularizedLaplacian lap(edges, caps, 1e-6);
        const Mat inv = gauss_jordan_inverse(lap.matrix());
        for (int rep = 0; rep < 3; ++rep) {
            Vec rhs(n);
            for (int i = 0; i < n; ++i) rhs[i] = rng.uniform(-1.0, 1.0);
            const Vec x1 = lap.solve(rhs);
            const Vec x2 = inv * rhs;
            worst = std::max(worst, (x1 - x2).cwiseAbs().maxCoeff() /
                                        std::max(x2.cwiseAbs().maxCoeff(), 1e-12));
        }
    }
    return worst;
}

double orientation_flip_max_dev(uint64_t seed, int instances) {
    Rng rng(seed, "orientation");
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
        const int n = 4 + static_cast<int>(rng.uniform_index(8));
        const Mat sc = random_connected_sc(rng, n, 0.4);
        const Mat fc = random_fc(rng, n);
        const EdgeList edges = build_edge_list(sc, 0.0);
        Vec caps(edges.n_edges());
        for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
        const DemandLaplacian dem = build_demand_laplacian(fc);

        EdgeList flipped = edges;
        for (auto& [i, j] : flipped.edges)
            if (rng.uniform() < 0.5) std::swap(i, j);

        const RegularizedLaplacian lap1(edges, caps, 1e-6);
        const RegularizedLaplacian lap2(flipped, caps, 1e-6);
        const Vec phi1 = aggregate_flow_closed_form(lap1, edges, caps, dem).phi;
        const Vec phi2 = aggregate_flow_closed_form(lap2, flipped, caps, dem).phi;
        worst = std::max(worst, (phi1 - phi2).cwiseAbs().maxCoeff());
    }
    return worst;
}

double mask_contract_max_err() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.d_x = 4;
    cfg.psi_hidden = 8;
    cfg.gate_hidden = 8;
    Model model(cfg);
    Rng rng(11, "init");
    model.init_params(rng);  // tau = 8, theta = 0.5

    Mat sc = Mat::Zero(4, 4);
    const double w[6] = {1.0, 2.0, 0.0, 3.0, 0.5, 4.0};
    int idx = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            sc(i, j) = sc(j, i) = w[idx++];
        }
    const EdgeList edges = build_edge_list(sc, 0.0);
    const int m_edges = edges.n_edges();

    double worst = 0.0;
    const auto sigma = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    {
        // generic phi: range, symmetry, monotonicity, max-edge value
        Vec phi(m_edges);
        for (int m = 0; m < m_edges; ++m) phi[m] = 0.25 * (m + 1);
        ad::Tape t;
        const Mat mask = t.value(model.make_mask(t, t.constant(phi), edges));
        worst = std::max(worst, (mask - mask.transpose()).cwiseAbs().maxCoeff());
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                if (i == j) continue;
                if (!(mask(i, j) > 0.0 && mask(i, j) < 1.0)) worst = std::max(worst, 1.0);
            }
        // monotone in phi over the edge set
        for (int a = 0; a < m_edges; ++a)
            for (int b = 0; b < m_edges; ++b) {
                if (phi[a] <= phi[b]) continue;
                const auto [ai, aj] = edges.edges[a];
                const auto [bi, bj] = edges.edges[b];
                worst = std::max(worst, mask(bi, bj) - mask(ai, aj));
            }
        // max edge hits sigma(tau (1 - theta)) = sigma(4)
        const auto [mi, mj] = edges.edges[m_edges - 1];
        worst = std::max(worst, std::abs(mask(mi, mj) - sigma(4.0)));
    }
    {
        // degenerate all-equal case: every edge at sigma(tau (0.5 - theta))
        Vec phi = Vec::Constant(m_edges, 3.0);
        ad::Tape t;
        const Mat mask = t.value(model.make_mask(t, t.constant(phi), edges));
        for (const auto& [i, j] : edges.edges)
            worst = std::max(worst, std::abs(mask(i, j) - 0.5));
    }
    return worst;
}

double model_gradcheck_max_rel_err(uint64_t seed, int n_params) {
    Rng rng(seed, "gradcheck-data");
    const int n = 6;
    const Mat sc = random_connected_sc(rng, n, 0.5);
    const Mat fc = random_fc(rng, n);

    ConnectomePair pair;
    pair.id = "gradcheck";
    pair.n_nodes = n;
    pair.sc = sc;
    pair.fc = fc;
    pair.features = Mat::Identity(n, n);
    pair.label = 1;

    ModelConfig cfg;
    cfg.d_x = n;
    cfg.dropout = 0.0;
    const SubjectData subj = prepare_subject(pair, cfg);

    Model model(cfg);
    Rng init_rng(seed, "init");
    model.init_params(init_rng);

    const auto loss_value = [&]() {
        ad::Tape t;
        const auto fw = model.forward(t, subj, false, nullptr);
        return t.value(model.loss(t, fw.logits, *subj.pair.label))(0, 0);
    };

    model.zero_grads();
    {
        ad::Tape t;
        const auto fw = model.forward(t, subj, false, nullptr);
        t.backward(model.loss(t, fw.logits, *subj.pair.label));
    }

    Rng pick_rng(seed, "gradcheck-pick");
    auto& params = model.params();
    double worst = 0.0;
    for (int s = 0; s < n_params; ++s) {
        auto* p = params[pick_rng.uniform_index(params.size())];
        const Eigen::Index i =
            static_cast<Eigen::Index>(pick_rng.uniform_index(p->value.rows()));
        const Eigen::Index j =
            static_cast<Eigen::Index>(pick_rng.uniform_index(p->value.cols()));
        const double orig = p->value(i, j);
        const double h = 1e-5 * (1.0 + std::abs(orig));
        p->value(i, j) = orig + h;
        const double lp = loss_value();
        p->value(i, j) = orig - h;
        const double lm = loss_value();
        p->value(i, j) = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double err = std::abs(p->grad(i, j) - fd) / std::max(std::abs(fd), 1e-6);
        worst = std::max(worst, err);
    }
    return worst;
}

std::vector<CheckResult> run_selftest(uint64_t seed) {
    std::vector<CheckResult> out;
    const auto add = [&](std::string name, double value, double threshold) {
        out.push_back({std::move(name), value, threshold, value <= threshold});
    };
    add("flow closed form vs ordered-pair oracle", flow_oracle_max_rel_dev(seed, 20, 3, 12),
        1e-8);
    add("demand Laplacian identity", demand_identity_max_abs_dev(seed, 10, 10), 1e-10);
    add("adjoint gradients vs finite differences", adjoint_fd_max_rel_err(seed, 3, 8), 1e-4);
    add("effective resistance hand examples", erd_examples_max_err(), 1e-9);
    add("effective resistance properties", erd_properties_max_violation(seed, 25, 15), 1e-9);
    add("effective resistance scaling law", erd_scaling_max_dev(seed, 10, 15), 1e-10);
    add("factored solve vs explicit inverse", solver_consistency_max_rel_err(seed, 10, 30),
        1e-8);
    add("orientation-flip invariance", orientation_flip_max_dev(seed, 10), 1e-12);
    add("routing mask contract", mask_contract_max_err(), 1e-12);
    add("whole-model gradient check", model_gradcheck_max_rel_err(seed, 10), 1e-3);
    return out;
}

}  // namespace flowroute
