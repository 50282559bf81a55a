#include <doctest.h>

#include "flowroute/errors.hpp"
#include "flowroute/flow.hpp"
#include "flowroute/rng.hpp"
#include "flowroute/selftest.hpp"

using namespace flowroute;

namespace {

EdgeList two_node_edges() {
    Mat sc = Mat::Zero(2, 2);
    sc(0, 1) = sc(1, 0) = 1.0;
    return build_edge_list(sc, 0.0);
}

EdgeList triangle_edges() {
    Mat sc = Mat::Ones(3, 3);
    sc.diagonal().setZero();
    return build_edge_list(sc, 0.0);
}

}  // namespace

TEST_CASE("two-node potential difference approaches the resistance") {
    const EdgeList e = two_node_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(1), 1e-9);
    const Vec v = solve_potential(lap, 0, 1);
    CHECK(std::abs(v[0] - v[1] - 1.0) < 1e-6);
}

TEST_CASE("swapping source and target negates the potential exactly") {
    Rng rng(51, "test-potential");
    const Mat sc = random_connected_sc(rng, 9, 0.4);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);
    const Vec v1 = solve_potential(lap, 2, 6);
    const Vec v2 = solve_potential(lap, 6, 2);
    CHECK((v1 + v2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("triangle potential difference matches the ERD value") {
    const EdgeList e = triangle_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(3), 1e-9);
    const Vec v = solve_potential(lap, 0, 1);
    CHECK(std::abs(v[0] - v[1] - 2.0 / 3.0) < 1e-6);
}

TEST_CASE("degenerate demand is rejected") {
    const EdgeList e = two_node_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(1), 1e-6);
    CHECK_THROWS_AS(solve_potential(lap, 1, 1), ValidationError);
}

TEST_CASE("two-node pair intensity") {
    const EdgeList e = two_node_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(1), 1e-9);
    const Vec i01 = pair_intensity(lap, e, Vec::Ones(1), 0, 1);
    REQUIRE(i01.size() == 1);
    CHECK(std::abs(i01[0] - 1.0) < 1e-6);

    const Vec i10 = pair_intensity(lap, e, Vec::Ones(1), 1, 0);
    CHECK(i01[0] == i10[0]);  // squaring kills the sign
}

TEST_CASE("triangle intensity concentrates on the demanded edge") {
    const EdgeList e = triangle_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(3), 1e-9);
    const Vec intensity = pair_intensity(lap, e, Vec::Ones(3), 0, 1);
    // edges: (0,1), (0,2), (1,2)
    CHECK(intensity[0] > intensity[1]);
    CHECK(intensity[0] > intensity[2]);
    CHECK(std::abs(intensity[1] - intensity[2]) < 1e-12);
}

TEST_CASE("two-node closed form with unit demand") {
    const EdgeList e = two_node_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(1), 1e-9);
    Mat fc = Mat::Zero(2, 2);
    fc(0, 1) = fc(1, 0) = 1.0;
    const FlowMap fm =
        aggregate_flow_closed_form(lap, e, Vec::Ones(1), build_demand_laplacian(fc));
    REQUIRE(fm.phi.size() == 1);
    CHECK(std::abs(fm.phi[0] - 2.0) < 1e-5);
}

TEST_CASE("zero demand gives exactly zero flow") {
    Rng rng(52, "test-zero-demand");
    const Mat sc = random_connected_sc(rng, 8, 0.4);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);
    const FlowMap fm = aggregate_flow_closed_form(
        lap, e, caps, build_demand_laplacian(Mat::Zero(8, 8)));
    CHECK(fm.phi.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oracle on the two-node example sums both ordered pairs") {
    const EdgeList e = two_node_edges();
    const RegularizedLaplacian lap(e, Vec::Ones(1), 1e-9);
    Mat fc = Mat::Zero(2, 2);
    fc(0, 1) = fc(1, 0) = 1.0;
    const FlowMap fm = aggregate_flow_oracle(lap, e, Vec::Ones(1), fc, true);
    CHECK(std::abs(fm.phi[0] - 2.0) < 1e-5);
    REQUIRE(fm.per_pair.has_value());
    CHECK(fm.per_pair->cols() == 2);
    CHECK(fm.pair_index[0] == std::pair{0, 1});
    CHECK(fm.pair_index[1] == std::pair{1, 0});
}

TEST_CASE("single symmetric demand entry doubles the pair intensity") {
    Rng rng(53, "test-single-demand");
    const Mat sc = random_connected_sc(rng, 7, 0.5);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);

    const double w = 0.8;
    Mat fc = Mat::Zero(7, 7);
    fc(1, 4) = fc(4, 1) = w;
    const FlowMap fm = aggregate_flow_oracle(lap, e, caps, fc);
    const Vec want = 2.0 * w * pair_intensity(lap, e, caps, 1, 4);
    CHECK((fm.phi - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("closed form equals the ordered-pair oracle") {
    CHECK(flow_oracle_max_rel_dev(99, 20, 3, 12) < 1e-8);
}

TEST_CASE("appendix demand identity holds entrywise") {
    CHECK(demand_identity_max_abs_dev(100, 10, 9) < 1e-10);
}

TEST_CASE("flow is invariant under orientation flips") {
    CHECK(orientation_flip_max_dev(101, 10) < 1e-12);
}

TEST_CASE("flow scales linearly with demand") {
    Rng rng(54, "test-homogeneity");
    const Mat sc = random_connected_sc(rng, 9, 0.4);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);
    const Mat fc = random_fc(rng, 9);

    const Vec phi = aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(fc)).phi;
    const Vec phi2 =
        aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(Mat(2.0 * fc))).phi;
    CHECK((phi2 - 2.0 * phi).cwiseAbs().maxCoeff() == 0.0);  // power-of-two scale

    const Vec phik =
        aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(Mat(1.7 * fc))).phi;
    CHECK((phik - 1.7 * phi).cwiseAbs().maxCoeff() <
          1e-12 * phi.cwiseAbs().maxCoeff());
}

TEST_CASE("flow is nonnegative") {
    Rng rng(55, "test-nonneg");
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 4 + static_cast<int>(rng.uniform_index(8));
        const Mat sc = random_connected_sc(rng, n, 0.4);
        const EdgeList e = build_edge_list(sc, 0.0);
        Vec caps(e.n_edges());
        for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
        const RegularizedLaplacian lap(e, caps, 1e-6);
        const Vec phi =
            aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(random_fc(rng, n)))
                .phi;
        CHECK(phi.minCoeff() >= 0.0);
    }
}

TEST_CASE("adjoint gradients match central finite differences") {
    CHECK(adjoint_fd_max_rel_err(102, 2, 10) < 1e-4);
}

TEST_CASE("zero upstream gives exactly zero gradients") {
    Rng rng(56, "test-zero-upstream");
    const Mat sc = random_connected_sc(rng, 8, 0.4);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);
    FlowForwardState state;
    aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(random_fc(rng, 8)),
                               &state);
    const FlowGradients g = flow_gradient_adjoint(lap, state, Vec::Zero(e.n_edges()));
    CHECK(g.d_capacities.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_demand.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("demand gradient is the weighted response outer product") {
    Rng rng(57, "test-demand-grad");
    const Mat sc = random_connected_sc(rng, 7, 0.5);
    const EdgeList e = build_edge_list(sc, 0.0);
    Vec caps(e.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    const RegularizedLaplacian lap(e, caps, 1e-6);
    FlowForwardState state;
    aggregate_flow_closed_form(lap, e, caps, build_demand_laplacian(random_fc(rng, 7)),
                               &state);
    Vec upstream(e.n_edges());
    for (int m = 0; m < upstream.size(); ++m) upstream[m] = rng.uniform(-1.0, 1.0);
    const FlowGradients g = flow_gradient_adjoint(lap, state, upstream);

    Mat want = Mat::Zero(7, 7);
    for (int m = 0; m < e.n_edges(); ++m)
        want += 2.0 * caps[m] * upstream[m] *
                (state.G.col(m) * state.G.col(m).transpose());
    CHECK((g.d_demand - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient call without forward state is a usage error") {
    Rng rng(58, "test-no-state");
    const Mat sc = random_connected_sc(rng, 5, 0.6);
    const EdgeList e = build_edge_list(sc, 0.0);
    const RegularizedLaplacian lap(e, Vec::Ones(e.n_edges()), 1e-6);
    const FlowForwardState state;  // never filled
    CHECK_THROWS_AS(flow_gradient_adjoint(lap, state, Vec::Zero(e.n_edges())),
                    ValidationError);
}
