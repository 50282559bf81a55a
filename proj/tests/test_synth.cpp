#include <doctest.h>

#include <unistd.h>

#include <filesystem>

#include "flowroute/errors.hpp"
#include "flowroute/graph.hpp"
#include "flowroute/io.hpp"
#include "flowroute/stats.hpp"
#include "flowroute/synth.hpp"

using namespace flowroute;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("flowroute_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

SynthSpec small_spec() {
    SynthSpec spec;
    spec.n_nodes = 12;
    spec.n_per_class = 3;
    spec.blocks = 2;
    spec.p_in = 0.7;
    spec.p_out = 0.2;
    spec.planted_edges = {{0, 1}, {2, 5}};
    spec.rho = 1.0;
    spec.sigma = 0.05;
    spec.seed = 11;
    return spec;
}

}  // namespace

TEST_CASE("generated subjects satisfy the structural invariants") {
    const auto subjects = generate_subjects(small_spec());
    REQUIRE(subjects.size() == 6);
    int labels[2] = {0, 0};
    for (const auto& s : subjects) {
        CHECK_NOTHROW(s.validate());
        ++labels[*s.label];
        CHECK(is_connected(build_edge_list(s.sc, 0.0)));
        CHECK(s.fc.maxCoeff() <= 1.0);
        CHECK(s.fc.minCoeff() >= -1.0);
        CHECK(is_symmetric(s.fc));
    }
    CHECK(labels[0] == 3);
    CHECK(labels[1] == 3);
}

TEST_CASE("planted edges always exist in the backbone") {
    SynthSpec spec = small_spec();
    spec.p_in = 0.2;  // sparse, so forced planting matters
    spec.p_out = 0.05;
    const Mat backbone = generate_backbone(spec);
    for (const auto& [i, j] : spec.planted_edges) CHECK(backbone(i, j) > 0.0);
}

TEST_CASE("generation is deterministic down to bytes") {
    TempDir a("synth_a"), b("synth_b");
    const SynthSpec spec = small_spec();
    generate_dataset(spec, a.path);
    generate_dataset(spec, b.path);

    size_t checked = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a.path)) {
        const auto other = b.path / entry.path().filename();
        REQUIRE(std::filesystem::exists(other));
        CHECK(read_text_file(entry.path()) == read_text_file(other));
        ++checked;
    }
    CHECK(checked == 6 * 2 + 1);  // sc+fc per subject plus manifest

    // manifest loads back into valid pairs
    const auto entries = read_manifest(a.path / "manifest.json");
    REQUIRE(entries.size() == 6);
    for (const auto& e : entries) CHECK_NOTHROW(load_pair(e));
}

TEST_CASE("different seeds change the data") {
    SynthSpec s1 = small_spec();
    SynthSpec s2 = small_spec();
    s2.seed = 12;
    const auto a = generate_subjects(s1);
    const auto b = generate_subjects(s2);
    CHECK((a[0].sc - b[0].sc).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("planted demand shift is statistically detectable on FC entries") {
    SynthSpec spec;
    spec.n_nodes = 30;
    spec.n_per_class = 100;
    spec.blocks = 3;
    spec.planted_edges = {{0, 3}, {1, 7}, {12, 14}, {21, 28}};
    spec.rho = 1.0;
    spec.sigma = 0.05;
    spec.seed = 13;
    const auto subjects = generate_subjects(spec);

    const int k = static_cast<int>(spec.planted_edges.size());
    Mat ctrl(spec.n_per_class, k), pat(spec.n_per_class, k);
    int ci = 0, pi = 0;
    for (const auto& s : subjects) {
        for (int e = 0; e < k; ++e) {
            const auto [i, j] = spec.planted_edges[e];
            if (*s.label == 0)
                ctrl(ci, e) = s.fc(i, j);
            else
                pat(pi, e) = s.fc(i, j);
        }
        (*s.label == 0 ? ci : pi) += 1;
    }
    const auto tests = edge_ttest(pat, ctrl);
    std::vector<double> pvals;
    for (const auto& t : tests) {
        pvals.push_back(t.p);
        CHECK(t.direction == 1);  // patient > control
    }
    const auto reject = fdr_bh(pvals, 0.05);
    for (const char r : reject) CHECK(r == 1);
}

TEST_CASE("spec validation rejects inconsistent settings") {
    SynthSpec bad = small_spec();
    bad.rho = 0.5;
    bad.planted_edges.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    SynthSpec bad2 = small_spec();
    bad2.planted_edges = {{0, 0}};
    CHECK_THROWS_AS(bad2.validate(), ConfigError);

    SynthSpec null_spec = small_spec();
    null_spec.rho = 0.0;
    null_spec.planted_edges.clear();
    CHECK_NOTHROW(null_spec.validate());
}

TEST_CASE("spec json round trip") {
    const SynthSpec spec = small_spec();
    const SynthSpec back = synth_spec_from_json(synth_spec_to_json(spec));
    CHECK(back.n_nodes == spec.n_nodes);
    CHECK(back.planted_edges == spec.planted_edges);
    CHECK(back.rho == spec.rho);
    CHECK(back.seed == spec.seed);
    CHECK(back.p_in == spec.p_in);
}
