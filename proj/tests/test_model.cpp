#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "flowroute/errors.hpp"
#include "flowroute/io.hpp"
#include "flowroute/model.hpp"
#include "flowroute/selftest.hpp"

using namespace flowroute;

namespace {

ConnectomePair random_pair(uint64_t seed, int n) {
    Rng rng(seed, "test-pair");
    ConnectomePair p;
    p.id = "subj";
    p.n_nodes = n;
    p.sc = random_connected_sc(rng, n, 0.5);
    p.fc = random_fc(rng, n);
    p.features = Mat::Identity(n, n);
    p.label = 1;
    return p;
}

ConnectomePair permute_pair(const ConnectomePair& p, const std::vector<int>& perm) {
    const int n = p.n_nodes;
    ConnectomePair q = p;
    q.sc = Mat::Zero(n, n);
    q.fc = Mat::Zero(n, n);
    q.features = Mat::Zero(n, p.features.cols());
    for (int i = 0; i < n; ++i) {
        q.features.row(perm[i]) = p.features.row(i);
        for (int j = 0; j < n; ++j) {
            q.sc(perm[i], perm[j]) = p.sc(i, j);
            q.fc(perm[i], perm[j]) = p.fc(i, j);
        }
    }
    return q;
}

Model make_model(int d_x, uint64_t seed, int d = 16, int layers = 2) {
    ModelConfig cfg;
    cfg.d = d;
    cfg.layers = layers;
    cfg.d_x = d_x;
    cfg.psi_hidden = 16;
    cfg.gate_hidden = 16;
    cfg.dropout = 0.0;
    Model model(cfg);
    Rng rng(seed, "init");
    model.init_params(rng);
    return model;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("flowroute_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("encode is permutation equivariant") {
    const ConnectomePair pair = random_pair(301, 7);
    ModelConfig cfg;
    cfg.d = 16;
    cfg.d_x = 7;
    cfg.psi_hidden = 16;
    cfg.gate_hidden = 16;
    cfg.dropout = 0.0;
    Model model(cfg);
    Rng rng(302, "init");
    model.init_params(rng);

    const std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
    const SubjectData s1 = prepare_subject(pair, cfg);
    const SubjectData s2 = prepare_subject(permute_pair(pair, perm), cfg);

    ad::Tape t1, t2;
    const Mat h1 = t1.value(model.encode(t1, s1));
    const Mat h2 = t2.value(model.encode(t2, s2));
    double worst = 0.0;
    for (int i = 0; i < 7; ++i)
        worst = std::max(worst, (h2.row(perm[i]) - h1.row(i)).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-9);
}

TEST_CASE("encode reacts to resistance changes") {
    const ConnectomePair pair = random_pair(303, 6);
    ModelConfig cfg;
    cfg.d = 16;
    cfg.d_x = 6;
    cfg.psi_hidden = 16;
    cfg.dropout = 0.0;
    Model model(cfg);
    Rng rng(304, "init");
    model.init_params(rng);

    SubjectData s = prepare_subject(pair, cfg);
    ad::Tape t1;
    const Mat h1 = t1.value(model.encode(t1, s));
    s.resistance *= 3.0;
    ad::Tape t2;
    const Mat h2 = t2.value(model.encode(t2, s));
    CHECK((h1 - h2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("encoder flags non-finite activations with the layer index") {
    const ConnectomePair pair = random_pair(305, 5);
    ModelConfig cfg;
    cfg.d = 8;
    cfg.d_x = 5;
    cfg.psi_hidden = 8;
    cfg.dropout = 0.0;
    Model model(cfg);
    Rng rng(306, "init");
    model.init_params(rng);
    model.tensor("enc.in_proj.W").value.setConstant(1e308);

    const SubjectData s = prepare_subject(pair, cfg);
    ad::Tape t;
    CHECK_THROWS_AS(model.encode(t, s), NumericalError);
}

TEST_CASE("zero-weight gate yields a constant capacity of exp(bias)") {
    const ConnectomePair pair = random_pair(307, 6);
    Model model = make_model(6, 308);
    model.tensor("gate.W1").value.setZero();
    model.tensor("gate.b1").value.setZero();
    model.tensor("gate.W2").value.setZero();
    model.tensor("gate.b2").value.setConstant(0.7);

    const SubjectData s = prepare_subject(pair, model.config());
    ad::Tape t;
    const ad::Var h = model.encode(t, s);
    const Mat caps = t.value(model.gate_capacities(t, h, s.edges));
    for (int m = 0; m < caps.rows(); ++m)
        CHECK(caps(m, 0) == doctest::Approx(std::exp(0.7)).epsilon(1e-14));
}

TEST_CASE("gate capacities are strictly positive") {
    Rng rng(309, "test-gate-pos");
    Model model = make_model(6, 310);
    for (int rep = 0; rep < 20; ++rep) {
        const ConnectomePair pair = random_pair(400 + rep, 6);
        const SubjectData s = prepare_subject(pair, model.config());
        ad::Tape t;
        Mat h(6, 16);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 16; ++j) h(i, j) = rng.uniform(-50.0, 50.0);
        const Mat caps = t.value(model.gate_capacities(t, t.constant(h), s.edges));
        CHECK(caps.minCoeff() > 0.0);
    }
}

TEST_CASE("gate is symmetric under endpoint order") {
    const ConnectomePair pair = random_pair(311, 6);
    Model model = make_model(6, 312);
    const SubjectData s = prepare_subject(pair, model.config());

    EdgeList flipped = s.edges;
    for (auto& [i, j] : flipped.edges) std::swap(i, j);

    ad::Tape t;
    const ad::Var h = model.encode(t, s);
    const Mat c1 = t.value(model.gate_capacities(t, h, s.edges));
    const Mat c2 = t.value(model.gate_capacities(t, h, flipped));
    CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mask contract: range, symmetry, monotonicity, fixed points") {
    CHECK(mask_contract_max_err() < 1e-12);
}

TEST_CASE("uniform additive mask bias leaves logits unchanged") {
    const ConnectomePair pair = random_pair(313, 6);
    Model model = make_model(6, 314);
    const SubjectData s = prepare_subject(pair, model.config());

    ad::Tape t;
    const ad::Var h = model.encode(t, s);
    const Mat logits_flat = t.value(model.aggregate_and_classify(
        t, h, t.constant(Mat::Constant(6, 6, 0.37))));
    const Mat logits_zero =
        t.value(model.aggregate_and_classify(t, h, t.constant(Mat::Zero(6, 6))));
    CHECK((logits_flat - logits_zero).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zeroed head reduces logits to the output biases") {
    const ConnectomePair pair = random_pair(315, 6);
    Model model = make_model(6, 316);
    model.tensor("head.W1").value.setZero();
    model.tensor("head.b1").value.setZero();
    model.tensor("head.W2").value.setZero();
    model.tensor("head.b2").value << 0.3, -0.2;

    const SubjectData s = prepare_subject(pair, model.config());
    const Vec logits = model.logits_eval(s);
    CHECK(logits[0] == 0.3);
    CHECK(logits[1] == -0.2);
}

TEST_CASE("full-model logits are permutation invariant") {
    const ConnectomePair pair = random_pair(317, 7);
    Model model = make_model(7, 318);
    const std::vector<int> perm = {5, 2, 0, 6, 3, 1, 4};

    const SubjectData s1 = prepare_subject(pair, model.config());
    const SubjectData s2 = prepare_subject(permute_pair(pair, perm), model.config());
    const Vec l1 = model.logits_eval(s1);
    const Vec l2 = model.logits_eval(s2);
    CHECK((l1 - l2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("multiplicative mask mode produces finite distinct logits") {
    const ConnectomePair pair = random_pair(319, 6);
    ModelConfig cfg;
    cfg.d = 16;
    cfg.d_x = 6;
    cfg.psi_hidden = 16;
    cfg.gate_hidden = 16;
    cfg.dropout = 0.0;
    cfg.multiplicative_mask = true;
    Model model(cfg);
    Rng rng(320, "init");
    model.init_params(rng);
    const SubjectData s = prepare_subject(pair, cfg);
    const Vec logits = model.logits_eval(s);
    CHECK(logits.allFinite());
}

TEST_CASE("whole-model gradients match finite differences") {
    CHECK(model_gradcheck_max_rel_err(321, 12) < 1e-3);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TempDir tmp("ckpt");
    const ConnectomePair pair = random_pair(322, 6);
    Model model = make_model(6, 323);
    const SubjectData s = prepare_subject(pair, model.config());
    const Vec logits_before = model.logits_eval(s);

    const auto path = tmp.path / "model.ckpt";
    save_checkpoint(path, model);
    const auto loaded = load_checkpoint(path);

    for (auto* p : model.params()) {
        const auto& q = loaded->tensor(p->name);
        REQUIRE(q.value.rows() == p->value.rows());
        REQUIRE(q.value.cols() == p->value.cols());
        CHECK((q.value - p->value).cwiseAbs().maxCoeff() == 0.0);
    }

    const Vec logits_after = loaded->logits_eval(s);
    CHECK((logits_before - logits_after).cwiseAbs().maxCoeff() == 0.0);

    const auto path2 = tmp.path / "model2.ckpt";
    save_checkpoint(path2, *loaded);
    CHECK(read_text_file(path) == read_text_file(path2));
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    TempDir tmp("ckpt-bad");
    const auto path = tmp.path / "bad.ckpt";
    write_text_file(path, "NOTACKPT");
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
