// Acceptance suite: every criterion prints one PASS/FAIL line; the binary
// exits nonzero if any criterion fails.

#include <unistd.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowroute/flow.hpp"
#include "flowroute/io.hpp"
#include "flowroute/model.hpp"
#include "flowroute/selftest.hpp"
#include "flowroute/stats.hpp"
#include "flowroute/synth.hpp"
#include "flowroute/train.hpp"

using namespace flowroute;
using nlohmann::json;

namespace {

constexpr uint64_t kSeed = 2024;

// End-to-end training setup for the planted dataset. The shipped train
// defaults target datasets with thousands of subjects; 120 training subjects
// at batch 64 give only two optimizer updates per epoch, so this harness
// raises epochs and lr to restore a comparable update budget.
constexpr int kTrainEpochs = 135;
constexpr double kTrainLr = 2e-3;

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s  (%s)\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

SynthSpec accept_spec(double rho) {
    SynthSpec spec;
    spec.n_nodes = 30;
    spec.n_per_class = 100;
    spec.blocks = 3;
    spec.p_in = 0.7;
    spec.p_out = 0.2;
    spec.rho = rho;
    spec.sigma = 0.05;
    spec.seed = 77;
    if (rho > 0)
        spec.planted_edges = {{3, 0},  {3, 1},  {3, 5},  {3, 7},  {3, 9},
                              {3, 12}, {3, 15}, {3, 21}, {3, 24}, {3, 27}};
    return spec;
}

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    RunResult r;
    const std::string cmd = FLOWROUTE_BIN + (" " + args) + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf;
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    r.exit_code = WEXITSTATUS(pclose(pipe));
    return r;
}

bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
    return std::filesystem::exists(a) && std::filesystem::exists(b) &&
           read_text_file(a) == read_text_file(b);
}

// ---------------------------------------------------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const double dev = flow_oracle_max_rel_dev(kSeed, 50, 3, 15);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "closed-form flow equals the ordered-pair oracle",
           dev < 1e-8 && secs < 10.0,
           "max rel dev " + fmt(dev) + ", " + fmt(secs) + " s");
}

void criterion_2() {
    const double dev = demand_identity_max_abs_dev(kSeed, 20, 12);
    report(2, "demand outer-product identity equals twice the demand Laplacian",
           dev < 1e-10, "max abs dev " + fmt(dev));
}

void criterion_3() {
    const double flow_err = adjoint_fd_max_rel_err(kSeed, 3, 10);
    const double model_err = model_gradcheck_max_rel_err(kSeed, 20);
    report(3, "adjoint and whole-model gradients match finite differences",
           flow_err < 1e-4 && model_err < 1e-3,
           "flow " + fmt(flow_err) + " (tol 1e-4), model " + fmt(model_err) +
               " (tol 1e-3)");
}

void criterion_4() {
    const double ex = erd_examples_max_err();
    const double props = erd_properties_max_violation(kSeed, 100, 20);
    const double scaling = erd_scaling_max_dev(kSeed, 30, 20);
    report(4, "effective resistance examples, metric axioms, monotonicity, scaling",
           ex < 1e-9 && props < 1e-9 && scaling < 1e-10,
           "examples " + fmt(ex) + ", properties " + fmt(props) + ", scaling " +
               fmt(scaling));
}

void criterion_5() {
    const double rel = solver_consistency_max_rel_err(kSeed, 20, 50);

    // factor-once amortization at N = 200
    Rng rng(kSeed, "speedup");
    const Mat sc = random_connected_sc(rng, 200, 0.1);
    const EdgeList edges = build_edge_list(sc, 0.0);
    Vec caps(edges.n_edges());
    for (int m = 0; m < caps.size(); ++m) caps[m] = rng.uniform(0.5, 2.0);
    Mat rhs(200, 1);
    for (int i = 0; i < 200; ++i) rhs(i, 0) = rng.uniform(-1.0, 1.0);

    const int solves = 60;
    const RegularizedLaplacian cached(edges, caps, 1e-6);
    volatile double sink = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 1; k < solves; ++k) sink += cached.solve(Vec(rhs.col(0)))[0];
    const auto t1 = std::chrono::steady_clock::now();
    for (int k = 1; k < solves; ++k) {
        const RegularizedLaplacian fresh(edges, caps, 1e-6);
        sink += fresh.solve(Vec(rhs.col(0)))[0];
    }
    const auto t2 = std::chrono::steady_clock::now();
    const double cached_s = std::chrono::duration<double>(t1 - t0).count();
    const double refactor_s = std::chrono::duration<double>(t2 - t1).count();
    const double speedup = refactor_s / std::max(cached_s, 1e-12);

    report(5, "factored solve matches the dense inverse and amortizes the factor",
           rel < 1e-8 && speedup >= 5.0,
           "max rel " + fmt(rel) + ", speedup " + fmt(speedup) + "x");
}

void criterion_6() {
    const double flip = orientation_flip_max_dev(kSeed, 20);

    // logits invariance under node relabeling
    Rng rng(kSeed, "perm-accept");
    const int n = 12;
    ConnectomePair pair;
    pair.id = "accept";
    pair.n_nodes = n;
    pair.sc = random_connected_sc(rng, n, 0.4);
    pair.fc = random_fc(rng, n);
    pair.features = Mat::Identity(n, n);
    pair.label = 0;

    ModelConfig mc;
    mc.d_x = n;
    mc.dropout = 0.0;
    Model model(mc);
    Rng init_rng(kSeed, "init");
    model.init_params(init_rng);

    const Vec base = model.logits_eval(prepare_subject(pair, mc));
    double worst = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        ConnectomePair q = pair;
        q.sc = Mat::Zero(n, n);
        q.fc = Mat::Zero(n, n);
        q.features = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            q.features.row(perm[i]) = pair.features.row(i);
            for (int j = 0; j < n; ++j) {
                q.sc(perm[i], perm[j]) = pair.sc(i, j);
                q.fc(perm[i], perm[j]) = pair.fc(i, j);
            }
        }
        const Vec lg = model.logits_eval(prepare_subject(q, mc));
        worst = std::max(worst, (lg - base).cwiseAbs().maxCoeff());
    }
    report(6, "orientation-flip and node-relabeling invariance",
           flip <= 1e-12 && worst <= 1e-8,
           "phi dev " + fmt(flip) + " (tol 1e-12), logit dev " + fmt(worst) +
               " (tol 1e-8)");
}

void criterion_7() {
    const double dev = mask_contract_max_err();
    report(7, "routing mask contract (range, symmetry, monotonicity, fixed points)",
           dev <= 1e-12, "max dev " + fmt(dev));
}

struct EndToEnd {
    double mean_acc = 0.0;
    double mean_auc = 0.0;
    double null_auc = 0.0;
    double planted_secs = 0.0;
    std::unique_ptr<Model> seed0_model;
    std::vector<SubjectData> planted_subjects;
};

EndToEnd criterion_8() {
    EndToEnd result;

    const SynthSpec spec = accept_spec(1.0);
    ModelConfig mc;
    mc.d_x = spec.n_nodes;
    for (auto& p : generate_subjects(spec))
        result.planted_subjects.push_back(prepare_subject(std::move(p), mc));

    const auto t0 = std::chrono::steady_clock::now();
    for (const uint64_t seed : {0ull, 1ull, 2ull}) {
        TrainConfig tc;
        tc.model = mc;
        tc.seed = seed;
        tc.epochs = kTrainEpochs;
        tc.lr = kTrainLr;
        auto model = std::make_unique<Model>(mc);
        Rng init_rng(seed, "init");
        model->init_params(init_rng);
        const TrainResult res = train_model(*model, result.planted_subjects, tc);
        std::printf("       planted seed %llu: best epoch %d, test acc %.3f auc %.3f\n",
                    static_cast<unsigned long long>(seed), res.best_epoch, res.test.acc,
                    res.test.auc);
        std::fflush(stdout);
        result.mean_acc += res.test.acc / 3.0;
        result.mean_auc += res.test.auc / 3.0;
        if (seed == 0) result.seed0_model = std::move(model);
    }
    result.planted_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // null dataset: no planted effect, expect chance-level AUC
    const SynthSpec null_spec = accept_spec(0.0);
    std::vector<SubjectData> null_subjects;
    for (auto& p : generate_subjects(null_spec))
        null_subjects.push_back(prepare_subject(std::move(p), mc));
    TrainConfig tc;
    tc.model = mc;
    tc.seed = 0;
    tc.epochs = kTrainEpochs;
    tc.lr = kTrainLr;
    Model null_model(mc);
    Rng init_rng(0, "init");
    null_model.init_params(init_rng);
    const TrainResult null_res = train_model(null_model, null_subjects, tc);
    result.null_auc = null_res.test.auc;

    const bool pass = result.mean_acc >= 0.90 && result.mean_auc >= 0.95 &&
                      result.planted_secs < 600.0 && result.null_auc >= 0.4 &&
                      result.null_auc <= 0.6;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "mean acc %.3f (>=0.90), mean auc %.3f (>=0.95), %.0f s (<600), "
                  "null auc %.3f (in [0.4,0.6])",
                  result.mean_acc, result.mean_auc, result.planted_secs,
                  result.null_auc);
    report(8, "end-to-end synthetic training", pass, detail);
    return result;
}

void criterion_9(const EndToEnd& e2e) {
    // BH hand example must pass exactly
    const auto bh = fdr_bh({0.01, 0.02, 0.03, 0.04, 0.2}, 0.05);
    const bool bh_exact = bh == std::vector<char>{1, 1, 1, 1, 0};

    if (!e2e.seed0_model) {
        report(9, "interpretability recovery of planted edges", false,
               "no trained model available");
        return;
    }

    const SynthSpec spec = accept_spec(1.0);
    const auto& subjects = e2e.planted_subjects;
    const EdgeList& edges = subjects[0].edges;

    Mat phi_all(subjects.size(), edges.n_edges());
    for (size_t i = 0; i < subjects.size(); ++i) {
        ad::Tape t;
        const ad::Var h = e2e.seed0_model->encode(t, subjects[i]);
        const Vec caps =
            t.value(e2e.seed0_model->gate_capacities(t, h, subjects[i].edges)).col(0);
        const RegularizedLaplacian lap(subjects[i].edges, caps,
                                       e2e.seed0_model->config().delta);
        phi_all.row(i) = aggregate_flow_closed_form(lap, subjects[i].edges, caps,
                                                    subjects[i].demand)
                             .phi;
    }

    std::vector<int> pat_rows, ctrl_rows;
    for (size_t i = 0; i < subjects.size(); ++i)
        (*subjects[i].pair.label == 1 ? pat_rows : ctrl_rows).push_back(i);
    Mat pat(pat_rows.size(), edges.n_edges()), ctrl(ctrl_rows.size(), edges.n_edges());
    for (size_t r = 0; r < pat_rows.size(); ++r) pat.row(r) = phi_all.row(pat_rows[r]);
    for (size_t r = 0; r < ctrl_rows.size(); ++r)
        ctrl.row(r) = phi_all.row(ctrl_rows[r]);

    const auto tests = edge_ttest(pat, ctrl);
    std::vector<double> pvals(tests.size());
    for (size_t m = 0; m < tests.size(); ++m) pvals[m] = tests[m].p;
    const auto reject = fdr_bh(pvals, 0.05);

    const auto edge_index = [&](int a, int b) {
        for (int m = 0; m < edges.n_edges(); ++m) {
            const auto [i, j] = edges.edges[m];
            if ((i == a && j == b) || (i == b && j == a)) return m;
        }
        return -1;
    };

    int found_sig = 0;
    for (const auto& [a, b] : spec.planted_edges) {
        const int m = edge_index(a, b);
        if (m >= 0 && reject[m] && tests[m].direction == 1) ++found_sig;
    }

    const Vec mean_phi = phi_all.colwise().mean();
    const auto top100 = topk_edges(mean_phi, edges.edges, 100);
    int found_top = 0;
    for (const auto& [a, b] : spec.planted_edges) {
        const int m = edge_index(a, b);
        for (const int r : top100)
            if (r == m) {
                ++found_top;
                break;
            }
    }

    const int n_planted = static_cast<int>(spec.planted_edges.size());
    const bool pass = bh_exact && found_sig >= (8 * n_planted + 9) / 10 &&
                      found_top * 2 >= n_planted;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "%d/%d planted FDR-significant patient>control (>=80%%), %d/%d in "
                  "top-100 (>=50%%), BH hand example %s",
                  found_sig, n_planted, found_top, n_planted,
                  bh_exact ? "exact" : "WRONG");
    report(9, "interpretability recovery of planted edges", pass, detail);
}

void criterion_10() {
    const auto root = std::filesystem::temp_directory_path() /
                      ("flowroute_accept_" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);

    const std::string spec = R"({
        "n_nodes": 10, "n_per_class": 4,
        "sc_model": {"blocks": 2, "p_in": 0.8, "p_out": 0.3},
        "planted_edges": [[0,1],[2,5]],
        "rho": 1.5, "sigma": 0.03, "seed": 5})";
    write_text_file(root / "spec.json", spec);
    const std::string tc = R"({
        "epochs": 3, "lr": 0.001, "batch_size": 8, "split": [0.6, 0.1, 0.3],
        "model": {"d": 8, "layers": 1, "psi_hidden": 8, "gate_hidden": 8,
                  "dropout": 0.2}})";
    write_text_file(root / "tc.json", tc);

    bool ok = true;
    std::string detail;

    for (const std::string run : {"a", "b"}) {
        const auto dir = root / run;
        std::filesystem::create_directories(dir);
        ok = ok &&
             run_cli("gen-synth --spec " + (root / "spec.json").string() + " --out " +
                     (dir / "data").string())
                     .exit_code == 0;
        ok = ok && run_cli("resistance --sc " + (dir / "data" / "sc_pat_0.csv").string() +
                           " --out " + (dir / "r.csv").string())
                           .exit_code == 0;
        ok = ok && run_cli("compute-flow --sc " + (dir / "data" / "sc_pat_0.csv").string() +
                           " --fc " + (dir / "data" / "fc_pat_0.csv").string() +
                           " --uniform --out " + (dir / "flow.csv").string())
                           .exit_code == 0;
        ok = ok && run_cli("train --manifest " + (dir / "data" / "manifest.json").string() +
                           " --config " + (root / "tc.json").string() +
                           " --seed 3 --out " + (dir / "run").string())
                           .exit_code == 0;
        ok = ok && run_cli("analyze-groups --manifest " +
                           (dir / "data" / "manifest.json").string() + " --ckpt " +
                           (dir / "run" / "checkpoint.bin").string() +
                           " --q 0.1 --topk 5 --out " + (dir / "report").string())
                           .exit_code == 0;
    }
    if (!ok) detail = "a command failed; ";

    // byte-identical outputs across the two runs
    int compared = 0;
    for (const auto& rel :
         {"data/manifest.json", "data/sc_ctrl_0.csv", "data/fc_ctrl_0.csv",
          "data/sc_pat_3.csv", "data/fc_pat_3.csv", "r.csv", "flow.csv",
          "run/checkpoint.bin", "run/history.csv", "run/metrics.json",
          "report/topk.csv", "report/sig_edges.csv", "report/summary.json"}) {
        if (!same_file_bytes(root / "a" / rel, root / "b" / rel)) {
            ok = false;
            detail += std::string("mismatch: ") + rel + "; ";
        } else {
            ++compared;
        }
    }

    // eval output is identical across repeats
    const std::string eval_args = "eval --ckpt " + (root / "a" / "run" / "checkpoint.bin").string() +
                                  " --manifest " + (root / "a" / "data" / "manifest.json").string();
    const RunResult e1 = run_cli(eval_args);
    const RunResult e2 = run_cli(eval_args);
    if (e1.exit_code != 0 || e1.out != e2.out) {
        ok = false;
        detail += "eval output differs; ";
    }

    // checkpoint round trip is bit-exact
    const auto ck = root / "a" / "run" / "checkpoint.bin";
    const auto ck2 = root / "roundtrip.bin";
    save_checkpoint(ck2, *load_checkpoint(ck));
    if (!same_file_bytes(ck, ck2)) {
        ok = false;
        detail += "checkpoint round trip not bit-exact; ";
    }

    if (ok)
        detail = std::to_string(compared) + " files byte-identical across reruns, "
                 "checkpoint round trip bit-exact";
    report(10, "determinism and checkpoint round trip", ok, detail);
    std::filesystem::remove_all(root);
}

}  // namespace

int main() {
    std::printf("flowroute acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    const EndToEnd e2e = criterion_8();
    criterion_9(e2e);
    criterion_10();
    std::printf("%d/%d criteria passed\n", 10 - g_failures, 10);
    return g_failures == 0 ? 0 : 1;
}
