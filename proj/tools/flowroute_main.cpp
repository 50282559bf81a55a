#include <CLI11.hpp>
#include <iostream>

#include <json.hpp>

#include "flowroute/errors.hpp"
#include "flowroute/flow.hpp"
#include "flowroute/io.hpp"
#include "flowroute/model.hpp"
#include "flowroute/parallel.hpp"
#include "flowroute/selftest.hpp"
#include "flowroute/stats.hpp"
#include "flowroute/synth.hpp"
#include "flowroute/train.hpp"

using namespace flowroute;
using nlohmann::ordered_json;

namespace {

void write_echo(const std::filesystem::path& path, const ordered_json& echo) {
    write_text_file(path, echo.dump(2) + "\n");
}

std::vector<ConnectomePair> load_all_pairs(const std::filesystem::path& manifest,
                                           int threads) {
    const auto entries = read_manifest(manifest);
    if (entries.empty()) throw ConfigError("manifest lists no subjects");
    std::vector<ConnectomePair> pairs(entries.size());
    parallel_for(static_cast<int>(entries.size()), threads,
                 [&](int i) { pairs[i] = load_pair(entries[i]); });
    return pairs;
}

std::vector<SubjectData> prepare_all(std::vector<ConnectomePair> pairs,
                                     const ModelConfig& cfg, int threads) {
    std::vector<SubjectData> subjects(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), threads, [&](int i) {
        subjects[i] = prepare_subject(std::move(pairs[i]), cfg);
    });
    return subjects;
}

Vec gated_capacities(Model& model, const SubjectData& subj) {
    ad::Tape t;
    const ad::Var h = model.encode(t, subj);
    return t.value(model.gate_capacities(t, h, subj.edges)).col(0);
}

ordered_json metrics_json(const Metrics& m) {
    return ordered_json{{"acc", m.acc}, {"pre", m.pre}, {"rec", m.rec},
                        {"f1", m.f1},   {"auc", m.auc}, {"n", m.n}};
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
    std::string spec_path, out_dir;
};

void run_gen_synth(const GenSynthArgs& a) {
    const SynthSpec spec = synth_spec_from_json(read_text_file(a.spec_path));
    std::filesystem::create_directories(a.out_dir);
    generate_dataset(spec, a.out_dir);
    ordered_json echo;
    echo["command"] = "gen-synth";
    echo["spec"] = ordered_json::parse(synth_spec_to_json(spec));
    echo["out"] = a.out_dir;
    write_echo(std::filesystem::path(a.out_dir) / "config_echo.json", echo);
}

struct ResistanceArgs {
    std::string sc_path, out_path;
    bool regularize = false;
    double delta = 1e-6;
};

void run_resistance(const ResistanceArgs& a) {
    const Mat sc = read_csv_matrix(a.sc_path);
    const ResistanceMatrix r = effective_resistance(sc, a.regularize, a.delta);
    write_csv_matrix(a.out_path, r.R);
    ordered_json echo;
    echo["command"] = "resistance";
    echo["sc"] = a.sc_path;
    echo["out"] = a.out_path;
    echo["erd_regularize"] = a.regularize;
    echo["delta"] = a.delta;
    echo["regularized_output"] = r.regularized;
    write_echo(a.out_path + ".config.json", echo);
}

struct ComputeFlowArgs {
    std::string sc_path, fc_path, out_path;
    std::string capacities_path, ckpt_path;
    bool uniform = false;
    bool from_sc = false;
    bool oracle = false;
    bool normalize_sc = false;
    double delta = 1e-6;
    double threshold = 0.0;
};

void run_compute_flow(const ComputeFlowArgs& a) {
    Mat sc = read_csv_matrix(a.sc_path);
    const Mat fc = read_csv_matrix(a.fc_path);
    if (a.normalize_sc && sc.maxCoeff() > 0.0) sc /= sc.maxCoeff();
    double delta = a.delta;

    EdgeList edges = build_edge_list(sc, a.threshold);
    Vec caps;
    std::string cap_source;
    if (!a.ckpt_path.empty()) {
        auto model = load_checkpoint(a.ckpt_path);
        ConnectomePair pair;
        pair.id = "cli";
        pair.n_nodes = static_cast<int>(sc.rows());
        pair.sc = sc;
        pair.fc = fc;
        pair.features = Mat::Identity(sc.rows(), sc.cols());
        const SubjectData subj = prepare_subject(pair, model->config());
        edges = subj.edges;
        caps = gated_capacities(*model, subj);
        delta = model->config().delta;
        cap_source = "gated";
    } else if (!a.capacities_path.empty()) {
        const Mat c = read_csv_matrix(a.capacities_path);
        if (c.cols() != 1 || c.rows() != edges.n_edges())
            throw DimensionError("capacities CSV must hold one value per edge");
        caps = c.col(0);
        cap_source = "file";
    } else if (a.uniform) {
        caps = Vec::Ones(edges.n_edges());
        cap_source = "uniform";
    } else {
        caps = Eigen::Map<const Vec>(edges.weights.data(), edges.n_edges());
        cap_source = "sc";
    }

    const RegularizedLaplacian lap(edges, caps, delta);
    const DemandLaplacian demand = build_demand_laplacian(fc);
    const FlowMap fm = aggregate_flow_closed_form(lap, edges, caps, demand);

    std::string csv;
    for (int m = 0; m < edges.n_edges(); ++m) {
        csv += std::to_string(edges.edges[m].first) + ',' +
               std::to_string(edges.edges[m].second) + ',' +
               format_double(caps[m]) + ',' + format_double(fm.phi[m]) + '\n';
    }
    write_text_file(a.out_path, csv);

    ordered_json echo;
    echo["command"] = "compute-flow";
    echo["sc"] = a.sc_path;
    echo["fc"] = a.fc_path;
    echo["out"] = a.out_path;
    echo["capacities"] = cap_source;
    if (!a.capacities_path.empty()) echo["capacities_file"] = a.capacities_path;
    if (!a.ckpt_path.empty()) echo["ckpt"] = a.ckpt_path;
    echo["delta"] = delta;
    echo["threshold"] = a.threshold;
    echo["normalize_sc"] = a.normalize_sc;
    echo["oracle"] = a.oracle;
    write_echo(a.out_path + ".config.json", echo);

    if (a.oracle) {
        const FlowMap ofm = aggregate_flow_oracle(lap, edges, caps, fc);
        double worst = 0.0;
        for (int m = 0; m < edges.n_edges(); ++m)
            worst = std::max(worst, std::abs(fm.phi[m] - ofm.phi[m]) /
                                        std::max(std::abs(ofm.phi[m]), 1e-12));
        ordered_json report;
        report["max_rel_dev"] = worst;
        std::cout << report.dump() << "\n";
    }
}

struct TrainArgs {
    std::string manifest, config_path, out_dir;
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
};

void run_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config_path.empty())
        cfg = train_config_from_json(read_text_file(a.config_path));
    if (a.seed_given || a.config_path.empty()) cfg.seed = a.seed;

    const int threads = resolve_threads(a.threads);
    auto pairs = load_all_pairs(a.manifest, threads);

    if (cfg.model.d_x == 0) cfg.model.d_x = static_cast<int>(pairs[0].features.cols());
    int max_label = 1;
    for (const auto& p : pairs) {
        if (!p.label) throw ConfigError("train: subject lacks a label: " + p.id);
        max_label = std::max(max_label, *p.label);
    }
    cfg.model.classes = std::max(cfg.model.classes, max_label + 1);

    const auto subjects = prepare_all(std::move(pairs), cfg.model, threads);

    Model model(cfg.model);
    Rng init_rng(cfg.seed, "init");
    model.init_params(init_rng);
    const TrainResult res = train_model(model, subjects, cfg);

    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path out(a.out_dir);
    save_checkpoint(out / "checkpoint.bin", model);

    std::string hist = "epoch,train_loss,val_acc,val_pre,val_rec,val_f1,val_auc\n";
    for (const auto& r : res.history) {
        hist += std::to_string(r.epoch) + ',' + format_double(r.train_loss);
        if (r.has_val) {
            hist += ',' + format_double(r.val.acc) + ',' + format_double(r.val.pre) +
                    ',' + format_double(r.val.rec) + ',' + format_double(r.val.f1) +
                    ',' + format_double(r.val.auc);
        } else {
            hist += ",,,,,";
        }
        hist += '\n';
    }
    write_text_file(out / "history.csv", hist);

    ordered_json split;
    const auto ids = [&](const std::vector<int>& idx) {
        ordered_json arr = ordered_json::array();
        for (const int i : idx) arr.push_back(subjects[i].pair.id);
        return arr;
    };
    split["train"] = ids(res.split.train);
    split["val"] = ids(res.split.val);
    split["test"] = ids(res.split.test);
    write_echo(out / "split.json", split);

    ordered_json summary;
    summary["best_epoch"] = res.best_epoch;
    summary["test"] = res.has_test ? metrics_json(res.test) : ordered_json(nullptr);
    write_echo(out / "metrics.json", summary);

    ordered_json echo;
    echo["command"] = "train";
    echo["manifest"] = a.manifest;
    echo["out"] = a.out_dir;
    echo["config"] = ordered_json::parse(train_config_to_json(cfg));
    write_echo(out / "config_echo.json", echo);
}

struct EvalArgs {
    std::string ckpt, manifest;
    int threads = 0;
};

void run_eval(const EvalArgs& a) {
    auto model = load_checkpoint(a.ckpt);
    const int threads = resolve_threads(a.threads);
    const auto subjects =
        prepare_all(load_all_pairs(a.manifest, threads), model->config(), threads);

    std::vector<int> labels(subjects.size());
    std::vector<Vec> logits(subjects.size());
    parallel_for(static_cast<int>(subjects.size()), threads, [&](int i) {
        if (!subjects[i].pair.label)
            throw ConfigError("eval: subject lacks a label: " + subjects[i].pair.id);
        labels[i] = *subjects[i].pair.label;
        logits[i] = model->logits_eval(subjects[i]);
    });
    const Metrics m = compute_metrics(labels, logits);

    ordered_json report = metrics_json(m);
    report["config"] = {
        {"command", "eval"},
        {"ckpt", a.ckpt},
        {"manifest", a.manifest},
        {"model", ordered_json::parse(model_config_to_json(model->config()))}};
    std::cout << report.dump(2) << "\n";
}

struct AnalyzeArgs {
    std::string manifest, ckpt, out_dir;
    bool from_sc = false;
    bool log_flow = false;
    bool use_by = false;
    double q = 0.05;
    int topk = 100;
    double delta = 1e-6;
    double threshold = 0.0;
    int threads = 0;
};

void run_analyze(const AnalyzeArgs& a) {
    if (a.ckpt.empty() && !a.from_sc)
        throw ConfigError("analyze-groups needs --ckpt or --from-sc capacities");
    const int threads = resolve_threads(a.threads);
    auto pairs = load_all_pairs(a.manifest, threads);

    std::unique_ptr<Model> model;
    ModelConfig cfg;
    if (!a.ckpt.empty()) {
        model = load_checkpoint(a.ckpt);
        cfg = model->config();
    } else {
        cfg.d_x = static_cast<int>(pairs[0].features.cols());
        cfg.delta = a.delta;
        cfg.edge_threshold = a.threshold;
    }
    const auto subjects = prepare_all(std::move(pairs), cfg, threads);

    const EdgeList& edges = subjects[0].edges;
    for (const auto& s : subjects)
        if (s.edges.edges != edges.edges)
            throw ValidationError(
                "analyze-groups requires an identical edge topology across subjects");

    const int n_subj = static_cast<int>(subjects.size());
    Mat phi_all(n_subj, edges.n_edges());
    parallel_for(n_subj, threads, [&](int i) {
        Vec caps;
        if (model) {
            caps = gated_capacities(*model, subjects[i]);
        } else {
            caps = Eigen::Map<const Vec>(subjects[i].edges.weights.data(),
                                         subjects[i].edges.n_edges());
        }
        const RegularizedLaplacian lap(subjects[i].edges, caps, cfg.delta);
        phi_all.row(i) =
            aggregate_flow_closed_form(lap, subjects[i].edges, caps, subjects[i].demand)
                .phi;
    });

    std::vector<int> pat_rows, ctrl_rows;
    for (int i = 0; i < n_subj; ++i) {
        if (!subjects[i].pair.label)
            throw ConfigError("analyze-groups: subject lacks a label: " +
                              subjects[i].pair.id);
        (*subjects[i].pair.label == 1 ? pat_rows : ctrl_rows).push_back(i);
    }
    Mat pat(pat_rows.size(), edges.n_edges()), ctrl(ctrl_rows.size(), edges.n_edges());
    for (size_t r = 0; r < pat_rows.size(); ++r) pat.row(r) = phi_all.row(pat_rows[r]);
    for (size_t r = 0; r < ctrl_rows.size(); ++r)
        ctrl.row(r) = phi_all.row(ctrl_rows[r]);

    if (a.log_flow) {
        pat = (pat.array() + 1e-6).log().matrix();
        ctrl = (ctrl.array() + 1e-6).log().matrix();
    }
    const auto tests = edge_ttest(pat, ctrl);
    std::vector<double> pvals(tests.size());
    for (size_t m = 0; m < tests.size(); ++m) pvals[m] = tests[m].p;
    const auto reject = a.use_by ? fdr_by(pvals, a.q) : fdr_bh(pvals, a.q);

    const Vec mean_phi = phi_all.colwise().mean();
    bool clamped = false;
    const auto ranking = topk_edges(mean_phi, edges.edges, a.topk, &clamped);
    if (clamped)
        std::cerr << "warning: top-k clamped to the " << edges.n_edges()
                  << " available edges\n";

    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path out(a.out_dir);

    std::string topk_csv = "i,j,mean_phi\n";
    for (const int m : ranking)
        topk_csv += std::to_string(edges.edges[m].first) + ',' +
                    std::to_string(edges.edges[m].second) + ',' +
                    format_double(mean_phi[m]) + '\n';
    write_text_file(out / "topk.csv", topk_csv);

    std::string sig_csv = "i,j,t,p,reject,direction\n";
    int n_sig = 0;
    for (int m = 0; m < edges.n_edges(); ++m) {
        n_sig += reject[m] ? 1 : 0;
        sig_csv += std::to_string(edges.edges[m].first) + ',' +
                   std::to_string(edges.edges[m].second) + ',' +
                   format_double(tests[m].t) + ',' + format_double(tests[m].p) + ',' +
                   std::to_string(static_cast<int>(reject[m])) + ',' +
                   std::to_string(tests[m].direction) + '\n';
    }
    write_text_file(out / "sig_edges.csv", sig_csv);

    ordered_json summary;
    summary["n_subjects"] = n_subj;
    summary["n_patients"] = pat_rows.size();
    summary["n_controls"] = ctrl_rows.size();
    summary["n_edges"] = edges.n_edges();
    summary["q"] = a.q;
    summary["method"] = a.use_by ? "by" : "bh";
    summary["log_flow"] = a.log_flow;
    summary["capacities"] = model ? "gated" : "sc";
    summary["n_significant"] = n_sig;
    summary["topk"] = static_cast<int>(ranking.size());
    write_echo(out / "summary.json", summary);

    ordered_json echo;
    echo["command"] = "analyze-groups";
    echo["manifest"] = a.manifest;
    if (!a.ckpt.empty()) echo["ckpt"] = a.ckpt;
    echo["from_sc"] = a.from_sc;
    echo["log_flow"] = a.log_flow;
    echo["method"] = a.use_by ? "by" : "bh";
    echo["q"] = a.q;
    echo["topk"] = a.topk;
    echo["delta"] = cfg.delta;
    echo["threshold"] = cfg.edge_threshold;
    echo["out"] = a.out_dir;
    write_echo(out / "config_echo.json", echo);
}

int run_selftest_cmd(uint64_t seed) {
    const auto results = run_selftest(seed);
    bool all_pass = true;
    std::printf("%-45s %12s %12s  %s\n", "check", "value", "threshold", "status");
    for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        std::printf("%-45s %12.3e %12.3e  %s\n", r.name.c_str(), r.value, r.threshold,
                    r.pass ? "PASS" : "FAIL");
    }
    return all_pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowroute: information-flow routing on paired brain graphs"};
    app.require_subcommand(1);

    GenSynthArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-synth", "generate a synthetic dataset");
    gen_cmd->add_option("--spec", gen.spec_path, "synth spec JSON")->required();
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();

    ResistanceArgs res;
    auto* res_cmd =
        app.add_subcommand("resistance", "effective resistance distance matrix");
    res_cmd->add_option("--sc", res.sc_path, "SC matrix CSV")->required();
    res_cmd->add_option("--out", res.out_path, "output CSV")->required();
    res_cmd->add_flag("--erd-regularize", res.regularize,
                      "fall back to (L + delta I)^-1 on disconnected graphs");
    res_cmd->add_option("--delta", res.delta, "regularizer for the fallback");

    ComputeFlowArgs cf;
    auto* cf_cmd = app.add_subcommand("compute-flow", "aggregated information flow");
    cf_cmd->add_option("--sc", cf.sc_path, "SC matrix CSV")->required();
    cf_cmd->add_option("--fc", cf.fc_path, "FC matrix CSV")->required();
    cf_cmd->add_option("--out", cf.out_path, "output CSV (i,j,c,phi rows)")->required();
    cf_cmd->add_option("--capacities", cf.capacities_path, "edge capacities CSV");
    cf_cmd->add_flag("--uniform", cf.uniform, "unit capacities");
    cf_cmd->add_flag("--from-sc", cf.from_sc, "SC weights as capacities (default)");
    cf_cmd->add_option("--ckpt", cf.ckpt_path, "checkpoint for gated capacities");
    cf_cmd->add_option("--delta", cf.delta, "Laplacian regularizer");
    cf_cmd->add_option("--threshold", cf.threshold, "edge threshold on SC");
    cf_cmd->add_flag("--normalize-sc", cf.normalize_sc,
                     "divide SC by its maximum before use");
    cf_cmd->add_flag("--oracle", cf.oracle,
                     "also run the brute-force oracle and report the deviation");

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "train the classifier");
    tr_cmd->add_option("--manifest", tr.manifest, "dataset manifest JSON")->required();
    tr_cmd->add_option("--config", tr.config_path, "train config JSON");
    auto* seed_opt = tr_cmd->add_option("--seed", tr.seed, "training seed");
    tr_cmd->add_option("--out", tr.out_dir, "output directory")->required();
    tr_cmd->add_option("--threads", tr.threads, "worker threads (0 = auto)");

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    ev_cmd->add_option("--ckpt", ev.ckpt, "checkpoint path")->required();
    ev_cmd->add_option("--manifest", ev.manifest, "dataset manifest JSON")->required();
    ev_cmd->add_option("--threads", ev.threads, "worker threads (0 = auto)");

    AnalyzeArgs an;
    auto* an_cmd = app.add_subcommand("analyze-groups", "group-difference statistics");
    an_cmd->add_option("--manifest", an.manifest, "dataset manifest JSON")->required();
    an_cmd->add_option("--ckpt", an.ckpt, "checkpoint for gated capacities");
    an_cmd->add_flag("--from-sc", an.from_sc, "use SC weights as capacities");
    an_cmd->add_flag("--log-flow", an.log_flow, "t-test on log flow");
    an_cmd->add_flag("--by", an.use_by, "Benjamini-Yekutieli instead of BH");
    an_cmd->add_option("--q", an.q, "FDR level");
    an_cmd->add_option("--topk", an.topk, "top-k edges by mean flow");
    an_cmd->add_option("--delta", an.delta, "Laplacian regularizer (with --from-sc)");
    an_cmd->add_option("--threshold", an.threshold, "edge threshold (with --from-sc)");
    an_cmd->add_option("--out", an.out_dir, "output directory")->required();
    an_cmd->add_option("--threads", an.threads, "worker threads (0 = auto)");

    uint64_t selftest_seed = 0;
    auto* st_cmd =
        app.add_subcommand("selftest", "oracle-equivalence and gradient checks");
    st_cmd->add_option("--seed", selftest_seed, "selftest seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        ordered_json err;
        err["error"] = "usage";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 2;
    }

    try {
        if (gen_cmd->parsed()) run_gen_synth(gen);
        if (res_cmd->parsed()) run_resistance(res);
        if (cf_cmd->parsed()) run_compute_flow(cf);
        if (tr_cmd->parsed()) {
            tr.seed_given = seed_opt->count() > 0;
            run_train(tr);
        }
        if (ev_cmd->parsed()) run_eval(ev);
        if (an_cmd->parsed()) run_analyze(an);
        if (st_cmd->parsed()) return run_selftest_cmd(selftest_seed);
    } catch (const IoError& e) {
        ordered_json err;
        err["error"] = "io";
        err["path"] = e.path();
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        ordered_json err;
        err["error"] = "config";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        ordered_json err;
        err["error"] = "validation";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        ordered_json err;
        err["error"] = "numerical";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 4;
    } catch (const std::exception& e) {
        ordered_json err;
        err["error"] = "internal";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
