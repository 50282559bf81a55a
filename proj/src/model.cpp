#include "flowroute/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "flowroute/errors.hpp"
#include "flowroute/io.hpp"

namespace flowroute {

using nlohmann::ordered_json;

SubjectData prepare_subject(ConnectomePair pair, const ModelConfig& cfg) {
    pair.validate();
    if (cfg.normalize_sc) {
        const double mx = pair.sc.maxCoeff();
        if (mx > 0.0) pair.sc /= mx;
    }

    SubjectData subj;
    subj.edges = build_edge_list(pair.sc, cfg.edge_threshold);
    subj.resistance = effective_resistance(pair.sc, cfg.erd_regularize, cfg.delta,
                                           cfg.erd_rank_tol)
                          .R;
    subj.demand = build_demand_laplacian(pair.fc);

    const auto deg = node_degrees(subj.edges);
    subj.degree_bucket.resize(deg.size());
    for (size_t i = 0; i < deg.size(); ++i)
        subj.degree_bucket[i] = std::min(deg[i], cfg.degree_buckets - 1);

    subj.pair = std::move(pair);
    return subj;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.d_x <= 0) throw ConfigError("model d_x must be set before construction");
    if (cfg_.classes < 2) throw ConfigError("model requires at least two classes");
    const int d = cfg_.d;

    add_param("enc.in_proj.W", cfg_.d_x, d);
    add_param("enc.in_proj.b", 1, d);
    add_param("enc.deg_embed", cfg_.degree_buckets, d);
    add_param("enc.psi.W1", 1, cfg_.psi_hidden);
    add_param("enc.psi.b1", 1, cfg_.psi_hidden);
    add_param("enc.psi.W2", cfg_.psi_hidden, 1);
    add_param("enc.psi.b2", 1, 1);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        add_param(p + "Wq", d, d);
        add_param(p + "Wk", d, d);
        add_param(p + "Wv", d, d);
        add_param(p + "ln1.g", 1, d);
        add_param(p + "ln1.b", 1, d);
        add_param(p + "ffn.W1", d, cfg_.ffn_mult * d);
        add_param(p + "ffn.b1", 1, cfg_.ffn_mult * d);
        add_param(p + "ffn.W2", cfg_.ffn_mult * d, d);
        add_param(p + "ffn.b2", 1, d);
        add_param(p + "ln2.g", 1, d);
        add_param(p + "ln2.b", 1, d);
    }
    add_param("gate.W1", 2 * d, cfg_.gate_hidden);
    add_param("gate.b1", 1, cfg_.gate_hidden);
    add_param("gate.W2", cfg_.gate_hidden, 1);
    add_param("gate.b2", 1, 1);
    add_param("mask.tau", 1, 1);
    add_param("mask.theta", 1, 1);
    add_param("agg.Wq", d, d);
    add_param("agg.Wk", d, d);
    add_param("agg.Wv", d, d);
    add_param("head.W1", d, d);
    add_param("head.b1", 1, d);
    add_param("head.W2", d, cfg_.classes);
    add_param("head.b2", 1, cfg_.classes);
}

ad::ParamTensor& Model::add_param(const std::string& name, int rows, int cols) {
    auto p = std::make_unique<ad::ParamTensor>();
    p->name = name;
    p->value = Mat::Zero(rows, cols);
    p->grad = Mat::Zero(rows, cols);
    ad::ParamTensor* raw = p.get();
    store_.push_back(std::move(p));
    order_.push_back(raw);
    by_name_[name] = raw;
    return *raw;
}

ad::ParamTensor& Model::tensor(const std::string& name) {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter tensor: " + name);
    return *it->second;
}

const ad::ParamTensor& Model::tensor(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter tensor: " + name);
    return *it->second;
}

void Model::zero_grads() {
    for (auto* p : order_) p->zero_grad();
}

void Model::init_params(Rng& rng) {
    for (auto* p : order_) {
        const std::string& n = p->name;
        const bool is_norm_gain = n.ends_with("ln1.g") || n.ends_with("ln2.g");
        const bool is_bias = n.ends_with(".b") || n.ends_with(".b1") ||
                             n.ends_with(".b2") || n.ends_with("ln1.b") ||
                             n.ends_with("ln2.b");
        if (n == "mask.tau") {
            p->value(0, 0) = cfg_.tau_init;
        } else if (n == "mask.theta") {
            p->value(0, 0) = cfg_.theta_init;
        } else if (is_norm_gain) {
            p->value.setOnes();
        } else if (is_bias) {
            p->value.setZero();
        } else if (n == "enc.deg_embed") {
            for (Eigen::Index i = 0; i < p->value.rows(); ++i)
                for (Eigen::Index j = 0; j < p->value.cols(); ++j)
                    p->value(i, j) = 0.02 * rng.gaussian();
        } else {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(p->value.rows() + p->value.cols()));
            for (Eigen::Index i = 0; i < p->value.rows(); ++i)
                for (Eigen::Index j = 0; j < p->value.cols(); ++j)
                    p->value(i, j) = rng.uniform(-limit, limit);
        }
        p->zero_grad();
    }
}

ad::Var Model::encode(ad::Tape& t, const SubjectData& subj, bool training,
                      Rng* dropout_rng) {
    const int n = subj.pair.n_nodes;
    if (subj.pair.features.cols() != cfg_.d_x)
        throw DimensionError("subject feature width does not match model d_x");
    const double rate = training ? cfg_.dropout : 0.0;
    if (rate > 0.0 && dropout_rng == nullptr)
        throw ConfigError("training-mode encode requires a dropout rng");

    ad::Var X = t.constant(subj.pair.features);
    ad::Var h = t.add(t.matmul(X, t.param(tensor("enc.in_proj.W"))),
                      t.param(tensor("enc.in_proj.b")));
    ad::Var deg = t.gather_rows(t.param(tensor("enc.deg_embed")), subj.degree_bucket);
    ad::Var H = t.add(h, deg);

    // shared resistance-bias encoder, evaluated once per forward
    Mat rflat(n * n, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rflat(i * n + j, 0) = subj.resistance(i, j);
    ad::Var rcol = t.constant(std::move(rflat));
    ad::Var p1 = t.gelu(t.add(t.matmul(rcol, t.param(tensor("enc.psi.W1"))),
                              t.param(tensor("enc.psi.b1"))));
    ad::Var pvec = t.add(t.matmul(p1, t.param(tensor("enc.psi.W2"))),
                         t.param(tensor("enc.psi.b2")));
    ad::Var psi = t.reshape_rowmajor(pvec, n, n);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        ad::Var q = t.matmul(H, t.param(tensor(p + "Wq")));
        ad::Var k = t.matmul(H, t.param(tensor(p + "Wk")));
        ad::Var scores =
            t.add(t.scale_const(t.matmul(q, t.transpose(k)), inv_sqrt_d), psi);
        ad::Var attn = t.rowsoftmax(scores);
        ad::Var ctx = t.matmul(t.matmul(attn, H), t.param(tensor(p + "Wv")));
        if (rate > 0.0) ctx = t.dropout(ctx, rate, *dropout_rng);
        ad::Var z = t.layernorm(t.add(H, ctx), t.param(tensor(p + "ln1.g")),
                                t.param(tensor(p + "ln1.b")));
        ad::Var f1 = t.gelu(t.add(t.matmul(z, t.param(tensor(p + "ffn.W1"))),
                                  t.param(tensor(p + "ffn.b1"))));
        if (rate > 0.0) f1 = t.dropout(f1, rate, *dropout_rng);
        ad::Var f = t.add(t.matmul(f1, t.param(tensor(p + "ffn.W2"))),
                          t.param(tensor(p + "ffn.b2")));
        H = t.layernorm(t.add(z, f), t.param(tensor(p + "ln2.g")),
                        t.param(tensor(p + "ln2.b")));
        if (!t.value(H).allFinite())
            throw NumericalError("non-finite activations in encoder layer " +
                                 std::to_string(l));
    }
    return H;
}

ad::Var Model::gate_capacities(ad::Tape& t, ad::Var H, const EdgeList& edges) {
    std::vector<int> ei(edges.n_edges()), ej(edges.n_edges());
    for (int m = 0; m < edges.n_edges(); ++m) {
        ei[m] = edges.edges[m].first;
        ej[m] = edges.edges[m].second;
    }
    ad::Var hi = t.gather_rows(H, ei);
    ad::Var hj = t.gather_rows(H, ej);

    auto mlp = [&](ad::Var x) {
        ad::Var a = t.silu(t.add(t.matmul(x, t.param(tensor("gate.W1"))),
                                 t.param(tensor("gate.b1"))));
        return t.add(t.matmul(a, t.param(tensor("gate.W2"))),
                     t.param(tensor("gate.b2")));
    };
    // capacity must be orientation-free: average both endpoint orderings
    ad::Var pre = t.scale_const(
        t.add(mlp(t.concat_cols(hi, hj)), mlp(t.concat_cols(hj, hi))), 0.5);
    return t.exp(t.clamp(pre, -30.0, 30.0));
}

ad::Var Model::make_mask(ad::Tape& t, ad::Var phi, const EdgeList& edges) {
    ad::Var u = t.log(t.add_const(phi, 1e-6));
    ad::Var mn = t.reduce_min(u);
    ad::Var mx = t.reduce_max(u);
    const double range = t.value(mx)(0, 0) - t.value(mn)(0, 0);

    ad::Var norm = range == 0.0
                       ? t.constant(Mat::Constant(edges.n_edges(), 1, 0.5))
                       : t.div(t.sub(u, mn), t.sub(mx, mn));

    ad::Var tau = t.param(tensor("mask.tau"));
    ad::Var theta = t.param(tensor("mask.theta"));
    ad::Var edge_mask = t.sigmoid(t.mul(t.sub(norm, theta), tau));
    // non-edges sit at Norm = 0
    ad::Var nonedge = t.sigmoid(t.mul(t.sub(t.scalar(0.0), theta), tau));
    return t.scatter_symmetric(edge_mask, nonedge, edges);
}

ad::Var Model::aggregate_and_classify(ad::Tape& t, ad::Var H, ad::Var mask) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    ad::Var q = t.matmul(H, t.param(tensor("agg.Wq")));
    ad::Var k = t.matmul(H, t.param(tensor("agg.Wk")));
    ad::Var scores = t.scale_const(t.matmul(q, t.transpose(k)), inv_sqrt_d);

    ad::Var attn{-1};
    if (cfg_.multiplicative_mask) {
        ad::Var p0 = t.rowsoftmax(scores);
        ad::Var pw = t.mul(p0, mask);
        attn = t.div_rows(pw, t.rowsum(pw));
    } else {
        attn = t.rowsoftmax(t.add(scores, mask));
    }
    ad::Var zp = t.matmul(t.matmul(attn, H), t.param(tensor("agg.Wv")));
    ad::Var pooled = t.mean_rows(zp);

    ad::Var h1 = t.relu(t.add(t.matmul(pooled, t.param(tensor("head.W1"))),
                              t.param(tensor("head.b1"))));
    ad::Var logits = t.add(t.matmul(h1, t.param(tensor("head.W2"))),
                           t.param(tensor("head.b2")));
    if (!t.value(logits).allFinite())
        throw NumericalError("non-finite logits in aggregation head");
    return logits;
}

Model::Forward Model::forward(ad::Tape& t, const SubjectData& subj, bool training,
                              Rng* dropout_rng) {
    Forward fw;
    fw.H = encode(t, subj, training, dropout_rng);
    fw.capacities = gate_capacities(t, fw.H, subj.edges);
    fw.phi = t.flow(fw.capacities, subj.edges, subj.demand, cfg_.delta);
    fw.mask = make_mask(t, fw.phi, subj.edges);
    fw.logits = aggregate_and_classify(t, fw.H, fw.mask);
    return fw;
}

ad::Var Model::loss(ad::Tape& t, ad::Var logits, int label) {
    if (label < 0 || label >= cfg_.classes)
        throw ValidationError("label out of range for configured class count");
    return t.scale_const(t.pick(t.logsoftmax(logits), 0, label), -1.0);
}

Vec Model::logits_eval(const SubjectData& subj) {
    ad::Tape t;
    const Forward fw = forward(t, subj, false, nullptr);
    return t.value(fw.logits).row(0);
}

// ---------------------------------------------------------------------------
// Checkpoint archive
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[] = "FLOWCKPT1";
constexpr size_t kMagicLen = 9;
}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
    ordered_json j;
    j["d"] = c.d;
    j["layers"] = c.layers;
    j["d_x"] = c.d_x;
    j["classes"] = c.classes;
    j["psi_hidden"] = c.psi_hidden;
    j["gate_hidden"] = c.gate_hidden;
    j["ffn_mult"] = c.ffn_mult;
    j["degree_buckets"] = c.degree_buckets;
    j["delta"] = c.delta;
    j["dropout"] = c.dropout;
    j["tau_init"] = c.tau_init;
    j["theta_init"] = c.theta_init;
    j["edge_threshold"] = c.edge_threshold;
    j["erd_rank_tol"] = c.erd_rank_tol;
    j["multiplicative_mask"] = c.multiplicative_mask;
    j["normalize_sc"] = c.normalize_sc;
    j["erd_regularize"] = c.erd_regularize;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    const auto j = ordered_json::parse(text);
    ModelConfig c;
    c.d = j.value("d", c.d);
    c.layers = j.value("layers", c.layers);
    c.d_x = j.value("d_x", c.d_x);
    c.classes = j.value("classes", c.classes);
    c.psi_hidden = j.value("psi_hidden", c.psi_hidden);
    c.gate_hidden = j.value("gate_hidden", c.gate_hidden);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.degree_buckets = j.value("degree_buckets", c.degree_buckets);
    c.delta = j.value("delta", c.delta);
    c.dropout = j.value("dropout", c.dropout);
    c.tau_init = j.value("tau_init", c.tau_init);
    c.theta_init = j.value("theta_init", c.theta_init);
    c.edge_threshold = j.value("edge_threshold", c.edge_threshold);
    c.erd_rank_tol = j.value("erd_rank_tol", c.erd_rank_tol);
    c.multiplicative_mask = j.value("multiplicative_mask", c.multiplicative_mask);
    c.normalize_sc = j.value("normalize_sc", c.normalize_sc);
    c.erd_regularize = j.value("erd_regularize", c.erd_regularize);
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    const Model& m = model;
    ordered_json index;
    index["version"] = 1;
    index["config"] = ordered_json::parse(model_config_to_json(m.config()));

    std::string blob;
    ordered_json tensors = ordered_json::array();
    for (const auto* p : const_cast<Model&>(m).params()) {
        ordered_json t;
        t["name"] = p->name;
        t["shape"] = {p->value.rows(), p->value.cols()};
        t["offset"] = blob.size();
        tensors.push_back(std::move(t));
        // row-major little-endian doubles
        for (Eigen::Index i = 0; i < p->value.rows(); ++i)
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                const double v = p->value(i, j);
                char bytes[8];
                std::memcpy(bytes, &v, 8);
                blob.append(bytes, 8);
            }
    }
    index["tensors"] = std::move(tensors);
    const std::string index_text = index.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing", path.string());
    out.write(kMagic, kMagicLen);
    const uint64_t len = index_text.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    out.write(lenb, 8);
    out.write(index_text.data(), static_cast<std::streamsize>(index_text.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("checkpoint write failed", path.string());
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint", path.string());
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw IoError("not a checkpoint file (bad magic)", path.string());
    char lenb[8];
    in.read(lenb, 8);
    if (!in) throw IoError("truncated checkpoint header", path.string());
    uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
        len |= static_cast<uint64_t>(static_cast<unsigned char>(lenb[i])) << (8 * i);
    std::string index_text(len, '\0');
    in.read(index_text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint index", path.string());

    ordered_json index;
    try {
        index = ordered_json::parse(index_text);
    } catch (const std::exception& e) {
        throw IoError(std::string("checkpoint index parse error: ") + e.what(),
                      path.string());
    }
    auto model =
        std::make_unique<Model>(model_config_from_json(index["config"].dump()));

    std::string blob((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    for (const auto& t : index["tensors"]) {
        const std::string name = t["name"].get<std::string>();
        const auto shape = t["shape"];
        const size_t offset = t["offset"].get<size_t>();
        ad::ParamTensor& p = model->tensor(name);
        if (p.value.rows() != shape[0].get<Eigen::Index>() ||
            p.value.cols() != shape[1].get<Eigen::Index>())
            throw IoError("checkpoint tensor shape mismatch for " + name, path.string());
        const size_t need = offset + 8 * static_cast<size_t>(p.value.size());
        if (blob.size() < need) throw IoError("truncated checkpoint blob", path.string());
        size_t pos = offset;
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
                double v;
                std::memcpy(&v, blob.data() + pos, 8);
                p.value(i, j) = v;
                pos += 8;
            }
    }
    return model;
}

}  // namespace flowroute
