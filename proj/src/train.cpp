#include "flowroute/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "flowroute/errors.hpp"

namespace flowroute {

double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (const int y : labels) n_pos += (y == 1);
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // midranks over tie groups
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double rank_sum = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) rank_sum += rank[k];
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) *
                                    static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Metrics compute_metrics(const std::vector<int>& labels, const std::vector<Vec>& logits) {
    if (labels.size() != logits.size())
        throw DimensionError("labels/logits size mismatch");
    Metrics m;
    m.n = static_cast<int>(labels.size());
    if (m.n == 0) return m;

    int tp = 0, tn = 0, fp = 0, fn = 0;
    std::vector<double> scores(labels.size());
    for (size_t k = 0; k < labels.size(); ++k) {
        const Vec& z = logits[k];
        Eigen::Index pred = 0;
        z.maxCoeff(&pred);
        const int correct = labels[k];
        if (z.size() == 2) {
            // probability of class 1 via the stable logit difference
            scores[k] = 1.0 / (1.0 + std::exp(z[0] - z[1]));
            if (pred == 1 && correct == 1) ++tp;
            if (pred == 0 && correct == 0) ++tn;
            if (pred == 1 && correct == 0) ++fp;
            if (pred == 0 && correct == 1) ++fn;
        } else {
            if (pred == correct) ++tp;  // multi-class: accuracy only
        }
    }
    if (logits.front().size() != 2) {
        m.acc = static_cast<double>(tp) / m.n;
        return m;
    }
    m.acc = static_cast<double>(tp + tn) / m.n;
    m.pre = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    m.f1 = (m.pre + m.rec > 0.0) ? 2.0 * m.pre * m.rec / (m.pre + m.rec) : 0.0;
    m.auc = auc_rank(scores, labels);
    return m;
}

SplitIndices stratified_split(const std::vector<int>& labels, double f_train,
                              double f_val, uint64_t seed) {
    std::map<int, std::vector<int>> buckets;
    for (size_t i = 0; i < labels.size(); ++i)
        buckets[labels[i]].push_back(static_cast<int>(i));

    Rng rng(seed, "split");
    SplitIndices out;
    for (auto& [label, idx] : buckets) {
        rng.shuffle(idx);
        const size_t n = idx.size();
        const size_t n_train = static_cast<size_t>(std::floor(f_train * n));
        const size_t n_val = static_cast<size_t>(std::floor(f_val * n));
        for (size_t k = 0; k < n; ++k) {
            if (k < n_train)
                out.train.push_back(idx[k]);
            else if (k < n_train + n_val)
                out.val.push_back(idx[k]);
            else
                out.test.push_back(idx[k]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("train config parse error: ") + e.what());
    }
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("split")) {
        const auto& s = j["split"];
        if (!s.is_array() || s.size() != 3)
            throw ConfigError("train config: split must be [train, val, test]");
        c.split_train = s[0].get<double>();
        c.split_val = s[1].get<double>();
        c.split_test = s[2].get<double>();
    }
    c.optimizer = j.value("optimizer", c.optimizer);
    c.select_metric = j.value("select_metric", c.select_metric);
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) c.model = model_config_from_json(j["model"].dump());
    if (c.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (c.lr < 0.0) throw ConfigError("train config: lr must be nonnegative");
    const double total = c.split_train + c.split_val + c.split_test;
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("train config: split fractions must sum to 1");
    return c;
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["batch_size"] = c.batch_size;
    j["split"] = {c.split_train, c.split_val, c.split_test};
    j["optimizer"] = c.optimizer;
    j["select_metric"] = c.select_metric;
    j["seed"] = c.seed;
    j["model"] = nlohmann::ordered_json::parse(model_config_to_json(c.model));
    return j.dump(2);
}

Optimizer::Optimizer(std::vector<ad::ParamTensor*>& params, const TrainConfig& cfg)
    : params_(params),
      lr_(cfg.lr),
      wd_(cfg.weight_decay),
      adaptive_(cfg.optimizer == "adamw") {
    if (cfg.optimizer != "adamw" && cfg.optimizer != "sgd")
        throw ConfigError("unknown optimizer: " + cfg.optimizer);
    for (const auto* p : params_) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void Optimizer::step() {
    ++t_;
    for (size_t k = 0; k < params_.size(); ++k) {
        ad::ParamTensor& p = *params_[k];
        if (!adaptive_) {
            p.value -= lr_ * p.grad;
            continue;
        }
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const Mat mhat = m_[k] / bc1;
        const Mat vhat = v_[k] / bc2;
        p.value -=
            lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
        p.value -= lr_ * wd_ * p.value;
    }
}

Metrics evaluate(Model& model, const std::vector<SubjectData>& subjects,
                 const std::vector<int>& indices) {
    std::vector<int> labels;
    std::vector<Vec> logits;
    for (const int i : indices) {
        if (!subjects[i].pair.label)
            throw ConfigError("evaluation subject lacks a label: " + subjects[i].pair.id);
        labels.push_back(*subjects[i].pair.label);
        logits.push_back(model.logits_eval(subjects[i]));
    }
    return compute_metrics(labels, logits);
}

TrainResult train_model(Model& model, const std::vector<SubjectData>& subjects,
                        const TrainConfig& cfg) {
    std::vector<int> labels(subjects.size());
    for (size_t i = 0; i < subjects.size(); ++i) {
        if (!subjects[i].pair.label)
            throw ConfigError("training subject lacks a label: " + subjects[i].pair.id);
        labels[i] = *subjects[i].pair.label;
    }

    TrainResult result;
    result.split =
        stratified_split(labels, cfg.split_train, cfg.split_val, cfg.seed);
    if (result.split.train.empty()) throw ConfigError("training split is empty");
    {
        std::map<int, int> class_counts;
        for (const int i : result.split.train) ++class_counts[labels[i]];
        if (class_counts.size() < 2)
            throw ConfigError("training split contains a single class");
    }

    Optimizer opt(model.params(), cfg);

    // snapshot of the best-validation weights
    std::vector<Mat> best_values;
    auto snapshot = [&]() {
        best_values.clear();
        for (const auto* p : model.params()) best_values.push_back(p->value);
    };
    double best_score = -std::numeric_limits<double>::infinity();
    const bool select_on_val = !result.split.val.empty();
    snapshot();
    result.best_epoch = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int> order = result.split.train;
        Rng shuffle_rng(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t batch_end =
                std::min(order.size(), pos + static_cast<size_t>(cfg.batch_size));
            const double inv_b = 1.0 / static_cast<double>(batch_end - pos);
            model.zero_grads();
            for (size_t k = pos; k < batch_end; ++k) {
                const SubjectData& subj = subjects[order[k]];
                Rng dropout_rng(cfg.seed, "dropout",
                                static_cast<uint64_t>(epoch) * 1000003ull +
                                    static_cast<uint64_t>(order[k]));
                ad::Tape tape;
                const auto fw = model.forward(tape, subj, true, &dropout_rng);
                const ad::Var ce = model.loss(tape, fw.logits, *subj.pair.label);
                loss_sum += tape.value(ce)(0, 0);
                tape.backward(tape.scale_const(ce, inv_b));
            }
            opt.step();
            pos = batch_end;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (select_on_val) {
            rec.val = evaluate(model, subjects, result.split.val);
            rec.has_val = true;
            double score = 0.0;
            if (cfg.select_metric == "acc")
                score = rec.val.acc;
            else if (cfg.select_metric == "auc")
                score = rec.val.auc;
            else if (cfg.select_metric == "acc_auc")
                score = rec.val.acc + rec.val.auc;
            else
                throw ConfigError("unknown select_metric: " + cfg.select_metric);
            if (score > best_score) {
                best_score = score;
                snapshot();
                result.best_epoch = epoch;
            }
        } else {
            const double score = -rec.train_loss;
            if (score > best_score) {
                best_score = score;
                snapshot();
                result.best_epoch = epoch;
            }
        }
        result.history.push_back(std::move(rec));
    }

    // restore the selected weights
    auto& params = model.params();
    for (size_t k = 0; k < params.size(); ++k) params[k]->value = best_values[k];

    if (!result.split.test.empty()) {
        result.test = evaluate(model, subjects, result.split.test);
        result.has_test = true;
    }
    return result;
}

}  // namespace flowroute
