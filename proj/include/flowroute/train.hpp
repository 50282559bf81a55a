#pragma once

#include <string>
#include <vector>

#include "flowroute/model.hpp"

namespace flowroute {

struct Metrics {
    double acc = 0.0;
    double pre = 0.0;
    double rec = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    int n = 0;
};

// Confusion-matrix metrics with class 1 as positive; AUC by the midrank
// statistic over P(class 1).
Metrics compute_metrics(const std::vector<int>& labels,
                        const std::vector<Vec>& logits);

double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);

struct TrainConfig {
    int epochs = 50;
    double lr = 5e-4;
    double weight_decay = 0.01;
    int batch_size = 64;
    double split_train = 0.6;
    double split_val = 0.1;
    double split_test = 0.3;
    std::string optimizer = "adamw";  // or "sgd"
    std::string select_metric = "acc_auc";
    uint64_t seed = 0;
    ModelConfig model;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    Metrics val;
    bool has_val = false;
};

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Deterministic stratified split from the "split" stream.
SplitIndices stratified_split(const std::vector<int>& labels, double f_train,
                              double f_val, uint64_t seed);

struct TrainResult {
    std::vector<EpochRecord> history;
    SplitIndices split;
    Metrics test;
    bool has_test = false;
    int best_epoch = 0;
};

// Trains in place; on return the model carries the best-validation weights
// (final weights when there is no validation split).
TrainResult train_model(Model& model, const std::vector<SubjectData>& subjects,
                        const TrainConfig& cfg);

Metrics evaluate(Model& model, const std::vector<SubjectData>& subjects,
                 const std::vector<int>& indices);

// JSON (de)serialization for run configs; unknown keys are rejected so a
// config echo reproduces the run exactly.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

// Decoupled-weight-decay adaptive-moment optimizer; "sgd" mode is plain
// gradient descent for gradient-check purity.
class Optimizer {
public:
    Optimizer(std::vector<ad::ParamTensor*>& params, const TrainConfig& cfg);
    void step();

private:
    std::vector<ad::ParamTensor*>& params_;
    double lr_, wd_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    bool adaptive_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace flowroute
