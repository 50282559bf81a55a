#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowroute/autodiff.hpp"
#include "flowroute/flow.hpp"
#include "flowroute/graph.hpp"
#include "flowroute/resistance.hpp"
#include "flowroute/rng.hpp"

namespace flowroute {

struct ModelConfig {
    int d = 64;
    int layers = 2;
    int d_x = 0;  // set from data at init time
    int classes = 2;
    int psi_hidden = 128;
    int gate_hidden = 64;
    int ffn_mult = 4;
    int degree_buckets = 64;
    double delta = 1e-6;
    double dropout = 0.3;
    double tau_init = 8.0;
    double theta_init = 0.5;
    double edge_threshold = 0.0;
    double erd_rank_tol = 1e-10;
    bool multiplicative_mask = false;
    bool normalize_sc = false;
    bool erd_regularize = false;
};

// Immutable per-subject inputs: validated pair, canonical edge list, cached
// ERD and demand Laplacian. ERD depends only on SC, so it is computed once
// and shared across epochs.
struct SubjectData {
    ConnectomePair pair;
    EdgeList edges;
    Mat resistance;
    DemandLaplacian demand;
    std::vector<int> degree_bucket;
};

SubjectData prepare_subject(ConnectomePair pair, const ModelConfig& cfg);

class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    void init_params(Rng& rng);
    std::vector<ad::ParamTensor*>& params() { return order_; }
    ad::ParamTensor& tensor(const std::string& name);
    const ad::ParamTensor& tensor(const std::string& name) const;
    void zero_grads();

    // Eqs. 2-6: degree-augmented projection followed by resistance-biased
    // transformer layers. Throws NumericalError naming the layer on
    // non-finite activations.
    ad::Var encode(ad::Tape& t, const SubjectData& subj, bool training = false,
                   Rng* dropout_rng = nullptr);

    // c_m = exp(gate([h_i;h_j])), symmetrized over both orderings, with the
    // pre-activation clamped to [-30, 30].
    ad::Var gate_capacities(ad::Tape& t, ad::Var H, const EdgeList& edges);

    // Log-min-max mask: M_ij = sigmoid(tau (Norm(log(phi+eps)) - theta)),
    // non-edges at Norm = 0, diagonal 1.
    ad::Var make_mask(ad::Tape& t, ad::Var phi, const EdgeList& edges);

    // Mask-biased attention, mean pooling and the classifier head.
    ad::Var aggregate_and_classify(ad::Tape& t, ad::Var H, ad::Var mask);

    struct Forward {
        ad::Var H;
        ad::Var capacities;
        ad::Var phi;
        ad::Var mask;
        ad::Var logits;
    };
    Forward forward(ad::Tape& t, const SubjectData& subj, bool training = false,
                    Rng* dropout_rng = nullptr);

    // Cross-entropy of the true label (1x1).
    ad::Var loss(ad::Tape& t, ad::Var logits, int label);

    Vec logits_eval(const SubjectData& subj);

private:
    ad::ParamTensor& add_param(const std::string& name, int rows, int cols);

    ModelConfig cfg_;
    std::vector<std::unique_ptr<ad::ParamTensor>> store_;
    std::vector<ad::ParamTensor*> order_;
    std::map<std::string, ad::ParamTensor*> by_name_;
};

// Checkpoint archive: magic "FLOWCKPT1", a JSON index {name, shape, byte
// offset} and a little-endian 8-byte-float blob. Round trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace flowroute
