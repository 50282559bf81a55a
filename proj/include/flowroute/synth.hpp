#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowroute/graph.hpp"

namespace flowroute {

// Coupled SC/FC generator with planted group differences. SC is a shared
// block backbone with per-subject weight jitter; FC is a heat-kernel
// diffusion affinity of the subject's own SC plus noise, so that planted
// demand effects must surface through the flow computation.
struct SynthSpec {
    int n_nodes = 30;
    int n_per_class = 100;
    int blocks = 3;
    double p_in = 0.7;
    double p_out = 0.2;
    double w_min = 0.5;
    double w_max = 1.5;
    double jitter = 0.1;
    double diffusion_scale = 1.0;
    std::vector<std::pair<int, int>> planted_edges;
    double rho = 1.0;    // patient FC demand multiplier is (1 + rho)
    double sigma = 0.05; // FC noise
    uint64_t seed = 0;

    void validate() const;
};

SynthSpec synth_spec_from_json(const std::string& text);
std::string synth_spec_to_json(const SynthSpec& spec);

// In-memory generation; labels 0 = control, 1 = patient, balanced.
std::vector<ConnectomePair> generate_subjects(const SynthSpec& spec);

// Writes per-subject CSVs plus manifest.json into out_dir and returns the
// manifest path.
std::filesystem::path generate_dataset(const SynthSpec& spec,
                                       const std::filesystem::path& out_dir);

// Shared backbone of the spec (same for every subject); exposed for tests.
Mat generate_backbone(const SynthSpec& spec);

}  // namespace flowroute
