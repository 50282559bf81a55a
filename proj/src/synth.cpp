#include "flowroute/synth.hpp"

#include <Eigen/Eigenvalues>
#include <filesystem>

#include <json.hpp>

#include "flowroute/errors.hpp"
#include "flowroute/io.hpp"
#include "flowroute/rng.hpp"
#include "flowroute/spectral.hpp"

namespace flowroute {

using nlohmann::ordered_json;

void SynthSpec::validate() const {
    if (n_nodes < 2) throw ConfigError("synth: n_nodes must be >= 2");
    if (n_per_class < 1) throw ConfigError("synth: n_per_class must be >= 1");
    if (blocks < 1 || blocks > n_nodes) throw ConfigError("synth: invalid block count");
    if (!(p_in >= 0 && p_in <= 1 && p_out >= 0 && p_out <= 1))
        throw ConfigError("synth: edge probabilities must lie in [0,1]");
    if (w_min <= 0 || w_max < w_min) throw ConfigError("synth: invalid weight range");
    if (jitter < 0 || jitter >= 1) throw ConfigError("synth: jitter must lie in [0,1)");
    if (rho < 0) throw ConfigError("synth: rho must be nonnegative");
    if (rho > 0 && planted_edges.empty())
        throw ConfigError("synth: rho > 0 requires planted edges");
    if (sigma < 0) throw ConfigError("synth: sigma must be nonnegative");
    if (diffusion_scale <= 0) throw ConfigError("synth: diffusion scale must be positive");
    for (const auto& [i, j] : planted_edges)
        if (i < 0 || j < 0 || i >= n_nodes || j >= n_nodes || i == j)
            throw ConfigError("synth: invalid planted edge");
}

SynthSpec synth_spec_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("synth spec parse error: ") + e.what());
    }
    SynthSpec s;
    s.n_nodes = j.value("n_nodes", s.n_nodes);
    s.n_per_class = j.value("n_per_class", s.n_per_class);
    if (j.contains("sc_model")) {
        const auto& m = j["sc_model"];
        s.blocks = m.value("blocks", s.blocks);
        s.p_in = m.value("p_in", s.p_in);
        s.p_out = m.value("p_out", s.p_out);
        s.w_min = m.value("w_min", s.w_min);
        s.w_max = m.value("w_max", s.w_max);
        s.jitter = m.value("jitter", s.jitter);
    }
    if (j.contains("coupling"))
        s.diffusion_scale = j["coupling"].value("diffusion_scale", s.diffusion_scale);
    if (j.contains("planted_edges"))
        for (const auto& e : j["planted_edges"])
            s.planted_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    s.rho = j.value("rho", s.rho);
    s.sigma = j.value("sigma", s.sigma);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

std::string synth_spec_to_json(const SynthSpec& s) {
    ordered_json j;
    j["n_nodes"] = s.n_nodes;
    j["n_per_class"] = s.n_per_class;
    j["sc_model"] = {{"blocks", s.blocks}, {"p_in", s.p_in},   {"p_out", s.p_out},
                     {"w_min", s.w_min},   {"w_max", s.w_max}, {"jitter", s.jitter}};
    j["coupling"] = {{"diffusion_scale", s.diffusion_scale}};
    ordered_json planted = ordered_json::array();
    for (const auto& [a, b] : s.planted_edges) planted.push_back({a, b});
    j["planted_edges"] = std::move(planted);
    j["rho"] = s.rho;
    j["sigma"] = s.sigma;
    j["seed"] = s.seed;
    return j.dump(2) + "\n";
}

namespace {

Mat draw_backbone_once(const SynthSpec& spec, uint64_t attempt) {
    Rng rng(spec.seed, "backbone", attempt);
    const int n = spec.n_nodes;
    const int block_size = (n + spec.blocks - 1) / spec.blocks;
    Mat sc = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            // two unconditional draws per pair keep the stream layout fixed
            const double u = rng.uniform();
            const double w = rng.uniform(spec.w_min, spec.w_max);
            const bool same_block = (i / block_size) == (j / block_size);
            if (u < (same_block ? spec.p_in : spec.p_out)) {
                sc(i, j) = w;
                sc(j, i) = w;
            }
        }
    }
    for (const auto& [i, j] : spec.planted_edges) {
        if (sc(i, j) == 0.0) {
            Rng prng(spec.seed, "planted", attempt * 100003ull +
                                               static_cast<uint64_t>(i) * 1009ull +
                                               static_cast<uint64_t>(j));
            const double w = prng.uniform(spec.w_min, spec.w_max);
            sc(i, j) = w;
            sc(j, i) = w;
        }
    }
    return sc;
}

// Heat-kernel affinity on the symmetric normalized Laplacian, rescaled to
// unit diagonal; entries land in [-1, 1] because the kernel is PSD.
Mat diffusion_affinity(const Mat& sc, double scale) {
    const int n = static_cast<int>(sc.rows());
    const Mat lap = laplacian_from_weights(sc);
    Vec dinv_sqrt(n);
    for (int i = 0; i < n; ++i)
        dinv_sqrt[i] = lap(i, i) > 0 ? 1.0 / std::sqrt(lap(i, i)) : 0.0;
    const Mat lnorm = dinv_sqrt.asDiagonal() * lap * dinv_sqrt.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Mat> eig(lnorm);
    if (eig.info() != Eigen::Success)
        throw NumericalError("diffusion affinity eigendecomposition failed");
    const Vec expvals = (-scale * eig.eigenvalues().array()).exp();
    const Mat kernel =
        eig.eigenvectors() * expvals.asDiagonal() * eig.eigenvectors().transpose();

    Mat affinity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            affinity(i, j) = kernel(i, j) / std::sqrt(kernel(i, i) * kernel(j, j));
    return affinity;
}

}  // namespace

Mat generate_backbone(const SynthSpec& spec) {
    spec.validate();
    for (uint64_t attempt = 0; attempt < 100; ++attempt) {
        Mat sc = draw_backbone_once(spec, attempt);
        bool has_edge = false;
        for (int i = 0; i < spec.n_nodes && !has_edge; ++i)
            for (int j = i + 1; j < spec.n_nodes; ++j)
                if (sc(i, j) > 0) {
                    has_edge = true;
                    break;
                }
        if (!has_edge) continue;
        if (is_connected(build_edge_list(sc, 0.0))) return sc;
    }
    throw NumericalError("synth: no connected backbone within 100 draws");
}

std::vector<ConnectomePair> generate_subjects(const SynthSpec& spec) {
    spec.validate();
    const Mat backbone = generate_backbone(spec);
    const int n = spec.n_nodes;

    std::vector<ConnectomePair> out;
    const int total = 2 * spec.n_per_class;
    out.reserve(total);
    for (int s = 0; s < total; ++s) {
        const int label = s < spec.n_per_class ? 0 : 1;
        Rng rng(spec.seed, "subject", static_cast<uint64_t>(s));

        Mat sc = Mat::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (backbone(i, j) > 0) {
                    const double w =
                        backbone(i, j) * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0));
                    sc(i, j) = w;
                    sc(j, i) = w;
                }

        Mat fc = diffusion_affinity(sc, spec.diffusion_scale);
        if (label == 1) {
            for (const auto& [i, j] : spec.planted_edges) {
                fc(i, j) *= (1.0 + spec.rho);
                fc(j, i) = fc(i, j);
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double noisy = fc(i, j) + spec.sigma * rng.gaussian();
                const double clipped = std::clamp(noisy, -1.0, 1.0);
                fc(i, j) = clipped;
                fc(j, i) = clipped;
            }
        fc.diagonal().setOnes();

        ConnectomePair pair;
        pair.id = (label == 0 ? "ctrl_" : "pat_") +
                  std::to_string(label == 0 ? s : s - spec.n_per_class);
        pair.n_nodes = n;
        pair.sc = std::move(sc);
        pair.fc = std::move(fc);
        pair.features = Mat::Identity(n, n);
        pair.label = label;
        pair.validate();
        out.push_back(std::move(pair));
    }
    return out;
}

std::filesystem::path generate_dataset(const SynthSpec& spec,
                                       const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto subjects = generate_subjects(spec);

    std::vector<ManifestEntry> entries;
    for (const auto& subj : subjects) {
        const auto sc_path = out_dir / ("sc_" + subj.id + ".csv");
        const auto fc_path = out_dir / ("fc_" + subj.id + ".csv");
        write_csv_matrix(sc_path, subj.sc);
        write_csv_matrix(fc_path, subj.fc);
        ManifestEntry e;
        e.id = subj.id;
        e.sc = sc_path;
        e.fc = fc_path;
        e.has_features = false;
        e.label = subj.label;
        entries.push_back(std::move(e));
    }
    const auto manifest_path = out_dir / "manifest.json";
    write_manifest(manifest_path, entries);
    return manifest_path;
}

}  // namespace flowroute
