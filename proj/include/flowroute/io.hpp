#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowroute/graph.hpp"

namespace flowroute {

// Headerless CSV of decimal values, one row per line. Full double precision
// via 17-significant-digit serialization.
Mat read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Mat& m);

std::string format_double(double v);  // shortest 17-sig-digit form, "%.17g"

// One manifest entry: {"id", "sc", "fc", "features", "label"} with features
// and label nullable. Paths are resolved relative to the manifest file.
struct ManifestEntry {
    std::string id;
    std::filesystem::path sc;
    std::filesystem::path fc;
    std::filesystem::path features;  // empty => identity-like default
    bool has_features = false;
    std::optional<int> label;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

// Loads and validates one subject. Missing features become the identity
// matrix (one-hot node index, d_x = N).
ConnectomePair load_pair(const ManifestEntry& entry);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace flowroute
