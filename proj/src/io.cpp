#include "flowroute/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowroute/errors.hpp"

namespace flowroute {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Mat read_csv_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix file", path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        size_t pos = 0;
        while (pos <= line.size()) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            const std::string cell = line.substr(pos, comma - pos);
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("unparsable CSV cell '" + cell + "'", path.string());
            }
            pos = comma + 1;
            if (comma == line.size()) break;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("ragged CSV rows", path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("empty CSV file", path.string());
    Mat m(rows.size(), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

void write_csv_matrix(const std::filesystem::path& path, const Mat& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing", path.string());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed", path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest", path.string());
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw IoError(std::string("manifest parse error: ") + e.what(), path.string());
    }
    if (!doc.is_array()) throw IoError("manifest must be a JSON array", path.string());

    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    std::vector<ManifestEntry> out;
    for (const auto& item : doc) {
        ManifestEntry e;
        e.id = item.at("id").get<std::string>();
        e.sc = resolve(item.at("sc").get<std::string>());
        e.fc = resolve(item.at("fc").get<std::string>());
        if (item.contains("features") && !item["features"].is_null()) {
            e.features = resolve(item["features"].get<std::string>());
            e.has_features = true;
        }
        if (item.contains("label") && !item["label"].is_null())
            e.label = item["label"].get<int>();
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
    json doc = json::array();
    const auto base = path.parent_path();
    auto relativize = [&](const std::filesystem::path& p) {
        const auto rel = p.lexically_relative(base);
        return rel.empty() ? p.string() : rel.generic_string();
    };
    for (const auto& e : entries) {
        json item;
        item["id"] = e.id;
        item["sc"] = relativize(e.sc);
        item["fc"] = relativize(e.fc);
        item["features"] = e.has_features ? json(relativize(e.features)) : json(nullptr);
        item["label"] = e.label ? json(*e.label) : json(nullptr);
        doc.push_back(std::move(item));
    }
    write_text_file(path, doc.dump(2) + "\n");
}

ConnectomePair load_pair(const ManifestEntry& entry) {
    ConnectomePair pair;
    pair.id = entry.id;
    pair.sc = read_csv_matrix(entry.sc);
    pair.fc = read_csv_matrix(entry.fc);
    pair.n_nodes = static_cast<int>(pair.sc.rows());
    if (entry.has_features) {
        pair.features = read_csv_matrix(entry.features);
    } else {
        pair.features = Mat::Identity(pair.n_nodes, pair.n_nodes);
    }
    pair.label = entry.label;
    pair.validate();
    return pair;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing", path.string());
    out << content;
    if (!out) throw IoError("write failed", path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file", path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace flowroute
