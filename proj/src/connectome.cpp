#include "braingat/connectome.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "braingat/errors.hpp"

namespace braingat::connectome {

using nlohmann::json;

ConnectivityMatrix pearson_matrix(const ingest::TimeSeriesMatrix& ts) {
    const std::size_t t = ts.rows(), r = ts.cols();
    if (t < 2) throw DataError("pearson: need at least 2 time points");

    std::vector<double> mean(r, 0.0);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < t; ++i) mean[j] += ts.at(i, j);
        mean[j] /= static_cast<double>(t);
    }
    std::vector<double> sq(r, 0.0);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < t; ++i) {
            const double d = ts.at(i, j) - mean[j];
            sq[j] += d * d;
        }
    }

    Tensor conn = Tensor::matrix(r, r);
    for (std::size_t a = 0; a < r; ++a) {
        if (sq[a] == 0.0) continue;  // constant column: whole row stays 0
        conn.at(a, a) = 1.0;
        for (std::size_t b = a + 1; b < r; ++b) {
            if (sq[b] == 0.0) continue;
            double cov = 0.0;
            for (std::size_t i = 0; i < t; ++i)
                cov += (ts.at(i, a) - mean[a]) * (ts.at(i, b) - mean[b]);
            const double v = cov / std::sqrt(sq[a] * sq[b]);
            conn.at(a, b) = v;
            conn.at(b, a) = v;
        }
    }
    return conn;
}

FeatureMode parse_feature_mode(const std::string& name) {
    if (name == "correlation-profile") return FeatureMode::kCorrelationProfile;
    if (name == "correlation-plus-series") return FeatureMode::kCorrelationPlusSeries;
    throw ConfigError("unknown feature mode: " + name);
}

std::string feature_mode_name(FeatureMode mode) {
    return mode == FeatureMode::kCorrelationProfile ? "correlation-profile"
                                                    : "correlation-plus-series";
}

Tensor node_features(const ConnectivityMatrix& conn, const ingest::TimeSeriesMatrix& ts,
                     const FeatureOptions& options) {
    const std::size_t n = conn.rows();
    if (conn.cols() != n) throw ShapeError("node_features: connectivity must be square");
    if (options.mode == FeatureMode::kCorrelationProfile || options.series_len == 0) {
        return conn;
    }
    if (ts.cols() != n) throw ShapeError("node_features: time series region count mismatch");
    const std::size_t k = options.series_len;
    Tensor x = Tensor::matrix(n, n + k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) x.at(i, j) = conn.at(i, j);
        // first k time points of region i, zero-padded past the series end
        for (std::size_t p = 0; p < k; ++p) {
            x.at(i, n + p) = p < ts.rows() ? ts.at(p, i) : 0.0;
        }
    }
    return x;
}

Tensor BrainGraph::adjacency() const {
    Tensor a = Tensor::matrix(n_nodes, n_nodes);
    for (const Edge& e : edges) {
        a.at(e.i, e.j) = 1.0;
        a.at(e.j, e.i) = 1.0;
    }
    return a;
}

BrainGraph build_graph(const ConnectivityMatrix& conn, double threshold, const Tensor& features,
                       int label, std::vector<std::string> region_names) {
    const std::size_t n = conn.rows();
    if (conn.cols() != n) throw ShapeError("build_graph: connectivity must be square");
    if (threshold < 0.0 || threshold > 1.0) throw ConfigError("build_graph: threshold must be in [0, 1]");
    if (features.rank() != 2 || features.rows() != n)
        throw ShapeError("build_graph: features must have one row per region");
    if (region_names.size() != n) throw ShapeError("build_graph: region name count mismatch");

    BrainGraph g;
    g.label = label;
    g.n_nodes = n;
    g.region_names = std::move(region_names);
    g.features = features;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double w = conn.at(i, j);
            if (std::abs(w) >= threshold) g.edges.push_back({i, j, w});
        }
    }
    return g;
}

void save_graph(const BrainGraph& graph, const std::filesystem::path& path) {
    json doc;
    doc["id"] = graph.id;
    doc["label"] = graph.label;
    doc["n_nodes"] = graph.n_nodes;
    doc["region_names"] = graph.region_names;
    json edges = json::array();
    for (const auto& e : graph.edges) edges.push_back({e.i, e.j, e.weight});
    doc["edges"] = std::move(edges);
    json feat = json::array();
    for (std::size_t i = 0; i < graph.features.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < graph.features.cols(); ++j) row.push_back(graph.features.at(i, j));
        feat.push_back(std::move(row));
    }
    doc["features"] = std::move(feat);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write graph: " + path.string());
    out << doc.dump() << "\n";
}

BrainGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("graph not found: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("graph parse error in " + path.string() + ": " + e.what());
    }
    BrainGraph g;
    g.id = doc.at("id").get<std::string>();
    g.label = doc.at("label").get<int>();
    g.n_nodes = doc.at("n_nodes").get<std::size_t>();
    g.region_names = doc.at("region_names").get<std::vector<std::string>>();
    for (const auto& e : doc.at("edges")) {
        g.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
    }
    const auto& feat = doc.at("features");
    const std::size_t rows = feat.size();
    if (rows != g.n_nodes) throw DataError("graph feature row count mismatch in " + path.string());
    const std::size_t cols = rows ? feat.at(0).size() : 0;
    Tensor x = Tensor::matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto& row = feat.at(i);
        if (row.size() != cols) throw DataError("ragged feature rows in " + path.string());
        for (std::size_t j = 0; j < cols; ++j) x.at(i, j) = row.at(j).get<double>();
    }
    g.features = std::move(x);
    return g;
}

std::vector<std::string> default_region_names(std::size_t n) {
    std::vector<std::string> names;
    names.reserve(n);
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "region-%03zu", i);
        names.emplace_back(buf);
    }
    return names;
}

}  // namespace braingat::connectome
