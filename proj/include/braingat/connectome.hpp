#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "braingat/ingest.hpp"
#include "braingat/tensor.hpp"

namespace braingat::connectome {

/// R x R matrix of Pearson correlations. Constant columns get zero rows,
/// columns and diagonal entries so downstream code never sees NaN.
using ConnectivityMatrix = Tensor;

ConnectivityMatrix pearson_matrix(const ingest::TimeSeriesMatrix& ts);

enum class FeatureMode {
    kCorrelationProfile,     // node i's feature row is its correlation row (d = n)
    kCorrelationPlusSeries,  // correlation row plus the first k time points (d = n + k)
};

struct FeatureOptions {
    FeatureMode mode = FeatureMode::kCorrelationProfile;
    std::size_t series_len = 0;  // k, used by kCorrelationPlusSeries
};

FeatureMode parse_feature_mode(const std::string& name);
std::string feature_mode_name(FeatureMode mode);

Tensor node_features(const ConnectivityMatrix& conn, const ingest::TimeSeriesMatrix& ts,
                     const FeatureOptions& options);

/// Thresholded per-subject connectivity graph. Edges are stored once with
/// i < j; the adjacency has zero diagonal (layers add self-loops).
struct BrainGraph {
    std::string id;
    int label = 0;
    std::size_t n_nodes = 0;
    std::vector<std::string> region_names;
    struct Edge {
        std::size_t i, j;
        double weight;
    };
    std::vector<Edge> edges;
    Tensor features;  // n x d

    Tensor adjacency() const;  // n x n binary, symmetric, zero diagonal
};

BrainGraph build_graph(const ConnectivityMatrix& conn, double threshold, const Tensor& features,
                       int label, std::vector<std::string> region_names);

void save_graph(const BrainGraph& graph, const std::filesystem::path& path);
BrainGraph load_graph(const std::filesystem::path& path);

/// AAL-style fallback names ("region-000", ...) when no atlas is supplied.
std::vector<std::string> default_region_names(std::size_t n);

}  // namespace braingat::connectome
