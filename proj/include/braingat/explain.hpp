#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "braingat/connectome.hpp"
#include "braingat/nn.hpp"

namespace braingat::explain {

/// Value of the masked game for one coalition (true = feature present).
using ValueFn = std::function<double(const std::vector<bool>&)>;
/// Model output (positive-class probability) for a flat feature vector.
using ModelFn = std::function<double(const std::vector<double>&)>;

struct ShapConfig {
    std::size_t n_coalition_samples = 2048;
    std::uint64_t seed = 0;
    std::size_t enumeration_limit = 4096;  // enumerate all coalitions while 2^M stays within
};

/// Kernel SHAP over an abstract masked game on M players. Coalitions are
/// weighted by the Shapley kernel and solved as a constrained weighted
/// least squares, so efficiency (sum phi = v(full) - v(empty)) holds by
/// construction. Enumerates every coalition when 2^M fits the limit,
/// otherwise takes all size-1 and size-(M-1) coalitions plus a seeded
/// sample of the rest.
std::vector<double> kernel_shap_game(const ValueFn& value, std::size_t m, const ShapConfig& config);

/// Masking wrapper: coalition members keep their value from x, the rest
/// fall back to the background feature means (single-reference background).
std::vector<double> kernel_shap(const ModelFn& model_fn,
                                const std::vector<std::vector<double>>& background,
                                const std::vector<double>& x, const ShapConfig& config);

/// Brute-force Shapley values straight from the 2^M definition. Test
/// oracle; cost grows as 2^M model calls.
std::vector<double> exact_shapley_game(const ValueFn& value, std::size_t m);
std::vector<double> exact_shapley(const ModelFn& model_fn,
                                  const std::vector<std::vector<double>>& background,
                                  const std::vector<double>& x);

enum class ShapGranularity {
    kRegion,   // mask whole region rows, M = n
    kFeature,  // mask single entries of the flattened n x d matrix, M = n * d
};

struct ShapOptions {
    ShapConfig kernel;
    ShapGranularity granularity = ShapGranularity::kRegion;
};

struct ShapReport {
    std::vector<double> feature_values;                   // per masked unit
    std::vector<double> region_scores;                    // per region
    std::vector<std::pair<std::string, double>> ranking;  // descending score
};

/// SHAP attribution for one subject against a cohort background. The
/// wrapper rebuilds the subject's feature matrix from the (possibly
/// masked) vector and runs the classifier in eval mode on the subject's
/// own graph. Region scores average the region's feature attributions.
ShapReport subject_shap(nn::ClassifierModel& model,
                        const std::vector<const connectome::BrainGraph*>& background,
                        const connectome::BrainGraph& subject, const ShapOptions& options);

struct RegionImportance {
    std::string region;
    double score = 0.0;
};

struct AttentionImportance {
    std::vector<RegionImportance> total;           // descending by score
    std::vector<std::vector<double>> per_layer;    // [layer][region]
    std::vector<std::string> region_names;
};

/// Head-averaged attention aggregated over every layer, test graph and
/// edge: region j earns the attention its features receive as a source,
/// self-loops included.
AttentionImportance attention_importance(nn::ClassifierModel& model,
                                         const std::vector<const connectome::BrainGraph*>& graphs);

/// Side-by-side top-k table (markdown) plus the overlap count.
std::string export_rankings(const ShapReport& shap, const std::vector<RegionImportance>& attention,
                            std::size_t k);

}  // namespace braingat::explain
