#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "braingat/connectome.hpp"
#include "braingat/nn.hpp"
#include "braingat/rng.hpp"

namespace braingat::verify {

struct CheckResult {
    std::string name;
    double value = 0.0;  // measured statistic, usually a max error
    double bound = 0.0;  // passes when value <= bound
    bool pass = false;
};

/// Random thresholded graph for verification runs.
connectome::BrainGraph random_graph(Rng& rng, std::size_t n_nodes, std::size_t feature_dim,
                                    double edge_prob, int label = 0);

/// Central-difference check of every tape primitive on random inputs
/// (seeds 0..9, entries in [-2, 2], kink neighborhoods resampled).
std::vector<CheckResult> gradient_primitive_suite();

/// Central-difference check over every parameter of a full 7-block GAT
/// classifier on a 2-graph micro-batch of 5-node graphs, batch norm in
/// eval mode.
CheckResult gradient_model_check();

/// Kernel SHAP with full coalition enumeration against the brute-force
/// 2^M definition, plus the efficiency identity, for M in {3, 5, 8} on
/// random linear and two-layer models.
std::vector<CheckResult> shap_oracle_suite();

/// Per-head attention coefficients over 100 random graphs (4..20 nodes):
/// incoming alphas of every destination must sum to 1.
CheckResult attention_normalization_check();

/// Rank-statistic AUC against the trapezoidal ROC integration on random
/// score sets with ties.
CheckResult metric_cross_check();

std::vector<CheckResult> run_all();
std::vector<CheckResult> run_gradient_checks();

}  // namespace braingat::verify
