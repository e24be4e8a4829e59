#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "braingat/connectome.hpp"
#include "braingat/ingest.hpp"
#include "braingat/metrics.hpp"
#include "braingat/nn.hpp"
#include "braingat/tape.hpp"

namespace braingat::train {

/// Run-level seed scheme: the run seed feeds fixed-purpose streams so a
/// replicate is reproducible in isolation.
///   stream 0: dataset split, 1: weight init, 2: dropout, 3: batch shuffle
enum SeedStream : std::uint64_t {
    kSplitStream = 0,
    kInitStream = 1,
    kDropoutStream = 2,
    kShuffleStream = 3,
};

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 150;
    std::size_t patience = 30;  // non-improving epochs before stopping; 0 disables
    std::size_t heads = 4;
    std::size_t n_blocks = 4;
    std::size_t head_dim = 16;
    std::size_t fc_dim = 32;
    double dropout_block1 = 0.1;
    double dropout_rest = 0.2;
    std::uint64_t seed = 0;
    nn::ModelKind model = nn::ModelKind::kGat;

    void validate() const;
    nn::ClassifierConfig classifier_config(std::size_t input_dim) const;
};

struct SplitAssignment {
    std::vector<std::string> train, validation, test;
    std::uint64_t seed = 0;
};

constexpr std::array<double, 3> kDefaultSplitRatios{0.8, 0.1, 0.1};

/// Deterministic stratified split. Per-class part sizes come from
/// largest-remainder rounding (ties to the earlier part), subjects are
/// shuffled within class.
SplitAssignment stratified_split(const std::vector<std::pair<std::string, int>>& subjects,
                                 const std::array<double, 3>& ratios, std::uint64_t seed);
SplitAssignment stratified_split(const ingest::CohortManifest& manifest,
                                 const std::array<double, 3>& ratios, std::uint64_t seed);

/// Mean over the batch of -log_prob[label].
Var nll_loss(Tape& tape, Var log_probs, const std::vector<int>& labels);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t t = 0;
};

/// Bias-corrected Adam update. A non-finite gradient aborts the step
/// without touching parameters.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& config);

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;  // 1-based; 0 when no validation happened
    metrics::MetricsReport test_metrics;
    bool has_test_metrics = false;
};

struct TrainOutcome {
    nn::ClassifierModel model;
    RunResult result;
};

struct EvalOutputs {
    double mean_nll = 0.0;
    std::vector<int> predictions;
    std::vector<double> scores;  // positive-class probability
    std::vector<int> labels;
    Tensor embeddings;  // B x fc_dim
};

/// Eval-mode pass over a list of graphs as one batch. Prediction is class 1
/// when log-prob(1) >= log-prob(0).
EvalOutputs evaluate_model(nn::ClassifierModel& model,
                           const std::vector<const connectome::BrainGraph*>& graphs);

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_loss)>;

/// Mini-batch training with per-epoch shuffling, best-validation tracking
/// and early stopping. The model carrying the best validation loss is
/// restored before the test evaluation. Fully deterministic given
/// (config.seed, config, data).
TrainOutcome train_model(const std::vector<connectome::BrainGraph>& graphs,
                         const SplitAssignment& split, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

struct ReplicateSummary {
    std::vector<RunResult> runs;
    std::map<std::string, metrics::MetricAggregate> aggregate;
};

using RunCallback = std::function<void(std::size_t run_index, const RunResult&,
                                       nn::ClassifierModel&, const SplitAssignment&)>;

/// Runs n_runs independent replicates; run k uses seed = config.seed + k
/// for split, init and all run-local randomness. Runs may execute on up to
/// `jobs` threads; results aggregate in run order either way.
ReplicateSummary run_replicates(const std::vector<connectome::BrainGraph>& graphs,
                                const TrainConfig& config, std::size_t n_runs, std::size_t jobs = 1,
                                const RunCallback& on_run = {});

struct SweepPoint {
    TrainConfig config;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
};

/// Evaluates every grid point with the point's own seed left equal to the
/// shared sweep seed, so all points see the same split. Returns points
/// sorted by validation accuracy (descending), then validation loss.
std::vector<SweepPoint> sweep(const std::vector<connectome::BrainGraph>& graphs,
                              const std::vector<TrainConfig>& grid);

}  // namespace braingat::train
