#include "braingat/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "braingat/errors.hpp"
#include "braingat/rng.hpp"

namespace braingat::train {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
    if (batch_size < 2) throw ConfigError("train config: batch_size must be at least 2");
    if (heads == 0) throw ConfigError("train config: heads must be positive");
    if (n_blocks == 0) throw ConfigError("train config: n_blocks must be positive");
    if (head_dim == 0) throw ConfigError("train config: head_dim must be positive");
    if (fc_dim == 0) throw ConfigError("train config: fc_dim must be positive");
    if (dropout_block1 < 0.0 || dropout_block1 >= 1.0 || dropout_rest < 0.0 || dropout_rest >= 1.0)
        throw ConfigError("train config: dropout rates must lie in [0, 1)");
}

nn::ClassifierConfig TrainConfig::classifier_config(std::size_t input_dim) const {
    nn::ClassifierConfig c;
    c.input_dim = input_dim;
    c.n_blocks = n_blocks;
    c.heads = heads;
    c.head_dim = head_dim;
    c.fc_dim = fc_dim;
    c.dropout_block1 = dropout_block1;
    c.dropout_rest = dropout_rest;
    return c;
}

SplitAssignment stratified_split(const std::vector<std::pair<std::string, int>>& subjects,
                                 const std::array<double, 3>& ratios, std::uint64_t seed) {
    double ratio_sum = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("split: negative ratio");
        ratio_sum += r;
    }
    if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");

    std::vector<std::string> by_class[2];
    for (const auto& [id, label] : subjects) {
        if (label != 0 && label != 1) throw DataError("split: unknown label for subject " + id);
        by_class[label].push_back(id);
    }
    if (by_class[0].empty() || by_class[1].empty())
        throw DataError("split: both classes must be present");

    SplitAssignment split;
    split.seed = seed;
    Rng rng(derive_seed(seed, 17));
    for (int label = 0; label < 2; ++label) {
        auto& ids = by_class[label];
        if (ids.size() < ratios.size())
            throw DataError("split: a class has fewer subjects than parts");
        rng.shuffle(ids);

        // largest-remainder allocation; remainder ties go to the earlier part
        const std::size_t n = ids.size();
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> fraction{};
        std::size_t assigned = 0;
        for (std::size_t p = 0; p < 3; ++p) {
            const double quota = ratios[p] * static_cast<double>(n);
            counts[p] = static_cast<std::size_t>(std::floor(quota));
            fraction[p] = quota - std::floor(quota);
            assigned += counts[p];
        }
        std::array<std::size_t, 3> order{0, 1, 2};
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (fraction[a] != fraction[b]) return fraction[a] > fraction[b];
            return a < b;
        });
        for (std::size_t r = 0; r < n - assigned; ++r) ++counts[order[r]];

        std::size_t pos = 0;
        for (std::size_t p = 0; p < 3; ++p) {
            auto* part = p == 0 ? &split.train : p == 1 ? &split.validation : &split.test;
            for (std::size_t k = 0; k < counts[p]; ++k) part->push_back(ids[pos++]);
        }
    }
    return split;
}

SplitAssignment stratified_split(const ingest::CohortManifest& manifest,
                                 const std::array<double, 3>& ratios, std::uint64_t seed) {
    std::vector<std::pair<std::string, int>> subjects;
    subjects.reserve(manifest.subjects.size());
    for (const auto& s : manifest.subjects) subjects.emplace_back(s.id, s.label);
    return stratified_split(subjects, ratios, seed);
}

Var nll_loss(Tape& tape, Var log_probs, const std::vector<int>& labels) {
    const Tensor& lp = tape.value(log_probs);
    if (lp.rank() != 2 || lp.rows() != labels.size())
        throw ShapeError("nll_loss: one log-prob row per label");
    const std::size_t b = labels.size(), c = lp.cols();
    Tensor pick = Tensor::matrix(b, c);
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw DataError("nll_loss: label out of range");
        pick.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    Var selected = tape.multiply(log_probs, tape.constant(std::move(pick)));
    return tape.scalar_multiply(tape.sum(selected), -1.0 / static_cast<double>(b));
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& config) {
    if (params.size() != grads.size()) throw ShapeError("adam: one gradient per parameter");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i])) throw ShapeError("adam: gradient shape mismatch");
        if (!grads[i].all_finite())
            throw NumericError("adam: non-finite gradient, step aborted");
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m.at(k) = config.beta1 * m.at(k) + (1.0 - config.beta1) * g.at(k);
            v.at(k) = config.beta2 * v.at(k) + (1.0 - config.beta2) * g.at(k) * g.at(k);
            const double m_hat = m.at(k) / bc1;
            const double v_hat = v.at(k) / bc2;
            p.at(k) -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

EvalOutputs evaluate_model(nn::ClassifierModel& model,
                           const std::vector<const connectome::BrainGraph*>& graphs) {
    if (graphs.empty()) throw DataError("evaluate: no graphs");
    nn::GraphBatch batch = nn::GraphBatch::from_graphs(graphs);
    Tape tape;
    nn::ForwardOutputs fwd = model.forward(tape, batch, nn::Mode::kEval, nullptr);
    Var loss = nll_loss(tape, fwd.log_probs, batch.labels);

    EvalOutputs out;
    out.mean_nll = tape.value(loss).item();
    out.labels = batch.labels;
    const Tensor& lp = tape.value(fwd.log_probs);
    for (std::size_t i = 0; i < lp.rows(); ++i) {
        out.predictions.push_back(lp.at(i, 1) >= lp.at(i, 0) ? 1 : 0);
        out.scores.push_back(std::exp(lp.at(i, 1)));
    }
    out.embeddings = tape.value(fwd.embeddings);
    return out;
}

namespace {

std::vector<const connectome::BrainGraph*> resolve_subset(
    const std::unordered_map<std::string, const connectome::BrainGraph*>& index,
    const std::vector<std::string>& ids) {
    std::vector<const connectome::BrainGraph*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw DataError("split references unknown subject " + id);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

TrainOutcome train_model(const std::vector<connectome::BrainGraph>& graphs,
                         const SplitAssignment& split, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
    config.validate();
    if (graphs.empty()) throw DataError("train: no graphs");
    std::unordered_map<std::string, const connectome::BrainGraph*> index;
    for (const auto& g : graphs) index[g.id] = &g;
    auto train_set = resolve_subset(index, split.train);
    auto val_set = resolve_subset(index, split.validation);
    auto test_set = resolve_subset(index, split.test);
    if (train_set.empty()) throw DataError("train: empty training set");

    const std::size_t input_dim = graphs.front().features.cols();
    Rng init_rng = Rng::stream(config.seed, kInitStream);
    Rng dropout_rng = Rng::stream(config.seed, kDropoutStream);
    Rng shuffle_rng = Rng::stream(config.seed, kShuffleStream);

    nn::ClassifierModel model =
        nn::ClassifierModel::init(config.model, config.classifier_config(input_dim), init_rng);
    nn::ClassifierModel best_model = model;

    AdamState adam;
    AdamConfig adam_cfg;
    adam_cfg.lr = config.learning_rate;

    RunResult result;
    result.seed = config.seed;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(train_set);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < train_set.size(); start += config.batch_size) {
            const std::size_t stop = std::min(start + config.batch_size, train_set.size());
            std::vector<const connectome::BrainGraph*> chunk(train_set.begin() + start,
                                                             train_set.begin() + stop);
            nn::GraphBatch batch = nn::GraphBatch::from_graphs(chunk);
            Tape tape;
            nn::ForwardOutputs fwd = model.forward(tape, batch, nn::Mode::kTrain, &dropout_rng);
            Var loss = nll_loss(tape, fwd.log_probs, batch.labels);
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(fwd.param_vars.size());
            for (Var pv : fwd.param_vars) grads.push_back(tape.grad(pv));
            adam_step(model.parameters(), grads, adam, adam_cfg);
            loss_sum += tape.value(loss).item() * static_cast<double>(chunk.size());
            seen += chunk.size();
        }
        const double train_loss = loss_sum / static_cast<double>(seen);
        result.train_loss.push_back(train_loss);

        double val_loss = std::numeric_limits<double>::quiet_NaN();
        if (!val_set.empty()) {
            val_loss = evaluate_model(model, val_set).mean_nll;
            result.val_loss.push_back(val_loss);
            if (val_loss < result.best_val_loss) {
                result.best_val_loss = val_loss;
                result.best_epoch = epoch;
                best_model = model;
                epochs_since_best = 0;
            } else {
                ++epochs_since_best;
            }
        }
        if (on_epoch) on_epoch(epoch, train_loss, val_loss);
        if (!val_set.empty() && config.patience > 0 && epochs_since_best >= config.patience) break;
    }

    if (!val_set.empty() && result.best_epoch > 0) model = best_model;

    TrainOutcome outcome{std::move(model), std::move(result)};
    if (!test_set.empty()) {
        EvalOutputs ev = evaluate_model(outcome.model, test_set);
        metrics::ConfusionMatrix cm = metrics::confusion(ev.predictions, ev.labels);
        outcome.result.test_metrics = metrics::classification_metrics(cm, ev.scores, ev.labels);
        outcome.result.has_test_metrics = true;
    }
    return outcome;
}

ReplicateSummary run_replicates(const std::vector<connectome::BrainGraph>& graphs,
                                const TrainConfig& config, std::size_t n_runs, std::size_t jobs,
                                const RunCallback& on_run) {
    if (n_runs == 0) throw ConfigError("replicate: n_runs must be positive");
    std::vector<std::pair<std::string, int>> subjects;
    subjects.reserve(graphs.size());
    for (const auto& g : graphs) subjects.emplace_back(g.id, g.label);

    ReplicateSummary summary;
    summary.runs.resize(n_runs);

    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= n_runs) return;
            try {
                TrainConfig run_config = config;
                run_config.seed = config.seed + k;
                SplitAssignment split = stratified_split(
                    subjects, kDefaultSplitRatios, derive_seed(run_config.seed, kSplitStream));
                TrainOutcome outcome = train_model(graphs, split, run_config);
                summary.runs[k] = outcome.result;
                if (on_run) {
                    std::lock_guard<std::mutex> lock(callback_mutex);
                    on_run(k, outcome.result, outcome.model, split);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, n_runs));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<metrics::MetricsReport> reports;
    reports.reserve(n_runs);
    for (const auto& r : summary.runs) {
        if (!r.has_test_metrics) throw DataError("replicate: run produced no test metrics");
        reports.push_back(r.test_metrics);
    }
    summary.aggregate = metrics::aggregate_runs(reports);
    return summary;
}

std::vector<SweepPoint> sweep(const std::vector<connectome::BrainGraph>& graphs,
                              const std::vector<TrainConfig>& grid) {
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    for (const auto& c : grid) c.validate();

    std::vector<std::pair<std::string, int>> subjects;
    subjects.reserve(graphs.size());
    for (const auto& g : graphs) subjects.emplace_back(g.id, g.label);

    std::vector<SweepPoint> points;
    points.reserve(grid.size());
    for (const auto& config : grid) {
        SplitAssignment split =
            stratified_split(subjects, kDefaultSplitRatios, derive_seed(config.seed, kSplitStream));
        TrainOutcome outcome = train_model(graphs, split, config);
        std::unordered_map<std::string, const connectome::BrainGraph*> index;
        for (const auto& g : graphs) index[g.id] = &g;
        auto val_set = resolve_subset(index, split.validation);
        SweepPoint point;
        point.config = config;
        if (!val_set.empty()) {
            EvalOutputs ev = evaluate_model(outcome.model, val_set);
            std::size_t correct = 0;
            for (std::size_t i = 0; i < ev.labels.size(); ++i)
                if (ev.predictions[i] == ev.labels[i]) ++correct;
            point.val_accuracy = static_cast<double>(correct) / static_cast<double>(ev.labels.size());
            point.val_loss = ev.mean_nll;
        }
        points.push_back(std::move(point));
    }
    std::stable_sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) {
        if (a.val_accuracy != b.val_accuracy) return a.val_accuracy > b.val_accuracy;
        return a.val_loss < b.val_loss;
    });
    return points;
}

}  // namespace braingat::train
