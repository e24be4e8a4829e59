#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "braingat/connectome.hpp"
#include "braingat/errors.hpp"
#include "braingat/explain.hpp"
#include "braingat/ingest.hpp"
#include "braingat/metrics.hpp"
#include "braingat/nn.hpp"
#include "braingat/train.hpp"
#include "braingat/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace braingat;

namespace {

void log_event(const json& event) { std::cerr << event.dump() << "\n"; }

struct Options {
    std::string config_file;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    // synth
    std::size_t subjects_per_class = 50;
    std::size_t regions = 20;
    std::size_t timepoints = 200;
    std::string block;  // comma-separated region indices; empty = first quarter
    double coupling = 0.8;
    double noise = 1.0;

    // build-graphs
    std::string manifest;
    double threshold = 0.2;
    std::string features = "correlation-profile";
    std::size_t series_len = 200;

    // train / replicate / sweep
    std::string graphs_dir;
    double lr = 1e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 150;
    std::size_t patience = 30;
    std::size_t heads = 4;
    std::size_t blocks = 4;
    std::size_t hidden = 16;
    std::size_t fc = 32;
    double dropout1 = 0.1;
    double dropout = 0.2;
    std::string model = "gat";
    std::size_t runs = 30;
    std::string grid_file;

    // evaluate / explain
    std::string checkpoint;
    std::string split_file;
    std::string part = "test";
    std::string method = "both";
    std::size_t top_k = 5;
    std::size_t coalitions = 2048;
    std::string granularity = "region";
    std::size_t shap_subjects = 4;

    // verify
    bool grad_check_only = false;
};

json options_to_json(const Options& o) {
    return json{{"out", o.out_dir},
                {"seed", o.seed},
                {"jobs", o.jobs},
                {"subjects_per_class", o.subjects_per_class},
                {"regions", o.regions},
                {"timepoints", o.timepoints},
                {"block", o.block},
                {"coupling", o.coupling},
                {"noise", o.noise},
                {"manifest", o.manifest},
                {"threshold", o.threshold},
                {"features", o.features},
                {"series_len", o.series_len},
                {"graphs", o.graphs_dir},
                {"lr", o.lr},
                {"batch_size", o.batch_size},
                {"epochs", o.epochs},
                {"patience", o.patience},
                {"heads", o.heads},
                {"blocks", o.blocks},
                {"hidden", o.hidden},
                {"fc", o.fc},
                {"dropout1", o.dropout1},
                {"dropout", o.dropout},
                {"model", o.model},
                {"runs", o.runs},
                {"grid", o.grid_file},
                {"checkpoint", o.checkpoint},
                {"split", o.split_file},
                {"part", o.part},
                {"method", o.method},
                {"top_k", o.top_k},
                {"coalitions", o.coalitions},
                {"granularity", o.granularity},
                {"shap_subjects", o.shap_subjects}};
}

template <typename T>
void maybe_set(const json& doc, const char* key, T& target) {
    if (doc.contains(key)) target = doc.at(key).get<T>();
}

// Flags override config-file values, so the file is applied before parsing.
void apply_config_file(Options& o, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    maybe_set(doc, "out", o.out_dir);
    maybe_set(doc, "seed", o.seed);
    maybe_set(doc, "jobs", o.jobs);
    maybe_set(doc, "subjects_per_class", o.subjects_per_class);
    maybe_set(doc, "regions", o.regions);
    maybe_set(doc, "timepoints", o.timepoints);
    maybe_set(doc, "block", o.block);
    maybe_set(doc, "coupling", o.coupling);
    maybe_set(doc, "noise", o.noise);
    maybe_set(doc, "manifest", o.manifest);
    maybe_set(doc, "threshold", o.threshold);
    maybe_set(doc, "features", o.features);
    maybe_set(doc, "series_len", o.series_len);
    maybe_set(doc, "graphs", o.graphs_dir);
    maybe_set(doc, "lr", o.lr);
    maybe_set(doc, "batch_size", o.batch_size);
    maybe_set(doc, "epochs", o.epochs);
    maybe_set(doc, "patience", o.patience);
    maybe_set(doc, "heads", o.heads);
    maybe_set(doc, "blocks", o.blocks);
    maybe_set(doc, "hidden", o.hidden);
    maybe_set(doc, "fc", o.fc);
    maybe_set(doc, "dropout1", o.dropout1);
    maybe_set(doc, "dropout", o.dropout);
    maybe_set(doc, "model", o.model);
    maybe_set(doc, "runs", o.runs);
    maybe_set(doc, "grid", o.grid_file);
    maybe_set(doc, "checkpoint", o.checkpoint);
    maybe_set(doc, "split", o.split_file);
    maybe_set(doc, "part", o.part);
    maybe_set(doc, "method", o.method);
    maybe_set(doc, "top_k", o.top_k);
    maybe_set(doc, "coalitions", o.coalitions);
    maybe_set(doc, "granularity", o.granularity);
    maybe_set(doc, "shap_subjects", o.shap_subjects);
}

fs::path prepare_out_dir(const Options& o) {
    fs::path out(o.out_dir);
    fs::create_directories(out);
    std::ofstream cfg(out / "config.json");
    cfg << options_to_json(o).dump(2) << "\n";
    return out;
}

train::TrainConfig train_config_from(const Options& o) {
    train::TrainConfig c;
    c.learning_rate = o.lr;
    c.batch_size = o.batch_size;
    c.epochs = o.epochs;
    c.patience = o.patience;
    c.heads = o.heads;
    c.n_blocks = o.blocks;
    c.head_dim = o.hidden;
    c.fc_dim = o.fc;
    c.dropout_block1 = o.dropout1;
    c.dropout_rest = o.dropout;
    c.seed = o.seed;
    c.model = nn::parse_model_kind(o.model);
    return c;
}

std::vector<std::size_t> parse_block(const std::string& spec, std::size_t n_regions) {
    std::vector<std::size_t> block;
    if (spec.empty()) {
        const std::size_t k = std::max<std::size_t>(1, n_regions / 4);
        for (std::size_t i = 0; i < k; ++i) block.push_back(i);
        return block;
    }
    std::stringstream ss(spec);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (field.empty()) continue;
        block.push_back(static_cast<std::size_t>(std::stoull(field)));
    }
    if (block.empty()) throw ConfigError("empty planted block");
    return block;
}

std::vector<connectome::BrainGraph> load_graph_dir(const std::string& dir) {
    const fs::path index_path = fs::path(dir) / "index.json";
    std::ifstream in(index_path);
    if (!in) throw DataError("graph index not found: " + index_path.string());
    json index;
    try {
        in >> index;
    } catch (const json::exception& e) {
        throw DataError("graph index parse error: " + std::string(e.what()));
    }
    std::vector<connectome::BrainGraph> graphs;
    for (const auto& entry : index.at("graphs")) {
        graphs.push_back(connectome::load_graph(fs::path(dir) / entry.at("file").get<std::string>()));
    }
    if (graphs.empty()) throw DataError("graph directory is empty: " + dir);
    return graphs;
}

json metrics_to_json(const metrics::MetricsReport& m) {
    json gain = json::array();
    for (const auto& p : m.gain_curve) gain.push_back({p.fraction_samples, p.fraction_positives});
    return json{{"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"auc", m.auc},
                {"confusion",
                 {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn}, {"fn", m.confusion.fn}}},
                {"gain_curve", gain}};
}

json run_result_to_json(const train::RunResult& r) {
    json doc{{"seed", r.seed},
             {"train_loss", r.train_loss},
             {"val_loss", r.val_loss},
             {"best_epoch", r.best_epoch},
             {"best_val_loss", r.best_val_loss}};
    if (r.has_test_metrics) doc["test_metrics"] = metrics_to_json(r.test_metrics);
    return doc;
}

json split_to_json(const train::SplitAssignment& s) {
    return json{{"seed", s.seed}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

train::SplitAssignment split_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("split file not found: " + path);
    json doc;
    in >> doc;
    train::SplitAssignment s;
    s.seed = doc.value("seed", std::uint64_t{0});
    s.train = doc.at("train").get<std::vector<std::string>>();
    s.validation = doc.at("validation").get<std::vector<std::string>>();
    s.test = doc.at("test").get<std::vector<std::string>>();
    return s;
}

json aggregate_to_json(const std::map<std::string, metrics::MetricAggregate>& agg) {
    json doc;
    for (const auto& [name, a] : agg) {
        doc[name] = {{"mean", a.mean}, {"min", a.min}, {"max", a.max}, {"std", a.std}};
    }
    return doc;
}

int cmd_synth(const Options& o) {
    fs::path out = prepare_out_dir(o);
    ingest::SyntheticCohortSpec spec;
    spec.n_subjects_per_class = o.subjects_per_class;
    spec.n_regions = o.regions;
    spec.n_timepoints = o.timepoints;
    spec.planted_block = parse_block(o.block, o.regions);
    spec.coupling_strength = o.coupling;
    spec.noise_sigma = o.noise;
    spec.seed = o.seed;
    ingest::SyntheticCohort cohort = ingest::generate_synthetic_cohort(spec);
    ingest::write_synthetic_cohort(cohort, out);
    log_event({{"event", "synth"},
               {"subjects", cohort.manifest.subjects.size()},
               {"regions", spec.n_regions},
               {"out", out.string()}});
    return 0;
}

int cmd_build_graphs(const Options& o) {
    if (o.manifest.empty()) throw ConfigError("build-graphs: --manifest is required");
    fs::path out = prepare_out_dir(o);
    ingest::CohortManifest manifest = ingest::load_manifest(o.manifest);
    const fs::path base = fs::path(o.manifest).parent_path();

    connectome::FeatureOptions fopts;
    fopts.mode = connectome::parse_feature_mode(o.features);
    fopts.series_len = fopts.mode == connectome::FeatureMode::kCorrelationPlusSeries ? o.series_len : 0;

    json index;
    index["threshold"] = o.threshold;
    index["feature_mode"] = o.features;
    index["n_regions"] = manifest.n_regions;
    index["graphs"] = json::array();
    std::size_t feature_dim = 0;
    for (const auto& subject : manifest.subjects) {
        ingest::TimeSeriesMatrix ts =
            ingest::load_time_series(base / subject.path, manifest.n_regions);
        ts = ingest::preprocess(std::move(ts));
        connectome::ConnectivityMatrix conn = connectome::pearson_matrix(ts);
        Tensor features = connectome::node_features(conn, ts, fopts);
        feature_dim = features.cols();
        connectome::BrainGraph g = connectome::build_graph(
            conn, o.threshold, features, subject.label,
            connectome::default_region_names(manifest.n_regions));
        g.id = subject.id;
        const std::string file = "graph_" + subject.id + ".json";
        connectome::save_graph(g, out / file);
        index["graphs"].push_back({{"id", subject.id}, {"label", subject.label}, {"file", file}});
    }
    index["feature_dim"] = feature_dim;
    index["n_graphs"] = manifest.subjects.size();
    std::ofstream idx(out / "index.json");
    idx << index.dump(2) << "\n";
    log_event({{"event", "build-graphs"},
               {"graphs", manifest.subjects.size()},
               {"feature_dim", feature_dim},
               {"out", out.string()}});
    return 0;
}

int cmd_train(const Options& o) {
    if (o.graphs_dir.empty()) throw ConfigError("train: --graphs is required");
    fs::path out = prepare_out_dir(o);
    std::vector<connectome::BrainGraph> graphs = load_graph_dir(o.graphs_dir);
    train::TrainConfig config = train_config_from(o);
    config.validate();

    std::vector<std::pair<std::string, int>> subjects;
    for (const auto& g : graphs) subjects.emplace_back(g.id, g.label);
    train::SplitAssignment split = train::stratified_split(
        subjects, train::kDefaultSplitRatios, derive_seed(config.seed, train::kSplitStream));

    auto on_epoch = [](std::size_t epoch, double train_loss, double val_loss) {
        log_event({{"event", "epoch"}, {"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}});
    };
    train::TrainOutcome outcome = train::train_model(graphs, split, config, on_epoch);

    std::ofstream(out / "split.json") << split_to_json(split).dump(2) << "\n";
    std::ofstream(out / "run.json") << run_result_to_json(outcome.result).dump(2) << "\n";
    if (outcome.result.has_test_metrics) {
        std::ofstream(out / "metrics.json") << metrics_to_json(outcome.result.test_metrics).dump(2) << "\n";
    }
    nn::save_checkpoint(out / "checkpoint.bin", outcome.model);
    log_event({{"event", "train-done"},
               {"best_epoch", outcome.result.best_epoch},
               {"best_val_loss", outcome.result.best_val_loss},
               {"test_accuracy",
                outcome.result.has_test_metrics ? outcome.result.test_metrics.accuracy : -1.0}});
    return 0;
}

int cmd_replicate(const Options& o) {
    if (o.graphs_dir.empty()) throw ConfigError("replicate: --graphs is required");
    fs::path out = prepare_out_dir(o);
    std::vector<connectome::BrainGraph> graphs = load_graph_dir(o.graphs_dir);
    train::TrainConfig config = train_config_from(o);
    config.validate();

    auto on_run = [&](std::size_t k, const train::RunResult& result, nn::ClassifierModel& model,
                      const train::SplitAssignment& split) {
        const fs::path run_dir = out / "runs" / ("run_" + std::to_string(k));
        fs::create_directories(run_dir);
        std::ofstream(run_dir / "run.json") << run_result_to_json(result).dump(2) << "\n";
        std::ofstream(run_dir / "split.json") << split_to_json(split).dump(2) << "\n";
        nn::save_checkpoint(run_dir / "checkpoint.bin", model);
        log_event({{"event", "run-done"},
                   {"run", k},
                   {"accuracy", result.has_test_metrics ? result.test_metrics.accuracy : -1.0}});
    };
    train::ReplicateSummary summary =
        train::run_replicates(graphs, config, o.runs, o.jobs, on_run);

    json doc;
    doc["n_runs"] = o.runs;
    doc["base_seed"] = o.seed;
    doc["model"] = o.model;
    doc["runs"] = json::array();
    for (const auto& r : summary.runs) doc["runs"].push_back(run_result_to_json(r));
    doc["aggregate"] = aggregate_to_json(summary.aggregate);
    std::ofstream(out / "summary.json") << doc.dump(2) << "\n";
    log_event({{"event", "replicate-done"},
               {"runs", o.runs},
               {"mean_accuracy", summary.aggregate.at("accuracy").mean}});
    return 0;
}

int cmd_sweep(const Options& o) {
    if (o.graphs_dir.empty()) throw ConfigError("sweep: --graphs is required");
    if (o.grid_file.empty()) throw ConfigError("sweep: --grid is required");
    fs::path out = prepare_out_dir(o);
    std::vector<connectome::BrainGraph> graphs = load_graph_dir(o.graphs_dir);

    std::ifstream in(o.grid_file);
    if (!in) throw ConfigError("grid file not found: " + o.grid_file);
    json grid_doc;
    try {
        in >> grid_doc;
    } catch (const json::exception& e) {
        throw ConfigError("grid parse error: " + std::string(e.what()));
    }

    const train::TrainConfig base = train_config_from(o);
    std::vector<train::TrainConfig> grid{base};
    auto expand = [&grid](const json& values, auto setter) {
        if (values.is_null()) return;
        std::vector<train::TrainConfig> next;
        for (const auto& cfg : grid) {
            for (const auto& v : values) {
                train::TrainConfig c = cfg;
                setter(c, v);
                next.push_back(c);
            }
        }
        grid = std::move(next);
    };
    expand(grid_doc.value("learning_rate", json()),
           [](train::TrainConfig& c, const json& v) { c.learning_rate = v.get<double>(); });
    expand(grid_doc.value("batch_size", json()),
           [](train::TrainConfig& c, const json& v) { c.batch_size = v.get<std::size_t>(); });
    expand(grid_doc.value("epochs", json()),
           [](train::TrainConfig& c, const json& v) { c.epochs = v.get<std::size_t>(); });
    expand(grid_doc.value("heads", json()),
           [](train::TrainConfig& c, const json& v) { c.heads = v.get<std::size_t>(); });
    expand(grid_doc.value("n_blocks", json()),
           [](train::TrainConfig& c, const json& v) { c.n_blocks = v.get<std::size_t>(); });
    expand(grid_doc.value("head_dim", json()),
           [](train::TrainConfig& c, const json& v) { c.head_dim = v.get<std::size_t>(); });
    expand(grid_doc.value("fc_dim", json()),
           [](train::TrainConfig& c, const json& v) { c.fc_dim = v.get<std::size_t>(); });
    expand(grid_doc.value("dropout", json()),
           [](train::TrainConfig& c, const json& v) { c.dropout_rest = v.get<double>(); });
    expand(grid_doc.value("model", json()), [](train::TrainConfig& c, const json& v) {
        c.model = nn::parse_model_kind(v.get<std::string>());
    });
    for (const auto& c : grid) c.validate();

    std::vector<train::SweepPoint> points = train::sweep(graphs, grid);
    json doc;
    doc["results"] = json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        doc["results"].push_back({{"rank", i + 1},
                                  {"val_accuracy", p.val_accuracy},
                                  {"val_loss", p.val_loss},
                                  {"learning_rate", p.config.learning_rate},
                                  {"batch_size", p.config.batch_size},
                                  {"epochs", p.config.epochs},
                                  {"heads", p.config.heads},
                                  {"n_blocks", p.config.n_blocks},
                                  {"head_dim", p.config.head_dim},
                                  {"fc_dim", p.config.fc_dim},
                                  {"dropout", p.config.dropout_rest},
                                  {"model", nn::model_kind_name(p.config.model)}});
    }
    std::ofstream(out / "sweep.json") << doc.dump(2) << "\n";
    log_event({{"event", "sweep-done"}, {"points", points.size()}});
    return 0;
}

std::vector<const connectome::BrainGraph*> select_part(
    const std::vector<connectome::BrainGraph>& graphs, const Options& o,
    const std::string& part_name) {
    std::vector<const connectome::BrainGraph*> out;
    if (o.split_file.empty()) {
        for (const auto& g : graphs) out.push_back(&g);
        return out;
    }
    train::SplitAssignment split = split_from_json_file(o.split_file);
    const std::vector<std::string>* ids = nullptr;
    if (part_name == "train") ids = &split.train;
    else if (part_name == "validation") ids = &split.validation;
    else if (part_name == "test") ids = &split.test;
    else throw ConfigError("unknown split part: " + part_name);
    for (const auto& id : *ids) {
        auto it = std::find_if(graphs.begin(), graphs.end(),
                               [&](const connectome::BrainGraph& g) { return g.id == id; });
        if (it == graphs.end()) throw DataError("split references unknown subject " + id);
        out.push_back(&*it);
    }
    if (out.empty()) throw DataError("selected split part is empty");
    return out;
}

int cmd_evaluate(const Options& o) {
    if (o.graphs_dir.empty()) throw ConfigError("evaluate: --graphs is required");
    if (o.checkpoint.empty()) throw ConfigError("evaluate: --checkpoint is required");
    fs::path out = prepare_out_dir(o);
    std::vector<connectome::BrainGraph> graphs = load_graph_dir(o.graphs_dir);
    nn::ClassifierModel model = nn::load_checkpoint(o.checkpoint);
    std::vector<const connectome::BrainGraph*> subset = select_part(graphs, o, o.part);

    train::EvalOutputs ev = train::evaluate_model(model, subset);
    metrics::ConfusionMatrix cm = metrics::confusion(ev.predictions, ev.labels);
    metrics::MetricsReport report = metrics::classification_metrics(cm, ev.scores, ev.labels);

    std::ofstream(out / "metrics.json") << metrics_to_json(report).dump(2) << "\n";
    {
        std::ofstream csv(out / "confusion.csv");
        csv << "tp,fp,tn,fn\n"
            << cm.tp << "," << cm.fp << "," << cm.tn << "," << cm.fn << "\n";
    }
    {
        std::ofstream csv(out / "gain_curve.csv");
        csv << "fraction_samples,fraction_positives,baseline\n";
        char buf[96];
        for (const auto& p : report.gain_curve) {
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g\n", p.fraction_samples,
                          p.fraction_positives, p.fraction_samples);
            csv << buf;
        }
    }
    {
        std::ofstream csv(out / "embeddings.csv");
        csv << "id,label";
        for (std::size_t j = 0; j < ev.embeddings.cols(); ++j) csv << ",e" << j;
        csv << "\n";
        char buf[32];
        for (std::size_t i = 0; i < subset.size(); ++i) {
            csv << subset[i]->id << "," << ev.labels[i];
            for (std::size_t j = 0; j < ev.embeddings.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), ",%.17g", ev.embeddings.at(i, j));
                csv << buf;
            }
            csv << "\n";
        }
    }
    log_event({{"event", "evaluate-done"},
               {"subjects", subset.size()},
               {"accuracy", report.accuracy},
               {"auc", report.auc}});
    return 0;
}

int cmd_explain(const Options& o) {
    if (o.graphs_dir.empty()) throw ConfigError("explain: --graphs is required");
    if (o.checkpoint.empty()) throw ConfigError("explain: --checkpoint is required");
    if (o.method != "shap" && o.method != "attention" && o.method != "both")
        throw ConfigError("explain: --method must be shap, attention or both");
    fs::path out = prepare_out_dir(o);
    std::vector<connectome::BrainGraph> graphs = load_graph_dir(o.graphs_dir);
    nn::ClassifierModel model = nn::load_checkpoint(o.checkpoint);

    std::vector<const connectome::BrainGraph*> subjects = select_part(graphs, o, o.part);
    std::vector<const connectome::BrainGraph*> background =
        o.split_file.empty() ? subjects : select_part(graphs, o, "train");

    const std::vector<std::string>& region_names = graphs.front().region_names;
    const std::size_t n_regions = graphs.front().n_nodes;

    explain::ShapReport cohort_shap;
    if (o.method != "attention") {
        explain::ShapOptions sopts;
        sopts.kernel.n_coalition_samples = o.coalitions;
        sopts.kernel.seed = o.seed;
        sopts.granularity = o.granularity == "feature" ? explain::ShapGranularity::kFeature
                                                       : explain::ShapGranularity::kRegion;
        const std::size_t limit =
            o.shap_subjects == 0 ? subjects.size() : std::min(o.shap_subjects, subjects.size());
        std::vector<double> mean_scores(n_regions, 0.0);
        for (std::size_t s = 0; s < limit; ++s) {
            explain::ShapReport r = explain::subject_shap(model, background, *subjects[s], sopts);
            for (std::size_t i = 0; i < n_regions; ++i) mean_scores[i] += r.region_scores[i];
            log_event({{"event", "shap-subject"}, {"subject", subjects[s]->id}});
        }
        for (double& v : mean_scores) v /= static_cast<double>(limit);
        cohort_shap.region_scores = mean_scores;
        for (std::size_t i = 0; i < n_regions; ++i)
            cohort_shap.ranking.emplace_back(region_names[i], mean_scores[i]);
        std::stable_sort(cohort_shap.ranking.begin(), cohort_shap.ranking.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        std::ofstream csv(out / "shap.csv");
        csv << "region,score\n";
        char buf[96];
        for (const auto& [name, score] : cohort_shap.ranking) {
            std::snprintf(buf, sizeof(buf), "%s,%.17g\n", name.c_str(), score);
            csv << buf;
        }
    }

    explain::AttentionImportance attn;
    if (o.method != "shap") {
        attn = explain::attention_importance(model, subjects);
        std::ofstream csv(out / "attention.csv");
        csv << "region,score\n";
        char buf[96];
        for (const auto& r : attn.total) {
            std::snprintf(buf, sizeof(buf), "%s,%.17g\n", r.region.c_str(), r.score);
            csv << buf;
        }
        std::ofstream layers_csv(out / "attention_layers.csv");
        layers_csv << "layer,region,score\n";
        for (std::size_t l = 0; l < attn.per_layer.size(); ++l) {
            for (std::size_t r = 0; r < n_regions; ++r) {
                std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g\n", l, region_names[r].c_str(),
                              attn.per_layer[l][r]);
                layers_csv << buf;
            }
        }
    }

    if (o.method == "both") {
        std::ofstream md(out / "rankings.md");
        md << explain::export_rankings(cohort_shap, attn.total, o.top_k);
    }
    log_event({{"event", "explain-done"}, {"method", o.method}});
    return 0;
}

int cmd_verify(const Options& o) {
    std::vector<verify::CheckResult> results =
        o.grad_check_only ? verify::run_gradient_checks() : verify::run_all();
    bool all_pass = true;
    char buf[160];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof(buf), "check=%s value=%.3e bound=%.0e status=%s\n",
                      r.name.c_str(), r.value, r.bound, r.pass ? "PASS" : "FAIL");
        std::cout << buf;
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "verification passed" : "verification FAILED") << "\n";
    if (!all_pass) throw VerificationError("one or more verification checks failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    if (const char* env_out = std::getenv("BRAINGAT_OUT")) o.out_dir = env_out;
    if (o.out_dir.empty()) o.out_dir = "out";

    // config file values load first so explicit flags win
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(o, argv[i + 1]);
            } catch (const ConfigError& e) {
                log_event({{"event", "error"}, {"code", 2}, {"message", e.what()}});
                return 2;
            }
        }
    }

    CLI::App app{"brain-connectome graph attention classification pipeline"};
    app.require_subcommand(1);

    auto add_common = [&o](CLI::App* cmd) {
        cmd->add_option("--config", o.config_file, "JSON config file; flags override its values");
        cmd->add_option("--out", o.out_dir, "output directory")->capture_default_str();
        cmd->add_option("--seed", o.seed, "base random seed")->capture_default_str();
    };
    auto add_train_flags = [&o](CLI::App* cmd) {
        cmd->add_option("--graphs", o.graphs_dir, "graph directory from build-graphs");
        cmd->add_option("--lr", o.lr, "learning rate")->capture_default_str();
        cmd->add_option("--batch-size", o.batch_size, "mini-batch size (>= 2)")->capture_default_str();
        cmd->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
        cmd->add_option("--patience", o.patience, "early-stop patience; 0 disables")->capture_default_str();
        cmd->add_option("--heads", o.heads, "attention heads per GAT block")->capture_default_str();
        cmd->add_option("--blocks", o.blocks, "graph conv blocks")->capture_default_str();
        cmd->add_option("--hidden", o.hidden, "per-head output width")->capture_default_str();
        cmd->add_option("--fc", o.fc, "fully connected hidden width")->capture_default_str();
        cmd->add_option("--dropout1", o.dropout1, "dropout after block 1")->capture_default_str();
        cmd->add_option("--dropout", o.dropout, "dropout after later blocks and FC1")->capture_default_str();
        cmd->add_option("--model", o.model, "gat or gcn")->capture_default_str();
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort with a planted class signal");
    add_common(synth);
    synth->add_option("--subjects,--subjects-per-class", o.subjects_per_class, "subjects per class")
        ->capture_default_str();
    synth->add_option("--regions", o.regions, "regions (graph nodes)")->capture_default_str();
    synth->add_option("--timepoints", o.timepoints, "time points per subject")->capture_default_str();
    synth->add_option("--block", o.block, "planted region indices, comma separated; default first quarter");
    synth->add_option("--coupling", o.coupling, "planted signal coupling in (0,1)")->capture_default_str();
    synth->add_option("--noise", o.noise, "noise sigma")->capture_default_str();

    CLI::App* build = app.add_subcommand("build-graphs", "build brain graphs from a cohort manifest");
    add_common(build);
    build->add_option("--manifest", o.manifest, "cohort manifest JSON");
    build->add_option("--threshold", o.threshold, "absolute correlation threshold")->capture_default_str();
    build->add_option("--features", o.features, "correlation-profile or correlation-plus-series")
        ->capture_default_str();
    build->add_option("--series-len", o.series_len, "time points appended in correlation-plus-series mode")
        ->capture_default_str();

    CLI::App* train_cmd = app.add_subcommand("train", "train a single classifier");
    add_common(train_cmd);
    add_train_flags(train_cmd);

    CLI::App* replicate = app.add_subcommand("replicate", "run independent replicates and aggregate metrics");
    add_common(replicate);
    add_train_flags(replicate);
    replicate->add_option("--runs", o.runs, "number of replicate runs")->capture_default_str();
    replicate->add_option("--jobs", o.jobs, "concurrent runs")->capture_default_str();

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid search over training configurations");
    add_common(sweep_cmd);
    add_train_flags(sweep_cmd);
    sweep_cmd->add_option("--grid", o.grid_file, "JSON grid of hyperparameter lists");
    sweep_cmd->add_option("--jobs", o.jobs, "reserved; sweep points run sequentially")->capture_default_str();

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint and export metrics");
    add_common(evaluate);
    evaluate->add_option("--graphs", o.graphs_dir, "graph directory");
    evaluate->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    evaluate->add_option("--split", o.split_file, "split JSON; restricts evaluation to --part");
    evaluate->add_option("--part", o.part, "train, validation or test")->capture_default_str();

    CLI::App* explain_cmd = app.add_subcommand("explain", "region importance via SHAP and attention");
    add_common(explain_cmd);
    explain_cmd->add_option("--graphs", o.graphs_dir, "graph directory");
    explain_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    explain_cmd->add_option("--split", o.split_file, "split JSON; explains --part, background = train part");
    explain_cmd->add_option("--part", o.part, "subjects to explain")->capture_default_str();
    explain_cmd->add_option("--method", o.method, "shap, attention or both")->capture_default_str();
    explain_cmd->add_option("--top-k", o.top_k, "rows in the ranking table")->capture_default_str();
    explain_cmd->add_option("--coalitions", o.coalitions, "sampled coalitions per subject")
        ->capture_default_str();
    explain_cmd->add_option("--granularity", o.granularity, "region or feature masking")
        ->capture_default_str();
    explain_cmd->add_option("--shap-subjects", o.shap_subjects, "subjects to average SHAP over; 0 = all")
        ->capture_default_str();

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the numeric verification suites");
    add_common(verify_cmd);
    verify_cmd->add_flag("--grad-check", o.grad_check_only, "gradient checks only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        log_event({{"event", "error"}, {"code", 2}, {"message", e.what()}});
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(o);
        if (build->parsed()) return cmd_build_graphs(o);
        if (train_cmd->parsed()) return cmd_train(o);
        if (replicate->parsed()) return cmd_replicate(o);
        if (sweep_cmd->parsed()) return cmd_sweep(o);
        if (evaluate->parsed()) return cmd_evaluate(o);
        if (explain_cmd->parsed()) return cmd_explain(o);
        if (verify_cmd->parsed()) return cmd_verify(o);
    } catch (const ConfigError& e) {
        log_event({{"event", "error"}, {"code", 2}, {"message", e.what()}});
        return 2;
    } catch (const DataError& e) {
        log_event({{"event", "error"}, {"code", 3}, {"message", e.what()}});
        return 3;
    } catch (const NumericError& e) {
        log_event({{"event", "error"}, {"code", 4}, {"message", e.what()}});
        return 4;
    } catch (const VerificationError& e) {
        log_event({{"event", "error"}, {"code", 5}, {"message", e.what()}});
        return 5;
    } catch (const std::exception& e) {
        log_event({{"event", "error"}, {"code", 1}, {"message", e.what()}});
        return 1;
    }
    return 0;
}
