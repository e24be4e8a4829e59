#include "braingat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "braingat/errors.hpp"

namespace braingat::metrics {

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) throw DataError("confusion: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if ((predictions[i] != 0 && predictions[i] != 1) || (labels[i] != 0 && labels[i] != 1))
            throw DataError("confusion: values must be binary");
        if (labels[i] == 1) {
            predictions[i] == 1 ? ++cm.tp : ++cm.fn;
        } else {
            predictions[i] == 1 ? ++cm.fp : ++cm.tn;
        }
    }
    return cm;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("roc_auc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes required");
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double roc_auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("roc_auc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes required");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double auc = 0.0;
    double tp = 0.0, fp = 0.0, prev_tp = 0.0, prev_fp = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        // consume the whole tie group before emitting a curve point
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            labels[order[i]] == 1 ? ++tp : ++fp;
            ++i;
        }
        auc += (fp - prev_fp) * (tp + prev_tp) / 2.0;
        prev_tp = tp;
        prev_fp = fp;
    }
    return auc / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<GainPoint> cumulative_gain(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("cumulative_gain: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels)
        if (l == 1) ++n_pos;
    if (n_pos == 0) throw DataError("cumulative_gain: no positives");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<GainPoint> curve;
    curve.reserve(n);
    std::size_t found = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[order[k]] == 1) ++found;
        curve.push_back({static_cast<double>(k + 1) / static_cast<double>(n),
                         static_cast<double>(found) / static_cast<double>(n_pos)});
    }
    return curve;
}

MetricsReport classification_metrics(const ConfusionMatrix& cm, const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
    if (labels.empty()) throw DataError("classification_metrics: empty input");
    if (cm.total() != labels.size())
        throw DataError("classification_metrics: confusion inconsistent with labels");
    MetricsReport r;
    r.confusion = cm;
    const double total = static_cast<double>(cm.total());
    r.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
    r.precision = (cm.tp + cm.fp) == 0 ? 0.0
                                       : static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    r.recall = (cm.tp + cm.fn) == 0 ? 0.0
                                    : static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    r.f1 = (r.precision + r.recall) == 0.0 ? 0.0
                                           : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    r.auc = roc_auc(scores, labels);
    r.gain_curve = cumulative_gain(scores, labels);
    return r;
}

std::map<std::string, MetricAggregate> aggregate_runs(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw DataError("aggregate_runs: no runs");
    auto aggregate = [&](auto getter) {
        MetricAggregate agg;
        double sum = 0.0;
        agg.min = getter(runs[0]);
        agg.max = getter(runs[0]);
        for (const auto& r : runs) {
            const double v = getter(r);
            sum += v;
            agg.min = std::min(agg.min, v);
            agg.max = std::max(agg.max, v);
        }
        agg.mean = sum / static_cast<double>(runs.size());
        if (runs.size() > 1) {
            double ss = 0.0;
            for (const auto& r : runs) {
                const double d = getter(r) - agg.mean;
                ss += d * d;
            }
            agg.std = std::sqrt(ss / static_cast<double>(runs.size() - 1));
        }
        return agg;
    };
    std::map<std::string, MetricAggregate> out;
    out["accuracy"] = aggregate([](const MetricsReport& r) { return r.accuracy; });
    out["precision"] = aggregate([](const MetricsReport& r) { return r.precision; });
    out["recall"] = aggregate([](const MetricsReport& r) { return r.recall; });
    out["f1"] = aggregate([](const MetricsReport& r) { return r.f1; });
    out["auc"] = aggregate([](const MetricsReport& r) { return r.auc; });
    return out;
}

}  // namespace braingat::metrics
