#pragma once

#include <map>
#include <string>
#include <vector>

namespace braingat::metrics {

/// Binary confusion counts; the positive class is label 1.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

struct GainPoint {
    double fraction_samples = 0.0;
    double fraction_positives = 0.0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    std::vector<GainPoint> gain_curve;
    ConfusionMatrix confusion;
};

/// Exact rank statistic: P(score+ > score-) + 0.5 P(tie). Primary AUC path.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Trapezoidal area under the threshold-swept ROC curve; cross-check route.
double roc_auc_trapezoid(const std::vector<double>& scores, const std::vector<int>& labels);

/// Samples sorted by descending score (ties stably by original index);
/// point k is (k/N, positives in top k / total positives).
std::vector<GainPoint> cumulative_gain(const std::vector<double>& scores,
                                       const std::vector<int>& labels);

/// Rates from the confusion matrix plus rank AUC and gain curve from the
/// scores. Zero-denominator cases yield 0.
MetricsReport classification_metrics(const ConfusionMatrix& cm, const std::vector<double>& scores,
                                     const std::vector<int>& labels);

struct MetricAggregate {
    double mean = 0.0, min = 0.0, max = 0.0, std = 0.0;  // sample std, n-1
};

/// Per-metric aggregate over replicate runs, keyed accuracy / precision /
/// recall / f1 / auc.
std::map<std::string, MetricAggregate> aggregate_runs(const std::vector<MetricsReport>& runs);

}  // namespace braingat::metrics
