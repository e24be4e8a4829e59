#include <doctest.h>

#include <cmath>

#include "braingat/errors.hpp"
#include "braingat/metrics.hpp"
#include "braingat/rng.hpp"
#include "braingat/verify.hpp"

using namespace braingat;
using namespace braingat::metrics;

TEST_SUITE("metrics") {

TEST_CASE("confusion: best-run narrative of 88 subjects") {
    // 1 false positive, 2 false negatives, 85 correct
    std::vector<int> labels, preds;
    for (int i = 0; i < 44; ++i) labels.push_back(1);
    for (int i = 0; i < 44; ++i) labels.push_back(0);
    preds = labels;
    preds[0] = 0;   // fn
    preds[1] = 0;   // fn
    preds[44] = 1;  // fp
    ConfusionMatrix cm = confusion(preds, labels);
    CHECK(cm.fp == 1);
    CHECK(cm.fn == 2);
    CHECK(cm.tp + cm.tn == 85);
    CHECK(cm.total() == 88);

    std::vector<double> scores(88);
    for (std::size_t i = 0; i < 88; ++i) scores[i] = preds[i] == 1 ? 0.9 : 0.1;
    MetricsReport r = classification_metrics(cm, scores, labels);
    CHECK(std::abs(r.accuracy * 100.0 - 96.59) <= 0.01);
}

TEST_CASE("confusion: all-correct and the 2x2 enumeration") {
    ConfusionMatrix perfect = confusion({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);

    ConfusionMatrix cm = confusion({1, 0, 1, 0}, {1, 1, 0, 0});
    CHECK(cm.tp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.fp == 1);
    CHECK(cm.tn == 1);
}

TEST_CASE("confusion input validation") {
    CHECK_THROWS_AS(confusion({1, 0}, {1}), DataError);
    CHECK_THROWS_AS(confusion({2, 0}, {1, 0}), DataError);
}

TEST_CASE("confusion matches brute-force counting on random vectors") {
    Rng rng(404);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 1 + rng.index(60);
        std::vector<int> preds(n), labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = rng.uniform() < 0.5 ? 0 : 1;
            labels[i] = rng.uniform() < 0.5 ? 0 : 1;
        }
        ConfusionMatrix cm = confusion(preds, labels);
        std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == 1 && preds[i] == 1) ++tp;
            if (labels[i] == 0 && preds[i] == 1) ++fp;
            if (labels[i] == 0 && preds[i] == 0) ++tn;
            if (labels[i] == 1 && preds[i] == 0) ++fn;
        }
        CHECK(cm.tp == tp);
        CHECK(cm.fp == fp);
        CHECK(cm.tn == tn);
        CHECK(cm.fn == fn);
    }
}

TEST_CASE("classification_metrics: perfect classifier and hand arithmetic") {
    std::vector<int> labels{1, 1, 0, 0};
    std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
    ConfusionMatrix perfect = confusion({1, 1, 0, 0}, labels);
    MetricsReport r = classification_metrics(perfect, scores, labels);
    CHECK(r.accuracy == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.auc == 1.0);

    // tp=3 fp=1 fn=1 tn=5
    std::vector<int> labels2{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<int> preds2{1, 1, 1, 0, 1, 0, 0, 0, 0, 0};
    std::vector<double> scores2{0.9, 0.8, 0.7, 0.3, 0.6, 0.2, 0.2, 0.1, 0.1, 0.1};
    ConfusionMatrix cm = confusion(preds2, labels2);
    MetricsReport r2 = classification_metrics(cm, scores2, labels2);
    CHECK(r2.precision == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r2.recall == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r2.f1 == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r2.accuracy == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("f1 is the harmonic mean of emitted precision and recall") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 4 + rng.index(40);
        std::vector<int> preds(n), labels(n);
        std::vector<double> scores(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = rng.uniform() < 0.5;
            labels[i] = rng.uniform() < 0.5;
            scores[i] = rng.uniform();
            (labels[i] ? pos : neg) = true;
        }
        if (!pos) labels[0] = 1;
        if (!neg) labels[1] = 0;
        MetricsReport r = classification_metrics(confusion(preds, labels), scores, labels);
        const double acc_direct =
            static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(n);
        CHECK(r.accuracy == acc_direct);
        if (r.precision + r.recall > 0.0) {
            const double harmonic = 2.0 * r.precision * r.recall / (r.precision + r.recall);
            CHECK(std::abs(r.f1 - harmonic) <= 1e-12);
        } else {
            CHECK(r.f1 == 0.0);
        }
    }
}

TEST_CASE("zero-denominator conventions pin precision, recall and f1 to zero") {
    // no positive predictions: tp + fp = 0
    std::vector<int> labels{1, 0};
    std::vector<double> scores{0.4, 0.3};
    MetricsReport r = classification_metrics(confusion({0, 0}, labels), scores, labels);
    CHECK(r.precision == 0.0);
    CHECK(r.f1 == 0.0);
    CHECK(r.recall == 0.0);  // tp = 0
}

TEST_CASE("roc_auc: separated, tied and hand-enumerated cases") {
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
    CHECK(roc_auc({0.9, 0.8, 0.4, 0.3}, {1, 0, 1, 0}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(roc_auc({0.9, 0.8}, {1, 1}), DataError);
}

TEST_CASE("roc_auc is invariant under strictly monotone score transforms") {
    Rng rng(11);
    std::vector<double> scores(30);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    std::vector<double> warped(30);
    for (std::size_t i = 0; i < 30; ++i) warped[i] = std::exp(3.0 * scores[i]) + 5.0;
    CHECK(roc_auc(scores, labels) == doctest::Approx(roc_auc(warped, labels)).epsilon(1e-12));
}

TEST_CASE("rank AUC agrees with trapezoidal AUC across random tied sets") {
    verify::CheckResult r = verify::metric_cross_check();
    INFO("max |rank - trapezoid| ", r.value);
    CHECK(r.value <= r.bound);
}

TEST_CASE("cumulative_gain: perfect, reversed and hand-enumerated rankings") {
    // perfect: positives first; prevalence 0.5
    auto perfect = cumulative_gain({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(perfect[1].fraction_samples == doctest::Approx(0.5));
    CHECK(perfect[1].fraction_positives == doctest::Approx(1.0));
    CHECK(perfect[3].fraction_positives == doctest::Approx(1.0));

    // reversed: nothing found until the last prevalence fraction
    auto reversed = cumulative_gain({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0});
    CHECK(reversed[1].fraction_positives == doctest::Approx(0.0));
    CHECK(reversed[2].fraction_positives == doctest::Approx(0.5));
    CHECK(reversed[3].fraction_positives == doctest::Approx(1.0));

    auto curve = cumulative_gain({0.9, 0.7, 0.6, 0.2}, {1, 0, 1, 0});
    REQUIRE(curve.size() == 4);
    CHECK(curve[0].fraction_samples == doctest::Approx(0.25));
    CHECK(curve[0].fraction_positives == doctest::Approx(0.5));
    CHECK(curve[1].fraction_samples == doctest::Approx(0.5));
    CHECK(curve[1].fraction_positives == doctest::Approx(0.5));
    CHECK(curve[2].fraction_samples == doctest::Approx(0.75));
    CHECK(curve[2].fraction_positives == doctest::Approx(1.0));
    CHECK(curve[3].fraction_samples == doctest::Approx(1.0));
    CHECK(curve[3].fraction_positives == doctest::Approx(1.0));

    CHECK_THROWS_AS(cumulative_gain({0.5, 0.4}, {0, 0}), DataError);
}

TEST_CASE("cumulative_gain is monotone and ends at (1, 1)") {
    Rng rng(31);
    std::vector<double> scores(40);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) {
        scores[i] = std::floor(rng.uniform() * 5.0) / 5.0;
        labels[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    labels[7] = 1;
    auto curve = cumulative_gain(scores, labels);
    CHECK(curve.front().fraction_samples == doctest::Approx(1.0 / 40.0));
    CHECK(curve.back().fraction_samples == doctest::Approx(1.0));
    CHECK(curve.back().fraction_positives == doctest::Approx(1.0));
    for (std::size_t k = 1; k < curve.size(); ++k)
        CHECK(curve[k].fraction_positives >= curve[k - 1].fraction_positives);
}

TEST_CASE("aggregate_runs: single run and two-run hand arithmetic") {
    MetricsReport a;
    a.accuracy = 0.8;
    a.precision = 0.7;
    a.recall = 0.9;
    a.f1 = 0.788;
    a.auc = 0.85;
    auto single = aggregate_runs({a});
    CHECK(single.at("accuracy").mean == 0.8);
    CHECK(single.at("accuracy").min == 0.8);
    CHECK(single.at("accuracy").max == 0.8);
    CHECK(single.at("accuracy").std == 0.0);

    MetricsReport b = a;
    b.accuracy = 0.9;
    auto both = aggregate_runs({a, b});
    CHECK(both.at("accuracy").mean == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(both.at("accuracy").std == doctest::Approx(0.07071067811865475).epsilon(1e-9));
    CHECK(both.at("accuracy").min == 0.8);
    CHECK(both.at("accuracy").max == 0.9);
    // mirrors the report columns: average / minimum / maximum / standard deviation
    for (const char* key : {"accuracy", "precision", "recall", "f1", "auc"})
        CHECK(both.count(key) == 1);

    CHECK_THROWS_AS(aggregate_runs({}), DataError);
}

}  // TEST_SUITE
