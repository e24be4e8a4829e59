#include "braingat/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "braingat/explain.hpp"
#include "braingat/metrics.hpp"
#include "braingat/tape.hpp"
#include "braingat/train.hpp"

namespace braingat::verify {

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
    return t;
}

// Entries within `margin` of the kink at 0 are resampled.
Tensor random_tensor_off_kink(Rng& rng, std::vector<std::size_t> shape, double margin = 1e-3) {
    Tensor t = random_tensor(rng, std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        while (std::abs(t.at(i)) < margin) t.at(i) = rng.uniform(-2.0, 2.0);
    }
    return t;
}

Tensor random_positive_tensor(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 0.5 + 2.0 * rng.uniform();
    return t;
}

// Per-group top-two gap of at least 1e-3 so max() has a stable argmax.
Tensor random_tensor_unique_max(Rng& rng, std::size_t rows, std::size_t cols, int axis) {
    for (;;) {
        Tensor t = random_tensor(rng, {rows, cols});
        bool ok = true;
        const std::size_t groups = axis == 0 ? cols : rows;
        const std::size_t extent = axis == 0 ? rows : cols;
        for (std::size_t g = 0; g < groups && ok; ++g) {
            double top = -1e300, second = -1e300;
            for (std::size_t k = 0; k < extent; ++k) {
                const double v = axis == 0 ? t.at(k, g) : t.at(g, k);
                if (v > top) {
                    second = top;
                    top = v;
                } else if (v > second) {
                    second = v;
                }
            }
            ok = (top - second) >= 1e-3;
        }
        if (ok) return t;
    }
}

// Scalarizes a tensor output through fixed random weights so every output
// coordinate participates in the gradient.
Var weighted_total(Tape& tape, Var out, std::uint64_t weight_seed) {
    Rng wrng(derive_seed(weight_seed, 77));
    const Tensor& v = tape.value(out);
    Tensor weights(v.shape());
    for (std::size_t i = 0; i < weights.size(); ++i) weights.at(i) = wrng.uniform(-1.0, 1.0);
    return tape.sum(tape.multiply(out, tape.constant(std::move(weights))));
}

struct PrimitiveCheck {
    std::string name;
    std::function<Tensor(Rng&)> input;
    std::function<Var(Tape&, Var, std::uint64_t)> build;  // seed feeds constants
};

std::vector<PrimitiveCheck> primitive_checks() {
    auto mat34 = [](Rng& rng) { return random_tensor(rng, {3, 4}); };
    std::vector<PrimitiveCheck> checks;

    checks.push_back({"add", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 1));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.add(x, c), s);
                      }});
    checks.push_back({"add_row_broadcast",
                      [](Rng& rng) { return random_tensor(rng, {1, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 2));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.add(c, x), s);
                      }});
    checks.push_back({"add_scalar", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.add_scalar(x, 0.37), s);
                      }});
    checks.push_back({"multiply", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 3));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.multiply(x, c), s);
                      }});
    checks.push_back({"multiply_row_broadcast",
                      [](Rng& rng) { return random_tensor(rng, {1, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 4));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.multiply(c, x), s);
                      }});
    checks.push_back({"scalar_multiply", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.scalar_multiply(x, -1.7), s);
                      }});
    checks.push_back({"matmul_lhs", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 5));
                          Var c = t.constant(random_tensor(crng, {4, 2}));
                          return weighted_total(t, t.matmul(x, c), s);
                      }});
    checks.push_back({"matmul_rhs",
                      [](Rng& rng) { return random_tensor(rng, {4, 2}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 6));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.matmul(c, x), s);
                      }});
    checks.push_back({"concat_axis0", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 7));
                          Var c = t.constant(random_tensor(crng, {2, 4}));
                          return weighted_total(t, t.concat(0, {x, c}), s);
                      }});
    checks.push_back({"concat_axis1", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 8));
                          Var c = t.constant(random_tensor(crng, {3, 2}));
                          return weighted_total(t, t.concat(1, {c, x}), s);
                      }});
    checks.push_back({"exp", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.exp(x), s);
                      }});
    checks.push_back({"log",
                      [](Rng& rng) { return random_positive_tensor(rng, {3, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.log(x), s);
                      }});
    checks.push_back({"sum", mat34, [](Tape& t, Var x, std::uint64_t) { return t.sum(x); }});
    checks.push_back({"sum_axis0", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.sum(x, 0), s);
                      }});
    checks.push_back({"sum_axis1", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.sum(x, 1), s);
                      }});
    checks.push_back({"mean", mat34, [](Tape& t, Var x, std::uint64_t) { return t.mean(x); }});
    checks.push_back({"mean_axis0", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.mean(x, 0), s);
                      }});
    checks.push_back({"mean_axis1", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.mean(x, 1), s);
                      }});
    checks.push_back({"max_axis0",
                      [](Rng& rng) { return random_tensor_unique_max(rng, 3, 4, 0); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.max(x, 0), s);
                      }});
    checks.push_back({"max_axis1",
                      [](Rng& rng) { return random_tensor_unique_max(rng, 3, 4, 1); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.max(x, 1), s);
                      }});
    checks.push_back({"transpose", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.transpose(x), s);
                      }});
    checks.push_back({"gather_rows", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.gather_rows(x, {2, 0, 1, 2}), s);
                      }});
    checks.push_back({"scatter_add_rows",
                      [](Rng& rng) { return random_tensor(rng, {4, 3}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.scatter_add_rows(x, {0, 2, 2, 1}, 3), s);
                      }});
    checks.push_back({"relu",
                      [](Rng& rng) { return random_tensor_off_kink(rng, {3, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.relu(x), s);
                      }});
    checks.push_back({"elu",
                      [](Rng& rng) { return random_tensor_off_kink(rng, {3, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.elu(x), s);
                      }});
    checks.push_back({"leaky_relu",
                      [](Rng& rng) { return random_tensor_off_kink(rng, {3, 4}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.leaky_relu(x, 0.2), s);
                      }});
    checks.push_back({"scale_rows_matrix", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 9));
                          Var c = t.constant(random_tensor(crng, {3, 1}));
                          return weighted_total(t, t.scale_rows(x, c), s);
                      }});
    checks.push_back({"scale_rows_scale",
                      [](Rng& rng) { return random_tensor(rng, {3, 1}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          Rng crng(derive_seed(s, 10));
                          Var c = t.constant(random_tensor(crng, {3, 4}));
                          return weighted_total(t, t.scale_rows(c, x), s);
                      }});
    checks.push_back({"segment_softmax",
                      [](Rng& rng) { return random_tensor(rng, {6}); },
                      [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.segment_softmax(x, {0, 0, 1, 1, 1, 2}, 3), s);
                      }});
    checks.push_back({"log_softmax_rows", mat34, [](Tape& t, Var x, std::uint64_t s) {
                          return weighted_total(t, t.log_softmax_rows(x), s);
                      }});
    return checks;
}

}  // namespace

connectome::BrainGraph random_graph(Rng& rng, std::size_t n_nodes, std::size_t feature_dim,
                                    double edge_prob, int label) {
    connectome::BrainGraph g;
    g.n_nodes = n_nodes;
    g.label = label;
    g.region_names = connectome::default_region_names(n_nodes);
    g.features = random_tensor(rng, {n_nodes, feature_dim}, -1.0, 1.0);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        for (std::size_t j = i + 1; j < n_nodes; ++j) {
            if (rng.uniform() < edge_prob) g.edges.push_back({i, j, rng.uniform(-1.0, 1.0)});
        }
    }
    return g;
}

std::vector<CheckResult> gradient_primitive_suite() {
    std::vector<CheckResult> results;
    for (const auto& check : primitive_checks()) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(derive_seed(seed, 1000));
            Tensor x = check.input(rng);
            auto build = [&check, seed](Tape& t, Var leaf) { return check.build(t, leaf, seed); };
            worst = std::max(worst, finite_difference_check(build, x));
        }
        results.push_back({"grad." + check.name, worst, 1e-4, worst <= 1e-4});
    }
    return results;
}

CheckResult gradient_model_check() {
    Rng graph_rng(4242);
    connectome::BrainGraph g1 = random_graph(graph_rng, 5, 4, 0.5, 0);
    connectome::BrainGraph g2 = random_graph(graph_rng, 5, 4, 0.5, 1);
    g1.id = "g1";
    g2.id = "g2";
    nn::GraphBatch batch = nn::GraphBatch::from_graphs({&g1, &g2});

    nn::ClassifierConfig config;
    config.input_dim = 4;
    config.n_blocks = 7;
    config.heads = 2;
    config.head_dim = 3;
    config.fc_dim = 4;
    Rng init_rng(7);
    nn::ClassifierModel model = nn::ClassifierModel::init(nn::ModelKind::kGat, config, init_rng);
    const std::vector<int> labels = batch.labels;

    auto loss_value = [&]() {
        Tape tape;
        nn::ForwardOutputs out = model.forward(tape, batch, nn::Mode::kEval, nullptr);
        return tape.value(train::nll_loss(tape, out.log_probs, labels)).item();
    };

    std::vector<Tensor> grads;
    {
        Tape tape;
        nn::ForwardOutputs out = model.forward(tape, batch, nn::Mode::kEval, nullptr);
        Var loss = train::nll_loss(tape, out.log_probs, labels);
        tape.backward(loss);
        for (Var pv : out.param_vars) grads.push_back(tape.grad(pv));
    }

    const double eps = 1e-5;
    double worst = 0.0;
    auto params = model.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double orig = p.at(k);
            p.at(k) = orig + eps;
            const double fp = loss_value();
            p.at(k) = orig - eps;
            const double fm = loss_value();
            p.at(k) = orig;
            const double g_fd = (fp - fm) / (2.0 * eps);
            const double g_ad = grads[pi].at(k);
            const double denom = std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
            worst = std::max(worst, std::abs(g_ad - g_fd) / denom);
        }
    }
    return {"grad.gat_classifier_7_blocks", worst, 1e-3, worst <= 1e-3};
}

std::vector<CheckResult> shap_oracle_suite() {
    std::vector<CheckResult> results;
    for (std::size_t m : {std::size_t{3}, std::size_t{5}, std::size_t{8}}) {
        for (int model_kind = 0; model_kind < 2; ++model_kind) {
            Rng rng(derive_seed(900 + m, static_cast<std::uint64_t>(model_kind)));
            explain::ModelFn model_fn;
            if (model_kind == 0) {
                std::vector<double> w(m);
                for (double& v : w) v = rng.uniform(-1.0, 1.0);
                const double bias = rng.uniform(-0.5, 0.5);
                model_fn = [w, bias](const std::vector<double>& z) {
                    double acc = bias;
                    for (std::size_t i = 0; i < z.size(); ++i) acc += w[i] * z[i];
                    return acc;
                };
            } else {
                const std::size_t hidden = 4;
                std::vector<double> w1(hidden * m), b1(hidden), w2(hidden);
                for (double& v : w1) v = rng.uniform(-1.0, 1.0);
                for (double& v : b1) v = rng.uniform(-0.5, 0.5);
                for (double& v : w2) v = rng.uniform(-1.0, 1.0);
                model_fn = [w1, b1, w2, m, hidden](const std::vector<double>& z) {
                    double acc = 0.0;
                    for (std::size_t h = 0; h < hidden; ++h) {
                        double pre = b1[h];
                        for (std::size_t i = 0; i < m; ++i) pre += w1[h * m + i] * z[i];
                        acc += w2[h] * std::tanh(pre);
                    }
                    return acc;
                };
            }
            std::vector<double> x(m);
            for (double& v : x) v = rng.uniform(-2.0, 2.0);
            std::vector<std::vector<double>> background;
            for (int b = 0; b < 5; ++b) {
                std::vector<double> row(m);
                for (double& v : row) v = rng.uniform(-2.0, 2.0);
                background.push_back(std::move(row));
            }
            explain::ShapConfig config;  // enumeration covers 2^8
            const std::vector<double> phi = explain::kernel_shap(model_fn, background, x, config);
            const std::vector<double> oracle = explain::exact_shapley(model_fn, background, x);
            double worst = 0.0;
            for (std::size_t i = 0; i < m; ++i) worst = std::max(worst, std::abs(phi[i] - oracle[i]));

            std::vector<double> mean(m, 0.0);
            for (const auto& row : background)
                for (std::size_t i = 0; i < m; ++i) mean[i] += row[i] / background.size();
            const double efficiency_gap = std::abs(
                std::accumulate(phi.begin(), phi.end(), 0.0) - (model_fn(x) - model_fn(mean)));

            const std::string tag =
                std::string(model_kind == 0 ? "linear" : "mlp") + "_m" + std::to_string(m);
            results.push_back({"shap.oracle_" + tag, worst, 1e-6, worst <= 1e-6});
            results.push_back(
                {"shap.efficiency_" + tag, efficiency_gap, 1e-9, efficiency_gap <= 1e-9});
        }
    }
    return results;
}

CheckResult attention_normalization_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(seed, 31337));
        const std::size_t n = 4 + static_cast<std::size_t>(rng.index(17));  // 4..20 nodes
        const std::size_t d = 3, dh = 4;
        connectome::BrainGraph g = random_graph(rng, n, d, 0.3, 0);
        g.id = "g";
        nn::GraphBatch batch = nn::GraphBatch::from_graphs({&g});
        for (int head = 0; head < 2; ++head) {
            Tape tape;
            Var h = tape.constant(batch.features);
            Var w = tape.leaf(random_tensor(rng, {d, dh}), true);
            Var a = tape.leaf(random_tensor(rng, {2 * dh, 1}), true);
            Var alpha = nn::gat_attention(tape, h, batch.loop_src, batch.loop_dst, n, w, a, 0.2);
            const Tensor& av = tape.value(alpha);
            std::vector<double> sums(n, 0.0);
            for (std::size_t e = 0; e < batch.loop_dst.size(); ++e)
                sums[batch.loop_dst[e]] += av.at(e);
            for (double s : sums) worst = std::max(worst, std::abs(s - 1.0));
        }
    }
    return {"attention.normalization", worst, 1e-6, worst <= 1e-6};
}

CheckResult metric_cross_check() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(derive_seed(seed, 555));
        const std::size_t n = 5 + rng.index(46);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores force ties through both AUC routes
            scores[i] = std::floor(rng.uniform() * 10.0) / 10.0;
            labels[i] = rng.uniform() < 0.5 ? 0 : 1;
            (labels[i] == 1 ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[n - 1] = 0;
        const double rank = metrics::roc_auc(scores, labels);
        const double trap = metrics::roc_auc_trapezoid(scores, labels);
        worst = std::max(worst, std::abs(rank - trap));
    }
    return {"metrics.auc_rank_vs_trapezoid", worst, 1e-9, worst <= 1e-9};
}

std::vector<CheckResult> run_gradient_checks() {
    std::vector<CheckResult> results = gradient_primitive_suite();
    results.push_back(gradient_model_check());
    return results;
}

std::vector<CheckResult> run_all() {
    std::vector<CheckResult> results = run_gradient_checks();
    for (auto& r : shap_oracle_suite()) results.push_back(std::move(r));
    results.push_back(attention_normalization_check());
    results.push_back(metric_cross_check());
    return results;
}

}  // namespace braingat::verify
