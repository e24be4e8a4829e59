#include "braingat/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "braingat/errors.hpp"
#include "braingat/rng.hpp"
#include "braingat/tape.hpp"

namespace braingat::explain {

namespace {

double shapley_kernel_weight(std::size_t m, std::size_t s) {
    // (m-1) / (C(m,s) * s * (m-s)), in log space to survive large m
    const double md = static_cast<double>(m), sd = static_cast<double>(s);
    const double log_comb = std::lgamma(md + 1.0) - std::lgamma(sd + 1.0) - std::lgamma(md - sd + 1.0);
    return std::exp(std::log(md - 1.0) - log_comb - std::log(sd) - std::log(md - sd));
}

// Solves A x = b in place with partial pivoting; returns false when singular.
bool solve_linear(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-12) return false;
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        double acc = b[col];
        for (std::size_t c = col + 1; c < n; ++c) acc -= a[col * n + c] * b[c];
        b[col] = acc / a[col * n + col];
    }
    return true;
}

std::vector<std::vector<bool>> enumerate_coalitions(std::size_t m) {
    std::vector<std::vector<bool>> out;
    const std::size_t total = std::size_t{1} << m;
    for (std::size_t mask = 1; mask + 1 < total; ++mask) {
        std::vector<bool> z(m, false);
        for (std::size_t i = 0; i < m; ++i) z[i] = (mask >> i) & 1;
        out.push_back(std::move(z));
    }
    return out;
}

std::vector<std::vector<bool>> sample_coalitions(std::size_t m, std::size_t budget,
                                                 std::uint64_t seed) {
    std::set<std::vector<bool>> seen;
    std::vector<std::vector<bool>> out;
    auto add = [&](std::vector<bool> z) {
        if (seen.insert(z).second) out.push_back(std::move(z));
    };
    // highest-weight sizes first: every singleton and every complement
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<bool> z(m, false);
        z[i] = true;
        add(z);
        std::vector<bool> zc(m, true);
        zc[i] = false;
        add(std::move(zc));
    }
    if (m <= 3 || out.size() >= budget) return out;

    // remaining sizes sampled proportional to their total kernel mass
    std::vector<double> size_mass;
    std::vector<std::size_t> sizes;
    double mass_sum = 0.0;
    for (std::size_t s = 2; s + 2 <= m; ++s) {
        const double w = (static_cast<double>(m) - 1.0) /
                         (static_cast<double>(s) * static_cast<double>(m - s));
        sizes.push_back(s);
        size_mass.push_back(w);
        mass_sum += w;
    }
    Rng rng(derive_seed(seed, 23));
    std::vector<std::size_t> pool(m);
    std::iota(pool.begin(), pool.end(), 0);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 20 * budget;
    while (out.size() < budget && attempts < max_attempts && !sizes.empty()) {
        ++attempts;
        double pick = rng.uniform() * mass_sum;
        std::size_t s = sizes.back();
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            pick -= size_mass[i];
            if (pick <= 0.0) {
                s = sizes[i];
                break;
            }
        }
        // partial shuffle picks s distinct members
        for (std::size_t i = 0; i < s; ++i) {
            const std::size_t j = i + rng.index(m - i);
            std::swap(pool[i], pool[j]);
        }
        std::vector<bool> z(m, false);
        for (std::size_t i = 0; i < s; ++i) z[pool[i]] = true;
        add(std::move(z));
    }
    return out;
}

std::vector<double> solve_kernel_shap(const ValueFn& value, std::size_t m,
                                      const std::vector<std::vector<bool>>& coalitions,
                                      double v_empty, double delta) {
    const std::size_t k = m - 1;
    std::vector<double> ata(k * k, 0.0);
    std::vector<double> atb(k, 0.0);
    std::vector<double> row(k);
    for (const auto& z : coalitions) {
        std::size_t s = 0;
        for (bool b : z) s += b ? 1 : 0;
        const double w = shapley_kernel_weight(m, s);
        const double zm = z[m - 1] ? 1.0 : 0.0;
        for (std::size_t i = 0; i < k; ++i) row[i] = (z[i] ? 1.0 : 0.0) - zm;
        const double target = value(z) - v_empty - zm * delta;
        for (std::size_t i = 0; i < k; ++i) {
            if (row[i] == 0.0) continue;
            const double wi = w * row[i];
            for (std::size_t j = 0; j < k; ++j) ata[i * k + j] += wi * row[j];
            atb[i] += wi * target;
        }
    }
    if (!solve_linear(ata, atb, k)) return {};
    std::vector<double> phi(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        phi[i] = atb[i];
        sum += atb[i];
    }
    phi[m - 1] = delta - sum;
    return phi;
}

}  // namespace

std::vector<double> kernel_shap_game(const ValueFn& value, std::size_t m,
                                     const ShapConfig& config) {
    if (m == 0) throw DataError("kernel_shap: at least one feature required");
    const double v_empty = value(std::vector<bool>(m, false));
    const double v_full = value(std::vector<bool>(m, true));
    const double delta = v_full - v_empty;
    if (m == 1) return {delta};

    const bool enumerable = m < 63 && (std::size_t{1} << m) <= config.enumeration_limit;
    std::vector<std::vector<bool>> coalitions =
        enumerable ? enumerate_coalitions(m)
                   : sample_coalitions(m, std::max(config.n_coalition_samples, 2 * m + 4),
                                       config.seed);
    std::vector<double> phi = solve_kernel_shap(value, m, coalitions, v_empty, delta);
    if (phi.empty() && !enumerable) {
        // ill-conditioned draw; widen the sample once before giving up
        coalitions = sample_coalitions(m, 4 * std::max(config.n_coalition_samples, 2 * m + 4),
                                       config.seed + 1);
        phi = solve_kernel_shap(value, m, coalitions, v_empty, delta);
    }
    if (phi.empty()) throw NumericError("kernel_shap: singular regression system");
    return phi;
}

namespace {

std::vector<double> background_mean(const std::vector<std::vector<double>>& background,
                                    std::size_t m) {
    if (background.empty()) throw DataError("kernel_shap: empty background");
    std::vector<double> mean(m, 0.0);
    for (const auto& row : background) {
        if (row.size() != m) throw ShapeError("kernel_shap: background width mismatch");
        for (std::size_t i = 0; i < m; ++i) mean[i] += row[i];
    }
    for (double& v : mean) v /= static_cast<double>(background.size());
    return mean;
}

ValueFn masked_game(const ModelFn& model_fn, std::vector<double> x, std::vector<double> reference) {
    return [model_fn, x = std::move(x), reference = std::move(reference)](
               const std::vector<bool>& coalition) {
        std::vector<double> masked(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) masked[i] = coalition[i] ? x[i] : reference[i];
        return model_fn(masked);
    };
}

}  // namespace

std::vector<double> kernel_shap(const ModelFn& model_fn,
                                const std::vector<std::vector<double>>& background,
                                const std::vector<double>& x, const ShapConfig& config) {
    return kernel_shap_game(masked_game(model_fn, x, background_mean(background, x.size())),
                            x.size(), config);
}

std::vector<double> exact_shapley_game(const ValueFn& value, std::size_t m) {
    if (m == 0) throw DataError("exact_shapley: at least one feature required");
    if (m > 25) throw NumericError("exact_shapley: 2^M enumeration infeasible for M > 25");
    const std::size_t total = std::size_t{1} << m;
    std::vector<double> v(total);
    std::vector<bool> z(m);
    for (std::size_t mask = 0; mask < total; ++mask) {
        for (std::size_t i = 0; i < m; ++i) z[i] = (mask >> i) & 1;
        v[mask] = value(z);
    }
    std::vector<double> fact(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> phi(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t mask = 0; mask < total; ++mask) {
            if (mask & bit) continue;
            std::size_t s = 0;
            for (std::size_t j = 0; j < m; ++j) s += (mask >> j) & 1;
            const double w = fact[s] * fact[m - s - 1] / fact[m];
            phi[i] += w * (v[mask | bit] - v[mask]);
        }
    }
    return phi;
}

std::vector<double> exact_shapley(const ModelFn& model_fn,
                                  const std::vector<std::vector<double>>& background,
                                  const std::vector<double>& x) {
    return exact_shapley_game(masked_game(model_fn, x, background_mean(background, x.size())),
                              x.size());
}

namespace {

double subject_probability(nn::ClassifierModel& model, const connectome::BrainGraph& graph) {
    std::vector<const connectome::BrainGraph*> one{&graph};
    nn::GraphBatch batch = nn::GraphBatch::from_graphs(one);
    Tape tape;
    nn::ForwardOutputs out = model.forward(tape, batch, nn::Mode::kEval, nullptr);
    return std::exp(tape.value(out.log_probs).at(0, 1));
}

}  // namespace

ShapReport subject_shap(nn::ClassifierModel& model,
                        const std::vector<const connectome::BrainGraph*>& background,
                        const connectome::BrainGraph& subject, const ShapOptions& options) {
    if (background.empty()) throw DataError("subject_shap: empty background cohort");
    const std::size_t n = subject.n_nodes;
    const std::size_t d = subject.features.cols();
    Tensor mean_features = Tensor::matrix(n, d);
    for (const auto* g : background) {
        if (g->features.rows() != n || g->features.cols() != d)
            throw ShapeError("subject_shap: background feature shape mismatch");
        for (std::size_t i = 0; i < mean_features.size(); ++i)
            mean_features.at(i) += g->features.at(i);
    }
    for (std::size_t i = 0; i < mean_features.size(); ++i)
        mean_features.at(i) /= static_cast<double>(background.size());

    connectome::BrainGraph probe = subject;
    ShapReport report;
    if (options.granularity == ShapGranularity::kRegion) {
        ValueFn game = [&](const std::vector<bool>& coalition) {
            for (std::size_t r = 0; r < n; ++r) {
                const Tensor& src = coalition[r] ? subject.features : mean_features;
                for (std::size_t c = 0; c < d; ++c) probe.features.at(r, c) = src.at(r, c);
            }
            return subject_probability(model, probe);
        };
        report.feature_values = kernel_shap_game(game, n, options.kernel);
        report.region_scores = report.feature_values;
    } else {
        std::vector<double> flat(subject.features.raw());
        ModelFn model_fn = [&](const std::vector<double>& x) {
            std::copy(x.begin(), x.end(), probe.features.raw().begin());
            return subject_probability(model, probe);
        };
        report.feature_values =
            kernel_shap(model_fn, {mean_features.raw()}, flat, options.kernel);
        report.region_scores.assign(n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += report.feature_values[r * d + c];
            report.region_scores[r] = acc / static_cast<double>(d);
        }
    }
    for (std::size_t r = 0; r < n; ++r)
        report.ranking.emplace_back(subject.region_names[r], report.region_scores[r]);
    std::stable_sort(report.ranking.begin(), report.ranking.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return report;
}

AttentionImportance attention_importance(nn::ClassifierModel& model,
                                         const std::vector<const connectome::BrainGraph*>& graphs) {
    if (graphs.empty()) throw DataError("attention_importance: empty test set");
    const std::size_t n_regions = graphs[0]->n_nodes;
    for (const auto* g : graphs) {
        if (g->n_nodes != n_regions)
            throw DataError("attention_importance: graphs disagree on region count");
    }
    nn::GraphBatch batch = nn::GraphBatch::from_graphs(graphs);
    Tape tape;
    nn::ForwardOutputs out = model.forward(tape, batch, nn::Mode::kEval, nullptr, true);

    AttentionImportance importance;
    importance.region_names = graphs[0]->region_names;
    importance.per_layer.assign(out.attention.size(), std::vector<double>(n_regions, 0.0));
    for (std::size_t l = 0; l < out.attention.size(); ++l) {
        const auto& record = out.attention[l];
        for (std::size_t e = 0; e < record.alpha.size(); ++e) {
            const std::size_t region = record.edge_src[e] % n_regions;
            importance.per_layer[l][region] += record.alpha[e];
        }
    }
    std::vector<double> totals(n_regions, 0.0);
    for (const auto& layer : importance.per_layer)
        for (std::size_t r = 0; r < n_regions; ++r) totals[r] += layer[r];
    for (std::size_t r = 0; r < n_regions; ++r)
        importance.total.push_back({importance.region_names[r], totals[r]});
    std::stable_sort(importance.total.begin(), importance.total.end(),
                     [](const RegionImportance& a, const RegionImportance& b) {
                         return a.score > b.score;
                     });
    return importance;
}

std::string export_rankings(const ShapReport& shap, const std::vector<RegionImportance>& attention,
                            std::size_t k) {
    if (k > shap.ranking.size() || k > attention.size())
        throw DataError("export_rankings: k exceeds available regions");
    std::string out;
    out += "| Rank | Shapley (with Score) | Attention (with Score) |\n";
    out += "|------|----------------------|------------------------|\n";
    char buf[160];
    for (std::size_t i = 0; i < k; ++i) {
        std::snprintf(buf, sizeof(buf), "| %zu | %s (%.3e) | %s (%.3f) |\n", i + 1,
                      shap.ranking[i].first.c_str(), shap.ranking[i].second,
                      attention[i].region.c_str(), attention[i].score);
        out += buf;
    }
    std::set<std::string> shap_top, attn_top;
    for (std::size_t i = 0; i < k; ++i) {
        shap_top.insert(shap.ranking[i].first);
        attn_top.insert(attention[i].region);
    }
    std::size_t overlap = 0;
    for (const auto& name : shap_top) overlap += attn_top.count(name);
    std::snprintf(buf, sizeof(buf), "\nOverlap: %zu of %zu regions.\n", overlap, k);
    out += buf;
    return out;
}

}  // namespace braingat::explain
