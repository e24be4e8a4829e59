#include "braingat/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "braingat/errors.hpp"

namespace braingat::nn {

using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
    if (name == "gat") return ModelKind::kGat;
    if (name == "gcn") return ModelKind::kGcn;
    throw ConfigError("unknown model kind: " + name);
}

std::string model_kind_name(ModelKind kind) { return kind == ModelKind::kGat ? "gat" : "gcn"; }

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.rows() != a.cols()) throw ShapeError("normalize_adjacency: square matrix required");
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) {
        if (a.at(i, i) != 0.0) throw DataError("normalize_adjacency: diagonal must be zero");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (a.at(i, j) != a.at(j, i)) throw DataError("normalize_adjacency: adjacency must be symmetric");
        }
    }
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 1.0;  // self loop
        for (std::size_t j = 0; j < n; ++j) deg += a.at(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    Tensor out = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double tilde = a.at(i, j) + (i == j ? 1.0 : 0.0);
            if (tilde != 0.0) out.at(i, j) = tilde * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    return out;
}

Tensor GraphBatch::adjacency() const {
    const std::size_t n = n_nodes();
    Tensor a = Tensor::matrix(n, n);
    for (std::size_t e = 0; e < edge_src.size(); ++e) a.at(edge_src[e], edge_dst[e]) = 1.0;
    return a;
}

GraphBatch GraphBatch::from_graphs(const std::vector<const connectome::BrainGraph*>& graphs) {
    GraphBatch batch;
    if (graphs.empty()) throw DataError("empty graph batch");
    const std::size_t d = graphs[0]->features.cols();
    std::size_t n_total = 0;
    for (const auto* g : graphs) {
        if (g->features.cols() != d) throw ShapeError("graph batch: feature width mismatch");
        if (g->n_nodes == 0) throw DataError("graph batch: graph with zero nodes");
        n_total += g->n_nodes;
    }
    batch.features = Tensor::matrix(n_total, d);
    batch.n_graphs = graphs.size();
    std::size_t offset = 0;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const auto* g = graphs[gi];
        std::copy(g->features.data(), g->features.data() + g->features.size(),
                  batch.features.data() + offset * d);
        for (std::size_t i = 0; i < g->n_nodes; ++i) batch.node_graph.push_back(gi);
        for (const auto& e : g->edges) {
            batch.edge_src.push_back(offset + e.i);
            batch.edge_dst.push_back(offset + e.j);
            batch.edge_src.push_back(offset + e.j);
            batch.edge_dst.push_back(offset + e.i);
        }
        batch.labels.push_back(g->label);
        offset += g->n_nodes;
    }
    // self-loop-augmented list ordered by (dst, src)
    std::vector<std::size_t> order(batch.edge_src.size() + n_total);
    std::vector<std::size_t> src_all(order.size()), dst_all(order.size());
    for (std::size_t e = 0; e < batch.edge_src.size(); ++e) {
        src_all[e] = batch.edge_src[e];
        dst_all[e] = batch.edge_dst[e];
    }
    for (std::size_t i = 0; i < n_total; ++i) {
        src_all[batch.edge_src.size() + i] = i;
        dst_all[batch.edge_src.size() + i] = i;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (dst_all[x] != dst_all[y]) return dst_all[x] < dst_all[y];
        return src_all[x] < src_all[y];
    });
    batch.loop_src.reserve(order.size());
    batch.loop_dst.reserve(order.size());
    for (std::size_t k : order) {
        batch.loop_src.push_back(src_all[k]);
        batch.loop_dst.push_back(dst_all[k]);
    }
    return batch;
}

BatchNormState BatchNormState::init(std::size_t dim) {
    BatchNormState s;
    s.gamma = Tensor::filled({1, dim}, 1.0);
    s.beta = Tensor::matrix(1, dim);
    s.running_mean = Tensor::matrix(1, dim);
    s.running_var = Tensor::filled({1, dim}, 1.0);
    return s;
}

namespace {

// Attention logits from already-transformed features, one head.
Var attention_alpha(Tape& tape, Var hw, const std::vector<std::size_t>& src,
                    const std::vector<std::size_t>& dst, std::size_t n_nodes, Var a,
                    double leaky_slope) {
    Var hd = tape.gather_rows(hw, dst);
    Var hs = tape.gather_rows(hw, src);
    Var cat = tape.concat(1, {hd, hs});
    Var e = tape.matmul(cat, a);
    Var el = tape.leaky_relu(e, leaky_slope);
    return tape.segment_softmax(el, dst, n_nodes);
}

}  // namespace

Var gat_attention(Tape& tape, Var h, const std::vector<std::size_t>& src,
                  const std::vector<std::size_t>& dst, std::size_t n_nodes, Var w, Var a,
                  double leaky_slope) {
    if (src.size() != dst.size()) throw ShapeError("gat_attention: edge list mismatch");
    Var hw = tape.matmul(h, w);
    return attention_alpha(tape, hw, src, dst, n_nodes, a, leaky_slope);
}

GatLayerResult gat_layer(Tape& tape, Var h, const GraphBatch& batch, const GatLayerVars& layer,
                         bool extract_attention) {
    if (layer.heads.empty()) throw ShapeError("gat_layer: no heads");
    const std::size_t n = batch.n_nodes();
    const auto& src = batch.loop_src;
    const auto& dst = batch.loop_dst;
    GatLayerResult result;
    std::vector<Var> head_outputs;
    head_outputs.reserve(layer.heads.size());
    if (extract_attention) result.alpha_mean.assign(src.size(), 0.0);
    for (const auto& [w, a] : layer.heads) {
        Var hw = tape.matmul(h, w);
        Var alpha = attention_alpha(tape, hw, src, dst, n, a, layer.leaky_slope);
        Var messages = tape.scale_rows(tape.gather_rows(hw, src), alpha);
        head_outputs.push_back(tape.scatter_add_rows(messages, dst, n));
        if (extract_attention) {
            const Tensor& av = tape.value(alpha);
            for (std::size_t e = 0; e < av.size(); ++e) result.alpha_mean[e] += av.at(e);
        }
    }
    if (extract_attention) {
        const double inv = 1.0 / static_cast<double>(layer.heads.size());
        for (double& v : result.alpha_mean) v *= inv;
    }
    result.output = head_outputs.size() == 1 ? head_outputs[0] : tape.concat(1, head_outputs);
    return result;
}

Var gcn_layer(Tape& tape, Var h, Var a_norm, Var w, Activation act) {
    Var out = tape.matmul(tape.matmul(a_norm, h), w);
    switch (act) {
        case Activation::kIdentity: return out;
        case Activation::kRelu: return tape.relu(out);
        case Activation::kElu: return tape.elu(out);
    }
    return out;
}

Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
    const Tensor& xv = tape.value(x);
    if (xv.rank() != 2) throw ShapeError("batch_norm: rank-2 input");
    const std::size_t d = xv.cols();
    if (state.gamma.size() != d) throw ShapeError("batch_norm: state width mismatch");
    if (mode == Mode::kTrain) {
        if (xv.rows() < 2) throw DataError("batch_norm: train mode needs at least 2 rows");
        Var mu = tape.mean(x, 0);
        Var centered = tape.add(x, tape.scalar_multiply(mu, -1.0));
        Var var = tape.mean(tape.multiply(centered, centered), 0);
        Var inv_std = tape.exp(tape.scalar_multiply(tape.log(tape.add_scalar(var, state.epsilon)), -0.5));
        Var normalized = tape.multiply(centered, inv_std);
        // running stats track the batch statistics outside the tape
        const Tensor& mu_v = tape.value(mu);
        const Tensor& var_v = tape.value(var);
        for (std::size_t j = 0; j < d; ++j) {
            state.running_mean.at(j) =
                (1.0 - state.momentum) * state.running_mean.at(j) + state.momentum * mu_v.at(j);
            state.running_var.at(j) =
                (1.0 - state.momentum) * state.running_var.at(j) + state.momentum * var_v.at(j);
        }
        return tape.add(tape.multiply(normalized, gamma), beta);
    }
    Tensor neg_mean = Tensor::matrix(1, d);
    Tensor inv_std = Tensor::matrix(1, d);
    for (std::size_t j = 0; j < d; ++j) {
        neg_mean.at(j) = -state.running_mean.at(j);
        inv_std.at(j) = 1.0 / std::sqrt(state.running_var.at(j) + state.epsilon);
    }
    Var normalized = tape.multiply(tape.add(x, tape.constant(std::move(neg_mean))),
                                   tape.constant(std::move(inv_std)));
    return tape.add(tape.multiply(normalized, gamma), beta);
}

Var dropout(Tape& tape, Var x, double p, Mode mode, Rng* rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must lie in [0, 1)");
    if (mode == Mode::kEval || p == 0.0) return x;
    if (rng == nullptr) throw ConfigError("dropout: train mode needs an rng");
    const Tensor& xv = tape.value(x);
    Tensor mask(xv.shape());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.at(i) = rng->uniform() < p ? 0.0 : keep_scale;
    }
    return tape.multiply(x, tape.constant(std::move(mask)));
}

Var global_mean_pool(Tape& tape, Var h, const GraphBatch& batch) {
    const std::size_t b = batch.n_graphs;
    std::vector<double> counts(b, 0.0);
    for (std::size_t g : batch.node_graph) counts[g] += 1.0;
    Tensor inv_counts = Tensor::matrix(b, 1);
    for (std::size_t g = 0; g < b; ++g) {
        if (counts[g] == 0.0) throw DataError("global_mean_pool: graph with zero nodes");
        inv_counts.at(g) = 1.0 / counts[g];
    }
    Var sums = tape.scatter_add_rows(h, batch.node_graph, b);
    return tape.scale_rows(sums, tape.constant(std::move(inv_counts)));
}

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
    const double limit = glorot_limit(fan_in, fan_out);
    Tensor t = Tensor::matrix(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-limit, limit);
    return t;
}

void check_config(const ClassifierConfig& c) {
    if (c.input_dim == 0) throw ConfigError("classifier: input_dim must be positive");
    if (c.n_blocks == 0) throw ConfigError("classifier: n_blocks must be positive");
    if (c.heads == 0) throw ConfigError("classifier: heads must be positive");
    if (c.head_dim == 0) throw ConfigError("classifier: head_dim must be positive");
    if (c.fc_dim == 0) throw ConfigError("classifier: fc_dim must be positive");
    if (c.n_classes < 2) throw ConfigError("classifier: n_classes must be at least 2");
}

}  // namespace

ClassifierModel ClassifierModel::init(ModelKind kind, const ClassifierConfig& config, Rng& rng) {
    check_config(config);
    ClassifierModel m;
    m.kind_ = kind;
    const std::size_t width = config.block_width();
    if (kind == ModelKind::kGat) {
        GatClassifierParams p;
        p.config = config;
        for (std::size_t b = 0; b < config.n_blocks; ++b) {
            const std::size_t d_in = b == 0 ? config.input_dim : width;
            GatBlockParams block;
            for (std::size_t h = 0; h < config.heads; ++h) {
                GatHeadParams head;
                head.w = glorot_uniform(d_in, config.head_dim, d_in, config.head_dim, rng);
                head.a = glorot_uniform(2 * config.head_dim, 1, 2 * config.head_dim, 1, rng);
                block.heads.push_back(std::move(head));
            }
            block.bn = BatchNormState::init(width);
            block.dropout_p = b == 0 ? config.dropout_block1 : config.dropout_rest;
            p.blocks.push_back(std::move(block));
        }
        p.fc1_w = glorot_uniform(width, config.fc_dim, width, config.fc_dim, rng);
        p.fc1_b = Tensor::matrix(1, config.fc_dim);
        p.fc2_w = glorot_uniform(config.fc_dim, config.n_classes, config.fc_dim, config.n_classes, rng);
        p.fc2_b = Tensor::matrix(1, config.n_classes);
        m.params_ = std::move(p);
    } else {
        GcnClassifierParams p;
        p.config = config;
        for (std::size_t b = 0; b < config.n_blocks; ++b) {
            const std::size_t d_in = b == 0 ? config.input_dim : width;
            GcnBlockParams block;
            block.w = glorot_uniform(d_in, width, d_in, width, rng);
            block.bn = BatchNormState::init(width);
            block.dropout_p = b == 0 ? config.dropout_block1 : config.dropout_rest;
            p.blocks.push_back(std::move(block));
        }
        p.fc1_w = glorot_uniform(width, config.fc_dim, width, config.fc_dim, rng);
        p.fc1_b = Tensor::matrix(1, config.fc_dim);
        p.fc2_w = glorot_uniform(config.fc_dim, config.n_classes, config.fc_dim, config.n_classes, rng);
        p.fc2_b = Tensor::matrix(1, config.n_classes);
        m.params_ = std::move(p);
    }
    return m;
}

ClassifierModel ClassifierModel::empty(ModelKind kind, const ClassifierConfig& config) {
    Rng rng(0);
    ClassifierModel m = init(kind, config, rng);
    for (Tensor* t : m.parameters()) {
        std::fill(t->raw().begin(), t->raw().end(), 0.0);
    }
    return m;
}

const ClassifierConfig& ClassifierModel::config() const {
    if (kind_ == ModelKind::kGat) return std::get<GatClassifierParams>(params_).config;
    return std::get<GcnClassifierParams>(params_).config;
}

std::vector<Tensor*> ClassifierModel::parameters() {
    std::vector<Tensor*> out;
    if (kind_ == ModelKind::kGat) {
        auto& p = std::get<GatClassifierParams>(params_);
        for (auto& block : p.blocks) {
            for (auto& head : block.heads) {
                out.push_back(&head.w);
                out.push_back(&head.a);
            }
            out.push_back(&block.bn.gamma);
            out.push_back(&block.bn.beta);
        }
        out.push_back(&p.fc1_w);
        out.push_back(&p.fc1_b);
        out.push_back(&p.fc2_w);
        out.push_back(&p.fc2_b);
    } else {
        auto& p = std::get<GcnClassifierParams>(params_);
        for (auto& block : p.blocks) {
            out.push_back(&block.w);
            out.push_back(&block.bn.gamma);
            out.push_back(&block.bn.beta);
        }
        out.push_back(&p.fc1_w);
        out.push_back(&p.fc1_b);
        out.push_back(&p.fc2_w);
        out.push_back(&p.fc2_b);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ClassifierModel::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto block_name = [](std::size_t b) { return "block" + std::to_string(b); };
    if (kind_ == ModelKind::kGat) {
        auto& p = std::get<GatClassifierParams>(params_);
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            auto& block = p.blocks[b];
            for (std::size_t h = 0; h < block.heads.size(); ++h) {
                out.emplace_back(block_name(b) + ".head" + std::to_string(h) + ".w", &block.heads[h].w);
                out.emplace_back(block_name(b) + ".head" + std::to_string(h) + ".a", &block.heads[h].a);
            }
            out.emplace_back(block_name(b) + ".bn.gamma", &block.bn.gamma);
            out.emplace_back(block_name(b) + ".bn.beta", &block.bn.beta);
            out.emplace_back(block_name(b) + ".bn.running_mean", &block.bn.running_mean);
            out.emplace_back(block_name(b) + ".bn.running_var", &block.bn.running_var);
        }
        out.emplace_back("fc1.w", &p.fc1_w);
        out.emplace_back("fc1.b", &p.fc1_b);
        out.emplace_back("fc2.w", &p.fc2_w);
        out.emplace_back("fc2.b", &p.fc2_b);
    } else {
        auto& p = std::get<GcnClassifierParams>(params_);
        for (std::size_t b = 0; b < p.blocks.size(); ++b) {
            auto& block = p.blocks[b];
            out.emplace_back(block_name(b) + ".w", &block.w);
            out.emplace_back(block_name(b) + ".bn.gamma", &block.bn.gamma);
            out.emplace_back(block_name(b) + ".bn.beta", &block.bn.beta);
            out.emplace_back(block_name(b) + ".bn.running_mean", &block.bn.running_mean);
            out.emplace_back(block_name(b) + ".bn.running_var", &block.bn.running_var);
        }
        out.emplace_back("fc1.w", &p.fc1_w);
        out.emplace_back("fc1.b", &p.fc1_b);
        out.emplace_back("fc2.w", &p.fc2_w);
        out.emplace_back("fc2.b", &p.fc2_b);
    }
    return out;
}

ForwardOutputs ClassifierModel::forward(Tape& tape, const GraphBatch& batch, Mode mode,
                                        Rng* dropout_rng, bool extract_attention) {
    if (batch.features.cols() != config().input_dim)
        throw ShapeError("classifier: feature width mismatch");
    if (kind_ == ModelKind::kGat) return forward_gat(tape, batch, mode, dropout_rng, extract_attention);
    return forward_gcn(tape, batch, mode, dropout_rng);
}

ForwardOutputs ClassifierModel::forward_gat(Tape& tape, const GraphBatch& batch, Mode mode,
                                            Rng* rng, bool extract_attention) {
    auto& p = std::get<GatClassifierParams>(params_);
    ForwardOutputs out;
    Var h = tape.constant(batch.features);
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        auto& block = p.blocks[b];
        GatLayerVars layer;
        layer.leaky_slope = p.config.leaky_slope;
        for (auto& head : block.heads) {
            Var wv = tape.leaf(head.w, true);
            Var av = tape.leaf(head.a, true);
            out.param_vars.push_back(wv);
            out.param_vars.push_back(av);
            layer.heads.emplace_back(wv, av);
        }
        Var gamma = tape.leaf(block.bn.gamma, true);
        Var beta = tape.leaf(block.bn.beta, true);
        out.param_vars.push_back(gamma);
        out.param_vars.push_back(beta);

        GatLayerResult res = gat_layer(tape, h, batch, layer, extract_attention);
        if (extract_attention) {
            AttentionRecord record;
            record.layer_index = b;
            record.edge_src = batch.loop_src;
            record.edge_dst = batch.loop_dst;
            record.alpha = std::move(res.alpha_mean);
            out.attention.push_back(std::move(record));
        }
        h = batch_norm(tape, res.output, gamma, beta, block.bn, mode);
        h = tape.elu(h);
        h = dropout(tape, h, block.dropout_p, mode, rng);
    }
    Var pooled = global_mean_pool(tape, h, batch);
    Var fc1_w = tape.leaf(p.fc1_w, true);
    Var fc1_b = tape.leaf(p.fc1_b, true);
    Var fc2_w = tape.leaf(p.fc2_w, true);
    Var fc2_b = tape.leaf(p.fc2_b, true);
    out.param_vars.push_back(fc1_w);
    out.param_vars.push_back(fc1_b);
    out.param_vars.push_back(fc2_w);
    out.param_vars.push_back(fc2_b);
    Var hidden = tape.relu(tape.add(tape.matmul(pooled, fc1_w), fc1_b));
    out.embeddings = hidden;
    Var dropped = dropout(tape, hidden, p.config.dropout_rest, mode, rng);
    out.log_probs = tape.log_softmax_rows(tape.add(tape.matmul(dropped, fc2_w), fc2_b));
    return out;
}

ForwardOutputs ClassifierModel::forward_gcn(Tape& tape, const GraphBatch& batch, Mode mode,
                                            Rng* rng) {
    auto& p = std::get<GcnClassifierParams>(params_);
    ForwardOutputs out;
    Var a_norm = tape.constant(normalize_adjacency(batch.adjacency()));
    Var h = tape.constant(batch.features);
    for (auto& block : p.blocks) {
        Var wv = tape.leaf(block.w, true);
        Var gamma = tape.leaf(block.bn.gamma, true);
        Var beta = tape.leaf(block.bn.beta, true);
        out.param_vars.push_back(wv);
        out.param_vars.push_back(gamma);
        out.param_vars.push_back(beta);
        h = gcn_layer(tape, h, a_norm, wv);
        h = batch_norm(tape, h, gamma, beta, block.bn, mode);
        h = tape.elu(h);
        h = dropout(tape, h, block.dropout_p, mode, rng);
    }
    Var pooled = global_mean_pool(tape, h, batch);
    Var fc1_w = tape.leaf(p.fc1_w, true);
    Var fc1_b = tape.leaf(p.fc1_b, true);
    Var fc2_w = tape.leaf(p.fc2_w, true);
    Var fc2_b = tape.leaf(p.fc2_b, true);
    out.param_vars.push_back(fc1_w);
    out.param_vars.push_back(fc1_b);
    out.param_vars.push_back(fc2_w);
    out.param_vars.push_back(fc2_b);
    Var hidden = tape.relu(tape.add(tape.matmul(pooled, fc1_w), fc1_b));
    out.embeddings = hidden;
    Var dropped = dropout(tape, hidden, p.config.dropout_rest, mode, rng);
    out.log_probs = tape.log_softmax_rows(tape.add(tape.matmul(dropped, fc2_w), fc2_b));
    return out;
}

void save_checkpoint(const std::filesystem::path& path, ClassifierModel& model) {
    const ClassifierConfig& c = model.config();
    json header;
    header["format"] = "braingat.checkpoint";
    header["version"] = 1;
    header["model"] = model_kind_name(model.kind());
    header["config"] = {{"input_dim", c.input_dim},     {"n_blocks", c.n_blocks},
                        {"heads", c.heads},             {"head_dim", c.head_dim},
                        {"fc_dim", c.fc_dim},           {"dropout_block1", c.dropout_block1},
                        {"dropout_rest", c.dropout_rest}, {"leaky_slope", c.leaky_slope},
                        {"n_classes", c.n_classes}};
    json dir = json::array();
    std::size_t offset = 0;
    auto tensors = model.named_tensors();
    for (auto& [name, t] : tensors) {
        dir.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
        offset += t->size() * sizeof(double);
    }
    header["tensors"] = std::move(dir);
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out) throw DataError("checkpoint write failed: " + path.string());
}

ClassifierModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint not found: " + path.string());
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in) throw DataError("truncated checkpoint header: " + path.string());
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError("truncated checkpoint header: " + path.string());
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw DataError("checkpoint header parse error: " + std::string(e.what()));
    }
    if (header.value("format", "") != "braingat.checkpoint")
        throw DataError("not a braingat checkpoint: " + path.string());

    ClassifierConfig c;
    const json& jc = header.at("config");
    c.input_dim = jc.at("input_dim").get<std::size_t>();
    c.n_blocks = jc.at("n_blocks").get<std::size_t>();
    c.heads = jc.at("heads").get<std::size_t>();
    c.head_dim = jc.at("head_dim").get<std::size_t>();
    c.fc_dim = jc.at("fc_dim").get<std::size_t>();
    c.dropout_block1 = jc.at("dropout_block1").get<double>();
    c.dropout_rest = jc.at("dropout_rest").get<double>();
    c.leaky_slope = jc.at("leaky_slope").get<double>();
    c.n_classes = jc.at("n_classes").get<std::size_t>();

    ClassifierModel model = ClassifierModel::empty(parse_model_kind(header.at("model")), c);
    auto tensors = model.named_tensors();
    const std::streampos payload_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        auto it = std::find_if(tensors.begin(), tensors.end(),
                               [&](const auto& nt) { return nt.first == name; });
        if (it == tensors.end()) throw DataError("checkpoint tensor unknown to this build: " + name);
        Tensor* t = it->second;
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != t->shape()) throw DataError("checkpoint tensor shape mismatch: " + name);
        in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        in.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint payload at tensor " + name);
    }
    return model;
}

}  // namespace braingat::nn
