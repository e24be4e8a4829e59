#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "braingat/connectome.hpp"
#include "braingat/rng.hpp"
#include "braingat/tape.hpp"
#include "braingat/tensor.hpp"

namespace braingat::nn {

enum class Mode { kTrain, kEval };
enum class ModelKind { kGat, kGcn };
enum class Activation { kIdentity, kRelu, kElu };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Tensor normalize_adjacency(const Tensor& a);

/// A mini-batch of graphs flattened into one node set. Edges are directed
/// (each undirected edge appears in both directions) and carry no self
/// loops; attention layers add them. Loop-augmented edges are precomputed
/// sorted by (dst, src) so attention records are deterministic.
struct GraphBatch {
    Tensor features;  // n_total x d
    std::vector<std::size_t> edge_src, edge_dst;
    std::vector<std::size_t> loop_src, loop_dst;  // with self loops, sorted by (dst, src)
    std::vector<std::size_t> node_graph;          // owning graph per node
    std::vector<int> labels;                      // per graph
    std::size_t n_graphs = 0;

    std::size_t n_nodes() const { return node_graph.size(); }
    Tensor adjacency() const;  // block structure follows from the edge list

    static GraphBatch from_graphs(const std::vector<const connectome::BrainGraph*>& graphs);
};

struct GatHeadParams {
    Tensor w;  // d_in x d_head
    Tensor a;  // (2 * d_head) x 1
};

struct BatchNormState {
    Tensor gamma, beta;               // 1 x d
    Tensor running_mean, running_var;  // 1 x d
    double momentum = 0.1;
    double epsilon = 1e-5;

    static BatchNormState init(std::size_t dim);
};

/// Per-layer attention coefficients averaged over heads, aligned with the
/// loop-augmented (src, dst) edge list. Within each destination the alphas
/// sum to one.
struct AttentionRecord {
    std::size_t layer_index = 0;
    std::vector<std::size_t> edge_src, edge_dst;
    std::vector<double> alpha;
};

/// Attention coefficients of one head over the given edge list. `src`/`dst`
/// must already include self loops so every destination has a neighborhood.
/// Coefficients follow LeakyReLU(a^T [W h_dst || W h_src]) normalized per
/// destination.
Var gat_attention(Tape& tape, Var h, const std::vector<std::size_t>& src,
                  const std::vector<std::size_t>& dst, std::size_t n_nodes, Var w, Var a,
                  double leaky_slope);

struct GatLayerVars {
    std::vector<std::pair<Var, Var>> heads;  // (w, a) per head
    double leaky_slope = 0.2;
};

struct GatLayerResult {
    Var output;                      // n x (K * d_head), heads concatenated
    std::vector<double> alpha_mean;  // head-averaged, aligned with batch loop edges
};

GatLayerResult gat_layer(Tape& tape, Var h, const GraphBatch& batch, const GatLayerVars& layer,
                         bool extract_attention);

Var gcn_layer(Tape& tape, Var h, Var a_norm, Var w, Activation act = Activation::kIdentity);

Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);

/// Train mode zeroes entries with probability p and rescales survivors by
/// 1/(1-p); eval mode is the identity.
Var dropout(Tape& tape, Var x, double p, Mode mode, Rng* rng);

Var global_mean_pool(Tape& tape, Var h, const GraphBatch& batch);

struct ClassifierConfig {
    std::size_t input_dim = 0;
    std::size_t n_blocks = 7;
    std::size_t heads = 8;
    std::size_t head_dim = 256;
    std::size_t fc_dim = 1024;
    double dropout_block1 = 0.1;
    double dropout_rest = 0.2;
    double leaky_slope = 0.2;
    std::size_t n_classes = 2;

    std::size_t block_width() const { return heads * head_dim; }
};

struct GatBlockParams {
    std::vector<GatHeadParams> heads;
    BatchNormState bn;
    double dropout_p = 0.2;
};

struct GatClassifierParams {
    ClassifierConfig config;
    std::vector<GatBlockParams> blocks;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct GcnBlockParams {
    Tensor w;
    BatchNormState bn;
    double dropout_p = 0.2;
};

struct GcnClassifierParams {
    ClassifierConfig config;
    std::vector<GcnBlockParams> blocks;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct ForwardOutputs {
    Var log_probs;   // B x n_classes
    Var embeddings;  // B x fc_dim, post-ReLU FC1 activations
    std::vector<AttentionRecord> attention;
    std::vector<Var> param_vars;  // aligned with parameters()
};

/// GAT or GCN classifier stack: n_blocks x [conv -> BatchNorm -> ELU ->
/// Dropout] -> global mean pool -> FC1 -> ReLU -> Dropout -> FC2 ->
/// log-softmax. Copyable; a copy is an independent snapshot of all state.
class ClassifierModel {
 public:
    static ClassifierModel init(ModelKind kind, const ClassifierConfig& config, Rng& rng);
    static ClassifierModel empty(ModelKind kind, const ClassifierConfig& config);

    ModelKind kind() const { return kind_; }
    const ClassifierConfig& config() const;

    /// Learnable tensors in declaration order (running stats excluded).
    std::vector<Tensor*> parameters();
    /// All state tensors, named, for checkpointing.
    std::vector<std::pair<std::string, Tensor*>> named_tensors();

    ForwardOutputs forward(Tape& tape, const GraphBatch& batch, Mode mode, Rng* dropout_rng,
                           bool extract_attention = false);

 private:
    ClassifierModel() = default;
    ModelKind kind_ = ModelKind::kGat;
    std::variant<GatClassifierParams, GcnClassifierParams> params_;

    ForwardOutputs forward_gat(Tape& tape, const GraphBatch& batch, Mode mode, Rng* rng,
                               bool extract_attention);
    ForwardOutputs forward_gcn(Tape& tape, const GraphBatch& batch, Mode mode, Rng* rng);
};

/// Container checkpoint: u64 little-endian header length, JSON header with
/// the architecture and a tensor directory, then raw float64 payload.
void save_checkpoint(const std::filesystem::path& path, ClassifierModel& model);
ClassifierModel load_checkpoint(const std::filesystem::path& path);

}  // namespace braingat::nn
