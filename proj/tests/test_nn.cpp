#include <doctest.h>

#include <cmath>

#include "braingat/errors.hpp"
#include "braingat/nn.hpp"
#include "braingat/rng.hpp"
#include "braingat/train.hpp"
#include "braingat/verify.hpp"
#include "support.hpp"

using namespace braingat;
using namespace braingat::nn;

namespace {

connectome::BrainGraph simple_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                    Tensor features, int label = 0, const std::string& id = "g") {
    connectome::BrainGraph g;
    g.id = id;
    g.label = label;
    g.n_nodes = n;
    g.region_names = connectome::default_region_names(n);
    g.features = std::move(features);
    for (auto [i, j] : edges) g.edges.push_back({i, j, 1.0});
    return g;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("normalize_adjacency: isolated node, single edge, path graph") {
    Tensor single = normalize_adjacency(Tensor::matrix(1, 1));
    CHECK(single.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor pair_adj = Tensor::matrix(2, 2, {0, 1, 1, 0});
    Tensor pair_norm = normalize_adjacency(pair_adj);
    for (std::size_t i = 0; i < 4; ++i) CHECK(pair_norm.at(i) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor path = Tensor::matrix(3, 3, {0, 1, 0, 1, 0, 1, 0, 1, 0});
    Tensor norm = normalize_adjacency(path);
    CHECK(norm.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(norm.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(norm.at(2, 2) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(norm.at(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
}

TEST_CASE("normalize_adjacency rejects asymmetric or self-looped input") {
    CHECK_THROWS_AS(normalize_adjacency(Tensor::matrix(2, 2, {0, 1, 0, 0})), DataError);
    CHECK_THROWS_AS(normalize_adjacency(Tensor::matrix(2, 2, {1, 0, 0, 0})), DataError);
}

TEST_CASE("gcn_layer: isolated node with identity weights reproduces the input") {
    Tape tape;
    Var h = tape.leaf(Tensor::matrix(1, 2, {3.0, -1.0}), false);
    Var a_norm = tape.constant(normalize_adjacency(Tensor::matrix(1, 1)));
    Var w = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    Var out = gcn_layer(tape, h, a_norm, w);
    CHECK(tape.value(out).at(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(tape.value(out).at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("gcn_layer: connected nodes with identical features stay identical") {
    Tape tape;
    Var h = tape.leaf(Tensor::matrix(2, 2, {1.0, 2.0, 1.0, 2.0}), false);
    Var a_norm = tape.constant(normalize_adjacency(Tensor::matrix(2, 2, {0, 1, 1, 0})));
    Var w = tape.constant(Tensor::matrix(2, 2, {0.3, -0.4, 0.8, 0.1}));
    const Tensor& out = tape.value(gcn_layer(tape, h, a_norm, w));
    CHECK(out.at(0, 0) == doctest::Approx(out.at(1, 0)).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(out.at(1, 1)).epsilon(1e-12));
}

TEST_CASE("gcn_layer: identity features and weights reproduce the normalized adjacency") {
    Tape tape;
    Tensor path = Tensor::matrix(3, 3, {0, 1, 0, 1, 0, 1, 0, 1, 0});
    Tensor a_norm = normalize_adjacency(path);
    Var h = tape.leaf(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), false);
    Var w = tape.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    const Tensor& out = tape.value(gcn_layer(tape, h, tape.constant(a_norm), w));
    for (std::size_t i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(a_norm.at(i)).epsilon(1e-12));
}

TEST_CASE("gat_attention: self-loop-only node takes alpha 1") {
    connectome::BrainGraph g = simple_graph(1, {}, Tensor::matrix(1, 1, {0.7}));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    Var w = tape.constant(Tensor::matrix(1, 1, {1.0}));
    Var a = tape.constant(Tensor::matrix(2, 1, {1.0, 1.0}));
    const Tensor& alpha = tape.value(gat_attention(tape, h, batch.loop_src, batch.loop_dst, 1, w, a, 0.2));
    REQUIRE(alpha.size() == 1);
    CHECK(alpha.at(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gat_attention: identical neighbors share attention uniformly") {
    // star: destination 0 hears from 1, 2, 3 and itself, all features equal
    connectome::BrainGraph g =
        simple_graph(4, {{0, 1}, {0, 2}, {0, 3}}, Tensor::filled({4, 2}, 0.5));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    Var w = tape.constant(Tensor::matrix(2, 3, {0.2, -0.1, 0.4, 0.7, 0.3, -0.6}));
    Var a = tape.constant(Tensor::matrix(6, 1, {0.1, 0.2, 0.3, -0.1, -0.2, 0.5}));
    const Tensor& alpha = tape.value(gat_attention(tape, h, batch.loop_src, batch.loop_dst, 4, w, a, 0.2));
    for (std::size_t e = 0; e < batch.loop_dst.size(); ++e) {
        if (batch.loop_dst[e] == 0) CHECK(alpha.at(e) == doctest::Approx(0.25).epsilon(1e-9));
    }
}

TEST_CASE("gat_attention: two-node hand example") {
    // d=1, W=[1], a=(1,1), features h1=0, h2=1
    connectome::BrainGraph g = simple_graph(2, {{0, 1}}, Tensor::matrix(2, 1, {0.0, 1.0}));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    Var w = tape.constant(Tensor::matrix(1, 1, {1.0}));
    Var a = tape.constant(Tensor::matrix(2, 1, {1.0, 1.0}));
    const Tensor& alpha = tape.value(gat_attention(tape, h, batch.loop_src, batch.loop_dst, 2, w, a, 0.2));
    const double expect_self = 1.0 / (1.0 + std::exp(1.0));   // 0.268941...
    const double expect_other = std::exp(1.0) / (1.0 + std::exp(1.0));
    // loop edges sorted by (dst, src): (0<-0), (0<-1), (1<-0), (1<-1)
    CHECK(alpha.at(0) == doctest::Approx(expect_self).epsilon(1e-9));
    CHECK(alpha.at(1) == doctest::Approx(expect_other).epsilon(1e-9));
    CHECK(alpha.at(0) == doctest::Approx(0.2689).epsilon(1e-3));
    CHECK(alpha.at(1) == doctest::Approx(0.7311).epsilon(1e-3));
}

TEST_CASE("gat_layer: single node with two heads concatenates the transforms") {
    connectome::BrainGraph g = simple_graph(1, {}, Tensor::matrix(1, 2, {2.0, -1.0}));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    GatLayerVars layer;
    layer.leaky_slope = 0.2;
    Tensor w1 = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Tensor w2 = Tensor::matrix(2, 2, {0, 1, 1, 0});
    layer.heads.emplace_back(tape.constant(w1), tape.constant(Tensor::matrix(4, 1)));
    layer.heads.emplace_back(tape.constant(w2), tape.constant(Tensor::matrix(4, 1)));
    GatLayerResult res = gat_layer(tape, h, batch, layer, false);
    const Tensor& out = tape.value(res.output);
    REQUIRE(out.cols() == 4);
    CHECK(out.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));   // W1 h
    CHECK(out.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.at(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));  // W2 h swaps
    CHECK(out.at(0, 3) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gat_layer: identical features yield identical rows regardless of topology") {
    Rng rng(4);
    connectome::BrainGraph g =
        simple_graph(5, {{0, 1}, {1, 2}, {2, 3}, {0, 4}}, Tensor::filled({5, 3}, 0.8));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    GatLayerVars layer;
    Tensor w(std::vector<std::size_t>{3, 2});
    Tensor a(std::vector<std::size_t>{4, 1});
    for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = rng.uniform(-1.0, 1.0);
    layer.heads.emplace_back(tape.constant(w), tape.constant(a));
    const Tensor& out = tape.value(gat_layer(tape, h, batch, layer, false).output);
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(out.at(i, j) == doctest::Approx(out.at(0, j)).epsilon(1e-9));
}

TEST_CASE("gat_layer: continues the two-node hand example") {
    connectome::BrainGraph g = simple_graph(2, {{0, 1}}, Tensor::matrix(2, 1, {0.0, 1.0}));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    GatLayerVars layer;
    layer.heads.emplace_back(tape.constant(Tensor::matrix(1, 1, {1.0})),
                             tape.constant(Tensor::matrix(2, 1, {1.0, 1.0})));
    const Tensor& out = tape.value(gat_layer(tape, h, batch, layer, false).output);
    CHECK(out.at(0, 0) == doctest::Approx(0.7311).epsilon(1e-3));
}

TEST_CASE("gat_layer: zero attention vector reduces to neighborhood mean of Wh") {
    Rng rng(13);
    connectome::BrainGraph g = simple_graph(4, {{0, 1}, {0, 2}, {2, 3}},
                                            Tensor::matrix(4, 2));
    for (std::size_t i = 0; i < g.features.size(); ++i) g.features.at(i) = rng.uniform(-1.0, 1.0);
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tensor w(std::vector<std::size_t>{2, 3});
    for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);

    Tape tape;
    Var h = tape.constant(batch.features);
    GatLayerVars layer;
    layer.heads.emplace_back(tape.constant(w), tape.constant(Tensor::matrix(6, 1)));
    const Tensor& out = tape.value(gat_layer(tape, h, batch, layer, false).output);

    // independent mean aggregation oracle
    Tensor hw = Tensor::matrix(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 2; ++k) hw.at(i, j) += g.features.at(i, k) * w.at(k, j);
    const std::vector<std::vector<std::size_t>> hood{{0, 1, 2}, {0, 1}, {0, 2, 3}, {2, 3}};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double mean = 0.0;
            for (std::size_t s : hood[i]) mean += hw.at(s, j);
            mean /= static_cast<double>(hood[i].size());
            CHECK(std::abs(out.at(i, j) - mean) <= 1e-9);
        }
    }
}

TEST_CASE("stacked mean-like gat layers oversmooth node embeddings") {
    Rng rng(23);
    connectome::BrainGraph g = simple_graph(
        10, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 9}, {9, 0}},
        Tensor::matrix(10, 3));
    for (std::size_t i = 0; i < g.features.size(); ++i) g.features.at(i) = rng.uniform(-2.0, 2.0);
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});

    auto variance_after = [&](std::size_t layers) {
        Tape tape;
        Var h = tape.constant(batch.features);
        for (std::size_t l = 0; l < layers; ++l) {
            GatLayerVars layer;
            layer.heads.emplace_back(tape.constant(eye), tape.constant(Tensor::matrix(6, 1)));
            h = gat_layer(tape, h, batch, layer, false).output;
        }
        const Tensor& out = tape.value(h);
        double var = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < 10; ++i) mean += out.at(i, j);
            mean /= 10.0;
            for (std::size_t i = 0; i < 10; ++i) {
                const double d = out.at(i, j) - mean;
                var += d * d;
            }
        }
        return var;
    };
    CHECK(variance_after(10) < variance_after(1));
}

TEST_CASE("attention records: head-averaged alphas normalize per destination") {
    Rng rng(31);
    connectome::BrainGraph g = verify::random_graph(rng, 7, 3, 0.4);
    g.id = "g";
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tape tape;
    Var h = tape.constant(batch.features);
    GatLayerVars layer;
    for (int k = 0; k < 3; ++k) {
        Tensor w(std::vector<std::size_t>{3, 2}), a(std::vector<std::size_t>{4, 1});
        for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = rng.uniform(-1.0, 1.0);
        layer.heads.emplace_back(tape.leaf(w, false), tape.leaf(a, false));
    }
    GatLayerResult res = gat_layer(tape, h, batch, layer, true);
    std::vector<double> sums(7, 0.0);
    for (std::size_t e = 0; e < res.alpha_mean.size(); ++e) {
        CHECK(res.alpha_mean[e] >= 0.0);
        CHECK(res.alpha_mean[e] <= 1.0);
        sums[batch.loop_dst[e]] += res.alpha_mean[e];
    }
    for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gat layer gradient matches finite differences") {
    Rng rng(41);
    connectome::BrainGraph g = verify::random_graph(rng, 5, 3, 0.5);
    g.id = "g";
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tensor w(std::vector<std::size_t>{3, 2}), a(std::vector<std::size_t>{4, 1});
    for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = rng.uniform(-1.0, 1.0);

    // loss as a function of the node features
    auto build_h = [&](Tape& t, Var x) {
        GatLayerVars layer;
        layer.heads.emplace_back(t.constant(w), t.constant(a));
        return t.sum(gat_layer(t, x, batch, layer, false).output);
    };
    CHECK(finite_difference_check(build_h, batch.features) <= 1e-4);

    // loss as a function of the attention vector
    auto build_a = [&](Tape& t, Var av) {
        GatLayerVars layer;
        layer.heads.emplace_back(t.constant(w), av);
        return t.sum(gat_layer(t, t.constant(batch.features), batch, layer, false).output);
    };
    CHECK(finite_difference_check(build_a, a) <= 1e-4);
}

TEST_CASE("batch_norm: standardized input passes through with unit gamma") {
    // columns of [-1, 1] already have zero mean and unit population variance
    Tape tape;
    Tensor x = Tensor::matrix(2, 2, {-1, -1, 1, 1});
    BatchNormState state = BatchNormState::init(2);
    Var out = batch_norm(tape, tape.leaf(x, false), tape.constant(state.gamma),
                         tape.constant(state.beta), state, Mode::kTrain);
    const Tensor& y = tape.value(out);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.at(i) - x.at(i)) <= 1e-5);
}

TEST_CASE("batch_norm: zero gamma and beta 7 gives constant sevens") {
    Tape tape;
    BatchNormState state = BatchNormState::init(2);
    Tensor gamma = Tensor::matrix(1, 2);           // zeros
    Tensor beta = Tensor::filled({1, 2}, 7.0);
    Var out = batch_norm(tape, tape.leaf(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}), false),
                         tape.constant(gamma), tape.constant(beta), state, Mode::kTrain);
    const Tensor& y = tape.value(out);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.at(i) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("batch_norm: hand-checked column [0, 2]") {
    Tape tape;
    BatchNormState state = BatchNormState::init(1);
    Var out = batch_norm(tape, tape.leaf(Tensor::matrix(2, 1, {0.0, 2.0}), false),
                         tape.constant(state.gamma), tape.constant(state.beta), state, Mode::kTrain);
    const Tensor& y = tape.value(out);
    CHECK(std::abs(y.at(0) - (-1.0)) <= 1e-4);
    CHECK(std::abs(y.at(1) - 1.0) <= 1e-4);
    // running stats pulled toward the batch statistics (momentum 0.1)
    CHECK(state.running_mean.at(0) == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(state.running_var.at(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-9));
}

TEST_CASE("batch_norm: train mode rejects a single row") {
    Tape tape;
    BatchNormState state = BatchNormState::init(2);
    Var x = tape.leaf(Tensor::matrix(1, 2, {1, 2}), false);
    CHECK_THROWS_AS(
        batch_norm(tape, x, tape.constant(state.gamma), tape.constant(state.beta), state, Mode::kTrain),
        DataError);
}

TEST_CASE("batch_norm: eval mode normalizes with running statistics") {
    Tape tape;
    BatchNormState state = BatchNormState::init(1);
    state.running_mean.at(0) = 2.0;
    state.running_var.at(0) = 4.0;
    Var out = batch_norm(tape, tape.leaf(Tensor::matrix(1, 1, {4.0}), false),
                         tape.constant(state.gamma), tape.constant(state.beta), state, Mode::kEval);
    CHECK(tape.value(out).at(0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("dropout: identity cases") {
    Tape tape;
    Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Rng rng(1);
    Var xv = tape.leaf(x, false);
    Var same_p0 = dropout(tape, xv, 0.0, Mode::kTrain, &rng);
    Var same_eval = dropout(tape, xv, 0.6, Mode::kEval, nullptr);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(tape.value(same_p0).at(i) == x.at(i));
        CHECK(tape.value(same_eval).at(i) == x.at(i));
    }
    CHECK_THROWS_AS(dropout(tape, xv, 1.0, Mode::kTrain, &rng), ConfigError);
    CHECK_THROWS_AS(dropout(tape, xv, -0.1, Mode::kTrain, &rng), ConfigError);
}

TEST_CASE("dropout: survivors rescale to preserve the mean") {
    Tape tape;
    Rng rng(2024);
    Var ones = tape.leaf(Tensor::filled({100000, 1}, 1.0), false);
    const Tensor& y = tape.value(dropout(tape, ones, 0.2, Mode::kTrain, &rng));
    double mean = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += y.at(i);
    mean /= static_cast<double>(y.size());
    CHECK(mean >= 0.99);
    CHECK(mean <= 1.01);
}

TEST_CASE("global_mean_pool: single node, simple average, batched consistency") {
    connectome::BrainGraph g1 = simple_graph(1, {}, Tensor::matrix(1, 2, {4.0, 5.0}), 0, "a");
    GraphBatch single = GraphBatch::from_graphs({&g1});
    Tape tape;
    const Tensor& pooled1 =
        tape.value(global_mean_pool(tape, tape.constant(single.features), single));
    CHECK(pooled1.at(0, 0) == 4.0);
    CHECK(pooled1.at(0, 1) == 5.0);

    connectome::BrainGraph g2 = simple_graph(2, {{0, 1}}, Tensor::matrix(2, 2, {1, 3, 3, 1}), 1, "b");
    GraphBatch both = GraphBatch::from_graphs({&g1, &g2});
    const Tensor& pooled2 = tape.value(global_mean_pool(tape, tape.constant(both.features), both));
    CHECK(pooled2.rows() == 2);
    CHECK(pooled2.at(0, 0) == 4.0);
    CHECK(pooled2.at(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(pooled2.at(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("classifier: log-softmax rows exponentiate to one") {
    Rng rng(5);
    connectome::BrainGraph g1 = verify::random_graph(rng, 6, 4, 0.4, 0);
    connectome::BrainGraph g2 = verify::random_graph(rng, 6, 4, 0.4, 1);
    g1.id = "a";
    g2.id = "b";
    GraphBatch batch = GraphBatch::from_graphs({&g1, &g2});
    ClassifierConfig config;
    config.input_dim = 4;
    config.n_blocks = 2;
    config.heads = 2;
    config.head_dim = 3;
    config.fc_dim = 5;
    Rng init(1);
    ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
    Tape tape;
    ForwardOutputs out = model.forward(tape, batch, Mode::kEval, nullptr);
    const Tensor& lp = tape.value(out.log_probs);
    for (std::size_t i = 0; i < lp.rows(); ++i)
        CHECK(std::exp(lp.at(i, 0)) + std::exp(lp.at(i, 1)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(tape.value(out.embeddings).cols() == 5);
}

TEST_CASE("classifier: isomorphic graphs in one batch produce identical rows") {
    Tensor features = Tensor::matrix(3, 2, {0.1, -0.2, 0.5, 0.3, -0.4, 0.8});
    connectome::BrainGraph g1 = simple_graph(3, {{0, 1}, {1, 2}}, features, 0, "a");
    connectome::BrainGraph g2 = simple_graph(3, {{0, 1}, {1, 2}}, features, 1, "b");
    GraphBatch batch = GraphBatch::from_graphs({&g1, &g2});
    ClassifierConfig config;
    config.input_dim = 2;
    config.n_blocks = 2;
    config.heads = 2;
    config.head_dim = 2;
    config.fc_dim = 4;
    Rng init(3);
    ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
    Tape tape;
    const Tensor& lp = tape.value(model.forward(tape, batch, Mode::kEval, nullptr).log_probs);
    CHECK(lp.at(0, 0) == doctest::Approx(lp.at(1, 0)).epsilon(1e-12));
    CHECK(lp.at(0, 1) == doctest::Approx(lp.at(1, 1)).epsilon(1e-12));
}

TEST_CASE("classifier: fresh initialization scores near ln 2 on a balanced batch") {
    Rng rng(77);
    std::vector<connectome::BrainGraph> graphs;
    std::vector<const connectome::BrainGraph*> ptrs;
    for (int i = 0; i < 8; ++i) {
        graphs.push_back(verify::random_graph(rng, 6, 5, 0.3, i % 2));
        graphs.back().id = "g" + std::to_string(i);
    }
    for (const auto& g : graphs) ptrs.push_back(&g);
    GraphBatch batch = GraphBatch::from_graphs(ptrs);
    ClassifierConfig config;
    config.input_dim = 5;
    config.n_blocks = 3;
    config.heads = 2;
    config.head_dim = 4;
    config.fc_dim = 6;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng init(seed);
        ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
        Tape tape;
        ForwardOutputs out = model.forward(tape, batch, Mode::kEval, nullptr);
        total += tape.value(train::nll_loss(tape, out.log_probs, batch.labels)).item();
    }
    CHECK(std::abs(total / 5.0 - std::log(2.0)) <= 0.15);
}

TEST_CASE("classifier: node relabeling leaves eval outputs unchanged") {
    Rng rng(99);
    connectome::BrainGraph g = verify::random_graph(rng, 7, 4, 0.4, 1);
    g.id = "orig";
    // relabel nodes with a fixed permutation
    const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    connectome::BrainGraph p = g;
    p.id = "perm";
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 4; ++j) p.features.at(perm[i], j) = g.features.at(i, j);
    p.edges.clear();
    for (const auto& e : g.edges) {
        std::size_t a = perm[e.i], b = perm[e.j];
        if (a > b) std::swap(a, b);
        p.edges.push_back({a, b, e.weight});
    }
    for (std::size_t i = 0; i < 7; ++i) p.region_names[perm[i]] = g.region_names[i];

    ClassifierConfig config;
    config.input_dim = 4;
    config.n_blocks = 3;
    config.heads = 2;
    config.head_dim = 3;
    config.fc_dim = 4;
    for (ModelKind kind : {ModelKind::kGat, ModelKind::kGcn}) {
        Rng init(11);
        ClassifierModel model = ClassifierModel::init(kind, config, init);
        GraphBatch ba = GraphBatch::from_graphs({&g});
        GraphBatch bb = GraphBatch::from_graphs({&p});
        Tape ta, tb;
        const Tensor& la = ta.value(model.forward(ta, ba, Mode::kEval, nullptr).log_probs);
        const Tensor& lb = tb.value(model.forward(tb, bb, Mode::kEval, nullptr).log_probs);
        CHECK(std::abs(la.at(0, 0) - lb.at(0, 0)) <= 1e-9);
        CHECK(std::abs(la.at(0, 1) - lb.at(0, 1)) <= 1e-9);
    }
}

TEST_CASE("classifier: feature width mismatch is rejected") {
    Rng rng(1);
    connectome::BrainGraph g = verify::random_graph(rng, 4, 3, 0.5);
    g.id = "g";
    GraphBatch batch = GraphBatch::from_graphs({&g});
    ClassifierConfig config;
    config.input_dim = 7;
    config.n_blocks = 1;
    config.heads = 1;
    config.head_dim = 2;
    config.fc_dim = 2;
    Rng init(2);
    ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
    Tape tape;
    CHECK_THROWS_AS(model.forward(tape, batch, Mode::kEval, nullptr), ShapeError);
}

TEST_CASE("gcn classifier: isolated nodes reduce each block to a dense layer") {
    // no edges: A_norm = I, so the block is sigma(BN(H W))
    connectome::BrainGraph g = simple_graph(3, {}, Tensor::matrix(3, 2, {1, 2, -1, 0.5, 0.3, -2}));
    GraphBatch batch = GraphBatch::from_graphs({&g});
    Tensor a_norm = normalize_adjacency(batch.adjacency());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(a_norm.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));

    Rng rng(6);
    Tensor w(std::vector<std::size_t>{2, 4});
    for (std::size_t i = 0; i < w.size(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
    Tape tape;
    Var h = tape.constant(batch.features);
    const Tensor& via_layer = tape.value(gcn_layer(tape, h, tape.constant(a_norm), tape.constant(w)));
    const Tensor& direct = tape.value(tape.matmul(h, tape.constant(w)));
    for (std::size_t i = 0; i < via_layer.size(); ++i)
        CHECK(via_layer.at(i) == doctest::Approx(direct.at(i)).epsilon(1e-12));
}

TEST_CASE("default configuration matches the reference architecture table") {
    ClassifierConfig config;
    CHECK(config.n_blocks == 7);
    CHECK(config.heads == 8);
    CHECK(config.head_dim == 256);
    CHECK(config.block_width() == 2048);
    CHECK(config.fc_dim == 1024);
    CHECK(config.dropout_block1 == 0.1);
    CHECK(config.dropout_rest == 0.2);
    config.input_dim = 316;
    Rng init(0);
    ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
    auto params = model.parameters();
    // 7 blocks x (8 heads x 2 + gamma + beta) + 4 fc tensors
    CHECK(params.size() == 7 * (8 * 2 + 2) + 4);
    CHECK(params[0]->rows() == 316);
    CHECK(params[0]->cols() == 256);
}

TEST_CASE("full classifier gradients match finite differences") {
    verify::CheckResult r = verify::gradient_model_check();
    INFO("max relative error ", r.value);
    CHECK(r.value <= r.bound);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    auto dir = test_support::scratch_dir("ckpt");
    ClassifierConfig config;
    config.input_dim = 5;
    config.n_blocks = 2;
    config.heads = 2;
    config.head_dim = 3;
    config.fc_dim = 4;
    Rng init(123);
    ClassifierModel model = ClassifierModel::init(ModelKind::kGat, config, init);
    // perturb running stats so they are non-trivial
    auto named = model.named_tensors();
    for (auto& [name, t] : named) {
        if (name.find("running") != std::string::npos)
            for (std::size_t i = 0; i < t->size(); ++i) t->at(i) += 0.25 * static_cast<double>(i + 1);
    }
    save_checkpoint(dir / "m.bin", model);
    ClassifierModel loaded = load_checkpoint(dir / "m.bin");
    CHECK(loaded.kind() == ModelKind::kGat);
    auto named_back = loaded.named_tensors();
    REQUIRE(named_back.size() == named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
        CHECK(named_back[i].first == named[i].first);
        REQUIRE(named_back[i].second->size() == named[i].second->size());
        for (std::size_t k = 0; k < named[i].second->size(); ++k)
            CHECK(named_back[i].second->at(k) == named[i].second->at(k));  // bitwise
    }
}

}  // TEST_SUITE
