#include <gtest/gtest.h>

#include <algorithm>

#include "golden.hpp"
#include "sgmt/error.hpp"
#include "sgmt/gat_adapter.hpp"
#include "sgmt/gradcheck.hpp"
#include "sgmt/synthetic.hpp"
#include "test_util.hpp"

using namespace sgmt;
using testutil::adapter_config;
using testutil::max_abs;

using testutil::permuted;
using testutil::random_perm;

TEST(Attention, PathGraphGolden) {
  auto tsg = testutil::one_graph(R"({"entities":["a","b","c"],"relations":[["a","r1","b"],["b","r2","c"]]})",
                                 Origin::Tsg);
  auto g = embed_graph(build_lsg(tsg, "a b c"), StubProvider(2));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(2, 1, 1));
  testutil::set_formula_params(store, "adapter");
  auto batch = GraphBatch::from(g);
  std::size_t row = 0;
  for (int node = 0; node < g.num_nodes(); ++node) {
    auto c = adapter.attention_coefficients(batch, batch.node_features, 0, node);
    std::vector<std::pair<int, double>> got;
    for (std::size_t k = 0; k < c.sources.size(); ++k) got.emplace_back(c.sources[k], c.weights[k]);
    std::sort(got.begin(), got.end());
    for (const auto& [src, alpha] : got) {
      const auto& want = golden::kPathAlpha.at(row++);
      EXPECT_EQ(node, static_cast<int>(want[0]));
      EXPECT_EQ(src, static_cast<int>(want[1]));
      EXPECT_NEAR(alpha, want[2], 1e-12) << "node " << node << " src " << src;
    }
  }
  EXPECT_EQ(row, golden::kPathAlpha.size());
}

TEST(Attention, OnlySuperLinkGetsOne) {
  auto g = embed_graph(build_lsg(testutil::one_graph(R"({"entities":["x","y"],"relations":[]})", Origin::Tsg), "k"),
                       StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 1, 2));
  nn::init_all(store, 3);
  auto batch = GraphBatch::from(g);
  auto c = adapter.attention_coefficients(batch, batch.node_features, 0, 0);
  ASSERT_EQ(c.weights.size(), 1u);
  EXPECT_EQ(c.weights[0], 1.0);
  EXPECT_EQ(c.sources[0], g.super_index());
}

TEST(Attention, EqualLogitsSplitEvenly) {
  auto g = embed_graph(build_lsg(testutil::one_graph(R"({"entities":["x","y"],"relations":[]})", Origin::Tsg), "k"),
                       StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 1, 2));
  nn::init_all(store, 3);
  store.get("adapter.gat.0.attention").value.setZero();
  auto batch = GraphBatch::from(g);
  auto c = adapter.attention_coefficients(batch, batch.node_features, 0, g.super_index());
  ASSERT_EQ(c.weights.size(), 2u);
  EXPECT_EQ(c.weights[0], 0.5);
  EXPECT_EQ(c.weights[1], 0.5);
}

TEST(Attention, NormalisedOnRandomGraphs) {
  SplitMix64 rng(5);
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 3, 2));
  nn::init_all(store, 9);
  for (int trial = 0; trial < 20; ++trial) {
    auto tsg = synthetic::random_scene_graph(rng, Origin::Tsg, 1 + static_cast<int>(rng.below(6)), 2);
    auto g = embed_graph(build_lsg(tsg, "k" + std::to_string(trial)), StubProvider(8));
    auto batch = GraphBatch::from(g);
    for (const Matrix& alpha : adapter.attention_per_layer(batch)) {
      Matrix sums = Matrix::Zero(batch.num_nodes(), 1);
      for (int k = 0; k < batch.num_messages(); ++k) sums(batch.msg_target[static_cast<std::size_t>(k)], 0) += alpha(k, 0);
      EXPECT_LT(max_abs(sums.array() - 1.0), 1e-12);
    }
  }
}

TEST(GatLayer, SingleNodeGolden) {
  auto g = embed_graph(build_lsg(testutil::one_graph(R"({"entities":["dog"],"relations":[]})", Origin::Tsg), "a dog"),
                       StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 1, 2));
  testutil::set_formula_params(store, "adapter");
  auto batch = GraphBatch::from(g);
  const Matrix z = adapter.layer_forward(batch, batch.node_features, 0);
  EXPECT_LT(max_abs(z - testutil::to_matrix(golden::kSingleNodeLayer)), 1e-12);
}

TEST(GatLayer, ZeroWeightIsIdentity) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 2, 2));
  nn::init_all(store, 1);
  store.get("adapter.gat.1.weight").value.setZero();
  auto batch = GraphBatch::from(g);
  const Matrix z = adapter.layer_forward(batch, batch.node_features, 1);
  EXPECT_EQ(z, batch.node_features);
}

TEST(GatLayer, PermutationEquivariant) {
  SplitMix64 rng(17);
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(6));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(6, 2, 2));
  nn::init_all(store, 2);
  const Matrix z = adapter.layer_forward(GraphBatch::from(g), g.node_features, 0);
  for (int trial = 0; trial < 5; ++trial) {
    auto perm = random_perm(rng, g.num_ordinary);
    auto p = permuted(g, perm);
    const Matrix zp = adapter.layer_forward(GraphBatch::from(p), p.node_features, 0);
    for (int i = 0; i < g.num_ordinary; ++i) {
      EXPECT_LT(max_abs(zp.row(perm[static_cast<std::size_t>(i)]) - z.row(i)), 1e-12);
    }
    EXPECT_LT(max_abs(zp.row(g.super_index()) - z.row(g.super_index())), 1e-12);
  }
}

TEST(GatLayer, DimensionMismatch) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(6));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 1, 2));
  EXPECT_THROW(adapter.forward(g), ValidationError);
}

TEST(Pooling, FiveNodeGolden) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 2, 2));
  testutil::set_formula_params(store, "adapter");
  EXPECT_LT(max_abs(adapter.forward(g) - testutil::to_matrix(golden::kFiveNodeZg)), 1e-12);
}

TEST(Pooling, SingleNodeIsFeatureNet) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 1, 2));
  nn::init_all(store, 4);
  store.get("adapter.pool.feature.bias").value.setConstant(0.3);
  Tape t(false);
  Matrix z(1, 4);
  z << 0.1, -0.2, 0.3, 0.4;
  const std::vector<int> seg = {0};
  const Matrix zg = t.value(adapter.pool(t, t.constant(z), seg, 1));
  const auto& f = adapter.pool_feature();
  const Matrix expect = z * f.weight->value.transpose() + f.bias->value;
  EXPECT_LT(max_abs(zg - expect), 1e-15);
}

TEST(Pooling, PermutationInvariant) {
  SplitMix64 rng(23);
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(8));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 2, 2));
  nn::init_all(store, 6);
  const Matrix zg = adapter.forward(g);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_LT(max_abs(adapter.forward(permuted(g, random_perm(rng, g.num_ordinary))) - zg), 1e-12);
  }
}

TEST(Pooling, BatchedMatchesSingle) {
  SplitMix64 rng(29);
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 2, 2));
  nn::init_all(store, 8);
  std::vector<EmbeddedGraph> graphs;
  for (int i = 0; i < 6; ++i) {
    auto tsg = synthetic::random_scene_graph(rng, Origin::Tsg, 1 + static_cast<int>(rng.below(5)), 1);
    graphs.push_back(embed_graph(build_lsg(tsg, "s" + std::to_string(i)), StubProvider(8)));
  }
  const Matrix all = adapter.forward(GraphBatch::from(graphs));
  ASSERT_EQ(all.rows(), 6);
  for (int i = 0; i < 6; ++i) EXPECT_LT(max_abs(all.row(i) - adapter.forward(graphs[static_cast<std::size_t>(i)])), 1e-12);
}

TEST(Fusion, GoldenHPrime) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 2, 2));
  testutil::set_formula_params(store, "adapter");
  const auto s = adapter.fuse(testutil::formula_h(3, 4), adapter.forward(g));
  EXPECT_LT(max_abs(s.H_prime - testutil::to_matrix(golden::kFuseHPrime)), 1e-12);
}

TEST(Fusion, SingleKeyWeightsAreExactlyOne) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 4));
  nn::init_all(store, 12);
  const auto s = adapter.fuse(testutil::formula_h(5, 8), testutil::formula_h(1, 8) * 3.0);
  ASSERT_EQ(s.attention_weights.size(), 4u);
  for (const auto& w : s.attention_weights) {
    ASSERT_EQ(w.rows(), 5);
    ASSERT_EQ(w.cols(), 1);
    EXPECT_TRUE((w.array() == 1.0).all());
  }
}

TEST(Fusion, GateRangeAndDeterminism) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  nn::init_all(store, 13);
  const Matrix h = testutil::formula_h(4, 8);
  const Matrix zg = testutil::formula_h(1, 8);
  const auto a = adapter.fuse(h, zg);
  const auto b = adapter.fuse(h, zg);
  EXPECT_TRUE((a.g.array() > 0.0).all() && (a.g.array() < 1.0).all());
  EXPECT_EQ(a.H_prime, b.H_prime);
  EXPECT_EQ(a.A, b.A);
}

TEST(Fusion, GateOffRecoversLayerNormOfH) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  nn::init_all(store, 14);
  store.get("adapter.gate.output.weight").value.setZero();
  store.get("adapter.gate.output.bias").value.setConstant(-20.0);
  const Matrix h = testutil::formula_h(3, 8);
  const auto s = adapter.fuse(h, testutil::formula_h(1, 8));
  Tape t(false);
  const Matrix ln = t.value(nn::apply(t, t.constant(h), adapter.gate_norm()));
  EXPECT_LT(max_abs(s.H_prime - ln), 1e-6);
}

TEST(Fusion, ZeroValueAndOutputGivesResidual) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  nn::init_all(store, 15);
  for (const char* n : {"adapter.fusion.value.weight", "adapter.fusion.value.bias", "adapter.fusion.output.weight",
                        "adapter.fusion.output.bias"}) {
    store.get(n).value.setZero();
  }
  const Matrix h = testutil::formula_h(3, 8);
  EXPECT_EQ(adapter.fuse(h, testutil::formula_h(1, 8)).A, h);
}

TEST(Fusion, NoGateIsLayerNormOfO) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  nn::init_all(store, 16);
  adapter.set_no_gate(true);
  const auto s = adapter.fuse(testutil::formula_h(3, 8), testutil::formula_h(1, 8));
  EXPECT_EQ(s.g.size(), 0);
  Tape t(false);
  EXPECT_EQ(s.H_prime, t.value(nn::apply(t, t.constant(s.O), adapter.gate_norm())));
}

TEST(Fusion, WidthMismatch) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  EXPECT_THROW(adapter.fuse(testutil::formula_h(3, 8), testutil::formula_h(1, 4)), ValidationError);
  EXPECT_THROW(adapter.fuse(testutil::formula_h(3, 4), testutil::formula_h(1, 8)), ValidationError);
}

TEST(Fusion, DropoutOnlyWhenTraining) {
  ParamStore store;
  GatAdapter adapter(store, adapter_config(8, 1, 2));
  nn::init_all(store, 17);
  const Matrix h = testutil::formula_h(6, 8);
  const Matrix zg = testutil::formula_h(1, 8);
  SplitMix64 rng(1);
  const auto train = adapter.fuse(h, zg, true, &rng);
  const auto eval = adapter.fuse(h, zg);
  EXPECT_GT(max_abs(train.O - eval.O), 1e-3);
  EXPECT_THROW(adapter.fuse(h, zg, true, nullptr), ValidationError);
}

TEST(AdapterBackward, Gradcheck) {
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    GradcheckOptions o;
    o.seed = seed;
    const auto r = adapter_gradcheck(o);
    EXPECT_LT(r.max_rel_error, 1e-6) << to_json(r);
  }
  GradcheckOptions o;
  o.no_gate = true;
  o.dim = 6;
  o.heads = 3;
  EXPECT_LT(adapter_gradcheck(o).max_rel_error, 1e-6);
}

TEST(AdapterBackward, ZeroUpstreamAndMissingCache) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 2, 2));
  nn::init_all(store, 1);
  AdapterTrace empty;
  EXPECT_THROW(adapter_backward(empty, store, Matrix::Zero(3, 4)), ValidationError);
  auto trace = AdapterTrace::run(adapter, g, testutil::formula_h(3, 4));
  auto grads = adapter_backward(trace, store, Matrix::Zero(3, 4));
  for (const auto& [name, grad] : grads.params) EXPECT_TRUE((grad.array() == 0.0).all()) << name;
  EXPECT_TRUE((grads.h.array() == 0.0).all());
}

TEST(AdapterBackward, FrozenTensorHasZeroGradient) {
  auto g = embed_graph(testutil::five_node_msg(), StubProvider(4));
  ParamStore store;
  GatAdapter adapter(store, adapter_config(4, 2, 2));
  nn::init_all(store, 1);
  store.get("adapter.gat.0.weight").frozen = true;
  auto trace = AdapterTrace::run(adapter, g, testutil::formula_h(3, 4));
  auto grads = adapter_backward(trace, store, Matrix::Ones(3, 4));
  EXPECT_TRUE((grads.params.at("adapter.gat.0.weight").array() == 0.0).all());
  EXPECT_GT(grads.params.at("adapter.gat.1.weight").norm(), 0.0);
}
