// SPDX-License-Identifier: Apache-2.0

#include "sgmt/gat_adapter.hpp"

#include "sgmt/error.hpp"

namespace sgmt {

Activation parse_activation(std::string_view name) {
  if (name == "elu") return Activation::Elu;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "elu";
}

void AdapterConfig::validate() const {
  if (dim < 1) throw ValidationError("adapter dim must be >= 1");
  if (layers < 1) throw ValidationError("adapter needs at least one layer");
  if (gat_heads < 1 || dim % gat_heads != 0) throw ValidationError("dim must be divisible by gat_heads");
  if (fusion_heads < 1 || dim % fusion_heads != 0) {
    throw ValidationError("dim must be divisible by fusion heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout rate must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// GraphBatch

GraphBatch GraphBatch::from(std::span<const EmbeddedGraph> graphs) {
  if (graphs.empty()) throw ValidationError("graph batch is empty");
  const Index d = graphs.front().node_features.cols();
  Index total_nodes = 0;
  Index total_edges = 0;
  for (const auto& g : graphs) {
    if (g.node_features.cols() != d || g.edge_features.cols() != d) {
      throw ValidationError("graph batch: feature widths differ");
    }
    if (g.num_ordinary < 1) throw ValidationError("super node has no incident messages (graph has no ordinary nodes)");
    if (g.node_features.rows() != g.num_nodes() ||
        g.edge_features.rows() != g.num_scene_edges() + g.num_ordinary) {
      throw ValidationError("embedded graph row counts do not match its structure");
    }
    total_nodes += g.node_features.rows();
    total_edges += g.edge_features.rows();
  }

  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  b.node_features.resize(total_nodes, d);
  b.edge_features.resize(total_edges, d);
  int node_at = 0;
  int edge_at = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    const int n = g.num_ordinary;
    const int m = g.num_scene_edges();
    b.node_features.middleRows(node_at, g.num_nodes()) = g.node_features;
    b.edge_features.middleRows(edge_at, m + n) = g.edge_features;
    b.node_offset.push_back(node_at);
    for (int i = 0; i < g.num_nodes(); ++i) b.node_graph.push_back(static_cast<int>(gi));

    auto add = [&](int target, int source, int edge) {
      b.msg_target.push_back(node_at + target);
      b.msg_source.push_back(node_at + source);
      b.msg_edge.push_back(edge_at + edge);
    };
    for (int e = 0; e < m; ++e) {
      const auto [s, t] = g.scene_edges[static_cast<std::size_t>(e)];
      if (s < 0 || s >= n || t < 0 || t >= n) throw ValidationError("scene edge endpoint out of range");
      add(t, s, e);
      if (s != t) add(s, t, e);
    }
    const int sn = g.super_index();
    for (int i = 0; i < n; ++i) add(i, sn, m + i);
    for (int i = 0; i < n; ++i) add(sn, i, m + i);

    node_at += g.num_nodes();
    edge_at += m + n;
  }
  return b;
}

GraphBatch GraphBatch::from(const EmbeddedGraph& graph) { return from(std::span<const EmbeddedGraph>(&graph, 1)); }

// ---------------------------------------------------------------------------
// GatAdapter

GatAdapter::GatAdapter(ParamStore& store, AdapterConfig config) : config_(config) {
  config_.validate();
  const Index d = config_.dim;
  for (int l = 0; l < config_.layers; ++l) {
    const std::string prefix = "adapter.gat." + std::to_string(l);
    LayerParams lp;
    lp.weight = &store.add(prefix + ".weight", "adapter", d, 3 * d);
    lp.attention = &store.add(prefix + ".attention", "adapter", config_.gat_heads, 3 * d);
    layers_.push_back(lp);
  }
  pool_gate_ = nn::add_linear(store, "adapter.pool.gate", "adapter", d, 1);
  pool_feat_ = nn::add_linear(store, "adapter.pool.feature", "adapter", d, d);
  fusion_ = nn::add_attention(store, "adapter.fusion", "adapter", d);
  gate_w1_ = nn::add_linear(store, "adapter.gate.hidden", "adapter", 2 * d, d);
  gate_w2_ = nn::add_linear(store, "adapter.gate.output", "adapter", d, d);
  norm_fusion_ = nn::add_layer_norm(store, "adapter.norm.fusion", "adapter", d);
  norm_gate_ = nn::add_layer_norm(store, "adapter.norm.gate", "adapter", d);
}

Var GatAdapter::messages(Tape& t, const GraphBatch& batch, Var z, Var edges, int layer, Var* alpha_out) const {
  if (layer < 0 || layer >= config_.layers) throw ValidationError("layer index out of range");
  const auto& lp = layers_[static_cast<std::size_t>(layer)];
  const Index d = config_.dim;
  if (t.value(z).cols() != d || t.value(z).rows() != batch.num_nodes()) {
    throw ValidationError("node state shape does not match graph batch / adapter dim");
  }
  if (t.value(edges).cols() != d) throw ValidationError("edge feature width does not match adapter dim");

  Var zt = t.gather_rows(z, batch.msg_target);
  Var zs = t.gather_rows(z, batch.msg_source);
  Var ee = t.gather_rows(edges, batch.msg_edge);
  const Var parts[] = {zt, zs, ee};
  Var m = t.concat_cols(parts);

  Var logits = t.leaky_relu(t.matmul_nt(m, t.param(*lp.attention)), kLeakySlope);
  Var alpha = t.segment_softmax(logits, batch.msg_target, batch.num_nodes());
  if (alpha_out != nullptr) *alpha_out = alpha;

  Var msg = t.leaky_relu(t.matmul_nt(m, t.param(*lp.weight)), kLeakySlope);
  Var weighted;
  if (config_.gat_heads == 1) {
    weighted = t.mul_col(msg, alpha);
  } else {
    // Spread each head's alpha over that head's block of output channels.
    const Index hd = d / config_.gat_heads;
    Matrix spread = Matrix::Zero(config_.gat_heads, d);
    for (int h = 0; h < config_.gat_heads; ++h) spread.block(h, h * hd, 1, hd).setOnes();
    weighted = t.mul(msg, t.matmul(alpha, t.constant(std::move(spread))));
  }
  return t.segment_sum(weighted, batch.msg_target, batch.num_nodes());
}

Var GatAdapter::layer_forward(Tape& t, const GraphBatch& batch, Var z, int layer) const {
  Var edges = t.constant(batch.edge_features);
  Var agg = messages(t, batch, z, edges, layer, nullptr);
  Var act;
  switch (config_.sigma) {
    case Activation::Elu: act = t.elu(agg); break;
    case Activation::Relu: act = t.relu(agg); break;
    case Activation::Tanh: act = t.tanh(agg); break;
  }
  return t.add(act, z);
}

Var GatAdapter::pool(Tape& t, Var z, std::span<const int> segment, int num_segments) const {
  Var gate = nn::apply(t, z, pool_gate_);
  Var weights = t.segment_softmax(gate, segment, num_segments);
  Var feat = nn::apply(t, z, pool_feat_);
  return t.segment_sum(t.mul_col(feat, weights), segment, num_segments);
}

Var GatAdapter::forward(Tape& t, const GraphBatch& batch, Var* node_states) const {
  if (batch.node_features.cols() != config_.dim) {
    throw ValidationError("graph feature dim " + std::to_string(batch.node_features.cols()) +
                          " does not match adapter dim " + std::to_string(config_.dim));
  }
  Var z = t.constant(batch.node_features);
  for (int l = 0; l < config_.layers; ++l) z = layer_forward(t, batch, z, l);
  if (node_states != nullptr) *node_states = z;
  return pool(t, z, batch.node_graph, batch.num_graphs);
}

FusionVars GatAdapter::fuse(Tape& t, Var h, Var zg, bool training, SplitMix64* rng) const {
  const Matrix& hv = t.value(h);
  if (hv.rows() < 1) throw ValidationError("fuse: H must have at least one row");
  if (hv.cols() != config_.dim || t.value(zg).cols() != config_.dim) {
    throw ValidationError("fuse: width mismatch between H, Z_g and adapter dim");
  }
  if (t.value(zg).rows() != 1) throw ValidationError("fuse: Z_g must be a single row");
  if (training && config_.dropout > 0.0 && rng == nullptr) throw ValidationError("fuse: training needs an rng");

  FusionVars out;
  Var mha = nn::multi_head_attention(t, h, zg, fusion_, config_.fusion_heads, nullptr, &out.attention_weights);
  out.attn_residual = t.add(mha, h);
  Var dropped = training ? nn::dropout(t, out.attn_residual, config_.dropout, *rng) : out.attn_residual;
  out.fused = nn::apply(t, dropped, norm_fusion_);
  if (config_.no_gate) {
    out.output = nn::apply(t, out.fused, norm_gate_);
    return out;
  }
  const Var both[] = {out.fused, h};
  Var hidden = t.relu(nn::apply(t, t.concat_cols(both), gate_w1_));
  out.gate = t.sigmoid(nn::apply(t, hidden, gate_w2_));
  Var keep = t.affine(out.gate, -1.0, 1.0);
  Var mixed = t.add(t.mul(out.gate, out.fused), t.mul(keep, h));
  out.output = nn::apply(t, mixed, norm_gate_);
  return out;
}

std::vector<Matrix> GatAdapter::attention_per_layer(const GraphBatch& batch) const {
  Tape t(false);
  Var edges = t.constant(batch.edge_features);
  Var z = t.constant(batch.node_features);
  std::vector<Matrix> out;
  for (int l = 0; l < config_.layers; ++l) {
    Var alpha;
    messages(t, batch, z, edges, l, &alpha);
    out.push_back(t.value(alpha));
    z = layer_forward(t, batch, z, l);
  }
  return out;
}

AttentionCoefficients GatAdapter::attention_coefficients(const GraphBatch& batch, const Matrix& z_prev, int layer,
                                                         int node) const {
  if (node < 0 || node >= batch.num_nodes()) throw ValidationError("node index out of range");
  Tape t(false);
  Var alpha;
  messages(t, batch, t.constant(z_prev), t.constant(batch.edge_features), layer, &alpha);
  AttentionCoefficients out;
  const Matrix& a = t.value(alpha);
  for (int k = 0; k < batch.num_messages(); ++k) {
    if (batch.msg_target[static_cast<std::size_t>(k)] != node) continue;
    out.sources.push_back(batch.msg_source[static_cast<std::size_t>(k)]);
    out.weights.push_back(a(k, 0));
  }
  if (out.sources.empty()) throw ValidationError("node has no incident messages");
  return out;
}

Matrix GatAdapter::layer_forward(const GraphBatch& batch, const Matrix& z_prev, int layer) const {
  Tape t(false);
  return t.value(layer_forward(t, batch, t.constant(z_prev), layer));
}

Matrix GatAdapter::forward(const GraphBatch& batch) const {
  Tape t(false);
  return t.value(forward(t, batch));
}

Matrix GatAdapter::forward(const EmbeddedGraph& graph) const { return forward(GraphBatch::from(graph)); }

FusionState GatAdapter::fuse(const Matrix& h, const Matrix& zg, bool training, SplitMix64* rng) const {
  Tape t(false);
  FusionVars v = fuse(t, t.constant(h), t.constant(zg), training, rng);
  FusionState s;
  s.A = t.value(v.attn_residual);
  s.O = t.value(v.fused);
  if (v.gate.valid()) s.g = t.value(v.gate);
  s.H_prime = t.value(v.output);
  s.attention_weights = std::move(v.attention_weights);
  return s;
}

// ---------------------------------------------------------------------------
// Trace / backward

AdapterTrace AdapterTrace::run(const GatAdapter& adapter, const EmbeddedGraph& graph, const Matrix& h) {
  AdapterTrace trace;
  Tape& t = trace.tape_;
  auto batch = GraphBatch::from(graph);
  trace.zg_ = adapter.forward(t, batch);
  trace.h_ = t.variable(h);
  trace.output_ = adapter.fuse(t, trace.h_, trace.zg_, false, nullptr).output;
  return trace;
}

AdapterGradients adapter_backward(AdapterTrace& trace, ParamStore& store, const Matrix& upstream) {
  if (trace.empty()) throw ValidationError("adapter_backward: no cached forward pass");
  for (auto* p : store.group("adapter")) p->grad.setZero();
  trace.tape_.clear_grads();
  trace.tape_.backward(trace.output_, upstream);
  AdapterGradients out;
  for (auto* p : store.group("adapter")) out.params.emplace(p->name, p->grad);
  out.h = trace.tape_.grad(trace.h_);
  return out;
}

}  // namespace sgmt
