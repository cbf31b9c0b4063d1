// SPDX-License-Identifier: Apache-2.0
//
// Graph attention adapter.
//
// L layers of edge-featured attention message passing over a super-node
// graph, global attention pooling to one graph vector Z_g, and gated
// cross-attention fusion of Z_g into encoder states H. One parameter set
// serves multimodal (image super node) and linguistic (text super node)
// graphs alike.
//
// Per layer l, for node i with incoming messages from j (scene neighbours in
// both edge directions, plus the super node; the super node receives from
// every ordinary node):
//
//   m_ij   = [Z_i || Z_j || E_ij]
//   e_ij   = LeakyReLU_0.2(a_l . m_ij)
//   alpha  = softmax_j(e_ij)
//   Z_i'   = sigma(sum_j alpha_ij * LeakyReLU_0.2(W_l m_ij)) + Z_i
//
// Pooling: Z_g = sum_i softmax_i(gate(Z_i)) * feat(Z_i) over all nodes.
//
// Fusion for H [T x d]:
//   A  = MHA(H, Z_g, Z_g) + H
//   O  = LayerNorm(Dropout(A))
//   g  = sigmoid(W2 ReLU(W1 [O || H]))
//   H' = LayerNorm(g * O + (1 - g) * H)
// With no_gate set, H' = LayerNorm(O).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgmt/embeddings.hpp"
#include "sgmt/nn.hpp"
#include "sgmt/tensor.hpp"

namespace sgmt {

enum class Activation { Elu, Relu, Tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

inline constexpr double kLeakySlope = 0.2;

struct AdapterConfig {
  int dim = 1024;
  int layers = 9;
  int gat_heads = 1;
  int fusion_heads = 8;
  Activation sigma = Activation::Elu;
  double dropout = 0.1;
  bool no_gate = false;

  void validate() const;
};

// Disjoint union of one or more embedded graphs. Messages are listed per
// graph: scene edges in both directions, then ordinary->super and
// super->ordinary links. node_graph assigns each node its pooling segment.
struct GraphBatch {
  Matrix node_features;
  Matrix edge_features;
  std::vector<int> msg_target;
  std::vector<int> msg_source;
  std::vector<int> msg_edge;
  std::vector<int> node_graph;
  std::vector<int> node_offset;  // first node row of each graph
  int num_graphs = 0;

  int num_nodes() const { return static_cast<int>(node_graph.size()); }
  int num_messages() const { return static_cast<int>(msg_target.size()); }

  static GraphBatch from(std::span<const EmbeddedGraph> graphs);
  static GraphBatch from(const EmbeddedGraph& graph);
};

struct AttentionCoefficients {
  std::vector<int> sources;    // sending node per incident message
  std::vector<double> weights; // alpha for each message, head 0
};

struct FusionVars {
  Var attn_residual;  // A
  Var fused;          // O
  Var gate;           // g (invalid under no_gate)
  Var output;         // H'
  std::vector<Matrix> attention_weights;  // per head, [T x 1]
};

struct FusionState {
  Matrix A;
  Matrix O;
  Matrix g;  // empty under no_gate
  Matrix H_prime;
  std::vector<Matrix> attention_weights;
};

class GatAdapter {
 public:
  // Registers every adapter tensor in `store` under group "adapter".
  GatAdapter(ParamStore& store, AdapterConfig config);

  const AdapterConfig& config() const { return config_; }
  void set_no_gate(bool no_gate) { config_.no_gate = no_gate; }

  // One message-passing layer; z is [N x d] for the whole batch.
  Var layer_forward(Tape& t, const GraphBatch& batch, Var z, int layer) const;
  // All layers then pooling; returns Z_g as [num_graphs x d].
  Var forward(Tape& t, const GraphBatch& batch, Var* node_states = nullptr) const;
  Var pool(Tape& t, Var z, std::span<const int> segment, int num_segments) const;
  // h is [T x d], zg is [1 x d]. rng is required when training.
  FusionVars fuse(Tape& t, Var h, Var zg, bool training, SplitMix64* rng) const;

  // Per-layer alpha values ([messages x gat_heads]) from an inference run.
  std::vector<Matrix> attention_per_layer(const GraphBatch& batch) const;
  AttentionCoefficients attention_coefficients(const GraphBatch& batch, const Matrix& z_prev, int layer,
                                               int node) const;

  // Inference helpers on plain matrices.
  Matrix layer_forward(const GraphBatch& batch, const Matrix& z_prev, int layer) const;
  Matrix forward(const GraphBatch& batch) const;
  Matrix forward(const EmbeddedGraph& graph) const;
  FusionState fuse(const Matrix& h, const Matrix& zg, bool training = false, SplitMix64* rng = nullptr) const;

  struct LayerParams {
    Parameter* weight = nullptr;     // [d x 3d]
    Parameter* attention = nullptr;  // [gat_heads x 3d]
  };
  std::span<const LayerParams> layer_params() const { return layers_; }
  const nn::LinearParams& pool_gate() const { return pool_gate_; }
  const nn::LinearParams& pool_feature() const { return pool_feat_; }
  const nn::AttentionParams& fusion_attention() const { return fusion_; }
  const nn::LinearParams& gate_hidden() const { return gate_w1_; }
  const nn::LinearParams& gate_output() const { return gate_w2_; }
  const nn::LayerNormParams& fusion_norm() const { return norm_fusion_; }
  const nn::LayerNormParams& gate_norm() const { return norm_gate_; }

 private:
  Var messages(Tape& t, const GraphBatch& batch, Var z, Var edges, int layer, Var* alpha_out) const;

  AdapterConfig config_;
  std::vector<LayerParams> layers_;
  nn::LinearParams pool_gate_;
  nn::LinearParams pool_feat_;
  nn::AttentionParams fusion_;
  nn::LinearParams gate_w1_;
  nn::LinearParams gate_w2_;
  nn::LayerNormParams norm_fusion_;
  nn::LayerNormParams norm_gate_;
};

// Forward pass over one graph and encoder states, kept alive so gradients
// can be taken with respect to an arbitrary upstream dL/dH'.
class AdapterTrace {
 public:
  AdapterTrace() = default;
  static AdapterTrace run(const GatAdapter& adapter, const EmbeddedGraph& graph, const Matrix& h);

  bool empty() const { return !output_.valid(); }
  const Matrix& h_prime() const { return tape_.value(output_); }
  const Matrix& graph_vector() const { return tape_.value(zg_); }

 private:
  friend struct AdapterGradients adapter_backward(AdapterTrace& trace, ParamStore& store,
                                                  const Matrix& upstream);
  Tape tape_;
  Var h_;
  Var zg_;
  Var output_;
};

struct AdapterGradients {
  std::map<std::string, Matrix> params;  // by parameter name, adapter group only
  Matrix h;                              // dL/dH
};

// Exact gradients of <upstream, H'> for every adapter tensor and for H.
// Throws if the trace holds no completed forward pass. Resets the adapter
// group's accumulated gradients.
AdapterGradients adapter_backward(AdapterTrace& trace, ParamStore& store, const Matrix& upstream);

}  // namespace sgmt
