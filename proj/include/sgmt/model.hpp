// SPDX-License-Identifier: Apache-2.0
//
// Full translation model: backbone encoder, graph adapter, gated fusion,
// backbone decoder, all in one parameter store.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgmt/backbone.hpp"
#include "sgmt/checkpoint.hpp"
#include "sgmt/embeddings.hpp"
#include "sgmt/gat_adapter.hpp"

namespace sgmt {

struct ModelConfig {
  int dim = 16;
  int layers = 2;  // adapter message-passing layers
  int heads = 2;   // fusion and backbone attention heads
  int gat_heads = 1;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 0;  // 0 means 4 * dim
  double dropout = 0.1;
  Activation sigma = Activation::Elu;
  bool no_gate = false;
  std::string provider = "stub";

  AdapterConfig adapter() const;
  BackboneConfig backbone(int vocab_size) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// One training pair with its graph (multimodal or linguistic).
struct ParallelExample {
  EmbeddedGraph graph;
  std::vector<int> source;
  std::vector<int> target;

  SuperKind kind() const { return graph.kind; }
};

class Model {
 public:
  Model(ModelConfig config, Vocab vocab);
  Model(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const GatAdapter& adapter() const { return *adapter_; }
  const Backbone& backbone() const { return *backbone_; }
  void set_no_gate(bool no_gate);

  void init(std::uint64_t seed);

  // Sum of target-token cross-entropy over the examples (EOS appended to
  // each target); graphs are pooled as one disjoint-union batch. Adds the
  // number of scored tokens to *tokens.
  Var batch_loss(Tape& t, std::span<const ParallelExample* const> examples, bool training, SplitMix64* rng,
                 int* tokens) const;

  // Mean per-token loss without dropout or gradient.
  double evaluate_loss(std::span<const ParallelExample> examples) const;

  // H' for one source sentence and its graph, inference mode.
  Matrix fused_memory(const EmbeddedGraph& graph, std::span<const int> source) const;
  Hypothesis translate(const EmbeddedGraph& graph, std::span<const int> source, int beam_size, int max_len) const;

  Checkpoint snapshot(nlohmann::json extra_meta = nlohmann::json::object()) const;
  static Model from_checkpoint(const Checkpoint& ckpt);

 private:
  ModelConfig config_;
  Vocab vocab_;
  ParamStore params_;
  std::unique_ptr<GatAdapter> adapter_;
  std::unique_ptr<Backbone> backbone_;
};

}  // namespace sgmt
