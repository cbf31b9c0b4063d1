// SPDX-License-Identifier: Apache-2.0

#include "sgmt/model.hpp"

#include <cmath>

#include "sgmt/error.hpp"

namespace sgmt {

AdapterConfig ModelConfig::adapter() const {
  AdapterConfig a;
  a.dim = dim;
  a.layers = layers;
  a.gat_heads = gat_heads;
  a.fusion_heads = heads;
  a.sigma = sigma;
  a.dropout = dropout;
  a.no_gate = no_gate;
  return a;
}

BackboneConfig ModelConfig::backbone(int vocab_size) const {
  BackboneConfig b;
  b.dim = dim;
  b.vocab_size = vocab_size;
  b.encoder_layers = encoder_layers;
  b.decoder_layers = decoder_layers;
  b.heads = heads;
  b.ffn_dim = ffn_dim > 0 ? ffn_dim : 4 * dim;
  return b;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"layers", layers},
          {"heads", heads},
          {"gat_heads", gat_heads},
          {"encoder_layers", encoder_layers},
          {"decoder_layers", decoder_layers},
          {"ffn_dim", ffn_dim},
          {"dropout", dropout},
          {"sigma", to_string(sigma)},
          {"no_gate", no_gate},
          {"provider", provider}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.at("dim").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.gat_heads = j.at("gat_heads").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.sigma = parse_activation(j.at("sigma").get<std::string>());
    c.no_gate = j.at("no_gate").get<bool>();
    c.provider = j.at("provider").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config: ") + e.what());
  }
  return c;
}

Model::Model(ModelConfig config, Vocab vocab) : config_(std::move(config)), vocab_(std::move(vocab)) {
  backbone_ = std::make_unique<Backbone>(params_, config_.backbone(vocab_.size()));
  adapter_ = std::make_unique<GatAdapter>(params_, config_.adapter());
}

void Model::set_no_gate(bool no_gate) {
  config_.no_gate = no_gate;
  adapter_->set_no_gate(no_gate);
}

void Model::init(std::uint64_t seed) { nn::init_all(params_, seed); }

Var Model::batch_loss(Tape& t, std::span<const ParallelExample* const> examples, bool training, SplitMix64* rng,
                      int* tokens) const {
  if (examples.empty()) throw ValidationError("empty batch");
  std::vector<EmbeddedGraph> graphs;
  graphs.reserve(examples.size());
  for (const auto* ex : examples) graphs.push_back(ex->graph);
  const GraphBatch batch = GraphBatch::from(graphs);
  Var zg_all = adapter_->forward(t, batch);

  Var total;
  std::vector<int> prefix;
  std::vector<int> targets;
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto& ex = *examples[b];
    Var h = backbone_->encode(t, ex.source);
    const int row[] = {static_cast<int>(b)};
    Var zg = t.gather_rows(zg_all, row);
    Var h_prime = adapter_->fuse(t, h, zg, training, rng).output;
    prefix.assign(1, Vocab::kBos);
    prefix.insert(prefix.end(), ex.target.begin(), ex.target.end());
    targets.assign(ex.target.begin(), ex.target.end());
    targets.push_back(Vocab::kEos);
    Var logits = backbone_->decode_logits(t, h_prime, ex.source, prefix);
    Var ce = t.cross_entropy(logits, targets, Vocab::kPad);
    total = total.valid() ? t.add(total, ce) : ce;
    if (tokens != nullptr) {
      for (int id : targets) *tokens += id != Vocab::kPad ? 1 : 0;
    }
  }
  return total;
}

double Model::evaluate_loss(std::span<const ParallelExample> examples) const {
  if (examples.empty()) throw ValidationError("evaluate_loss: no examples");
  double sum = 0.0;
  int tokens = 0;
  for (const auto& ex : examples) {
    Tape t(false);
    const ParallelExample* one[] = {&ex};
    sum += t.value(batch_loss(t, one, false, nullptr, &tokens))(0, 0);
  }
  return sum / static_cast<double>(tokens);
}

Matrix Model::fused_memory(const EmbeddedGraph& graph, std::span<const int> source) const {
  Tape t(false);
  Var zg = adapter_->forward(t, GraphBatch::from(graph));
  Var h = backbone_->encode(t, source);
  return t.value(adapter_->fuse(t, h, zg, false, nullptr).output);
}

Hypothesis Model::translate(const EmbeddedGraph& graph, std::span<const int> source, int beam_size,
                            int max_len) const {
  const Matrix memory = fused_memory(graph, source);
  const std::vector<int> src(source.begin(), source.end());
  NextTokenScorer scorer = [&](std::span<const int> prefix) {
    const Matrix logits = backbone_->decode_logits(memory, src, prefix);
    const auto last = logits.row(logits.rows() - 1);
    const double mx = last.maxCoeff();
    const double lse = mx + std::log((last.array() - mx).exp().sum());
    std::vector<double> out(static_cast<std::size_t>(last.size()));
    for (Index i = 0; i < last.size(); ++i) out[static_cast<std::size_t>(i)] = last(i) - lse;
    return out;
  };
  BeamOptions opts;
  opts.beam_size = beam_size;
  opts.max_len = max_len;
  return beam_search(scorer, opts);
}

Checkpoint Model::snapshot(nlohmann::json extra_meta) const {
  nlohmann::json meta = std::move(extra_meta);
  meta["config"] = config_.to_json();
  meta["vocab"] = vocab_.tokens();
  return sgmt::snapshot(params_, std::move(meta));
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::string> tokens;
  try {
    tokens = ckpt.meta.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("checkpoint: missing vocab");
  }
  if (!ckpt.meta.contains("config")) throw ValidationError("checkpoint: missing model config");
  Model model(ModelConfig::from_json(ckpt.meta.at("config")), Vocab(tokens));
  load_parameters(model.params_, ckpt);
  return model;
}

}  // namespace sgmt
