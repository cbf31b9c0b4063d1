// SPDX-License-Identifier: Apache-2.0

#include "sgmt/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"

namespace sgmt {

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) add(t);
}

Vocab::Vocab(std::span<const std::string> tokens) : Vocab() {
  for (const auto& t : tokens) add(t);
}

Vocab Vocab::from_corpus(std::span<const std::string> sentences) {
  std::set<std::string> unique;
  for (const auto& s : sentences) {
    for (auto& tok : io::split_whitespace(s)) unique.insert(std::move(tok));
  }
  Vocab v;
  for (const auto& tok : unique) v.add(tok);
  return v;
}

int Vocab::add(const std::string& token) {
  if (token.empty()) throw ValidationError("vocab token must be non-empty");
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view sentence) const {
  std::vector<int> ids;
  for (const auto& tok : io::split_whitespace(sentence)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::vector<std::string> Vocab::tokens() const {
  return {tokens_.begin() + kNumReserved, tokens_.end()};
}

// ---------------------------------------------------------------------------
// Backbone

void BackboneConfig::validate() const {
  if (dim < 1) throw ValidationError("backbone dim must be >= 1");
  if (vocab_size <= Vocab::kNumReserved) throw ValidationError("vocab must contain non-reserved tokens");
  if (encoder_layers < 1 || decoder_layers < 1) throw ValidationError("backbone needs >= 1 layer per side");
  if (heads < 1 || dim % heads != 0) throw ValidationError("dim must be divisible by backbone heads");
  if (ffn_dim < 1) throw ValidationError("ffn_dim must be >= 1");
}

Backbone::Backbone(ParamStore& store, BackboneConfig config) : config_(config) {
  config_.validate();
  const Index d = config_.dim;
  const Index v = config_.vocab_size;
  const Index f = config_.ffn_dim;
  source_embedding_ = &store.add("encoder.embedding", "encoder", v, d);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayer layer;
    layer.self = nn::add_attention(store, p + ".self", "encoder", d);
    layer.norm1 = nn::add_layer_norm(store, p + ".norm1", "encoder", d);
    layer.ff1 = nn::add_linear(store, p + ".ff1", "encoder", d, f);
    layer.ff2 = nn::add_linear(store, p + ".ff2", "encoder", f, d);
    layer.norm2 = nn::add_layer_norm(store, p + ".norm2", "encoder", d);
    encoder_.push_back(layer);
  }
  target_embedding_ = &store.add("decoder.embedding", "decoder", v, d);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayer layer;
    layer.self = nn::add_attention(store, p + ".self", "decoder", d);
    layer.norm1 = nn::add_layer_norm(store, p + ".norm1", "decoder", d);
    layer.cross = nn::add_attention(store, p + ".cross", "decoder", d);
    layer.norm2 = nn::add_layer_norm(store, p + ".norm2", "decoder", d);
    layer.ff1 = nn::add_linear(store, p + ".ff1", "decoder", d, f);
    layer.ff2 = nn::add_linear(store, p + ".ff2", "decoder", f, d);
    layer.norm3 = nn::add_layer_norm(store, p + ".norm3", "decoder", d);
    decoder_.push_back(layer);
  }
  output_ = nn::add_linear(store, "decoder.output", "decoder", d, v);
}

void Backbone::check_ids(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw ValidationError("token id out of vocabulary range");
  }
}

Var Backbone::embed(Tape& t, Parameter& table, std::span<const int> ids) const {
  Var rows = t.gather_rows(t.param(table), ids);
  return t.add(rows, t.constant(nn::sinusoidal_positions(static_cast<Index>(ids.size()), config_.dim)));
}

Var Backbone::feed_forward(Tape& t, Var x, const nn::LinearParams& ff1, const nn::LinearParams& ff2) const {
  return nn::apply(t, t.relu(nn::apply(t, x, ff1)), ff2);
}

namespace {

Matrix key_padding_mask(std::span<const int> queries_ref, std::span<const int> keys) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Matrix mask = Matrix::Zero(static_cast<Index>(queries_ref.size()), static_cast<Index>(keys.size()));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (keys[k] == Vocab::kPad) mask.col(static_cast<Index>(k)).setConstant(neg_inf);
  }
  return mask;
}

bool all_pad(std::span<const int> ids) {
  return std::all_of(ids.begin(), ids.end(), [](int id) { return id == Vocab::kPad; });
}

}  // namespace

Var Backbone::encode(Tape& t, std::span<const int> tokens) const {
  if (tokens.empty()) throw ValidationError("encode: empty input");
  if (all_pad(tokens)) throw ValidationError("encode: input is all padding");
  check_ids(tokens);
  const Matrix mask = key_padding_mask(tokens, tokens);
  Var x = embed(t, *source_embedding_, tokens);
  for (const auto& layer : encoder_) {
    Var attn = nn::multi_head_attention(t, x, x, layer.self, config_.heads, &mask);
    x = nn::apply(t, t.add(x, attn), layer.norm1);
    x = nn::apply(t, t.add(x, feed_forward(t, x, layer.ff1, layer.ff2)), layer.norm2);
  }
  return x;
}

Var Backbone::decode_logits(Tape& t, Var memory, std::span<const int> source, std::span<const int> prefix) const {
  if (prefix.empty() || prefix.front() != Vocab::kBos) throw ValidationError("decode: prefix must start with BOS");
  check_ids(prefix);
  if (t.value(memory).rows() != static_cast<Index>(source.size()) || t.value(memory).cols() != config_.dim) {
    throw ValidationError("decode: memory shape does not match source / dim");
  }
  const Index n = static_cast<Index>(prefix.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Matrix causal = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) causal(i, j) = neg_inf;
  }
  const Matrix cross_mask = key_padding_mask(prefix, source);

  Var x = embed(t, *target_embedding_, prefix);
  for (const auto& layer : decoder_) {
    Var self = nn::multi_head_attention(t, x, x, layer.self, config_.heads, &causal);
    x = nn::apply(t, t.add(x, self), layer.norm1);
    Var cross = nn::multi_head_attention(t, x, memory, layer.cross, config_.heads, &cross_mask);
    x = nn::apply(t, t.add(x, cross), layer.norm2);
    x = nn::apply(t, t.add(x, feed_forward(t, x, layer.ff1, layer.ff2)), layer.norm3);
  }
  return nn::apply(t, x, output_);
}

Matrix Backbone::encode(std::span<const int> tokens) const {
  Tape t(false);
  return t.value(encode(t, tokens));
}

Matrix Backbone::decode_logits(const Matrix& memory, std::span<const int> source,
                               std::span<const int> prefix) const {
  Tape t(false);
  return t.value(decode_logits(t, t.constant(memory), source, prefix));
}

// ---------------------------------------------------------------------------
// Beam search

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

Hypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options) {
  if (options.beam_size < 1) throw ValidationError("beam size must be >= 1");
  if (options.max_len < 1) throw ValidationError("max_len must be >= 1");

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  std::vector<int> prefix;
  for (int step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    for (const auto& hyp : live) {
      prefix.assign(1, Vocab::kBos);
      prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
      const auto log_probs = scorer(prefix);
      for (int tok = 0; tok < static_cast<int>(log_probs.size()); ++tok) {
        if (std::find(options.banned.begin(), options.banned.end(), tok) != options.banned.end()) continue;
        const double lp = log_probs[static_cast<std::size_t>(tok)];
        if (!std::isfinite(lp)) continue;
        Hypothesis next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(tok);
        next.log_prob = hyp.log_prob + lp;
        next.score = next.log_prob / static_cast<double>(next.tokens.size());
        candidates.push_back(std::move(next));
      }
    }
    const auto keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(options.beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better_hypothesis);
    candidates.resize(keep);
    live.clear();
    for (auto& c : candidates) {
      if (c.tokens.back() == Vocab::kEos) {
        finished.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }
  for (auto& h : live) finished.push_back(std::move(h));
  if (finished.empty()) throw NumericError("beam search produced no hypothesis");
  return *std::min_element(finished.begin(), finished.end(), better_hypothesis);
}

}  // namespace sgmt
