// SPDX-License-Identifier: Apache-2.0
//
// Small transformer encoder-decoder standing in for a pretrained seq2seq
// model. The adapter plugs in between encode() and decode_logits():
//
//   H = encode(source);  H' = fuse(H, Z_g);  logits = decode_logits(H', prefix)
//
// Tensor groups: "encoder" (source embeddings + encoder layers) and
// "decoder" (target embeddings, decoder layers, output projection).

#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgmt/nn.hpp"
#include "sgmt/tensor.hpp"

namespace sgmt {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocab();
  // Reserved tokens followed by the given tokens (duplicates ignored).
  explicit Vocab(std::span<const std::string> tokens);
  // Whitespace-split every sentence; tokens are added in sorted order.
  static Vocab from_corpus(std::span<const std::string> sentences);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int add(const std::string& token);

  std::vector<int> encode(std::string_view sentence) const;
  // Stops at EOS; drops BOS and PAD.
  std::string decode(std::span<const int> ids) const;

  // Non-reserved tokens in id order.
  std::vector<std::string> tokens() const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

struct BackboneConfig {
  int dim = 16;
  int vocab_size = 0;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 2;
  int ffn_dim = 64;

  void validate() const;
};

class Backbone {
 public:
  Backbone(ParamStore& store, BackboneConfig config);

  const BackboneConfig& config() const { return config_; }

  // H [T x d]. PAD positions are masked out as attention keys.
  Var encode(Tape& t, std::span<const int> tokens) const;
  // Teacher-forced logits [prefix length x V] under a causal mask. `memory`
  // is H' aligned with `source` (for the source PAD mask).
  Var decode_logits(Tape& t, Var memory, std::span<const int> source, std::span<const int> prefix) const;

  Matrix encode(std::span<const int> tokens) const;
  Matrix decode_logits(const Matrix& memory, std::span<const int> source, std::span<const int> prefix) const;

 private:
  struct EncoderLayer {
    nn::AttentionParams self;
    nn::LayerNormParams norm1;
    nn::LinearParams ff1, ff2;
    nn::LayerNormParams norm2;
  };
  struct DecoderLayer {
    nn::AttentionParams self;
    nn::LayerNormParams norm1;
    nn::AttentionParams cross;
    nn::LayerNormParams norm2;
    nn::LinearParams ff1, ff2;
    nn::LayerNormParams norm3;
  };

  void check_ids(std::span<const int> ids) const;
  Var embed(Tape& t, Parameter& table, std::span<const int> ids) const;
  Var feed_forward(Tape& t, Var x, const nn::LinearParams& ff1, const nn::LinearParams& ff2) const;

  BackboneConfig config_;
  Parameter* source_embedding_ = nullptr;
  Parameter* target_embedding_ = nullptr;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  nn::LinearParams output_;
};

// Log-probabilities over the vocabulary for the next token given a prefix
// that starts with BOS.
using NextTokenScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

struct BeamOptions {
  int beam_size = 5;
  int max_len = 64;
  // Tokens never emitted (PAD, BOS by default).
  std::vector<int> banned = {Vocab::kPad, Vocab::kBos};
};

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens, EOS included when emitted
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / tokens.size()
};

// Each step expands every live hypothesis by every allowed token and keeps
// the beam_size best candidates by length-normalized score (ties: smaller
// token sequence first). Candidates ending in EOS leave the beam as
// finished. Stops when no live hypothesis remains or at max_len; the result
// is the best finished or max_len hypothesis by the same ordering.
Hypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options);

// Orders hypotheses best-first: higher score, then lexicographically
// smaller token sequence.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b);

}  // namespace sgmt
