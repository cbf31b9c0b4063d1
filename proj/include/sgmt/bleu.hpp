// SPDX-License-Identifier: Apache-2.0
//
// Corpus-level BLEU-4 over whitespace tokens.

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sgmt {

enum class Smoothing { None, AddOne };

Smoothing parse_smoothing(std::string_view name);

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  long hyp_length = 0;
  long ref_length = 0;
  // Pooled clipped matches and n-gram totals per order.
  std::array<long, 4> matches{};
  std::array<long, 4> totals{};
};

using TokenSequence = std::vector<std::string>;

// Clipped n-gram counts pooled over the corpus, geometric mean of p1..p4,
// BP = min(1, exp(1 - r/c)). AddOne adds one to numerator and denominator
// of every p_n.
BleuReport corpus_bleu(std::span<const TokenSequence> hypotheses, std::span<const TokenSequence> references,
                       Smoothing smoothing);

// Convenience over raw sentences (whitespace tokenized).
BleuReport corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                       Smoothing smoothing);

std::string to_json(const BleuReport& report);

}  // namespace sgmt
