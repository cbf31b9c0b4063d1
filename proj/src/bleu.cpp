// SPDX-License-Identifier: Apache-2.0

#include "sgmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"

namespace sgmt {
namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

Smoothing parse_smoothing(std::string_view name) {
  if (name == "none") return Smoothing::None;
  if (name == "add_one") return Smoothing::AddOne;
  throw ValidationError("unknown smoothing '" + std::string(name) + "' (expected none or add_one)");
}

BleuReport corpus_bleu(std::span<const TokenSequence> hypotheses, std::span<const TokenSequence> references,
                       Smoothing smoothing) {
  if (hypotheses.size() != references.size()) {
    throw ValidationError("BLEU: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                          std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw ValidationError("BLEU: empty corpus");

  BleuReport r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    r.hyp_length += static_cast<long>(hyp.size());
    r.ref_length += static_cast<long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = count_ngrams(hyp, static_cast<std::size_t>(n));
      const auto ref_counts = count_ngrams(ref, static_cast<std::size_t>(n));
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) r.matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
        r.totals[static_cast<std::size_t>(n - 1)] += count;
      }
    }
  }

  const double add = smoothing == Smoothing::AddOne ? 1.0 : 0.0;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t i = 0; i < kMaxOrder; ++i) {
    const double num = static_cast<double>(r.matches[i]) + add;
    const double den = static_cast<double>(r.totals[i]) + add;
    r.precisions[i] = den > 0.0 ? num / den : 0.0;
    if (r.precisions[i] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[i]);
    }
  }
  if (r.hyp_length == 0) {
    r.brevity_penalty = 0.0;
  } else {
    const double ratio = static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length);
    r.brevity_penalty = std::min(1.0, std::exp(1.0 - ratio));
  }
  r.bleu = (zero || r.hyp_length == 0) ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / kMaxOrder);
  r.bleu = std::clamp(r.bleu, 0.0, 100.0);
  return r;
}

BleuReport corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                       Smoothing smoothing) {
  std::vector<TokenSequence> h;
  std::vector<TokenSequence> r;
  for (const auto& s : hypotheses) h.push_back(io::split_whitespace(s));
  for (const auto& s : references) r.push_back(io::split_whitespace(s));
  return corpus_bleu(std::span<const TokenSequence>(h), std::span<const TokenSequence>(r), smoothing);
}

std::string to_json(const BleuReport& report) {
  nlohmann::json j;
  j["bleu"] = report.bleu;
  j["precisions"] = report.precisions;
  j["brevity_penalty"] = report.brevity_penalty;
  j["hyp_length"] = report.hyp_length;
  j["ref_length"] = report.ref_length;
  return j.dump();
}

}  // namespace sgmt
