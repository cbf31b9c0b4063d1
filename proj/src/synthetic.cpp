// SPDX-License-Identifier: Apache-2.0

#include "sgmt/synthetic.hpp"

#include <array>

#include "sgmt/error.hpp"

namespace sgmt::synthetic {
namespace {

constexpr std::array<const char*, 10> kNouns = {"man", "woman", "dog", "horse", "boy",
                                                 "girl", "cat", "ball", "field", "hat"};
constexpr std::array<const char*, 10> kNounsT = {"Mann", "Frau", "Hund", "Pferd", "Junge",
                                                  "Maedchen", "Katze", "Ball", "Feld", "Hut"};
constexpr std::array<const char*, 4> kRelations = {"rides", "holds", "sees", "near"};
constexpr std::array<const char*, 4> kRelationsT = {"reitet", "haelt", "sieht", "neben"};
constexpr std::array<const char*, 4> kAttributes = {"red", "small", "big", "old"};
constexpr std::array<const char*, 4> kAttributesT = {"rot", "klein", "gross", "alt"};
constexpr std::array<const char*, 4> kBackground = {"tree", "sky", "grass", "street"};

SceneGraph make_graph(Origin origin, const std::vector<std::string>& labels,
                      const std::vector<SceneEdge>& edges) {
  SceneGraph g;
  for (std::size_t i = 0; i < labels.size(); ++i) g.nodes.push_back({static_cast<int>(i), labels[i], origin});
  g.edges = edges;
  return g;
}

}  // namespace

std::vector<Sentence> corpus(std::uint64_t seed, int first, int count) {
  if (first < 0 || count < 0) throw ValidationError("synthetic corpus: negative range");
  std::vector<Sentence> out;
  for (int i = first; i < first + count; ++i) {
    SplitMix64 rng(seed ^ (0xA24BAED4963EE407ULL * static_cast<std::uint64_t>(i + 1)));
    const auto subj = static_cast<std::size_t>(i % 10);
    const auto rel = static_cast<std::size_t>(i % 4);
    const auto attr = static_cast<std::size_t>((i / 4) % 4);
    auto obj = static_cast<std::size_t>(rng.below(9));
    if (obj >= subj) ++obj;
    const auto bg = static_cast<std::size_t>(rng.below(kBackground.size()));

    Sentence s;
    s.source = std::string(kAttributes[attr]) + " " + kNouns[subj] + " " + kRelations[rel] + " " + kNouns[obj];
    s.target = std::string(kNounsT[subj]) + " " + kAttributesT[attr] + " " + kRelationsT[rel] + " " + kNounsT[obj];
    s.tsg = make_graph(Origin::Tsg, {kNouns[subj], kNouns[obj], kAttributes[attr]},
                       {{0, 1, kRelations[rel]}, {0, 2, std::string(kAttributeRelation)}});
    s.isg = make_graph(Origin::Isg, {kNouns[subj], kNouns[obj], kBackground[bg]},
                       {{0, 1, kRelations[rel]}, {1, 2, "on"}});
    s.image_key = "img_" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> sources(const std::vector<Sentence>& sentences) {
  std::vector<std::string> out;
  for (const auto& s : sentences) out.push_back(s.source);
  return out;
}

std::vector<std::string> targets(const std::vector<Sentence>& sentences) {
  std::vector<std::string> out;
  for (const auto& s : sentences) out.push_back(s.target);
  return out;
}

Vocab full_vocab() {
  std::vector<std::string> words;
  for (auto* w : kNouns) words.emplace_back(w);
  for (auto* w : kNounsT) words.emplace_back(w);
  for (auto* w : kRelations) words.emplace_back(w);
  for (auto* w : kRelationsT) words.emplace_back(w);
  for (auto* w : kAttributes) words.emplace_back(w);
  for (auto* w : kAttributesT) words.emplace_back(w);
  return Vocab::from_corpus(words);
}

std::vector<ParallelExample> examples(const std::vector<Sentence>& sentences, SuperKind kind, const Vocab& vocab,
                                      const EmbeddingProvider& provider) {
  std::vector<ParallelExample> out;
  for (const auto& s : sentences) {
    const SuperNodeGraph g = kind == SuperKind::Image ? build_msg(s.isg, s.tsg, s.image_key) : build_lsg(s.tsg, s.source);
    out.push_back({embed_graph(g, provider), vocab.encode(s.source), vocab.encode(s.target)});
  }
  return out;
}

SceneGraph random_scene_graph(SplitMix64& rng, Origin origin, int nodes, int extra_edges) {
  static constexpr std::array<const char*, 16> kLabels = {"man",  "woman", "dog",   "horse", "boy",  "girl",
                                                          "cat",  "ball",  "field", "hat",   "tree", "sky",
                                                          "grass", "street", "car", "bench"};
  static constexpr std::array<const char*, 6> kRels = {"rides", "holds", "sees", "near", "on", "has_attribute"};
  if (nodes < 1 || nodes > static_cast<int>(kLabels.size())) throw ValidationError("random graph: bad node count");
  std::vector<std::size_t> pool(kLabels.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  std::vector<std::string> labels;
  for (int i = 0; i < nodes; ++i) labels.emplace_back(kLabels[pool[static_cast<std::size_t>(i)]]);
  std::vector<SceneEdge> edges;
  for (int i = 1; i < nodes; ++i) {
    const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
    const bool flip = rng.below(2) == 1;
    edges.push_back({flip ? i : parent, flip ? parent : i, kRels[rng.below(kRels.size())]});
  }
  for (int e = 0; e < extra_edges && nodes > 1; ++e) {
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(nodes)));
    const int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(nodes)));
    edges.push_back({a, b, kRels[rng.below(kRels.size())]});
  }
  return make_graph(origin, labels, edges);
}

}  // namespace sgmt::synthetic
