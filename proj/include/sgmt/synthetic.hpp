// SPDX-License-Identifier: Apache-2.0
//
// Small synthetic parallel corpora with scene graphs, for experiments and
// tests. A sentence describes one attributed subject, a relation and an
// object:
//
//   source: "<attr> <subject> <relation> <object>"
//   target: "<Subject> <Attr> <Relation> <Object>"
//
// with separate source and target words (36 in total). Text graphs hold the
// subject/object relation and an attribute edge; image graphs hold the same
// relation plus a background object.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgmt/embeddings.hpp"
#include "sgmt/model.hpp"
#include "sgmt/random.hpp"
#include "sgmt/scene_graph.hpp"

namespace sgmt::synthetic {

struct Sentence {
  std::string source;
  std::string target;
  SceneGraph isg;
  SceneGraph tsg;
  std::string image_key;
};

// Sentences number `first` .. `first + count - 1`. Any 80 consecutive
// indices give distinct sentences and any 16 consecutive indices use every
// word. Only the object and background choices depend on the seed.
std::vector<Sentence> corpus(std::uint64_t seed, int first, int count);

std::vector<std::string> sources(const std::vector<Sentence>& sentences);
std::vector<std::string> targets(const std::vector<Sentence>& sentences);

// Vocabulary covering every word the generator can emit (36 words).
Vocab full_vocab();

// Builds MSGs (kind Image) or LSGs (kind Text, keyed by the source sentence).
std::vector<ParallelExample> examples(const std::vector<Sentence>& sentences, SuperKind kind, const Vocab& vocab,
                                      const EmbeddingProvider& provider);

// Random connected scene graph with `nodes` distinct labels drawn from a
// fixed pool and a spanning tree of relations plus up to `extra_edges`
// additional ones.
SceneGraph random_scene_graph(SplitMix64& rng, Origin origin, int nodes, int extra_edges);

}  // namespace sgmt::synthetic
