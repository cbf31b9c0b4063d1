// SPDX-License-Identifier: Apache-2.0
//
// Label embeddings for graph nodes, relations and super nodes. Two
// providers: a file-backed lookup table and a deterministic hash stub.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgmt/random.hpp"
#include "sgmt/scene_graph.hpp"
#include "sgmt/tensor.hpp"

namespace sgmt {

// Deterministic unit-norm stand-in for a text encoder:
// seed = FNV-1a(label), raw values from splitmix64, each mapped through
// ((v >> 11) * 2^-52) * 2 - 1, then L2-normalized.
std::vector<float> stub_embed(std::string_view label, int dim);

struct EmbeddingStore {
  int dim = 0;
  std::map<std::string, std::vector<float>> records;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

// JSONL: header {"dim": d}, then one {"label", "vector"} record per line.
EmbeddingStore parse_store(std::string_view text);
std::string format_store(const EmbeddingStore& store);
EmbeddingStore load_store(const std::filesystem::path& path);
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  virtual std::vector<float> embed(std::string_view label) const = 0;
  // "stub" or "file:PATH", the form accepted by --provider.
  virtual std::string spec() const = 0;
};

class StubProvider final : public EmbeddingProvider {
 public:
  explicit StubProvider(int dim);
  int dim() const override { return dim_; }
  std::vector<float> embed(std::string_view label) const override;
  std::string spec() const override { return "stub"; }

 private:
  int dim_;
};

class FileStoreProvider final : public EmbeddingProvider {
 public:
  FileStoreProvider(EmbeddingStore store, std::string path);
  int dim() const override { return store_.dim; }
  std::vector<float> embed(std::string_view label) const override;
  std::string spec() const override { return "file:" + path_; }

 private:
  EmbeddingStore store_;
  std::string path_;
};

// Accepts "stub" or "file:PATH". For files, the store's dim must equal `dim`.
std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec, int dim);

// Features ready for message passing. Row n of node_features is the super
// node; edge rows are the m scene edges followed by the n super links
// (super link k belongs to ordinary node k).
struct EmbeddedGraph {
  Matrix node_features;
  Matrix edge_features;
  std::vector<std::pair<int, int>> scene_edges;
  int num_ordinary = 0;
  SuperKind kind = SuperKind::Text;

  int num_nodes() const { return num_ordinary + 1; }
  int super_index() const { return num_ordinary; }
  int num_scene_edges() const { return static_cast<int>(scene_edges.size()); }
};

EmbeddedGraph embed_graph(const SuperNodeGraph& graph, const EmbeddingProvider& provider);

}  // namespace sgmt
