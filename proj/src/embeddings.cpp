// SPDX-License-Identifier: Apache-2.0

#include "sgmt/embeddings.hpp"

#include <cmath>
#include <json.hpp>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"

namespace sgmt {

std::vector<float> stub_embed(std::string_view label, int dim) {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
  SplitMix64 rng(fnv1a64(label));
  std::vector<double> raw(static_cast<std::size_t>(dim));
  double sq = 0.0;
  for (auto& x : raw) {
    x = static_cast<double>(rng.next() >> 11) * 0x1.0p-52 * 2.0 - 1.0;
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>(norm > 0.0 ? raw[i] / norm : 0.0);
  }
  return out;
}

EmbeddingStore parse_store(std::string_view text) {
  using nlohmann::json;
  auto lines = io::split_lines(text);
  if (lines.empty()) throw ValidationError("embedding store: missing header");
  EmbeddingStore store;
  try {
    store.dim = json::parse(lines[0]).at("dim").get<int>();
  } catch (const json::exception&) {
    throw ValidationError("embedding store line 1: bad header");
  }
  if (store.dim < 1) throw ValidationError("embedding store line 1: dim must be >= 1");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = "embedding store line " + std::to_string(i + 1);
    std::string label;
    std::vector<float> vec;
    try {
      auto rec = json::parse(lines[i]);
      label = rec.at("label").get<std::string>();
      for (const auto& v : rec.at("vector")) vec.push_back(static_cast<float>(v.get<double>()));
    } catch (const json::exception&) {
      throw ValidationError(where + ": malformed record");
    }
    if (static_cast<int>(vec.size()) != store.dim) {
      throw ValidationError(where + ": vector length " + std::to_string(vec.size()) +
                            " does not match dim " + std::to_string(store.dim));
    }
    if (!store.records.emplace(std::move(label), std::move(vec)).second) {
      throw ValidationError(where + ": duplicate label");
    }
  }
  return store;
}

std::string format_store(const EmbeddingStore& store) {
  using nlohmann::json;
  std::string out = json{{"dim", store.dim}}.dump() + "\n";
  for (const auto& [label, vec] : store.records) {
    json values = json::array();
    // float -> double is exact, and the double dump round-trips.
    for (float v : vec) values.push_back(static_cast<double>(v));
    out += json{{"label", label}, {"vector", std::move(values)}}.dump() + "\n";
  }
  return out;
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  return parse_store(io::read_file(path));
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_store(store));
}

StubProvider::StubProvider(int dim) : dim_(dim) {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
}

std::vector<float> StubProvider::embed(std::string_view label) const { return stub_embed(label, dim_); }

FileStoreProvider::FileStoreProvider(EmbeddingStore store, std::string path)
    : store_(std::move(store)), path_(std::move(path)) {}

std::vector<float> FileStoreProvider::embed(std::string_view label) const {
  auto it = store_.records.find(std::string(label));
  if (it == store_.records.end()) {
    throw ValidationError("embedding store has no vector for label '" + std::string(label) + "'");
  }
  return it->second;
}

std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec, int dim) {
  if (spec == "stub") return std::make_unique<StubProvider>(dim);
  if (spec.starts_with("file:")) {
    std::string path(spec.substr(5));
    auto store = load_store(path);
    if (store.dim != dim) {
      throw ValidationError("embedding store dim " + std::to_string(store.dim) +
                            " does not match model dim " + std::to_string(dim));
    }
    return std::make_unique<FileStoreProvider>(std::move(store), std::move(path));
  }
  throw ValidationError("unknown provider '" + std::string(spec) + "' (expected stub or file:PATH)");
}

EmbeddedGraph embed_graph(const SuperNodeGraph& graph, const EmbeddingProvider& provider) {
  const int d = provider.dim();
  const int n = static_cast<int>(graph.ordinary.nodes.size());
  const int m = static_cast<int>(graph.ordinary.edges.size());
  if (static_cast<int>(graph.super_links.size()) != n) {
    throw ValidationError("super node must link every ordinary node");
  }
  auto fill_row = [&](Matrix& mat, int row, std::string_view label) {
    auto v = provider.embed(label);
    if (static_cast<int>(v.size()) != d) throw ValidationError("provider returned wrong dimension");
    for (int c = 0; c < d; ++c) {
      if (!std::isfinite(v[static_cast<std::size_t>(c)])) {
        throw NumericError("non-finite embedding for '" + std::string(label) + "'");
      }
      mat(row, c) = static_cast<double>(v[static_cast<std::size_t>(c)]);
    }
  };

  EmbeddedGraph out;
  out.num_ordinary = n;
  out.kind = graph.kind();
  out.node_features.resize(n + 1, d);
  out.edge_features.resize(m + n, d);
  for (int i = 0; i < n; ++i) fill_row(out.node_features, i, graph.ordinary.nodes[static_cast<std::size_t>(i)].label);
  fill_row(out.node_features, n, graph.super_node.embedding_key);
  out.scene_edges.reserve(static_cast<std::size_t>(m));
  for (int e = 0; e < m; ++e) {
    const auto& edge = graph.ordinary.edges[static_cast<std::size_t>(e)];
    fill_row(out.edge_features, e, edge.relation);
    out.scene_edges.emplace_back(edge.src, edge.dst);
  }
  for (const auto& link : graph.super_links) {
    fill_row(out.edge_features, m + link.node, link.relation);
  }
  return out;
}

}  // namespace sgmt
