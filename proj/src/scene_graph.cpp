// SPDX-License-Identifier: Apache-2.0

#include "sgmt/scene_graph.hpp"

#include <json.hpp>
#include <numeric>
#include <unordered_map>

#include "sgmt/error.hpp"
#include "sgmt/io.hpp"

namespace sgmt {
namespace {

using nlohmann::json;

struct LineError {
  std::string reason;
};

SceneGraph parse_record(const std::string& line, Origin origin) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error&) {
    throw LineError{"malformed JSON"};
  }
  if (!record.is_object()) throw LineError{"record is not an object"};
  auto ent = record.find("entities");
  auto rel = record.find("relations");
  if (ent == record.end() || !ent->is_array()) throw LineError{"missing entities array"};
  if (rel == record.end() || !rel->is_array()) throw LineError{"missing relations array"};

  SceneGraph graph;
  std::unordered_map<std::string, int> index;
  for (const auto& e : *ent) {
    if (!e.is_string()) throw LineError{"entity is not a string"};
    auto label = e.get<std::string>();
    if (label.empty()) throw LineError{"empty entity label"};
    // Duplicate entity strings collapse onto one node.
    if (index.contains(label)) continue;
    int id = static_cast<int>(graph.nodes.size());
    index.emplace(label, id);
    graph.nodes.push_back({id, std::move(label), origin});
  }
  for (const auto& r : *rel) {
    if (!r.is_array() || r.size() != 3 || !r[0].is_string() || !r[1].is_string() ||
        !r[2].is_string()) {
      throw LineError{"relation is not a [subject, predicate, object] triple"};
    }
    auto subject = index.find(r[0].get<std::string>());
    auto object = index.find(r[2].get<std::string>());
    if (subject == index.end() || object == index.end()) throw LineError{"unlisted entity"};
    auto predicate = r[1].get<std::string>();
    if (predicate.empty()) throw LineError{"empty relation label"};
    graph.edges.push_back({subject->second, object->second, std::move(predicate)});
  }
  return graph;
}

ParseResult parse_jsonl(std::string_view text, Origin origin) {
  ParseResult result;
  auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      result.graphs.push_back(parse_record(lines[i], origin));
      result.lines.push_back(i + 1);
    } catch (const LineError& e) {
      result.malformed.push_back({i + 1, e.reason});
    }
  }
  return result;
}

SuperNodeGraph attach_super_node(SceneGraph ordinary, std::string key, SuperKind kind) {
  SuperNodeGraph g;
  g.super_node = {std::move(key), kind};
  g.super_links.reserve(ordinary.nodes.size());
  for (const auto& n : ordinary.nodes) {
    g.super_links.push_back({n.id, std::string(kGlobalRelation)});
  }
  g.ordinary = std::move(ordinary);
  return g;
}

Origin parse_origin(const std::string& s) {
  if (s == "ISG") return Origin::Isg;
  if (s == "TSG") return Origin::Tsg;
  throw ValidationError("unknown node origin '" + s + "'");
}

SuperKind parse_kind(const std::string& s) {
  if (s == "Image") return SuperKind::Image;
  if (s == "Text") return SuperKind::Text;
  throw ValidationError("unknown super node kind '" + s + "'");
}

}  // namespace

std::string_view to_string(Origin origin) { return origin == Origin::Isg ? "ISG" : "TSG"; }

std::string_view to_string(SuperKind kind) { return kind == SuperKind::Image ? "Image" : "Text"; }

ParseResult parse_isg_jsonl(std::string_view text) { return parse_jsonl(text, Origin::Isg); }

ParseResult parse_tsg_triplets(std::string_view text) { return parse_jsonl(text, Origin::Tsg); }

std::string to_jsonl_record(const SceneGraph& graph) {
  json entities = json::array();
  for (const auto& n : graph.nodes) entities.push_back(n.label);
  json relations = json::array();
  for (const auto& e : graph.edges) {
    relations.push_back({graph.nodes.at(e.src).label, e.relation, graph.nodes.at(e.dst).label});
  }
  json record;
  record["entities"] = std::move(entities);
  record["relations"] = std::move(relations);
  return record.dump();
}

ValidationReport validate(const SceneGraph& graph) {
  const std::size_t n = graph.nodes.size();
  ValidationReport report;

  // Union-find over the undirected view.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::vector<int> degree(n, 0);
  for (const auto& e : graph.edges) {
    auto s = static_cast<std::size_t>(e.src);
    auto d = static_cast<std::size_t>(e.dst);
    ++degree[s];
    ++degree[d];
    parent[find(s)] = find(d);
  }
  std::size_t components = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (find(i) == i) ++components;
    if (degree[i] == 0) report.isolated_node_ids.push_back(graph.nodes[i].id);
  }
  // A lone node with no edges counts as isolated, so a 1-node graph is not
  // connected by this definition.
  report.connected = report.isolated_node_ids.empty() && components == 1;
  return report;
}

SuperNodeGraph build_msg(const SceneGraph& isg, const SceneGraph& tsg,
                         std::string image_embedding_key) {
  if (isg.empty() && tsg.empty()) throw ValidationError("empty MSG");
  SceneGraph merged;
  merged.nodes.reserve(isg.size() + tsg.size());
  merged.edges.reserve(isg.edges.size() + tsg.edges.size());
  const int shift = static_cast<int>(isg.size());
  for (const auto& node : isg.nodes) merged.nodes.push_back(node);
  for (const auto& node : tsg.nodes) merged.nodes.push_back({node.id + shift, node.label, node.origin});
  for (const auto& edge : isg.edges) merged.edges.push_back(edge);
  for (const auto& edge : tsg.edges) {
    merged.edges.push_back({edge.src + shift, edge.dst + shift, edge.relation});
  }
  return attach_super_node(std::move(merged), std::move(image_embedding_key), SuperKind::Image);
}

SuperNodeGraph build_lsg(const SceneGraph& tsg, std::string text_embedding_key) {
  if (tsg.empty()) throw ValidationError("empty LSG");
  for (const auto& node : tsg.nodes) {
    if (node.origin == Origin::Isg) throw ValidationError("LSG cannot contain ISG node '" + node.label + "'");
  }
  return attach_super_node(tsg, std::move(text_embedding_key), SuperKind::Text);
}

std::string serialize_graph(const SuperNodeGraph& graph) {
  json nodes = json::array();
  for (const auto& n : graph.ordinary.nodes) {
    nodes.push_back({{"id", n.id}, {"label", n.label}, {"origin", to_string(n.origin)}});
  }
  json edges = json::array();
  for (const auto& e : graph.ordinary.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}});
  }
  json doc;
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["super"] = {{"kind", to_string(graph.super_node.kind)},
                  {"embedding_key", graph.super_node.embedding_key}};
  return doc.dump();
}

SuperNodeGraph deserialize_graph(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
    SceneGraph ordinary;
    for (const auto& n : doc.at("nodes")) {
      SceneNode node{n.at("id").get<int>(), n.at("label").get<std::string>(),
                     parse_origin(n.at("origin").get<std::string>())};
      if (node.id != static_cast<int>(ordinary.nodes.size())) {
        throw ValidationError("node ids must be dense and ordered");
      }
      if (node.label.empty()) throw ValidationError("empty node label");
      ordinary.nodes.push_back(std::move(node));
    }
    const int n = static_cast<int>(ordinary.nodes.size());
    for (const auto& e : doc.at("edges")) {
      SceneEdge edge{e.at("src").get<int>(), e.at("dst").get<int>(), e.at("relation").get<std::string>()};
      if (edge.src < 0 || edge.src >= n || edge.dst < 0 || edge.dst >= n) {
        throw ValidationError("edge endpoint out of range");
      }
      ordinary.edges.push_back(std::move(edge));
    }
    const auto& sup = doc.at("super");
    if (ordinary.empty()) throw ValidationError("graph has no ordinary nodes");
    return attach_super_node(std::move(ordinary), sup.at("embedding_key").get<std::string>(),
                             parse_kind(sup.at("kind").get<std::string>()));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad serialized graph: ") + e.what());
  }
}

}  // namespace sgmt
