// SPDX-License-Identifier: Apache-2.0
//
// Scene graphs extracted from images (ISG) and sentences (TSG), and the
// super-node graphs assembled from them: the multimodal graph (ISG + TSG +
// image super node) and the linguistic graph (TSG + text super node).

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sgmt {

enum class Origin { Isg, Tsg };
enum class SuperKind { Image, Text };

inline constexpr std::string_view kGlobalRelation = "global";
inline constexpr std::string_view kAttributeRelation = "has_attribute";

struct SceneNode {
  int id = 0;
  std::string label;
  Origin origin = Origin::Tsg;

  friend bool operator==(const SceneNode&, const SceneNode&) = default;
};

struct SceneEdge {
  int src = 0;
  int dst = 0;
  std::string relation;

  friend bool operator==(const SceneEdge&, const SceneEdge&) = default;
};

// Node ids are dense, 0..n-1, and equal to the node's position.
struct SceneGraph {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;

  std::size_t size() const { return nodes.size(); }
  bool empty() const { return nodes.empty(); }

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

struct MalformedRecord {
  std::size_t line = 0;  // 1-based
  std::string reason;

  friend bool operator==(const MalformedRecord&, const MalformedRecord&) = default;
};

struct ParseResult {
  std::vector<SceneGraph> graphs;
  std::vector<std::size_t> lines;  // 1-based source line of each graph
  std::vector<MalformedRecord> malformed;
};

struct ValidationReport {
  bool connected = false;
  std::vector<int> isolated_node_ids;
  std::vector<MalformedRecord> malformed_records;
};

struct SuperNode {
  std::string embedding_key;
  SuperKind kind = SuperKind::Text;

  friend bool operator==(const SuperNode&, const SuperNode&) = default;
};

struct SuperLink {
  int node = 0;
  std::string relation;

  friend bool operator==(const SuperLink&, const SuperLink&) = default;
};

// A scene graph plus one global super node linked to every ordinary node.
// kind() == Image is a multimodal graph (MSG), Text a linguistic one (LSG).
struct SuperNodeGraph {
  SceneGraph ordinary;
  SuperNode super_node;
  std::vector<SuperLink> super_links;

  SuperKind kind() const { return super_node.kind; }

  friend bool operator==(const SuperNodeGraph&, const SuperNodeGraph&) = default;
};

// Parses the entities/relations JSONL schema, one graph per non-empty line.
// Bad lines are skipped and listed in ParseResult::malformed.
ParseResult parse_isg_jsonl(std::string_view text);
ParseResult parse_tsg_triplets(std::string_view text);

// Inverse of the parsers for one graph: a single JSON object, no newline.
std::string to_jsonl_record(const SceneGraph& graph);

ValidationReport validate(const SceneGraph& graph);

SuperNodeGraph build_msg(const SceneGraph& isg, const SceneGraph& tsg,
                         std::string image_embedding_key);
SuperNodeGraph build_lsg(const SceneGraph& tsg, std::string text_embedding_key);

// Serialized graph file: {"nodes":[...],"edges":[...],"super":{...}}.
// Super links are implicit in the file and rebuilt on load.
std::string serialize_graph(const SuperNodeGraph& graph);
SuperNodeGraph deserialize_graph(std::string_view json_text);

std::string_view to_string(Origin origin);
std::string_view to_string(SuperKind kind);

}  // namespace sgmt
