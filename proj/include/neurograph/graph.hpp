#pragma once

// Attributed network graph: typed nodes at sub-pixel positions and undirected
// edges carrying length, thickness weight, and an optional pixel path.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurograph/error.hpp"

namespace neurograph {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

enum class NodeKind { endpoint, junction, isolated };
enum class NodeClass { unclassified, neuron, cluster };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::endpoint: return "endpoint";
    case NodeKind::junction: return "junction";
    case NodeKind::isolated: return "isolated";
  }
  return "isolated";
}

inline std::string_view to_string(NodeClass c) {
  switch (c) {
    case NodeClass::unclassified: return "unclassified";
    case NodeClass::neuron: return "neuron";
    case NodeClass::cluster: return "cluster";
  }
  return "unclassified";
}

inline NodeKind parse_node_kind(std::string_view s) {
  if (s == "endpoint") return NodeKind::endpoint;
  if (s == "junction") return NodeKind::junction;
  if (s == "isolated") return NodeKind::isolated;
  throw Error("unknown node kind '" + std::string(s) + "'");
}

inline NodeClass parse_node_class(std::string_view s) {
  if (s == "unclassified") return NodeClass::unclassified;
  if (s == "neuron") return NodeClass::neuron;
  if (s == "cluster") return NodeClass::cluster;
  throw Error("unknown node class '" + std::string(s) + "'");
}

struct PointF {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PointF&, const PointF&) = default;
};

inline double distance(PointF a, PointF b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double polyline_length(const std::vector<PointF>& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += distance(path[i - 1], path[i]);
  return len;
}

using Attributes = std::map<std::string, std::string>;

struct Node {
  NodeId id = 0;
  PointF position;
  NodeKind kind = NodeKind::isolated;
  NodeClass cls = NodeClass::unclassified;
  Attributes attrs;
  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  EdgeId id = 0;
  NodeId u = 0;
  NodeId v = 0;
  double length = 0.0;             // pixels
  std::optional<double> weight;    // mean structure thickness, pixels
  bool manual = false;
  std::optional<std::vector<PointF>> path;
  Attributes attrs;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct GraphMeta {
  std::string source;
  std::string version;
  std::string created;
  friend bool operator==(const GraphMeta&, const GraphMeta&) = default;
};

/// Nodes and edges are keyed by id, so iteration order is id order.
struct ExtractedGraph {
  GraphMeta meta;
  std::map<NodeId, Node> nodes;
  std::map<EdgeId, Edge> edges;

  friend bool operator==(const ExtractedGraph&, const ExtractedGraph&) = default;

  NodeId next_node_id() const { return nodes.empty() ? 0 : nodes.rbegin()->first + 1; }
  EdgeId next_edge_id() const { return edges.empty() ? 0 : edges.rbegin()->first + 1; }

  const Node& node(NodeId id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw Error("unknown node id " + std::to_string(id));
    return it->second;
  }
  const Edge& edge(EdgeId id) const {
    auto it = edges.find(id);
    if (it == edges.end()) throw Error("unknown edge id " + std::to_string(id));
    return it->second;
  }

  // Self-loops count twice.
  std::size_t degree(NodeId id) const {
    std::size_t d = 0;
    for (const auto& [_, e] : edges) d += (e.u == id) + (e.v == id);
    return d;
  }

  /// Throws when an invariant is broken: dangling edge endpoints, keys that
  /// disagree with stored ids, or non-positive length on a non-loop edge.
  void validate() const {
    for (const auto& [id, n] : nodes)
      if (n.id != id) throw Error("node key " + std::to_string(id) + " holds id " + std::to_string(n.id));
    for (const auto& [id, e] : edges) {
      if (e.id != id) throw Error("edge key " + std::to_string(id) + " holds id " + std::to_string(e.id));
      if (!nodes.contains(e.u)) throw Error("edge " + std::to_string(id) + " references missing node " + std::to_string(e.u));
      if (!nodes.contains(e.v)) throw Error("edge " + std::to_string(id) + " references missing node " + std::to_string(e.v));
      if (!std::isfinite(e.length)) throw Error("edge " + std::to_string(id) + " has non-finite length");
      if (e.u != e.v && !(e.length > 0.0)) throw Error("edge " + std::to_string(id) + " has non-positive length");
      if (e.u == e.v && e.length < 0.0) throw Error("self-loop " + std::to_string(id) + " has negative length");
    }
  }
};

}  // namespace neurograph
