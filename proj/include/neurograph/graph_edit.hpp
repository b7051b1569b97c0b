#pragma once

// Edit commands for graph curation. Edits are immutable values applied
// functionally; replaying a logged edit list reproduces the curated graph.

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "neurograph/graph.hpp"

namespace neurograph {

namespace edit {

struct AddNode {
  std::optional<NodeId> id;  // defaults to the next free id
  PointF position;
  NodeKind kind = NodeKind::isolated;
  NodeClass cls = NodeClass::unclassified;
  friend bool operator==(const AddNode&, const AddNode&) = default;
};

struct RemoveNode {
  NodeId id = 0;
  friend bool operator==(const RemoveNode&, const RemoveNode&) = default;
};

struct AddEdge {
  NodeId u = 0;
  NodeId v = 0;
  std::optional<double> weight;
  friend bool operator==(const AddEdge&, const AddEdge&) = default;
};

struct RemoveEdge {
  EdgeId id = 0;
  friend bool operator==(const RemoveEdge&, const RemoveEdge&) = default;
};

struct SetNodeClass {
  NodeId id = 0;
  NodeClass cls = NodeClass::unclassified;
  friend bool operator==(const SetNodeClass&, const SetNodeClass&) = default;
};

enum class Target { node, edge };

// Edge key "weight" sets the numeric edge weight; every other key is a
// free-form string attribute.
struct SetAttr {
  Target target = Target::node;
  std::int64_t id = 0;
  std::string key;
  std::string value;
  friend bool operator==(const SetAttr&, const SetAttr&) = default;
};

// User-drawn edge; its length is the polyline length of the path.
struct TraceEdge {
  NodeId u = 0;
  NodeId v = 0;
  std::vector<PointF> path;
  friend bool operator==(const TraceEdge&, const TraceEdge&) = default;
};

}  // namespace edit

using GraphEdit = std::variant<edit::AddNode, edit::RemoveNode, edit::AddEdge, edit::RemoveEdge,
                               edit::SetNodeClass, edit::SetAttr, edit::TraceEdge>;

namespace detail {

inline void require_node(const ExtractedGraph& g, NodeId id) {
  if (!g.nodes.contains(id)) throw Error("unknown node id " + std::to_string(id));
}

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace detail

/// Returns a new graph with the edit applied; `g` is left untouched.
inline ExtractedGraph apply_edit(const ExtractedGraph& g, const GraphEdit& e) {
  ExtractedGraph out = g;
  std::visit(
      detail::overloaded{
          [&](const edit::AddNode& a) {
            const NodeId id = a.id.value_or(out.next_node_id());
            if (out.nodes.contains(id)) throw Error("node id " + std::to_string(id) + " already exists");
            Node n;
            n.id = id;
            n.position = a.position;
            n.kind = a.kind;
            n.cls = a.cls;
            n.attrs["manual"] = "true";
            out.nodes.emplace(id, std::move(n));
          },
          [&](const edit::RemoveNode& r) {
            detail::require_node(out, r.id);
            out.nodes.erase(r.id);
            std::erase_if(out.edges, [&](const auto& kv) { return kv.second.u == r.id || kv.second.v == r.id; });
          },
          [&](const edit::AddEdge& a) {
            detail::require_node(out, a.u);
            detail::require_node(out, a.v);
            if (a.u == a.v) throw Error("ambiguous self-loop");
            Edge edge;
            edge.id = out.next_edge_id();
            edge.u = a.u;
            edge.v = a.v;
            edge.length = distance(out.nodes.at(a.u).position, out.nodes.at(a.v).position);
            if (!(edge.length > 0.0)) throw Error("nodes " + std::to_string(a.u) + " and " + std::to_string(a.v) + " coincide");
            edge.weight = a.weight;
            edge.manual = true;
            out.edges.emplace(edge.id, std::move(edge));
          },
          [&](const edit::RemoveEdge& r) {
            if (out.edges.erase(r.id) == 0) throw Error("unknown edge id " + std::to_string(r.id));
          },
          [&](const edit::SetNodeClass& s) {
            detail::require_node(out, s.id);
            out.nodes.at(s.id).cls = s.cls;
          },
          [&](const edit::SetAttr& s) {
            if (s.key.empty()) throw Error("attribute key must not be empty");
            if (s.target == edit::Target::node) {
              detail::require_node(out, s.id);
              out.nodes.at(s.id).attrs[s.key] = s.value;
              return;
            }
            auto it = out.edges.find(s.id);
            if (it == out.edges.end()) throw Error("unknown edge id " + std::to_string(s.id));
            if (s.key == "weight") {
              std::size_t used = 0;
              double w = 0.0;
              try {
                w = std::stod(s.value, &used);
              } catch (const std::exception&) {
                used = 0;
              }
              if (used != s.value.size() || !std::isfinite(w))
                throw Error("edge weight must be a number, got '" + s.value + "'");
              it->second.weight = w;
            } else {
              it->second.attrs[s.key] = s.value;
            }
          },
          [&](const edit::TraceEdge& t) {
            detail::require_node(out, t.u);
            detail::require_node(out, t.v);
            if (t.path.size() < 2) throw Error("trace_edge path needs at least two points");
            Edge edge;
            edge.id = out.next_edge_id();
            edge.u = t.u;
            edge.v = t.v;
            edge.length = polyline_length(t.path);
            if (t.u != t.v && !(edge.length > 0.0)) throw Error("trace_edge path has zero length");
            edge.manual = true;
            edge.path = t.path;
            out.edges.emplace(edge.id, std::move(edge));
          },
      },
      e);
  return out;
}

/// Applies edits in order; throws EditBatchError naming the first failing index.
class EditBatchError : public Error {
 public:
  EditBatchError(std::size_t index, const std::string& cause)
      : Error("edit " + std::to_string(index) + ": " + cause), index_(index), cause_(cause) {}
  std::size_t index() const noexcept { return index_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::size_t index_;
  std::string cause_;
};

inline ExtractedGraph apply_edits(const ExtractedGraph& g, std::span<const GraphEdit> edits) {
  ExtractedGraph cur = g;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    try {
      cur = apply_edit(cur, edits[i]);
    } catch (const Error& e) {
      throw EditBatchError(i, e.what());
    }
  }
  return cur;
}

// ---------------------------------------------------------------------------
// JSON form: {"op": "<name>", ...payload}

namespace detail {

template <typename T>
T required(const nlohmann::json& j, const char* key, std::string_view op) {
  if (!j.is_object() || !j.contains(key))
    throw Error(std::string(op) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string(op) + ": field '" + key + "' has the wrong type");
  }
}

inline PointF point_from_json(const nlohmann::json& j) {
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object() && j.contains("x") && j.contains("y") && j["x"].is_number() && j["y"].is_number())
    return {j["x"].get<double>(), j["y"].get<double>()};
  throw Error("point must be [x, y] or {\"x\":..,\"y\":..}");
}

}  // namespace detail

inline nlohmann::json to_json(const GraphEdit& e) {
  using nlohmann::json;
  return std::visit(
      detail::overloaded{
          [](const edit::AddNode& a) {
            json j{{"op", "add_node"}, {"x", a.position.x}, {"y", a.position.y},
                   {"kind", to_string(a.kind)}, {"class", to_string(a.cls)}};
            if (a.id) j["id"] = *a.id;
            return j;
          },
          [](const edit::RemoveNode& r) { return json{{"op", "remove_node"}, {"id", r.id}}; },
          [](const edit::AddEdge& a) {
            json j{{"op", "add_edge"}, {"u", a.u}, {"v", a.v}};
            if (a.weight) j["weight"] = *a.weight;
            return j;
          },
          [](const edit::RemoveEdge& r) { return json{{"op", "remove_edge"}, {"id", r.id}}; },
          [](const edit::SetNodeClass& s) {
            return json{{"op", "set_node_class"}, {"id", s.id}, {"class", to_string(s.cls)}};
          },
          [](const edit::SetAttr& s) {
            return json{{"op", "set_attr"},
                        {"target", s.target == edit::Target::node ? "node" : "edge"},
                        {"id", s.id},
                        {"key", s.key},
                        {"value", s.value}};
          },
          [](const edit::TraceEdge& t) {
            json path = json::array();
            for (const auto& p : t.path) path.push_back({p.x, p.y});
            return json{{"op", "trace_edge"}, {"u", t.u}, {"v", t.v}, {"path", path}};
          },
      },
      e);
}

inline GraphEdit edit_from_json(const nlohmann::json& j) {
  const auto op = detail::required<std::string>(j, "op", "edit");
  if (op == "add_node") {
    edit::AddNode a;
    a.position = {detail::required<double>(j, "x", op), detail::required<double>(j, "y", op)};
    if (j.contains("id")) a.id = detail::required<NodeId>(j, "id", op);
    if (j.contains("kind")) a.kind = parse_node_kind(detail::required<std::string>(j, "kind", op));
    if (j.contains("class")) a.cls = parse_node_class(detail::required<std::string>(j, "class", op));
    return a;
  }
  if (op == "remove_node") return edit::RemoveNode{detail::required<NodeId>(j, "id", op)};
  if (op == "add_edge") {
    edit::AddEdge a{detail::required<NodeId>(j, "u", op), detail::required<NodeId>(j, "v", op), {}};
    if (j.contains("weight") && !j["weight"].is_null()) a.weight = detail::required<double>(j, "weight", op);
    return a;
  }
  if (op == "remove_edge") return edit::RemoveEdge{detail::required<EdgeId>(j, "id", op)};
  if (op == "set_node_class")
    return edit::SetNodeClass{detail::required<NodeId>(j, "id", op),
                              parse_node_class(detail::required<std::string>(j, "class", op))};
  if (op == "set_attr") {
    const auto target = detail::required<std::string>(j, "target", op);
    if (target != "node" && target != "edge") throw Error("set_attr: target must be node or edge");
    return edit::SetAttr{target == "node" ? edit::Target::node : edit::Target::edge,
                         detail::required<std::int64_t>(j, "id", op),
                         detail::required<std::string>(j, "key", op),
                         detail::required<std::string>(j, "value", op)};
  }
  if (op == "trace_edge") {
    edit::TraceEdge t{detail::required<NodeId>(j, "u", op), detail::required<NodeId>(j, "v", op), {}};
    if (!j.contains("path") || !j["path"].is_array()) throw Error("trace_edge: missing field 'path'");
    for (const auto& p : j["path"]) t.path.push_back(detail::point_from_json(p));
    return t;
  }
  throw Error("unknown edit op '" + op + "'");
}

/// Accepts a JSON array of edits or an object {"edits": [...]}.
inline std::vector<GraphEdit> edits_from_json(const nlohmann::json& j) {
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    if (!j.contains("edits")) throw Error("expected an 'edits' array");
    list = &j.at("edits");
  }
  if (!list->is_array()) throw Error("expected an array of edits");
  std::vector<GraphEdit> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    try {
      out.push_back(edit_from_json((*list)[i]));
    } catch (const Error& e) {
      throw EditBatchError(i, e.what());
    }
  }
  return out;
}

inline nlohmann::json to_json(std::span<const GraphEdit> edits) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : edits) arr.push_back(to_json(e));
  return arr;
}

}  // namespace neurograph
