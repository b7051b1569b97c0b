#pragma once

// GraphML and JSON serialization of ExtractedGraph.
//
// Both writers are deterministic: fixed key order, nodes and edges sorted by
// id, and doubles printed in shortest round-trip form. Attributes a reader
// does not recognize are kept in the node/edge `attrs` map.

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include <charconv>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <system_error>

#include "neurograph/graph.hpp"

namespace neurograph {

enum class GraphFormat { graphml, json };

inline GraphFormat parse_graph_format(std::string_view s) {
  if (s == "graphml") return GraphFormat::graphml;
  if (s == "json") return GraphFormat::json;
  throw Error("unknown graph format '" + std::string(s) + "' (expected graphml or json)");
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  while (first < last && (*first == ' ' || *first == '\n' || *first == '\t' || *first == '\r')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\n' || last[-1] == '\t' || last[-1] == '\r')) --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw Error("invalid number for " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error("invalid integer for " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

inline std::string format_path(const std::vector<PointF>& path) {
  std::string s;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) s += ';';
    s += format_double(path[i].x) + ',' + format_double(path[i].y);
  }
  return s;
}

inline std::vector<PointF> parse_path(std::string_view s) {
  std::vector<PointF> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(';', start), s.size());
    const auto item = s.substr(start, end - start);
    const auto comma = item.find(',');
    if (comma == std::string_view::npos) throw Error("invalid path point '" + std::string(item) + "'");
    out.push_back({parse_double(item.substr(0, comma), "path"), parse_double(item.substr(comma + 1), "path")});
    start = end + 1;
  }
  return out;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ExtractedGraph& g) {
  using nlohmann::json;
  json nodes = json::array();
  for (const auto& [id, n] : g.nodes) {
    nodes.push_back({{"id", id},
                     {"x", n.position.x},
                     {"y", n.position.y},
                     {"kind", to_string(n.kind)},
                     {"class", to_string(n.cls)},
                     {"attrs", n.attrs}});
  }
  json edges = json::array();
  for (const auto& [id, e] : g.edges) {
    json je{{"id", id}, {"u", e.u}, {"v", e.v}, {"length", e.length}, {"manual", e.manual}, {"attrs", e.attrs}};
    je["weight"] = e.weight ? json(*e.weight) : json(nullptr);
    if (e.path) {
      json path = json::array();
      for (const auto& p : *e.path) path.push_back({p.x, p.y});
      je["path"] = std::move(path);
    } else {
      je["path"] = nullptr;
    }
    edges.push_back(std::move(je));
  }
  return {{"meta", {{"source", g.meta.source}, {"version", g.meta.version}, {"created", g.meta.created}}},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

namespace detail {

inline std::string attr_text(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline Attributes attrs_from_json(const nlohmann::json& j, const std::set<std::string>& known) {
  Attributes attrs;
  if (j.contains("attrs")) {
    if (!j["attrs"].is_object()) throw Error("'attrs' must be an object");
    for (const auto& [k, v] : j["attrs"].items()) attrs[k] = attr_text(v);
  }
  for (const auto& [k, v] : j.items())
    if (!known.contains(k) && k != "attrs") attrs[k] = attr_text(v);
  return attrs;
}

template <typename T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(where + ": '" + key + "' has the wrong type");
  }
}

}  // namespace detail

namespace detail {

inline const double kMissingLength = std::numeric_limits<double>::quiet_NaN();

// Foreign files may omit edge length: use the path length, else the
// straight-line distance between endpoints.
inline void fill_missing_lengths(ExtractedGraph& g) {
  for (auto& [id, e] : g.edges) {
    if (!std::isnan(e.length)) continue;
    if (e.path) e.length = polyline_length(*e.path);
    else if (g.nodes.contains(e.u) && g.nodes.contains(e.v))
      e.length = distance(g.nodes.at(e.u).position, g.nodes.at(e.v).position);
  }
}

}  // namespace detail

inline ExtractedGraph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("graph document must be a JSON object");
  ExtractedGraph g;
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    g.meta.source = m.value("source", "");
    g.meta.version = m.value("version", "");
    g.meta.created = m.value("created", "");
  }
  static const std::set<std::string> node_keys{"id", "x", "y", "kind", "class"};
  static const std::set<std::string> edge_keys{"id", "u", "v", "length", "weight", "manual", "path"};
  for (const auto& jn : j.value("nodes", nlohmann::json::array())) {
    Node n;
    n.id = detail::field<NodeId>(jn, "id", "node");
    const std::string where = "node " + std::to_string(n.id);
    n.position = {detail::field<double>(jn, "x", where), detail::field<double>(jn, "y", where)};
    n.kind = parse_node_kind(jn.value("kind", "isolated"));
    n.cls = parse_node_class(jn.value("class", "unclassified"));
    n.attrs = detail::attrs_from_json(jn, node_keys);
    if (!g.nodes.emplace(n.id, n).second) throw Error("duplicate node id " + std::to_string(n.id));
  }
  for (const auto& je : j.value("edges", nlohmann::json::array())) {
    Edge e;
    e.id = detail::field<EdgeId>(je, "id", "edge");
    const std::string where = "edge " + std::to_string(e.id);
    e.u = detail::field<NodeId>(je, "u", where);
    e.v = detail::field<NodeId>(je, "v", where);
    e.length = je.contains("length") ? detail::field<double>(je, "length", where) : detail::kMissingLength;
    if (je.contains("weight") && !je["weight"].is_null()) e.weight = detail::field<double>(je, "weight", where);
    e.manual = je.value("manual", false);
    if (je.contains("path") && !je["path"].is_null()) {
      std::vector<PointF> path;
      for (const auto& p : je["path"]) {
        if (!p.is_array() || p.size() != 2) throw Error(where + ": path points must be [x, y]");
        path.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      e.path = std::move(path);
    }
    e.attrs = detail::attrs_from_json(je, edge_keys);
    if (!g.edges.emplace(e.id, e).second) throw Error("duplicate edge id " + std::to_string(e.id));
  }
  detail::fill_missing_lengths(g);
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// GraphML

namespace detail {

struct GraphmlKey {
  const char* id;
  const char* domain;
  const char* name;
  const char* type;
};

inline constexpr GraphmlKey kGraphmlKeys[] = {
    {"g_source", "graph", "source", "string"},   {"g_version", "graph", "version", "string"},
    {"g_created", "graph", "created", "string"}, {"x", "node", "x", "double"},
    {"y", "node", "y", "double"},                {"kind", "node", "kind", "string"},
    {"class", "node", "class", "string"},        {"length", "edge", "length", "double"},
    {"weight", "edge", "weight", "double"},      {"manual", "edge", "manual", "boolean"},
    {"path", "edge", "path", "string"},
};

inline void write_data(std::ostringstream& os, const std::string& indent, const std::string& key,
                       const std::string& value) {
  os << indent << "<data key=\"" << xml_escape(key) << "\">" << xml_escape(value) << "</data>\n";
}

}  // namespace detail

inline std::string to_graphml(const ExtractedGraph& g) {
  std::set<std::string> node_attr_names, edge_attr_names;
  for (const auto& [_, n] : g.nodes)
    for (const auto& [k, _v] : n.attrs) node_attr_names.insert(k);
  for (const auto& [_, e] : g.edges)
    for (const auto& [k, _v] : e.attrs) edge_attr_names.insert(k);

  std::map<std::string, std::string> node_key_ids, edge_key_ids;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n";
  for (const auto& k : detail::kGraphmlKeys) {
    os << "  <key id=\"" << k.id << "\" for=\"" << k.domain << "\" attr.name=\"" << k.name
       << "\" attr.type=\"" << k.type << "\"/>\n";
  }
  int idx = 0;
  for (const auto& name : node_attr_names) {
    const std::string id = "na" + std::to_string(idx++);
    node_key_ids[name] = id;
    os << "  <key id=\"" << id << "\" for=\"node\" attr.name=\"" << detail::xml_escape(name)
       << "\" attr.type=\"string\"/>\n";
  }
  idx = 0;
  for (const auto& name : edge_attr_names) {
    const std::string id = "ea" + std::to_string(idx++);
    edge_key_ids[name] = id;
    os << "  <key id=\"" << id << "\" for=\"edge\" attr.name=\"" << detail::xml_escape(name)
       << "\" attr.type=\"string\"/>\n";
  }
  os << "  <graph id=\"G\" edgedefault=\"undirected\">\n";
  detail::write_data(os, "    ", "g_source", g.meta.source);
  detail::write_data(os, "    ", "g_version", g.meta.version);
  detail::write_data(os, "    ", "g_created", g.meta.created);
  for (const auto& [id, n] : g.nodes) {
    os << "    <node id=\"n" << id << "\">\n";
    detail::write_data(os, "      ", "x", detail::format_double(n.position.x));
    detail::write_data(os, "      ", "y", detail::format_double(n.position.y));
    detail::write_data(os, "      ", "kind", std::string(to_string(n.kind)));
    detail::write_data(os, "      ", "class", std::string(to_string(n.cls)));
    for (const auto& [k, v] : n.attrs) detail::write_data(os, "      ", node_key_ids.at(k), v);
    os << "    </node>\n";
  }
  for (const auto& [id, e] : g.edges) {
    os << "    <edge id=\"e" << id << "\" source=\"n" << e.u << "\" target=\"n" << e.v << "\">\n";
    detail::write_data(os, "      ", "length", detail::format_double(e.length));
    if (e.weight) detail::write_data(os, "      ", "weight", detail::format_double(*e.weight));
    detail::write_data(os, "      ", "manual", e.manual ? "true" : "false");
    if (e.path) detail::write_data(os, "      ", "path", detail::format_path(*e.path));
    for (const auto& [k, v] : e.attrs) detail::write_data(os, "      ", edge_key_ids.at(k), v);
    os << "    </edge>\n";
  }
  os << "  </graph>\n</graphml>\n";
  return os.str();
}

namespace detail {

// "n12" or "12" -> 12.
inline std::int64_t graphml_id(const std::string& s, char prefix, std::string_view what) {
  std::string_view v = s;
  if (!v.empty() && v.front() == prefix) v.remove_prefix(1);
  return parse_int(v, what);
}

}  // namespace detail

namespace detail {

// XML attribute lookup; names such as "attr.name" contain the default path separator.
inline std::string xml_attr(const boost::property_tree::ptree& node, const std::string& name, const std::string& fallback) {
  const auto attrs = node.get_child_optional("<xmlattr>");
  if (!attrs) return fallback;
  return attrs->get<std::string>(boost::property_tree::ptree::path_type(name, '/'), fallback);
}

}  // namespace detail

inline ExtractedGraph graph_from_graphml(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    std::istringstream in(text);
    pt::read_xml(in, doc, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw Error(std::string("malformed GraphML: ") + e.what());
  }
  const auto root_opt = doc.get_child_optional("graphml");
  if (!root_opt) throw Error("malformed GraphML: missing <graphml> root");
  const auto& root = *root_opt;

  // key id -> (domain, attr.name)
  std::map<std::string, std::pair<std::string, std::string>> keys;
  for (const auto& [tag, child] : root) {
    if (tag != "key") continue;
    const auto id = detail::xml_attr(child, "id", "");
    keys[id] = {detail::xml_attr(child, "for", "all"),
                detail::xml_attr(child, "attr.name", id)};
  }
  auto key_name = [&](const std::string& key) {
    auto it = keys.find(key);
    return it == keys.end() ? key : it->second.second;
  };

  const auto graph_opt = root.get_child_optional("graph");
  if (!graph_opt) throw Error("malformed GraphML: missing <graph>");
  ExtractedGraph g;
  for (const auto& [tag, child] : *graph_opt) {
    if (tag == "data") {
      const auto name = key_name(detail::xml_attr(child, "key", ""));
      const auto value = child.get_value<std::string>();
      if (name == "source") g.meta.source = value;
      else if (name == "version") g.meta.version = value;
      else if (name == "created") g.meta.created = value;
    } else if (tag == "node") {
      Node n;
      n.id = detail::graphml_id(detail::xml_attr(child, "id", ""), 'n', "node id");
      bool has_x = false, has_y = false;
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const auto name = key_name(detail::xml_attr(data, "key", ""));
        const auto value = data.get_value<std::string>();
        if (name == "x") { n.position.x = detail::parse_double(value, "x"); has_x = true; }
        else if (name == "y") { n.position.y = detail::parse_double(value, "y"); has_y = true; }
        else if (name == "kind") n.kind = parse_node_kind(value);
        else if (name == "class") n.cls = parse_node_class(value);
        else n.attrs[name] = value;
      }
      if (!has_x || !has_y) throw Error("node " + std::to_string(n.id) + " lacks a position");
      if (!g.nodes.emplace(n.id, n).second) throw Error("duplicate node id " + std::to_string(n.id));
    } else if (tag == "edge") {
      Edge e;
      e.length = detail::kMissingLength;
      e.id = detail::graphml_id(detail::xml_attr(child, "id", "e" + std::to_string(g.next_edge_id())), 'e', "edge id");
      e.u = detail::graphml_id(detail::xml_attr(child, "source", ""), 'n', "edge source");
      e.v = detail::graphml_id(detail::xml_attr(child, "target", ""), 'n', "edge target");
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const auto name = key_name(detail::xml_attr(data, "key", ""));
        const auto value = data.get_value<std::string>();
        if (name == "length") e.length = detail::parse_double(value, "length");
        else if (name == "weight") e.weight = detail::parse_double(value, "weight");
        else if (name == "manual") e.manual = (value == "true" || value == "1");
        else if (name == "path") e.path = detail::parse_path(value);
        else e.attrs[name] = value;
      }
      if (!g.edges.emplace(e.id, e).second) throw Error("duplicate edge id " + std::to_string(e.id));
    }
  }
  detail::fill_missing_lengths(g);
  g.validate();
  return g;
}

inline std::string serialize(const ExtractedGraph& g, GraphFormat format) {
  if (format == GraphFormat::graphml) return to_graphml(g);
  return to_json(g).dump(2) + "\n";
}

inline ExtractedGraph parse(const std::string& text, GraphFormat format) {
  if (format == GraphFormat::graphml) return graph_from_graphml(text);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("malformed graph JSON: ") + e.what());
  }
  return graph_from_json(j);
}

}  // namespace neurograph
