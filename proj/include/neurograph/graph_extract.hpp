#pragma once

// Skeleton to graph conversion.
//
// Node pixels come from a 3x3 neighborhood filter: one skeleton neighbor
// (endpoint), no neighbors (isolated), or at least three neighbors that are
// pairwise not edge-adjacent (junction). Edges come from the skeleton with node
// pixels removed: each remaining 8-connected segment is dilated round by round
// until it overlaps two node identities.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "neurograph/graph.hpp"
#include "neurograph/raster.hpp"
#include "neurograph/roi.hpp"
#include "neurograph/thinning.hpp"

namespace neurograph {

enum class PixelRole : std::uint8_t { none, endpoint, junction, isolated };

namespace node_filter {

constexpr PixelRole classify(std::uint8_t code) noexcept {
  const int n = topology::neighbor_count(code);
  if (n == 0) return PixelRole::isolated;
  if (n == 1) return PixelRole::endpoint;
  // A set of three or more pairwise non-adjacent neighbors exists iff a triple does.
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b)
      for (int c = b + 1; c < 8; ++c) {
        if (!((code >> a) & 1u) || !((code >> b) & 1u) || !((code >> c) & 1u)) continue;
        if (!topology::detail::ring_adjacent(a, b, true) && !topology::detail::ring_adjacent(a, c, true) &&
            !topology::detail::ring_adjacent(b, c, true))
          return PixelRole::junction;
      }
  return PixelRole::none;
}

constexpr std::array<PixelRole, 256> make_table() noexcept {
  std::array<PixelRole, 256> t{};
  for (int c = 0; c < 256; ++c) t[static_cast<std::size_t>(c)] = classify(static_cast<std::uint8_t>(c));
  return t;
}

inline constexpr std::array<PixelRole, 256> kTable = make_table();

}  // namespace node_filter

struct NodeCluster {
  std::vector<Point> pixels;  // raster order
  PointF centroid;
  NodeKind kind = NodeKind::isolated;
};

struct NodePixelSet {
  BitMask pixels;
  LabelMap ids;  // cluster index + 1 on node pixels, 0 elsewhere
  std::vector<NodeCluster> clusters;
};

struct EdgeSegment {
  std::uint32_t label = 0;
  std::vector<Point> pixels;  // raster order
  std::optional<std::pair<std::size_t, std::size_t>> endpoints;
  int resolved_round = 0;  // 0 for spurs
};

struct UnmatchedRoi {
  std::size_t index = 0;
  Roi roi;
  std::string reason;
};

struct ExtractionDiagnostics {
  std::size_t endpoints = 0, junctions = 0, isolated = 0;
  std::size_t segments = 0, resolved = 0, self_loops = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> spurs;  // label, pixel count
  std::vector<UnmatchedRoi> unmatched_rois;
  std::size_t classified = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "nodes: " << endpoints + junctions + isolated << " (endpoint " << endpoints << ", junction " << junctions
       << ", isolated " << isolated << ")\n";
    os << "segments: " << segments << "\n";
    os << "edges: " << resolved << " (self-loops " << self_loops << ")\n";
    os << "spurs: " << spurs.size() << "\n";
    for (auto [label, n] : spurs) os << "  segment " << label << ": " << n << " px\n";
    os << "classified nodes: " << classified << "\n";
    os << "unmatched rois: " << unmatched_rois.size() << "\n";
    for (const auto& u : unmatched_rois)
      os << "  roi " << u.index << " (" << to_string(u.roi.cls) << " at " << u.roi.cx << "," << u.roi.cy
         << "): " << u.reason << "\n";
    return os.str();
  }
};

inline PixelRole pixel_role(const BitMask& skel, int x, int y) {
  if (!skel.test(x, y)) return PixelRole::none;
  return node_filter::kTable[topology::neighborhood(skel, x, y)];
}

/// Flags node pixels and merges 8-connected ones into node identities.
inline NodePixelSet detect_nodes(const Skeleton& skel, ExtractionDiagnostics* diag = nullptr) {
  const BitMask& m = skel.mask;
  NodePixelSet out;
  out.pixels = BitMask(m.width(), m.height());
  Grid<PixelRole> role(m.width(), m.height(), PixelRole::none);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      role(x, y) = pixel_role(m, x, y);
      if (role(x, y) != PixelRole::none) out.pixels.set(x, y);
    }
  out.ids = connected_components(out.pixels, 8);
  out.clusters.resize(out.ids.label_count);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (auto id = out.ids(x, y)) out.clusters[id - 1].pixels.push_back({x, y});
  for (auto& c : out.clusters) {
    double sx = 0.0, sy = 0.0;
    bool any_junction = false, all_isolated = true;
    for (auto p : c.pixels) {
      sx += p.x;
      sy += p.y;
      any_junction |= role(p.x, p.y) == PixelRole::junction;
      all_isolated &= role(p.x, p.y) == PixelRole::isolated;
    }
    const auto n = static_cast<double>(c.pixels.size());
    c.centroid = {sx / n, sy / n};
    c.kind = any_junction ? NodeKind::junction : all_isolated ? NodeKind::isolated : NodeKind::endpoint;
    if (diag) {
      diag->endpoints += c.kind == NodeKind::endpoint;
      diag->junctions += c.kind == NodeKind::junction;
      diag->isolated += c.kind == NodeKind::isolated;
    }
  }
  return out;
}

namespace detail {

inline std::int64_t pixel_key(Point p, int width) { return static_cast<std::int64_t>(p.y) * width + p.x; }

// Segment pixels with at most one 8-neighbor inside the segment.
inline std::vector<Point> chain_ends(const std::vector<Point>& px, const std::unordered_set<std::int64_t>& inside,
                                     int width) {
  std::vector<Point> ends;
  for (auto p : px) {
    int n = 0;
    for (auto o : topology::kRing) {
      const int x = p.x + o.x;
      n += x >= 0 && x < width && inside.contains(pixel_key({x, p.y + o.y}, width));
    }
    if (n <= 1) ends.push_back(p);
  }
  return ends;
}

inline bool touches(const NodePixelSet& nodes, Point p, std::size_t cluster) {
  for (auto o : topology::kRing) {
    const int x = p.x + o.x, y = p.y + o.y;
    if (nodes.ids.contains(x, y) && nodes.ids(x, y) == cluster + 1) return true;
  }
  return false;
}

}  // namespace detail

/// Splits the skeleton into segments and resolves each to a pair of node
/// identities. Returns every segment; unresolved ones (spurs) have no endpoints.
inline std::vector<EdgeSegment> extract_edges(const Skeleton& skel, const NodePixelSet& nodes,
                                              int max_dilation_rounds = 3, ExtractionDiagnostics* diag = nullptr) {
  const BitMask& m = skel.mask;
  const int W = m.width(), H = m.height();
  BitMask rest(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) rest.set(x, y, m.test(x, y) && !nodes.pixels.test(x, y));
  const LabelMap labels = connected_components(rest, 8);

  std::vector<EdgeSegment> segs(labels.label_count);
  for (std::uint32_t i = 0; i < labels.label_count; ++i) segs[i].label = i + 1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (auto l = labels(x, y)) segs[l - 1].pixels.push_back({x, y});

  struct Work {
    std::unordered_set<std::int64_t> footprint;
    std::vector<Point> frontier;
  };
  std::vector<Work> work(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (auto p : segs[i].pixels) work[i].footprint.insert(detail::pixel_key(p, W));
    work[i].frontier = segs[i].pixels;
  }

  std::size_t self_loops = 0;
  for (int round = 1; round <= max_dilation_rounds; ++round) {
    for (std::size_t i = 0; i < segs.size(); ++i) {
      auto& seg = segs[i];
      if (seg.endpoints) continue;
      auto& w = work[i];
      std::vector<Point> grown;
      for (auto p : w.frontier)
        for (auto o : topology::kRing) {
          const Point q{p.x + o.x, p.y + o.y};
          if (q.x < 0 || q.y < 0 || q.x >= W || q.y >= H) continue;
          if (w.footprint.insert(detail::pixel_key(q, W)).second) grown.push_back(q);
        }
      w.frontier = std::move(grown);

      std::unordered_map<std::size_t, std::size_t> overlap;
      for (auto key : w.footprint) {
        const Point q{static_cast<int>(key % W), static_cast<int>(key / W)};
        if (auto id = nodes.ids(q.x, q.y)) ++overlap[id - 1];
      }
      if (overlap.size() >= 2) {
        std::vector<std::pair<std::size_t, std::size_t>> ranked(overlap.begin(), overlap.end());
        std::sort(ranked.begin(), ranked.end(), [](auto a, auto b) {
          return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        seg.endpoints = std::minmax(ranked[0].first, ranked[1].first);
        seg.resolved_round = round;
      } else if (overlap.size() == 1) {
        // A chain whose two ends both touch the same node closes a loop there.
        const std::size_t node = overlap.begin()->first;
        std::unordered_set<std::int64_t> inside;
        for (auto p : seg.pixels) inside.insert(detail::pixel_key(p, W));
        const auto ends = detail::chain_ends(seg.pixels, inside, W);
        if (ends.size() == 2 && detail::touches(nodes, ends[0], node) && detail::touches(nodes, ends[1], node)) {
          seg.endpoints = std::pair{node, node};
          seg.resolved_round = round;
          ++self_loops;
        }
      }
    }
  }

  if (diag) {
    diag->segments += segs.size();
    diag->self_loops += self_loops;
    for (const auto& s : segs) {
      if (s.endpoints) ++diag->resolved;
      else diag->spurs.emplace_back(s.label, s.pixels.size());
    }
  }
  return segs;
}

namespace detail {

// Minimum spanning tree weight over 8-neighbor steps (1 axial, sqrt(2) diagonal).
inline double spanning_length(const std::vector<Point>& px, int width) {
  if (px.size() < 2) return 0.0;
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < px.size(); ++i) index.emplace(pixel_key(px[i], width), i);
  std::vector<bool> in_tree(px.size(), false);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.push({0.0, 0});
  double total = 0.0;
  while (!pq.empty()) {
    auto [d, i] = pq.top();
    pq.pop();
    if (in_tree[i]) continue;
    in_tree[i] = true;
    total += d;
    for (auto o : topology::kRing) {
      const Point q{px[i].x + o.x, px[i].y + o.y};
      if (q.x < 0 || q.y < 0 || q.x >= width) continue;
      auto it = index.find(pixel_key(q, width));
      if (it == index.end() || in_tree[it->second]) continue;
      pq.push({(o.x != 0 && o.y != 0) ? std::sqrt(2.0) : 1.0, it->second});
    }
  }
  return total;
}

inline double nearest_step(const std::vector<Point>& from, const NodeCluster& node) {
  double best = std::numeric_limits<double>::infinity();
  for (auto p : from)
    for (auto q : node.pixels) best = std::min(best, std::hypot(double(p.x - q.x), double(p.y - q.y)));
  return best;
}

// Segment pixels as a walk from the end nearest `start`: step to an unvisited
// 8-neighbor (4-neighbors first), jumping to the nearest unvisited pixel when
// the walk is stuck on a branch.
inline std::vector<PointF> order_chain(const std::vector<Point>& px, PointF start) {
  std::vector<PointF> out;
  if (px.empty()) return out;
  std::vector<bool> used(px.size(), false);
  auto d2 = [](Point p, PointF q) { return (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y); };
  std::size_t cur = 0;
  for (std::size_t i = 1; i < px.size(); ++i)
    if (d2(px[i], start) < d2(px[cur], start)) cur = i;
  for (std::size_t n = 0; n < px.size(); ++n) {
    used[cur] = true;
    out.push_back({static_cast<double>(px[cur].x), static_cast<double>(px[cur].y)});
    std::size_t best = px.size();
    int best_cost = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (used[i]) continue;
      const int dx = std::abs(px[i].x - px[cur].x), dy = std::abs(px[i].y - px[cur].y);
      const int cost = std::max(dx, dy) > 1 ? 1000000 + dx * dx + dy * dy : dx + dy;
      if (cost < best_cost) {
        best_cost = cost;
        best = i;
      }
    }
    if (best == px.size()) break;
    cur = best;
  }
  return out;
}

}  // namespace detail

/// One node per identity, one edge per resolved segment. Edge paths run from
/// the u centroid through the ordered segment pixels to the v centroid.
/// `thickness`, when given, supplies edge weights as its mean over segment pixels.
inline ExtractedGraph build_graph(const Skeleton& skel, const NodePixelSet& nodes,
                                  const std::vector<EdgeSegment>& segments, const DistanceMap* thickness = nullptr) {
  const int W = skel.mask.width();
  if (thickness && !thickness->same_shape(W, skel.mask.height())) throw Error("thickness map dimensions differ");
  ExtractedGraph g;
  for (std::size_t i = 0; i < nodes.clusters.size(); ++i) {
    Node n;
    n.id = static_cast<NodeId>(i);
    n.position = nodes.clusters[i].centroid;
    n.kind = nodes.clusters[i].kind;
    g.nodes.emplace(n.id, n);
  }
  EdgeId next = 0;
  for (const auto& s : segments) {
    if (!s.endpoints) continue;
    const auto [a, b] = *s.endpoints;
    if (a >= nodes.clusters.size() || b >= nodes.clusters.size())
      throw Error("segment " + std::to_string(s.label) + " references missing node identity");
    Edge e;
    e.id = next++;
    e.u = static_cast<NodeId>(a);
    e.v = static_cast<NodeId>(b);
    e.length = detail::spanning_length(s.pixels, W);
    if (a == b) {
      std::unordered_set<std::int64_t> inside;
      for (auto p : s.pixels) inside.insert(detail::pixel_key(p, W));
      for (auto end : detail::chain_ends(s.pixels, inside, W)) e.length += detail::nearest_step({end}, nodes.clusters[a]);
    } else {
      e.length += detail::nearest_step(s.pixels, nodes.clusters[a]) + detail::nearest_step(s.pixels, nodes.clusters[b]);
    }
    std::vector<PointF> path{nodes.clusters[a].centroid};
    for (auto p : detail::order_chain(s.pixels, nodes.clusters[a].centroid)) path.push_back(p);
    path.push_back(nodes.clusters[b].centroid);
    e.path = std::move(path);
    if (thickness && !s.pixels.empty()) {
      double sum = 0.0;
      for (auto p : s.pixels) sum += (*thickness)(p.x, p.y);
      e.weight = sum / static_cast<double>(s.pixels.size());
    }
    g.edges.emplace(e.id, std::move(e));
  }
  g.validate();
  return g;
}

/// Transfers ROI classes to the nearest node within half the larger box side.
/// Astrocyte ROIs are skipped. A node claimed twice goes to the higher
/// confidence ROI (earlier ROI on equal confidence).
inline ExtractedGraph classify_nodes(const ExtractedGraph& g, const std::vector<Roi>& rois, ImageDims dims,
                                     ExtractionDiagnostics* diag = nullptr) {
  for (std::size_t i = 0; i < rois.size(); ++i) {
    try {
      validate(rois[i]);
    } catch (const Error& e) {
      throw Error("roi " + std::to_string(i) + ": " + e.what());
    }
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < rois.size(); ++i)
    if (rois[i].cls != RoiClass::astrocyte) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rois[a].confidence > rois[b].confidence; });

  ExtractedGraph out = g;
  std::unordered_map<NodeId, std::size_t> claimed;
  std::vector<UnmatchedRoi> unmatched;
  for (auto i : order) {
    const Roi& r = rois[i];
    const PointF c{r.cx * dims.width, r.cy * dims.height};
    const double radius = std::max(r.w * dims.width, r.h * dims.height) / 2.0;
    std::optional<NodeId> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [id, n] : out.nodes) {
      const double d = distance(n.position, c);
      if (d < best_d) {  // id order, so ties keep the smaller id
        best_d = d;
        best = id;
      }
    }
    if (!best || best_d > radius) {
      unmatched.push_back({i, r, "no node within " + std::to_string(radius) + " px"});
      continue;
    }
    if (auto it = claimed.find(*best); it != claimed.end()) {
      unmatched.push_back({i, r, "node " + std::to_string(*best) + " taken by roi " + std::to_string(it->second)});
      continue;
    }
    claimed.emplace(*best, i);
    out.nodes.at(*best).cls = r.cls == RoiClass::neuron ? NodeClass::neuron : NodeClass::cluster;
  }
  if (diag) {
    std::sort(unmatched.begin(), unmatched.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    diag->unmatched_rois.insert(diag->unmatched_rois.end(), unmatched.begin(), unmatched.end());
    diag->classified += claimed.size();
  }
  return out;
}

/// detect_nodes + extract_edges + build_graph.
inline ExtractedGraph extract_graph(const Skeleton& skel, const DistanceMap* thickness = nullptr,
                                    int max_dilation_rounds = 3, ExtractionDiagnostics* diag = nullptr) {
  const auto nodes = detect_nodes(skel, diag);
  const auto segs = extract_edges(skel, nodes, max_dilation_rounds, diag);
  return build_graph(skel, nodes, segs, thickness);
}

}  // namespace neurograph
