#pragma once

// Synthetic skeletons with hand-specified graphs.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "neurograph/graph.hpp"
#include "test_support.hpp"

namespace neurograph::testing {

struct ExpectedEdge {
  int a = 0, b = 0;     // indices into ExtractFixture::nodes
  double length = 0.0;  // drawn polyline length
};

struct ExtractFixture {
  std::string name;
  BitMask skeleton;
  std::vector<PointF> nodes;
  std::vector<ExpectedEdge> edges;
};

inline void draw_polyline(BitMask& m, const std::vector<Point>& pts) {
  for (std::size_t i = 1; i < pts.size(); ++i) draw_line(m, pts[i - 1].x, pts[i - 1].y, pts[i].x, pts[i].y);
}

inline std::vector<ExtractFixture> extract_fixtures() {
  const double r2 = std::sqrt(2.0);
  std::vector<ExtractFixture> out;
  auto blank = [] { return BitMask(64, 64); };

  {
    ExtractFixture f{"line", blank(), {{10, 20}, {50, 20}}, {{0, 1, 40}}};
    draw_line(f.skeleton, 10, 20, 50, 20);
    out.push_back(f);
  }
  {
    ExtractFixture f{"cross", blank(), {{30, 30}, {30, 10}, {50, 30}, {30, 50}, {10, 30}},
                     {{0, 1, 20}, {0, 2, 20}, {0, 3, 20}, {0, 4, 20}}};
    draw_line(f.skeleton, 30, 10, 30, 50);
    draw_line(f.skeleton, 10, 30, 50, 30);
    out.push_back(f);
  }
  {
    ExtractFixture f{"Y", blank(), {{30, 30}, {30, 50}, {15, 15}, {45, 15}},
                     {{0, 1, 20}, {0, 2, 15 * r2}, {0, 3, 15 * r2}}};
    draw_line(f.skeleton, 30, 30, 30, 50);
    draw_line(f.skeleton, 30, 30, 15, 15);
    draw_line(f.skeleton, 30, 30, 45, 15);
    out.push_back(f);
  }
  {
    ExtractFixture f{"T", blank(), {{30, 20}, {10, 20}, {50, 20}, {30, 45}}, {{0, 1, 20}, {0, 2, 20}, {0, 3, 25}}};
    draw_line(f.skeleton, 10, 20, 50, 20);
    draw_line(f.skeleton, 30, 20, 30, 45);
    out.push_back(f);
  }
  {
    ExtractFixture f{"H", blank(), {{15, 10}, {15, 50}, {45, 10}, {45, 50}, {15, 30}, {45, 30}},
                     {{4, 0, 20}, {4, 1, 20}, {5, 2, 20}, {5, 3, 20}, {4, 5, 30}}};
    draw_line(f.skeleton, 15, 10, 15, 50);
    draw_line(f.skeleton, 45, 10, 45, 50);
    draw_line(f.skeleton, 15, 30, 45, 30);
    out.push_back(f);
  }
  {
    // Three horizontal and three vertical lines, each overshooting the outer crossings by 10.
    ExtractFixture f{"grid", blank(), {}, {}};
    const int c[3] = {15, 30, 45};
    std::map<std::pair<int, int>, int> idx;
    auto node = [&](int x, int y) {
      auto [it, fresh] = idx.emplace(std::pair{x, y}, static_cast<int>(f.nodes.size()));
      if (fresh) f.nodes.push_back({double(x), double(y)});
      return it->second;
    };
    for (int i = 0; i < 3; ++i) {
      draw_line(f.skeleton, c[i], 5, c[i], 55);
      draw_line(f.skeleton, 5, c[i], 55, c[i]);
      const int stops[5] = {5, 15, 30, 45, 55};
      for (int s = 1; s < 5; ++s) {
        f.edges.push_back({node(c[i], stops[s - 1]), node(c[i], stops[s]), double(stops[s] - stops[s - 1])});
        f.edges.push_back({node(stops[s - 1], c[i]), node(stops[s], c[i]), double(stops[s] - stops[s - 1])});
      }
    }
    out.push_back(f);
  }
  {
    // Two diamonds touching at a single pixel: one junction carrying two loops.
    ExtractFixture f{"two tangent loops", blank(), {{30, 30}}, {{0, 0, 40 * r2}, {0, 0, 40 * r2}}};
    draw_polyline(f.skeleton, {{30, 30}, {20, 20}, {10, 30}, {20, 40}, {30, 30}});
    draw_polyline(f.skeleton, {{30, 30}, {40, 20}, {50, 30}, {40, 40}, {30, 30}});
    out.push_back(f);
  }
  return out;
}

/// Empty when `g` matches the fixture: a node bijection within `pos_tol` and
/// equal edge multisets with lengths within `len_tol`.
inline std::string compare_to_fixture(const ExtractedGraph& g, const ExtractFixture& f, double pos_tol = 1.5,
                                      double len_tol = 2.0) {
  std::ostringstream err;
  if (g.nodes.size() != f.nodes.size()) {
    err << f.name << ": " << g.nodes.size() << " nodes, expected " << f.nodes.size();
    return err.str();
  }
  std::map<NodeId, int> to_expected;
  std::vector<bool> used(f.nodes.size(), false);
  for (const auto& [id, n] : g.nodes) {
    int hit = -1;
    for (std::size_t i = 0; i < f.nodes.size(); ++i)
      if (!used[i] && distance(n.position, f.nodes[i]) <= pos_tol) {
        hit = static_cast<int>(i);
        break;
      }
    if (hit < 0) {
      err << f.name << ": node " << id << " at (" << n.position.x << "," << n.position.y << ") matches nothing";
      return err.str();
    }
    used[static_cast<std::size_t>(hit)] = true;
    to_expected[id] = hit;
  }
  std::map<std::pair<int, int>, std::vector<double>> got, want;
  for (const auto& [_, e] : g.edges)
    got[std::minmax(to_expected.at(e.u), to_expected.at(e.v))].push_back(e.length);
  for (const auto& e : f.edges) want[std::minmax(e.a, e.b)].push_back(e.length);
  for (auto* m : {&got, &want})
    for (auto& [_, v] : *m) std::sort(v.begin(), v.end());
  if (got.size() != want.size()) {
    err << f.name << ": " << got.size() << " distinct node pairs joined, expected " << want.size();
    return err.str();
  }
  for (const auto& [key, lengths] : want) {
    auto it = got.find(key);
    if (it == got.end() || it->second.size() != lengths.size()) {
      err << f.name << ": wrong edge multiplicity between fixture nodes " << key.first << " and " << key.second;
      return err.str();
    }
    for (std::size_t i = 0; i < lengths.size(); ++i)
      if (std::abs(it->second[i] - lengths[i]) > len_tol) {
        err << f.name << ": edge " << key.first << "-" << key.second << " length " << it->second[i] << ", drawn "
            << lengths[i];
        return err.str();
      }
  }
  return {};
}

}  // namespace neurograph::testing
