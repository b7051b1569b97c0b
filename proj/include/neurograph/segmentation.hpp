#pragma once

// Marker-guided watershed segmentation into a binary structure mask.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "neurograph/raster.hpp"

namespace neurograph {

enum class MarkerOrigin { automatic, user };

struct MarkerSet {
  std::vector<Point> foreground;
  std::vector<Point> background;
  MarkerOrigin origin = MarkerOrigin::user;
};

inline constexpr std::uint32_t kForegroundLabel = 1;
inline constexpr std::uint32_t kBackgroundLabel = 2;

/// Throws when a seed is outside the image or listed on both sides.
inline void validate(const MarkerSet& m, int width, int height) {
  std::set<Point> fg;
  for (auto p : m.foreground) {
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
      throw Error("foreground seed (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    fg.insert(p);
  }
  for (auto p : m.background) {
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
      throw Error("background seed (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    if (fg.contains(p))
      throw Error("seed (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") is both foreground and background");
  }
}

/// One seed per line: `fg x y` or `bg x y`; blank lines and `#` comments ignored.
inline MarkerSet parse_markers(std::istream& in, const std::string& source = "<markers>") {
  MarkerSet m;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    std::string kind, extra;
    Point p;
    if (!(ls >> kind >> p.x >> p.y) || (ls >> extra) || (kind != "fg" && kind != "bg"))
      throw Error(source + ":" + std::to_string(lineno) + ": expected 'fg|bg x y'");
    (kind == "fg" ? m.foreground : m.background).push_back(p);
  }
  return m;
}

inline MarkerSet read_markers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open marker file " + path.string());
  return parse_markers(in, path.string());
}

inline std::string format_markers(const MarkerSet& m) {
  std::ostringstream os;
  for (auto p : m.foreground) os << "fg " << p.x << ' ' << p.y << '\n';
  for (auto p : m.background) os << "bg " << p.x << ' ' << p.y << '\n';
  return os.str();
}

/// Foreground seeds: distance-transform maxima of the Otsu foreground whose
/// intensity reaches the fg quantile. Background seeds: pixels at or below
/// the bg quantile on a 16 px grid.
inline MarkerSet auto_markers(const Raster& img, double fg_quantile, double bg_quantile) {
  if (!(0.0 < bg_quantile && bg_quantile < fg_quantile && fg_quantile < 1.0))
    throw Error("marker quantiles must satisfy 0 < bg < fg < 1");
  const Raster gray = ensure_gray(img);
  const BitMask bright = threshold(gray, otsu_threshold(gray), ThresholdMode::above);
  const DistanceMap dt = distance_transform(bright);
  const int fg_level = intensity_quantile(gray, fg_quantile);
  const int bg_level = intensity_quantile(gray, bg_quantile);

  MarkerSet m;
  m.origin = MarkerOrigin::automatic;
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x) {
      const double d = dt(x, y);
      if (d <= 0.0 || gray(x, y) < fg_level) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy)
        for (int dx = -1; dx <= 1 && peak; ++dx)
          if (dt.contains(x + dx, y + dy) && dt(x + dx, y + dy) > d) peak = false;
      if (peak) m.foreground.push_back({x, y});
    }
  for (int y = 0; y < gray.height(); y += 16)
    for (int x = 0; x < gray.width(); x += 16)
      if (gray(x, y) <= bg_level && !bright.test(x, y)) m.background.push_back({x, y});
  return m;
}

/// L2 norm of central differences, replicating the border.
inline Grid<double> gradient_magnitude(const Raster& img) {
  const int W = img.width(), H = img.height();
  Grid<double> g(W, H);
  auto v = [&](int x, int y) { return static_cast<double>(img(std::clamp(x, 0, W - 1), std::clamp(y, 0, H - 1))); };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double gx = (v(x + 1, y) - v(x - 1, y)) / 2.0;
      const double gy = (v(x, y + 1) - v(x, y - 1)) / 2.0;
      g(x, y) = std::hypot(gx, gy);
    }
  return g;
}

/// Priority-flood watershed on the gradient magnitude. Seeds take label 1
/// (foreground) or 2 (background); pixels are flooded in increasing relief
/// order with ties resolved by insertion order. An empty background group is
/// allowed; the foreground group must not be empty.
inline LabelMap guided_watershed(const Raster& img, const MarkerSet& markers) {
  const Raster gray = ensure_gray(img);
  validate(markers, gray.width(), gray.height());
  if (markers.foreground.empty()) throw Error("empty foreground marker group");
  const Grid<double> relief = gradient_magnitude(gray);

  LabelMap labels(gray.width(), gray.height());
  labels.label_count = 2;
  using Item = std::tuple<double, std::uint64_t, int, int>;  // level, insertion, x, y
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  std::uint64_t counter = 0;
  auto seed = [&](const std::vector<Point>& pts, std::uint32_t label) {
    for (auto p : pts) {
      if (labels(p.x, p.y)) continue;
      labels(p.x, p.y) = label;
      pq.emplace(relief(p.x, p.y), counter++, p.x, p.y);
    }
  };
  seed(markers.foreground, kForegroundLabel);
  seed(markers.background, kBackgroundLabel);

  constexpr Point kFour[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  while (!pq.empty()) {
    const auto [level, order, x, y] = pq.top();
    pq.pop();
    for (auto d : kFour) {
      const int nx = x + d.x, ny = y + d.y;
      if (!labels.contains(nx, ny) || labels(nx, ny)) continue;
      labels(nx, ny) = labels(x, y);
      pq.emplace(std::max(level, relief(nx, ny)), counter++, nx, ny);
    }
  }
  return labels;
}

/// Foreground-labeled pixels minus 8-connected components below min_area.
inline BitMask structure_mask(const LabelMap& labels, std::size_t min_area) {
  BitMask fg(labels.width(), labels.height());
  for (int y = 0; y < labels.height(); ++y)
    for (int x = 0; x < labels.width(); ++x) fg.set(x, y, labels(x, y) == kForegroundLabel);
  if (min_area == 0) return fg;
  return remove_small_components(fg, min_area);
}

}  // namespace neurograph
