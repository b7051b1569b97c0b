#pragma once

// Detector output records and anchor-box clustering.
//
// ROI files hold one record per line: `class_id cx cy w h [confidence]`, with
// centre and size normalized to the image.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "neurograph/error.hpp"

namespace neurograph {

enum class RoiClass { neuron = 0, astrocyte = 1, cluster = 2 };

inline std::string_view to_string(RoiClass c) {
  switch (c) {
    case RoiClass::neuron: return "neuron";
    case RoiClass::astrocyte: return "astrocyte";
    case RoiClass::cluster: return "cluster";
  }
  return "neuron";
}

struct Roi {
  RoiClass cls = RoiClass::neuron;
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;
  double confidence = 1.0;
  friend bool operator==(const Roi&, const Roi&) = default;
};

struct ImageDims {
  int width = 0;
  int height = 0;
};

/// Throws Error describing the first out-of-range field.
inline void validate(const Roi& r) {
  auto in01 = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in01(r.cx) || !in01(r.cy)) throw Error("centre must lie in [0,1]");
  if (!in01(r.w) || !in01(r.h) || r.w <= 0.0 || r.h <= 0.0) throw Error("size must lie in (0,1]");
  if (!in01(r.confidence)) throw Error("confidence must lie in [0,1]");
}

/// Parses ROI records; `source` prefixes error messages.
inline std::vector<Roi> parse_rois(std::istream& in, const std::string& source = "<rois>") {
  std::vector<Roi> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) -> Error {
      return Error(source + ":" + std::to_string(lineno) + ": " + why);
    };
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.size() != 5 && tok.size() != 6)
      throw fail("expected 'class_id cx cy w h [confidence]', got " + std::to_string(tok.size()) + " fields");
    std::vector<double> v;
    for (const auto& t : tok) {
      std::size_t used = 0;
      double d = 0.0;
      try {
        d = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t.size()) throw fail("not a number: '" + t + "'");
      v.push_back(d);
    }
    if (v[0] != std::floor(v[0]) || v[0] < 0 || v[0] > 2) throw fail("unknown class_id " + tok[0]);
    Roi r{static_cast<RoiClass>(static_cast<int>(v[0])), v[1], v[2], v[3], v[4], v.size() == 6 ? v[5] : 1.0};
    try {
      validate(r);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    out.push_back(r);
  }
  return out;
}

inline std::vector<Roi> parse_roi_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ROI file " + path.string());
  return parse_rois(in, path.string());
}

inline std::string format_rois(const std::vector<Roi>& rois) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& r : rois)
    os << static_cast<int>(r.cls) << ' ' << r.cx << ' ' << r.cy << ' ' << r.w << ' ' << r.h << ' ' << r.confidence << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Anchor boxes

struct Box {
  double w = 0.0;
  double h = 0.0;
  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// IoU of two boxes sharing a centre.
inline double centered_iou(Box a, Box b) {
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double iou_distance(Box a, Box b) { return 1.0 - centered_iou(a, b); }

struct KMeansOptions {
  int k = 6;
  std::uint64_t seed = 0;
  int max_iters = 300;
  double tol = 1e-9;
};

struct AnchorSet {
  std::vector<Box> anchors;         // ascending area
  int k = 0;
  std::vector<int> assignment;      // anchor index per input box, input order
  std::vector<double> cost_history; // total cost after each assignment step
  double cost = 0.0;
};

/// Total 1-IoU cost of `boxes` under `assignment` to `anchors`.
inline double clustering_cost(const std::vector<Box>& boxes, const std::vector<Box>& anchors,
                              const std::vector<int>& assignment) {
  double c = 0.0;
  for (std::size_t i = 0; i < boxes.size(); ++i) c += iou_distance(boxes[i], anchors[static_cast<std::size_t>(assignment[i])]);
  return c;
}

namespace detail {

inline int nearest_anchor(Box b, const std::vector<Box>& anchors) {
  int best = 0;
  double best_d = iou_distance(b, anchors[0]);
  for (std::size_t j = 1; j < anchors.size(); ++j) {
    const double d = iou_distance(b, anchors[j]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace detail

/// k-means under 1-IoU with k-means++ seeding. Input order does not matter:
/// boxes are sorted by area before seeding. An update that would raise the
/// cost is rejected and iteration stops, so `cost_history` never increases.
inline AnchorSet kmeans_anchors(const std::vector<Box>& input, const KMeansOptions& opt) {
  if (input.empty()) throw Error("kmeans_anchors: no boxes");
  if (opt.k < 1) throw Error("kmeans_anchors: k must be positive");
  for (const auto& b : input)
    if (!(b.w > 0.0) || !(b.h > 0.0) || !std::isfinite(b.w) || !std::isfinite(b.h))
      throw Error("kmeans_anchors: box sizes must be positive");

  auto key_less = [](Box a, Box b) {
    if (a.area() != b.area()) return a.area() < b.area();
    if (a.w != b.w) return a.w < b.w;
    return a.h < b.h;
  };
  std::vector<std::size_t> order(input.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key_less(input[a], input[b]); });
  std::vector<Box> boxes;
  for (auto i : order) boxes.push_back(input[i]);

  std::size_t distinct = 1;
  for (std::size_t i = 1; i < boxes.size(); ++i) distinct += !(boxes[i] == boxes[i - 1]);
  const auto k = static_cast<std::size_t>(opt.k);
  if (k > distinct)
    throw Error("kmeans_anchors: k=" + std::to_string(k) + " exceeds " + std::to_string(distinct) + " distinct boxes");

  // k-means++ seeding.
  std::mt19937_64 rng(opt.seed);
  std::vector<Box> anchors;
  anchors.push_back(boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(rng)]);
  std::vector<double> d2(boxes.size());
  while (anchors.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      double d = iou_distance(boxes[i], anchors[0]);
      for (std::size_t j = 1; j < anchors.size(); ++j) d = std::min(d, iou_distance(boxes[i], anchors[j]));
      d2[i] = d * d;
      total += d2[i];
    }
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    std::size_t pick = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (u < acc) break;
    }
    anchors.push_back(boxes[pick]);
  }

  // Lloyd iterations.
  std::vector<int> assign(boxes.size(), -1);
  std::vector<double> history;
  for (int iter = 0; iter < opt.max_iters; ++iter) {
    std::vector<int> next(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) next[i] = detail::nearest_anchor(boxes[i], anchors);
    const double cost = clustering_cost(boxes, anchors, next);
    history.push_back(cost);
    const bool fixpoint = next == assign;
    assign = std::move(next);
    if (fixpoint) break;

    std::vector<Box> updated = anchors;
    std::vector<double> sw(k, 0.0), sh(k, 0.0);
    std::vector<std::size_t> n(k, 0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const auto j = static_cast<std::size_t>(assign[i]);
      sw[j] += boxes[i].w;
      sh[j] += boxes[i].h;
      ++n[j];
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (n[j] == 0) continue;  // empty cluster keeps its anchor
      updated[j] = {sw[j] / static_cast<double>(n[j]), sh[j] / static_cast<double>(n[j])};
      moved = std::max(moved, std::hypot(updated[j].w - anchors[j].w, updated[j].h - anchors[j].h));
    }
    if (clustering_cost(boxes, updated, assign) > cost) break;
    anchors = std::move(updated);
    if (moved < opt.tol) {
      // Record the final assignment against the settled anchors.
      for (std::size_t i = 0; i < boxes.size(); ++i) assign[i] = detail::nearest_anchor(boxes[i], anchors);
      history.push_back(clustering_cost(boxes, anchors, assign));
      break;
    }
  }

  // Sort anchors by area and map assignments back to input order.
  std::vector<std::size_t> rank(k);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return key_less(anchors[a], anchors[b]); });
  std::vector<int> new_index(k);
  AnchorSet out;
  out.k = opt.k;
  for (std::size_t r = 0; r < k; ++r) {
    out.anchors.push_back(anchors[rank[r]]);
    new_index[rank[r]] = static_cast<int>(r);
  }
  out.assignment.assign(input.size(), 0);
  for (std::size_t s = 0; s < boxes.size(); ++s) out.assignment[order[s]] = new_index[static_cast<std::size_t>(assign[s])];
  out.cost_history = std::move(history);
  out.cost = out.cost_history.back();
  return out;
}

/// Pixel box sizes of ROIs on an image of the given size.
inline std::vector<Box> roi_boxes(const std::vector<Roi>& rois, ImageDims dims) {
  std::vector<Box> out;
  for (const auto& r : rois) out.push_back({r.w * dims.width, r.h * dims.height});
  return out;
}

}  // namespace neurograph
