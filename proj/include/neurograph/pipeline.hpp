#pragma once

// Configuration-driven run of every stage from a raw image to a graph file,
// with optional numbered dumps of the intermediate images.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neurograph/artifact.hpp"
#include "neurograph/graph_extract.hpp"
#include "neurograph/graph_io.hpp"
#include "neurograph/png_io.hpp"
#include "neurograph/roi.hpp"
#include "neurograph/segmentation.hpp"
#include "neurograph/thinning.hpp"

#ifndef NEUROGRAPH_VERSION
#define NEUROGRAPH_VERSION "0.1.0"
#endif

namespace neurograph {

/// Invalid or unknown configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Segmenter { watershed, external_mask };

inline std::string_view to_string(Segmenter s) {
  return s == Segmenter::watershed ? "watershed" : "external-mask";
}

struct PipelineConfig {
  std::filesystem::path input_image;
  std::filesystem::path roi_file;  // empty: no classification
  std::filesystem::path output_dir;
  GraphFormat output_format = GraphFormat::json;
  bool dump_intermediates = false;
  std::uint64_t seed = 0;

  bool artifact_enabled = true;
  int dark_threshold = 20;
  double grow_diameter = 5.0;

  bool inpaint_enabled = true;
  int inpaint_max_iters = 20000;
  double inpaint_tol = 1e-3;

  Segmenter segmenter = Segmenter::watershed;
  std::filesystem::path external_mask;
  std::filesystem::path marker_file;  // empty: automatic markers
  double blur_sigma = 1.0;
  double fg_quantile = 0.95;
  double bg_quantile = 0.5;
  int min_area = 20;

  bool thinning_enabled = true;
  int dilation_rounds = 3;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

namespace detail {

using boost::property_tree::ptree;

inline std::string format_real(double v) { return format_double(v); }

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline long long parse_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

}  // namespace detail

/// Flat `section.key -> value` view of a config, in a fixed key order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"input.image", c.input_image.string()},
      {"input.rois", c.roi_file.string()},
      {"output.dir", c.output_dir.string()},
      {"output.format", c.output_format == GraphFormat::json ? "json" : "graphml"},
      {"output.dump_intermediates", b(c.dump_intermediates)},
      {"run.seed", std::to_string(c.seed)},
      {"artifact.enabled", b(c.artifact_enabled)},
      {"artifact.dark_threshold", std::to_string(c.dark_threshold)},
      {"artifact.grow_diameter", detail::format_real(c.grow_diameter)},
      {"inpaint.enabled", b(c.inpaint_enabled)},
      {"inpaint.max_iters", std::to_string(c.inpaint_max_iters)},
      {"inpaint.tol", detail::format_real(c.inpaint_tol)},
      {"segmentation.method", std::string(to_string(c.segmenter))},
      {"segmentation.mask", c.external_mask.string()},
      {"segmentation.markers", c.marker_file.string()},
      {"segmentation.blur_sigma", detail::format_real(c.blur_sigma)},
      {"segmentation.fg_quantile", detail::format_real(c.fg_quantile)},
      {"segmentation.bg_quantile", detail::format_real(c.bg_quantile)},
      {"segmentation.min_area", std::to_string(c.min_area)},
      {"thinning.enabled", b(c.thinning_enabled)},
      {"extraction.dilation_rounds", std::to_string(c.dilation_rounds)},
  };
}

/// Sets one dotted key from its text value. Unknown keys are rejected.
inline void set_config_value(PipelineConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto integer = [&](long long lo, long long hi) {
    const long long n = parse_integer(key, v);
    if (n < lo || n > hi) throw ConfigError(key + ": " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return n;
  };
  if (key == "input.image") c.input_image = v;
  else if (key == "input.rois") c.roi_file = v;
  else if (key == "output.dir") c.output_dir = v;
  else if (key == "output.format") {
    try {
      c.output_format = parse_graph_format(v);
    } catch (const Error& e) {
      throw ConfigError(key + ": " + e.what());
    }
  } else if (key == "output.dump_intermediates") c.dump_intermediates = parse_bool(key, v);
  else if (key == "run.seed") c.seed = static_cast<std::uint64_t>(integer(0, std::numeric_limits<long long>::max()));
  else if (key == "artifact.enabled") c.artifact_enabled = parse_bool(key, v);
  else if (key == "artifact.dark_threshold") c.dark_threshold = static_cast<int>(integer(0, 255));
  else if (key == "artifact.grow_diameter") c.grow_diameter = parse_real(key, v);
  else if (key == "inpaint.enabled") c.inpaint_enabled = parse_bool(key, v);
  else if (key == "inpaint.max_iters") c.inpaint_max_iters = static_cast<int>(integer(1, 100000000));
  else if (key == "inpaint.tol") c.inpaint_tol = parse_real(key, v);
  else if (key == "segmentation.method") {
    if (v == "watershed") c.segmenter = Segmenter::watershed;
    else if (v == "external-mask") c.segmenter = Segmenter::external_mask;
    else throw ConfigError(key + ": expected watershed or external-mask, got '" + v + "'");
  } else if (key == "segmentation.mask") c.external_mask = v;
  else if (key == "segmentation.markers") c.marker_file = v;
  else if (key == "segmentation.blur_sigma") c.blur_sigma = parse_real(key, v);
  else if (key == "segmentation.fg_quantile") c.fg_quantile = parse_real(key, v);
  else if (key == "segmentation.bg_quantile") c.bg_quantile = parse_real(key, v);
  else if (key == "segmentation.min_area") c.min_area = static_cast<int>(integer(0, std::numeric_limits<int>::max()));
  else if (key == "thinning.enabled") c.thinning_enabled = parse_bool(key, v);
  else if (key == "extraction.dilation_rounds") c.dilation_rounds = static_cast<int>(integer(1, 1000));
  else throw ConfigError("unknown config key '" + key + "'");
}

/// `section.key=value`.
inline void apply_override(PipelineConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(c, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Range and consistency checks run before any stage.
inline void validate(const PipelineConfig& c) {
  if (c.input_image.empty()) throw ConfigError("input.image is required");
  if (c.output_dir.empty()) throw ConfigError("output.dir is required");
  if (!(c.grow_diameter >= 0.0 && c.grow_diameter <= 255.0)) throw ConfigError("artifact.grow_diameter must be in [0, 255]");
  if (!(c.inpaint_tol > 0.0)) throw ConfigError("inpaint.tol must be > 0");
  if (!(c.blur_sigma >= 0.0 && c.blur_sigma <= 50.0)) throw ConfigError("segmentation.blur_sigma must be in [0, 50]");
  if (!(0.0 < c.bg_quantile && c.bg_quantile < c.fg_quantile && c.fg_quantile < 1.0))
    throw ConfigError("segmentation quantiles must satisfy 0 < bg_quantile < fg_quantile < 1");
  if (c.segmenter == Segmenter::external_mask && c.external_mask.empty())
    throw ConfigError("segmentation.mask is required when segmentation.method = external-mask");
  if (c.inpaint_enabled && !c.artifact_enabled) throw ConfigError("inpaint.enabled requires artifact.enabled");
}

/// Parses INI text; keys absent from the text keep their defaults.
inline PipelineConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  detail::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      try {
        set_config_value(c, section + "." + key, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  PipelineConfig c = parse_config(in, path.string());
  for (const auto& o : overrides) apply_override(c, o);
  return c;
}

/// Effective config as INI; parse_config(format_config(c)) == c.
inline std::string format_config(const PipelineConfig& c) {
  detail::ptree tree;
  for (const auto& [key, value] : config_entries(c)) tree.put(key, value);
  std::ostringstream os;
  boost::property_tree::write_ini(os, tree);
  return os.str();
}

// ---------------------------------------------------------------------------
// Overlay

namespace detail {

inline void paint(Raster& img, int x, int y, const std::array<std::uint8_t, 3>& rgb) {
  if (!img.contains(x, y)) return;
  for (int c = 0; c < 3; ++c) img(x, y, c) = rgb[c];
}

inline void paint_line(Raster& img, PointF a, PointF b, const std::array<std::uint8_t, 3>& rgb) {
  int x0 = static_cast<int>(std::lround(a.x)), y0 = static_cast<int>(std::lround(a.y));
  const int x1 = static_cast<int>(std::lround(b.x)), y1 = static_cast<int>(std::lround(b.y));
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    paint(img, x0, y0, rgb);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace detail

inline constexpr std::array<std::uint8_t, 3> kSkeletonColor{255, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kEdgeColor{0, 0, 255};
inline constexpr std::array<std::uint8_t, 3> kNodeColor{255, 0, 0};

/// Gray base, yellow skeleton, blue edges (path polyline, or the straight
/// line between endpoints when an edge has no path), red 3x3 nodes on top.
inline Raster render_overlay(const Raster& img, const Skeleton& skel, const ExtractedGraph& g) {
  if (!skel.mask.same_shape(img.width(), img.height()))
    throw Error("overlay: skeleton " + std::to_string(skel.mask.width()) + "x" + std::to_string(skel.mask.height()) +
                " does not match image " + std::to_string(img.width()) + "x" + std::to_string(img.height()));
  Raster out = gray_to_rgb(ensure_gray(img));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (skel.mask(x, y)) detail::paint(out, x, y, kSkeletonColor);
  for (const auto& [_, e] : g.edges) {
    if (e.path && !e.path->empty()) {
      const auto& p = *e.path;
      detail::paint_line(out, p.front(), p.front(), kEdgeColor);
      for (std::size_t i = 1; i < p.size(); ++i) detail::paint_line(out, p[i - 1], p[i], kEdgeColor);
    } else {
      detail::paint_line(out, g.node(e.u).position, g.node(e.v).position, kEdgeColor);
    }
  }
  for (const auto& [_, n] : g.nodes) {
    const int cx = static_cast<int>(std::lround(n.position.x)), cy = static_cast<int>(std::lround(n.position.y));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) detail::paint(out, cx + dx, cy + dy, kNodeColor);
  }
  return out;
}

/// ROI outlines over the image: neurons green, astrocytes magenta, clusters cyan.
inline Raster render_detections(const Raster& img, const std::vector<Roi>& rois) {
  Raster out = gray_to_rgb(ensure_gray(img));
  const double W = img.width(), H = img.height();
  for (const auto& r : rois) {
    const std::array<std::uint8_t, 3> color = r.cls == RoiClass::neuron      ? std::array<std::uint8_t, 3>{0, 255, 0}
                                              : r.cls == RoiClass::astrocyte ? std::array<std::uint8_t, 3>{255, 0, 255}
                                                                             : std::array<std::uint8_t, 3>{0, 255, 255};
    const PointF a{(r.cx - r.w / 2) * W, (r.cy - r.h / 2) * H}, b{(r.cx + r.w / 2) * W - 1, (r.cy + r.h / 2) * H - 1};
    detail::paint_line(out, a, {b.x, a.y}, color);
    detail::paint_line(out, {b.x, a.y}, b, color);
    detail::paint_line(out, b, {a.x, b.y}, color);
    detail::paint_line(out, {a.x, b.y}, a, color);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run

/// Everything a run produced. On failure the fields up to the failed stage
/// are filled and `stages` lists the completed ones.
struct PipelineResult {
  Raster gray;
  BitMask artifact_mask;
  Raster inpainted;
  std::vector<Roi> rois;
  LabelMap labels;
  BitMask structure;
  Skeleton skeleton;
  ExtractedGraph graph;
  Raster overlay;
  ExtractionDiagnostics diagnostics;
  InpaintStats inpaint_stats;
  std::vector<std::string> stages;
  std::vector<std::filesystem::path> files;
};

inline std::string graph_file_name(GraphFormat f) {
  return f == GraphFormat::json ? "graph.json" : "graph.graphml";
}

/// Names of the numbered dumps, in stage order.
inline const std::vector<std::string>& dump_names() {
  static const std::vector<std::string> names = {"01_gray",       "02_artifact_mask", "03_inpainted",
                                                 "04_detections", "05_watershed",     "06_structure_mask",
                                                 "07_skeleton",   "08_overlay"};
  return names;
}

namespace detail {

class StageRunner {
 public:
  StageRunner(const PipelineConfig& cfg, PipelineResult& out) : cfg_(cfg), out_(out) {}

  template <typename F>
  void stage(const std::string& name, F&& body) {
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    out_.stages.push_back(name);
  }

  void dump(const std::string& name, const Raster& img) {
    if (!cfg_.dump_intermediates) return;
    write(name + ".png", png::encode(img));
  }

  void write(const std::string& file, const std::vector<std::uint8_t>& bytes) {
    const auto path = cfg_.output_dir / file;
    png::detail::write_file(path, bytes);
    out_.files.push_back(path);
  }

  void write_text(const std::string& file, const std::string& text) {
    write(file, std::vector<std::uint8_t>(text.begin(), text.end()));
  }

  void check_dims(const char* what, int w, int h) const {
    if (w != out_.gray.width() || h != out_.gray.height())
      throw Error(std::string(what) + " is " + std::to_string(w) + "x" + std::to_string(h) + ", image is " +
                  std::to_string(out_.gray.width()) + "x" + std::to_string(out_.gray.height()));
  }

 private:
  const PipelineConfig& cfg_;
  PipelineResult& out_;
};

}  // namespace detail

/// Runs every stage in order, filling `out` as it goes. Throws ConfigError
/// before any stage on an invalid config and StageError naming the failed
/// stage otherwise; files written before the failure are kept.
inline void run_pipeline(const PipelineConfig& cfg, PipelineResult& out) {
  validate(cfg);
  out = PipelineResult{};
  detail::StageRunner run(cfg, out);
  const auto& names = dump_names();

  run.stage("output", [&] { std::filesystem::create_directories(cfg.output_dir); });
  if (cfg.dump_intermediates) run.write_text("config.ini", format_config(cfg));

  run.stage("grayscale", [&] {
    out.gray = ensure_gray(png::read(cfg.input_image));
    run.dump(names[0], out.gray);
  });
  const int W = out.gray.width(), H = out.gray.height();

  run.stage("artifact", [&] {
    out.artifact_mask = cfg.artifact_enabled
                            ? segment_artifacts(out.gray, cfg.dark_threshold, StructuringElement::disk(cfg.grow_diameter))
                            : BitMask(W, H);
    run.dump(names[1], png::mask_to_raster(out.artifact_mask));
  });

  run.stage("inpaint", [&] {
    out.inpainted = cfg.inpaint_enabled
                        ? inpaint(out.gray, out.artifact_mask, {cfg.inpaint_max_iters, cfg.inpaint_tol}, nullptr,
                                  &out.inpaint_stats)
                        : out.gray;
    run.dump(names[2], out.inpainted);
  });

  run.stage("detection", [&] {
    if (!cfg.roi_file.empty()) out.rois = parse_roi_file(cfg.roi_file);
    run.dump(names[3], render_detections(out.inpainted, out.rois));
  });

  run.stage("segmentation", [&] {
    if (cfg.segmenter == Segmenter::external_mask) {
      const BitMask external = png::read_mask(cfg.external_mask);
      run.check_dims("external mask", external.width(), external.height());
      out.labels = LabelMap(W, H, kBackgroundLabel);
      out.labels.label_count = 2;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (external(x, y)) out.labels(x, y) = kForegroundLabel;
    } else {
      const Raster smooth = cfg.blur_sigma > 0 ? gaussian_blur(out.inpainted, cfg.blur_sigma) : out.inpainted;
      const MarkerSet markers = cfg.marker_file.empty() ? auto_markers(smooth, cfg.fg_quantile, cfg.bg_quantile)
                                                        : read_markers(cfg.marker_file);
      out.labels = guided_watershed(smooth, markers);
      BitMask fg(W, H);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) fg(x, y) = out.labels(x, y) == kForegroundLabel;
      run.dump(names[4], png::mask_to_raster(fg));
    }
    out.structure = structure_mask(out.labels, static_cast<std::size_t>(cfg.min_area));
    run.dump(names[5], png::mask_to_raster(out.structure));
  });

  run.stage("thinning", [&] {
    out.skeleton = cfg.thinning_enabled ? thin(out.structure) : Skeleton{out.structure};
    run.dump(names[6], png::mask_to_raster(out.skeleton.mask));
  });

  run.stage("extraction", [&] {
    const DistanceMap thickness = distance_transform(out.structure);
    out.graph = extract_graph(out.skeleton, &thickness, cfg.dilation_rounds, &out.diagnostics);
    out.graph.meta = {cfg.input_image.filename().string(), "neurograph " NEUROGRAPH_VERSION, ""};
  });

  run.stage("classification", [&] {
    if (!out.rois.empty()) out.graph = classify_nodes(out.graph, out.rois, {W, H}, &out.diagnostics);
    out.overlay = render_overlay(out.inpainted, out.skeleton, out.graph);
    run.dump(names[7], out.overlay);
  });

  run.stage("serialize", [&] {
    const std::string text = serialize(out.graph, cfg.output_format);
    run.write_text(graph_file_name(cfg.output_format), text);
    if (cfg.dump_intermediates) run.write_text("diagnostics.txt", out.diagnostics.to_text());
  });
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult out;
  run_pipeline(cfg, out);
  return out;
}

}  // namespace neurograph
