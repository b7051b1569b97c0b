// neurograph: command-line front end for the image-to-graph pipeline.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 processing failure.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <thread>

#include "neurograph/artifact.hpp"
#include "neurograph/graph_edit.hpp"
#include "neurograph/graph_extract.hpp"
#include "neurograph/graph_io.hpp"
#include "neurograph/pipeline.hpp"
#include "neurograph/roi.hpp"
#include "neurograph/service.hpp"
#include "neurograph/thinning.hpp"

namespace fs = std::filesystem;
using namespace neurograph;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw Error("cannot write " + p.string());
}

GraphFormat format_for(const fs::path& p, const std::string& explicit_format) {
  if (!explicit_format.empty()) return parse_graph_format(explicit_format);
  return p.extension() == ".graphml" ? GraphFormat::graphml : GraphFormat::json;
}

struct RunArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool dump = false;
  std::string image;
};

PipelineConfig resolve_config(const RunArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_config(a.config);
  if (!a.image.empty()) cfg.input_image = a.image;
  for (const auto& s : a.sets) apply_override(cfg, s);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.seed) cfg.seed = *a.seed;
  if (a.dump) cfg.dump_intermediates = true;
  validate(cfg);
  return cfg;
}

void add_config_flags(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.sets, "Override a config value, section.key=value (repeatable)");
}

int cmd_run(const RunArgs& a) {
  const PipelineConfig cfg = resolve_config(a);
  const auto r = run_pipeline(cfg);
  std::cout << r.diagnostics.to_text();
  std::cout << "wrote " << (cfg.output_dir / graph_file_name(cfg.output_format)).string() << "\n";
  return 0;
}

std::atomic<Service*> g_service{nullptr};

extern "C" void on_signal(int) {
  if (Service* s = g_service.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-culture microscopy images to attributed graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NEUROGRAPH_VERSION);

  // run
  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  add_config_flags(run, run_args);
  run->add_option("image", run_args.image, "Input image (overrides input.image)");
  run->add_option("--out", run_args.out, "Output directory (overrides output.dir)");
  run->add_option("--seed", run_args.seed, "Seed (overrides run.seed)");
  run->add_flag("--dump-intermediates", run_args.dump, "Write numbered per-stage images");

  // mask-pool
  std::string mp_image, mp_mask, mp_out;
  MaskPoolOptions mp_opt;
  int mp_dark = PipelineConfig{}.dark_threshold;
  double mp_grow = PipelineConfig{}.grow_diameter;
  auto* mask_pool = app.add_subcommand("mask-pool", "Build rotated artifact-mask patches for inpainting training");
  auto* mp_image_opt = mask_pool->add_option("--image", mp_image, "Image to segment for dark artifacts")->check(CLI::ExistingFile);
  mask_pool->add_option("--mask", mp_mask, "Precomputed artifact mask")->check(CLI::ExistingFile)->excludes(mp_image_opt);
  mask_pool->add_option("--out", mp_out, "Output directory")->required();
  mask_pool->add_option("--patch-size", mp_opt.patch_size)->capture_default_str();
  mask_pool->add_option("--min-coverage", mp_opt.min_coverage)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  mask_pool->add_option("--crops", mp_opt.n_crops, "Random crops to draw")->capture_default_str();
  mask_pool->add_option("--seed", mp_opt.seed)->capture_default_str();
  mask_pool->add_option("--dark-threshold", mp_dark)->capture_default_str()->check(CLI::Range(0, 255));
  mask_pool->add_option("--grow", mp_grow, "Dilation disk diameter")->capture_default_str();

  // patches
  std::string pt_image, pt_mask, pt_out;
  int pt_size = 256, pt_stride = 128, pt_dark = PipelineConfig{}.dark_threshold;
  double pt_grow = PipelineConfig{}.grow_diameter;
  auto* patches = app.add_subcommand("patches", "Extract artifact-free ground-truth patches with dihedral variants");
  patches->add_option("--image", pt_image)->required()->check(CLI::ExistingFile);
  patches->add_option("--mask", pt_mask, "Artifact mask (default: segment the image)")->check(CLI::ExistingFile);
  patches->add_option("--out", pt_out, "Output directory")->required();
  patches->add_option("--patch-size", pt_size)->capture_default_str();
  patches->add_option("--stride", pt_stride)->capture_default_str();
  patches->add_option("--dark-threshold", pt_dark)->capture_default_str()->check(CLI::Range(0, 255));
  patches->add_option("--grow", pt_grow, "Dilation disk diameter")->capture_default_str();

  // anchors
  std::vector<std::string> an_files;
  int an_width = 0, an_height = 0;
  KMeansOptions an_opt;
  std::string an_out;
  auto* anchors = app.add_subcommand("anchors", "Cluster ROI box sizes into detector anchors");
  anchors->add_option("rois", an_files, "ROI label files")->required()->check(CLI::ExistingFile);
  anchors->add_option("--width", an_width, "Image width in pixels")->required()->check(CLI::PositiveNumber);
  anchors->add_option("--height", an_height, "Image height in pixels")->required()->check(CLI::PositiveNumber);
  anchors->add_option("-k", an_opt.k, "Number of anchors")->capture_default_str();
  anchors->add_option("--seed", an_opt.seed)->capture_default_str();
  anchors->add_option("--max-iters", an_opt.max_iters)->capture_default_str();
  anchors->add_option("--out", an_out, "Write anchors as 'w h' lines");

  // thin
  std::string th_in, th_out;
  auto* thin_cmd = app.add_subcommand("thin", "Thin a binary mask to a one-pixel skeleton");
  thin_cmd->add_option("mask", th_in)->required()->check(CLI::ExistingFile);
  thin_cmd->add_option("--out", th_out, "Skeleton PNG")->required();

  // extract
  std::string ex_skel, ex_thickness, ex_rois, ex_out, ex_format;
  int ex_rounds = 3;
  auto* extract = app.add_subcommand("extract", "Extract a graph from a skeleton");
  extract->add_option("skeleton", ex_skel)->required()->check(CLI::ExistingFile);
  extract->add_option("--thickness-mask", ex_thickness, "Pre-thinning mask for edge weights")->check(CLI::ExistingFile);
  extract->add_option("--rois", ex_rois, "ROI file for node classes")->check(CLI::ExistingFile);
  extract->add_option("--rounds", ex_rounds, "Maximum dilation rounds")->capture_default_str()->check(CLI::PositiveNumber);
  extract->add_option("--out", ex_out, "Graph file (.json or .graphml)")->required();
  extract->add_option("--format", ex_format)->check(CLI::IsMember({"json", "graphml"}));

  // render
  std::string rd_image, rd_skel, rd_graph, rd_out;
  auto* render = app.add_subcommand("render", "Draw skeleton, edges and nodes over an image");
  render->add_option("--image", rd_image)->required()->check(CLI::ExistingFile);
  render->add_option("--skeleton", rd_skel)->required()->check(CLI::ExistingFile);
  render->add_option("--graph", rd_graph)->required()->check(CLI::ExistingFile);
  render->add_option("--out", rd_out, "Overlay PNG")->required();

  // edit
  std::string ed_graph, ed_edits, ed_out, ed_format;
  auto* edit = app.add_subcommand("edit", "Apply a JSON edit batch to a graph file");
  edit->add_option("graph", ed_graph)->required()->check(CLI::ExistingFile);
  edit->add_option("--edits", ed_edits, "JSON array of edits or {\"edits\": [...]}")->required()->check(CLI::ExistingFile);
  edit->add_option("--out", ed_out, "Output graph file")->required();
  edit->add_option("--format", ed_format)->check(CLI::IsMember({"json", "graphml"}));

  // serve
  RunArgs sv_args;
  ServiceOptions sv_opt;
  sv_opt.apply_env();
  std::string sv_runs = sv_opt.runs_dir.string(), sv_static = sv_opt.static_dir.string();
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  add_config_flags(serve, sv_args);
  serve->add_option("--host", sv_opt.host, "Bind address (env NEUROGRAPH_HOST)")->capture_default_str();
  serve->add_option("--port", sv_opt.port, "Port, 0 for any (env NEUROGRAPH_PORT)")->capture_default_str();
  serve->add_option("--runs-dir", sv_runs, "Run storage (env NEUROGRAPH_RUNS_DIR)")->capture_default_str();
  serve->add_option("--static", sv_static, "UI bundle served at / (env NEUROGRAPH_STATIC_DIR)");
  serve->add_flag("--debug", sv_opt.debug_endpoints, "Enable the integrity endpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*run) return cmd_run(run_args);

    if (*mask_pool) {
      const BitMask mask = !mp_mask.empty() ? png::read_mask(mp_mask)
                           : !mp_image.empty()
                               ? segment_artifacts(png::read(mp_image), mp_dark, StructuringElement::disk(mp_grow))
                               : throw ConfigError("mask-pool needs --image or --mask");
      const auto pool = build_mask_pool(mask, mp_opt);
      save_mask_pool(pool, mp_out);
      std::cout << "crops drawn " << pool.crops_drawn << ", kept " << pool.crops_kept << ", patches "
                << pool.patches.size() << "\n";
      return 0;
    }

    if (*patches) {
      const Raster img = png::read(pt_image);
      const BitMask mask = pt_mask.empty()
                               ? segment_artifacts(img, pt_dark, StructuringElement::disk(pt_grow))
                               : png::read_mask(pt_mask);
      const auto set = extract_ground_truth_patches(img, mask, pt_size, pt_stride);
      save_patch_set(set, pt_out);
      std::cout << "clean crops " << set.clean_crops << ", patches " << set.patches.size() << "\n";
      return 0;
    }

    if (*anchors) {
      std::vector<Box> boxes;
      for (const auto& f : an_files)
        for (const auto& b : roi_boxes(parse_roi_file(f), {an_width, an_height})) boxes.push_back(b);
      const auto set = kmeans_anchors(boxes, an_opt);
      std::ostringstream os;
      for (const auto& b : set.anchors) {
        char line[64];
        std::snprintf(line, sizeof line, "%.3f %.3f\n", b.w, b.h);
        os << line;
      }
      std::cout << os.str() << "mean 1-IoU " << set.cost / static_cast<double>(boxes.size()) << "\n";
      if (!an_out.empty()) write_text(an_out, os.str());
      return 0;
    }

    if (*thin_cmd) {
      png::write_mask(th_out, thin(png::read_mask(th_in)).mask);
      return 0;
    }

    if (*extract) {
      const Skeleton skel{png::read_mask(ex_skel)};
      std::optional<DistanceMap> thickness;
      if (!ex_thickness.empty()) thickness = distance_transform(png::read_mask(ex_thickness));
      ExtractionDiagnostics diag;
      auto g = extract_graph(skel, thickness ? &*thickness : nullptr, ex_rounds, &diag);
      if (!ex_rois.empty())
        g = classify_nodes(g, parse_roi_file(ex_rois), {skel.mask.width(), skel.mask.height()}, &diag);
      g.meta = {fs::path(ex_skel).filename().string(), "neurograph " NEUROGRAPH_VERSION, ""};
      write_text(ex_out, serialize(g, format_for(ex_out, ex_format)));
      std::cout << diag.to_text();
      return 0;
    }

    if (*render) {
      const auto g = parse(read_text(rd_graph), format_for(rd_graph, ""));
      png::write(rd_out, render_overlay(png::read(rd_image), {png::read_mask(rd_skel)}, g));
      return 0;
    }

    if (*edit) {
      const auto g = parse(read_text(ed_graph), format_for(ed_graph, ""));
      const auto edits = edits_from_json(nlohmann::json::parse(read_text(ed_edits)));
      write_text(ed_out, serialize(apply_edits(g, edits), format_for(ed_out, ed_format)));
      return 0;
    }

    if (*serve) {
      sv_opt.runs_dir = sv_runs;
      sv_opt.static_dir = sv_static;
      if (!sv_args.config.empty() || !sv_args.sets.empty()) {
        sv_opt.defaults = sv_args.config.empty() ? PipelineConfig{} : load_config(sv_args.config);
        for (const auto& s : sv_args.sets) apply_override(sv_opt.defaults, s);
      }
      Service service(sv_opt);
      const int port = service.bind();
      std::cout << "listening on http://" << sv_opt.host << ":" << port << "/\n" << std::flush;
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.listen();
      g_service = nullptr;
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
