#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "neurograph/pipeline.hpp"
#include "pipeline_fixture.hpp"
#include "test_support.hpp"

namespace ng = neurograph;
using ng::testing::CrossFixture;
using ng::testing::TempDir;

namespace {

std::set<std::string> listing(const std::filesystem::path& dir) {
  std::set<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::array<std::uint8_t, 3> rgb(const ng::Raster& img, int x, int y) { return {img(x, y, 0), img(x, y, 1), img(x, y, 2)}; }

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, ParsesSectionsAndKeepsDefaults) {
  std::istringstream in(
      "[input]\nimage = a.png\n[output]\ndir = out\nformat = graphml\n"
      "[segmentation]\nmethod = external-mask\nmask = m.png\nmin_area = 7\n");
  const auto c = ng::parse_config(in);
  EXPECT_EQ(c.input_image, "a.png");
  EXPECT_EQ(c.output_format, ng::GraphFormat::graphml);
  EXPECT_EQ(c.segmenter, ng::Segmenter::external_mask);
  EXPECT_EQ(c.min_area, 7);
  EXPECT_EQ(c.dark_threshold, ng::PipelineConfig{}.dark_threshold);
  EXPECT_NO_THROW(ng::validate(c));
}

TEST(Config, OverridesUseDottedNames) {
  ng::PipelineConfig c;
  ng::apply_override(c, "artifact.dark_threshold=33");
  ng::apply_override(c, "output.dump_intermediates=true");
  ng::apply_override(c, "input.image=x=y.png");
  EXPECT_EQ(c.dark_threshold, 33);
  EXPECT_TRUE(c.dump_intermediates);
  EXPECT_EQ(c.input_image, "x=y.png");
  EXPECT_THROW(ng::apply_override(c, "artifact.dark_threshold"), ng::ConfigError);
  EXPECT_THROW(ng::apply_override(c, "artifact.colour=3"), ng::ConfigError);
  EXPECT_THROW(ng::apply_override(c, "artifact.dark_threshold=300"), ng::ConfigError);
  EXPECT_THROW(ng::apply_override(c, "inpaint.tol=abc"), ng::ConfigError);
  EXPECT_THROW(ng::apply_override(c, "thinning.enabled=maybe"), ng::ConfigError);
}

TEST(Config, UnknownKeyInFileNamesSource) {
  std::istringstream in("[inpaint]\nmax_iter = 10\n");
  try {
    ng::parse_config(in, "run.ini");
    FAIL();
  } catch (const ng::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.ini"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("inpaint.max_iter"), std::string::npos);
  }
}

TEST(Config, ValidationRejectsBadRanges) {
  ng::PipelineConfig ok;
  ok.input_image = "a.png";
  ok.output_dir = "out";
  EXPECT_NO_THROW(ng::validate(ok));
  auto bad = [&](auto mutate) {
    ng::PipelineConfig c = ok;
    mutate(c);
    return c;
  };
  EXPECT_THROW(ng::validate(bad([](auto& c) { c.input_image.clear(); })), ng::ConfigError);
  EXPECT_THROW(ng::validate(bad([](auto& c) { c.fg_quantile = 0.2; })), ng::ConfigError);
  EXPECT_THROW(ng::validate(bad([](auto& c) { c.inpaint_tol = 0; })), ng::ConfigError);
  EXPECT_THROW(ng::validate(bad([](auto& c) { c.segmenter = ng::Segmenter::external_mask; })), ng::ConfigError);
  EXPECT_THROW(ng::validate(bad([](auto& c) { c.artifact_enabled = false; })), ng::ConfigError);
}

TEST(Config, EffectiveConfigRoundTrips) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    ng::PipelineConfig c;
    c.input_image = "in/img " + std::to_string(rng() % 1000) + ".png";
    c.output_dir = "out dir/" + std::to_string(trial);
    if (trial % 2) c.roi_file = "rois.txt";
    c.output_format = trial % 3 ? ng::GraphFormat::json : ng::GraphFormat::graphml;
    c.dump_intermediates = trial % 2 == 0;
    c.seed = rng();
    c.dark_threshold = static_cast<int>(rng() % 256);
    c.grow_diameter = std::uniform_real_distribution<double>(0, 20)(rng);
    c.inpaint_max_iters = 1 + static_cast<int>(rng() % 50000);
    c.inpaint_tol = std::uniform_real_distribution<double>(1e-6, 1)(rng);
    c.blur_sigma = std::uniform_real_distribution<double>(0, 3)(rng);
    c.bg_quantile = std::uniform_real_distribution<double>(0.01, 0.4)(rng);
    c.fg_quantile = std::uniform_real_distribution<double>(0.5, 0.99)(rng);
    c.min_area = static_cast<int>(rng() % 100);
    c.thinning_enabled = trial % 5 != 0;
    c.dilation_rounds = 1 + static_cast<int>(rng() % 5);
    std::istringstream in(ng::format_config(c));
    EXPECT_EQ(ng::parse_config(in), c) << ng::format_config(c);
  }
}

// ---------------------------------------------------------------------------
// Overlay

TEST(Overlay, EmptyGraphIsGrayPassthrough) {
  ng::Raster img(6, 4, 1);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = static_cast<std::uint8_t>(i * 10);
  const auto out = ng::render_overlay(img, {ng::BitMask(6, 4)}, {});
  ASSERT_EQ(out.channels(), 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out(x, y, c), img(x, y));
}

TEST(Overlay, NodeIsRedSquareOverSkeleton) {
  ng::BitMask skel(12, 12);
  for (int x = 0; x < 12; ++x) skel.set(x, 5);
  ng::ExtractedGraph g;
  g.nodes[0] = {0, {5, 5}, ng::NodeKind::isolated, ng::NodeClass::unclassified, {}};
  const auto out = ng::render_overlay(ng::Raster(12, 12, 1, 40), {skel}, g);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool in_block = std::abs(x - 5) <= 1 && std::abs(y - 5) <= 1;
      const auto want = in_block ? ng::kNodeColor : y == 5 ? ng::kSkeletonColor : std::array<std::uint8_t, 3>{40, 40, 40};
      EXPECT_EQ(rgb(out, x, y), want) << x << "," << y;
    }
}

TEST(Overlay, EdgesPaintBlueOverSkeleton) {
  ng::BitMask skel(20, 10);
  for (int x = 2; x <= 17; ++x) skel.set(x, 4);
  ng::ExtractedGraph g;
  g.nodes[0] = {0, {2, 4}, ng::NodeKind::endpoint, ng::NodeClass::unclassified, {}};
  g.nodes[1] = {1, {17, 4}, ng::NodeKind::endpoint, ng::NodeClass::unclassified, {}};
  ng::Edge e;
  e.id = 0;
  e.u = 0;
  e.v = 1;
  e.length = 15;
  g.edges[0] = e;
  const auto out = ng::render_overlay(ng::Raster(20, 10, 1), {skel}, g);
  for (int x = 4; x <= 15; ++x) EXPECT_EQ(rgb(out, x, 4), ng::kEdgeColor) << x;
  // A path overrides the straight line.
  e.path = std::vector<ng::PointF>{{2, 4}, {10, 8}, {17, 4}};
  g.edges[0] = e;
  const auto bent = ng::render_overlay(ng::Raster(20, 10, 1), {skel}, g);
  EXPECT_EQ(rgb(bent, 10, 8), ng::kEdgeColor);
  EXPECT_EQ(rgb(bent, 10, 4), ng::kSkeletonColor);
}

TEST(Overlay, DimensionMismatchThrows) {
  EXPECT_THROW(ng::render_overlay(ng::Raster(5, 5, 1), {ng::BitMask(5, 6)}, {}), ng::Error);
}

// ---------------------------------------------------------------------------
// End to end

TEST(Pipeline, CrossWithElectrodeBar) {
  TempDir dir("pipeline_cross");
  const auto cfg = CrossFixture::write_inputs(dir.path);
  const auto r = ng::run_pipeline(cfg);
  const auto& g = r.graph;
  ASSERT_EQ(g.nodes.size(), 5u) << r.diagnostics.to_text();
  ASSERT_EQ(g.edges.size(), 4u);
  std::size_t junctions = 0, neurons = 0;
  for (const auto& [id, n] : g.nodes) {
    junctions += n.kind == ng::NodeKind::junction;
    neurons += n.cls == ng::NodeClass::neuron;
    if (n.kind == ng::NodeKind::junction) {
      EXPECT_NEAR(n.position.x, CrossFixture::kCenter, 2.0);
      EXPECT_NEAR(n.position.y, CrossFixture::kCenter, 2.0);
      EXPECT_EQ(n.cls, ng::NodeClass::neuron);
    }
  }
  EXPECT_EQ(junctions, 1u);
  EXPECT_EQ(neurons, 1u);
  for (const auto& [id, e] : g.edges) {
    EXPECT_GT(e.length, 20.0);
    ASSERT_TRUE(e.weight.has_value());
    EXPECT_GT(*e.weight, 0.0);
  }
  for (int y = 0; y < CrossFixture::kSize; ++y)
    for (int x = 0; x < CrossFixture::kSize; ++x)
      if (CrossFixture::in_bar(x, y) && std::abs(x - CrossFixture::kCenter) > 4) {
        ASSERT_FALSE(r.skeleton.mask.test(x, y)) << x << "," << y;
      }
  EXPECT_EQ(listing(cfg.output_dir), (std::set<std::string>{"graph.json"}));
  EXPECT_EQ(ng::parse(slurp(cfg.output_dir / "graph.json"), ng::GraphFormat::json), g);
}

TEST(Pipeline, WithoutInpaintingTheBarCutsTheArm) {
  TempDir dir("pipeline_no_inpaint");
  auto cfg = CrossFixture::write_inputs(dir.path, false);
  cfg.inpaint_enabled = false;
  const auto r = ng::run_pipeline(cfg);
  EXPECT_GT(r.graph.nodes.size(), 5u);
}

TEST(Pipeline, DumpsNumberedStagesWithImageDims) {
  TempDir dir("pipeline_dump");
  auto cfg = CrossFixture::write_inputs(dir.path);
  cfg.dump_intermediates = true;
  cfg.output_format = ng::GraphFormat::graphml;
  const auto r = ng::run_pipeline(cfg);
  std::set<std::string> expected{"graph.graphml", "config.ini", "diagnostics.txt"};
  for (const auto& n : ng::dump_names()) expected.insert(n + ".png");
  EXPECT_EQ(listing(cfg.output_dir), expected);
  for (const auto& n : ng::dump_names()) {
    const auto img = ng::png::read(cfg.output_dir / (n + ".png"));
    EXPECT_EQ(img.width(), CrossFixture::kSize) << n;
    EXPECT_EQ(img.height(), CrossFixture::kSize) << n;
  }
  EXPECT_EQ(ng::png::read(cfg.output_dir / "08_overlay.png"), r.overlay);
  EXPECT_EQ(ng::load_config(cfg.output_dir / "config.ini"), cfg);
  EXPECT_NE(slurp(cfg.output_dir / "diagnostics.txt").find("spurs: "), std::string::npos);
}

TEST(Pipeline, RunsAreByteIdentical) {
  TempDir dir("pipeline_determinism");
  auto cfg = CrossFixture::write_inputs(dir.path);
  cfg.dump_intermediates = true;
  cfg.seed = 5;
  auto a = cfg, b = cfg;
  a.output_dir = dir.path / "a";
  b.output_dir = dir.path / "b";
  ng::run_pipeline(a);
  ng::run_pipeline(b);
  const auto files = listing(a.output_dir);
  ASSERT_EQ(files, listing(b.output_dir));
  for (const auto& f : files) {
    if (f == "config.ini") continue;  // records the output directory
    EXPECT_EQ(slurp(a.output_dir / f), slurp(b.output_dir / f)) << f;
  }
}

TEST(Pipeline, ExternalMaskSkipsWatershed) {
  TempDir dir("pipeline_external");
  auto cfg = CrossFixture::write_inputs(dir.path, false);
  ng::png::write_mask(dir.path / "mask.png", CrossFixture::strokes());
  cfg.segmenter = ng::Segmenter::external_mask;
  cfg.external_mask = dir.path / "mask.png";
  cfg.dump_intermediates = true;
  const auto r = ng::run_pipeline(cfg);
  EXPECT_EQ(r.structure, CrossFixture::strokes());
  EXPECT_EQ(r.graph.nodes.size(), 5u);
  EXPECT_EQ(r.graph.edges.size(), 4u);
  EXPECT_FALSE(std::filesystem::exists(cfg.output_dir / "05_watershed.png"));
}

TEST(Pipeline, ExternalMaskDimensionMismatch) {
  TempDir dir("pipeline_external_dims");
  auto cfg = CrossFixture::write_inputs(dir.path, false);
  ng::png::write_mask(dir.path / "mask.png", ng::BitMask(10, 10));
  cfg.segmenter = ng::Segmenter::external_mask;
  cfg.external_mask = dir.path / "mask.png";
  try {
    ng::run_pipeline(cfg);
    FAIL();
  } catch (const ng::StageError& e) {
    EXPECT_EQ(e.stage(), "segmentation");
  }
}

TEST(Pipeline, StageFailureKeepsEarlierOutputs) {
  TempDir dir("pipeline_fail");
  auto cfg = CrossFixture::write_inputs(dir.path);
  std::ofstream(dir.path / "rois.txt") << "7 0.5 0.5 0.1 0.1\n";
  cfg.dump_intermediates = true;
  ng::PipelineResult partial;
  try {
    ng::run_pipeline(cfg, partial);
    FAIL();
  } catch (const ng::StageError& e) {
    EXPECT_EQ(e.stage(), "detection");
    EXPECT_NE(e.cause().find("unknown class_id 7"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("stage 'detection' failed"), std::string::npos);
  }
  EXPECT_EQ(partial.stages, (std::vector<std::string>{"output", "grayscale", "artifact", "inpaint"}));
  EXPECT_EQ(listing(cfg.output_dir),
            (std::set<std::string>{"config.ini", "01_gray.png", "02_artifact_mask.png", "03_inpainted.png"}));
  EXPECT_EQ(partial.inpainted.width(), CrossFixture::kSize);
}

TEST(Pipeline, MissingInputFailsInFirstStage) {
  TempDir dir("pipeline_missing");
  ng::PipelineConfig cfg;
  cfg.input_image = dir.path / "absent.png";
  cfg.output_dir = dir.path / "out";
  try {
    ng::run_pipeline(cfg);
    FAIL();
  } catch (const ng::StageError& e) {
    EXPECT_EQ(e.stage(), "grayscale");
  }
}

TEST(Pipeline, InvalidConfigFailsBeforeAnyStage) {
  TempDir dir("pipeline_invalid");
  auto cfg = CrossFixture::write_inputs(dir.path);
  cfg.bg_quantile = 0.99;
  EXPECT_THROW(ng::run_pipeline(cfg), ng::ConfigError);
  EXPECT_FALSE(std::filesystem::exists(cfg.output_dir));
}
