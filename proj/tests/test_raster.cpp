#include <gtest/gtest.h>
#include <unistd.h>

#include <numbers>
#include <random>

#include "neurograph/png_io.hpp"
#include "neurograph/raster.hpp"
#include "test_support.hpp"

namespace ng = neurograph;
using ng::testing::from_rows;

namespace {

ng::Raster gray_from(std::vector<std::uint8_t> values, int w, int h) {
  return ng::Raster(w, h, 1, std::move(values));
}

}  // namespace

TEST(Raster, DataLengthAndBounds) {
  ng::Raster img(4, 3, 3);
  EXPECT_EQ(img.data().size(), 4u * 3u * 3u);
  EXPECT_THROW(img.at(4, 0), std::out_of_range);
  EXPECT_THROW(img.at(0, -1), std::out_of_range);
  EXPECT_THROW(ng::Raster(0, 3, 1), ng::Error);
  EXPECT_THROW(ng::Raster(2, 2, 2), ng::Error);
}

TEST(ToGrayscale, LumaExamples) {
  ng::Raster img(3, 1, 3);
  img(0, 0, 0) = img(0, 0, 1) = img(0, 0, 2) = 255;
  img(2, 0, 0) = 255;
  const auto g = ng::to_grayscale(img);
  EXPECT_EQ(g(0, 0), 255);
  EXPECT_EQ(g(1, 0), 0);
  EXPECT_EQ(g(2, 0), 76);  // round(0.299 * 255) = round(76.245)
}

TEST(ToGrayscale, RejectsGrayInput) {
  try {
    ng::to_grayscale(ng::Raster(2, 2, 1));
    FAIL();
  } catch (const ng::Error& e) {
    EXPECT_STREQ(e.what(), "already grayscale");
  }
}

TEST(Threshold, Examples) {
  EXPECT_EQ(ng::threshold(ng::Raster(3, 3, 1, 0), 1, ng::ThresholdMode::below).count(), 9u);
  EXPECT_EQ(ng::threshold(ng::Raster(3, 3, 1, 200), 100, ng::ThresholdMode::below).count(), 0u);
  const auto m = ng::threshold(gray_from({30, 200}, 2, 1), 100, ng::ThresholdMode::below);
  EXPECT_TRUE(m(0, 0));
  EXPECT_FALSE(m(1, 0));
  const auto a = ng::threshold(gray_from({99, 100}, 2, 1), 100, ng::ThresholdMode::above);
  EXPECT_FALSE(a(0, 0));
  EXPECT_TRUE(a(1, 0));
}

namespace {

// Exhaustive scan: between-class variance computed from raw pixel lists.
int otsu_oracle(const ng::Raster& img) {
  std::vector<int> px(img.data().begin(), img.data().end());
  double best = -1;
  int best_t = -1;
  for (int t = 1; t <= 255; ++t) {
    std::vector<double> lo, hi;
    for (int v : px) (v < t ? lo : hi).push_back(v);
    if (lo.empty() || hi.empty()) continue;
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    const double n = static_cast<double>(px.size());
    const double w0 = lo.size() / n, w1 = hi.size() / n;
    const double d = mean(lo) - mean(hi);
    const double var = w0 * w1 * d * d;
    if (var > best * (1 + 1e-12) + 1e-12) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST(Otsu, BimodalSeparatesClasses) {
  std::vector<std::uint8_t> v(64);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 2 ? 240 : 10;
  const auto img = gray_from(v, 8, 8);
  const int t = ng::otsu_threshold(img);
  EXPECT_GT(t, 10);
  EXPECT_LE(t, 240);
  EXPECT_EQ(t, otsu_oracle(img));
}

TEST(Otsu, SingleBrightPixelSeparated) {
  const auto img = gray_from({0, 0, 0, 255}, 4, 1);
  const int t = ng::otsu_threshold(img);
  EXPECT_EQ(t, otsu_oracle(img));
  // Every t in [1,255] separates the classes equally well; ties take the smallest.
  EXPECT_EQ(t, 1);
  const auto fg = ng::threshold(img, t, ng::ThresholdMode::above);
  EXPECT_EQ(fg.count(), 1u);
  EXPECT_TRUE(fg(3, 0));
}

TEST(Otsu, MatchesOracleOnRandomImages) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> val(0, 255);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::uint8_t> v(100);
    for (auto& x : v) x = static_cast<std::uint8_t>(val(rng));
    const auto img = gray_from(v, 10, 10);
    EXPECT_EQ(ng::otsu_threshold(img), otsu_oracle(img));
  }
}

TEST(Otsu, ConstantImageIsDegenerate) {
  EXPECT_THROW(ng::otsu_threshold(ng::Raster(5, 5, 1, 77)), ng::Error);
}

TEST(Morphology, DilateSquare) {
  ng::BitMask m(11, 11);
  m(5, 5) = 1;
  const auto d = ng::dilate(m, ng::StructuringElement::square(1));
  EXPECT_EQ(d.count(), 9u);
  for (int y = 4; y <= 6; ++y)
    for (int x = 4; x <= 6; ++x) EXPECT_TRUE(d(x, y));
  EXPECT_TRUE(ng::dilate(ng::BitMask(6, 6), ng::StructuringElement::square(2)).none());
}

TEST(Morphology, DiskDiameterFive) {
  // Oracle: enumerate the 5x5 offsets against radius 2.5.
  int expected = 0;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx)
      if (dx * dx + dy * dy <= 6.25) ++expected;
  EXPECT_EQ(expected, 21);

  const auto se = ng::StructuringElement::disk(5);
  EXPECT_EQ(se.offsets().size(), static_cast<std::size_t>(expected));
  ng::BitMask m(9, 9);
  m(4, 4) = 1;
  const auto d = ng::dilate(m, se);
  EXPECT_EQ(d.count(), 21u);
  EXPECT_FALSE(d(2, 2));
  EXPECT_FALSE(d(6, 6));
  EXPECT_TRUE(d(2, 3));
  EXPECT_TRUE(d(4, 2));
}

TEST(Morphology, StructuringElementContainsOrigin) {
  for (double d : {0.0, 1.0, 2.0, 3.0, 5.0, 7.5}) {
    const auto se = ng::StructuringElement::disk(d);
    EXPECT_NE(std::find(se.offsets().begin(), se.offsets().end(), ng::Point{0, 0}),
              se.offsets().end());
  }
  EXPECT_EQ(ng::StructuringElement::square(0).offsets().size(), 1u);
}

TEST(Morphology, ErodeExamples) {
  ng::BitMask full(7, 6, 1);
  const auto e = ng::erode(full, ng::StructuringElement::square(1));
  EXPECT_EQ(e.count(), 5u * 4u);
  EXPECT_FALSE(e(0, 0));
  EXPECT_TRUE(e(1, 1));

  ng::BitMask single(5, 5);
  single(2, 2) = 1;
  EXPECT_TRUE(ng::erode(single, ng::StructuringElement::square(1)).none());
}

TEST(Morphology, OrderingProperties) {
  std::mt19937 rng(11);
  const std::vector<ng::StructuringElement> ses{ng::StructuringElement::square(1),
                                                ng::StructuringElement::square(2),
                                                ng::StructuringElement::disk(5),
                                                ng::StructuringElement::disk(3)};
  for (int trial = 0; trial < 60; ++trial) {
    const auto& se = ses[trial % ses.size()];
    auto m = ng::testing::random_mask(rng, 20, 16, 0.35);
    auto bigger = m;
    for (auto& v : bigger.data()) v |= (rng() % 5 == 0);

    const auto d = ng::dilate(m, se);
    const auto e = ng::erode(m, se);
    EXPECT_TRUE(m.subset_of(d));
    EXPECT_TRUE(e.subset_of(m));
    EXPECT_TRUE(d.subset_of(ng::dilate(bigger, se)));
    EXPECT_TRUE(e.subset_of(ng::erode(bigger, se)));
    EXPECT_TRUE(ng::dilate(e, se).subset_of(m));

    // Closing extensivity for support away from the background border.
    const int r = se.extent();
    ng::BitMask interior(m.width(), m.height());
    for (int y = r; y < m.height() - r; ++y)
      for (int x = r; x < m.width() - r; ++x) interior(x, y) = m(x, y);
    EXPECT_TRUE(interior.subset_of(ng::erode(ng::dilate(interior, se), se)));
  }
}

TEST(GaussianBlur, ConstantPreserved) {
  const ng::Raster img(13, 9, 1, 117);
  EXPECT_EQ(ng::gaussian_blur(img, 1.7), img);
  EXPECT_EQ(ng::gaussian_blur(ng::Raster(1, 1, 1, 5), 2.0), ng::Raster(1, 1, 1, 5));
}

TEST(GaussianBlur, ImpulseResponse) {
  ng::Raster img(15, 15, 1, 0);
  img(7, 7) = 255;
  const auto out = ng::gaussian_blur(img, 1.0);
  const double peak = 255.0 / (2.0 * std::numbers::pi);  // 2-D Gaussian at the origin
  EXPECT_NEAR(out(7, 7), peak, 2.0);
  EXPECT_EQ(out(6, 7), out(8, 7));
  EXPECT_EQ(out(7, 6), out(6, 7));
}

TEST(GaussianBlur, MassPreserved) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> val(0, 255);
  ng::Raster img(64, 64, 1);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(val(rng));
  for (double sigma : {0.5, 1.0, 2.5}) {
    const auto out = ng::gaussian_blur(img, sigma);
    double before = 0, after = 0;
    for (auto v : img.data()) before += v;
    for (auto v : out.data()) after += v;
    EXPECT_NEAR(after / before, 1.0, 0.005) << "sigma " << sigma;
  }
}

TEST(GaussianBlur, RejectsNonPositiveSigma) {
  EXPECT_THROW(ng::gaussian_blur(ng::Raster(3, 3, 1), 0.0), ng::Error);
  EXPECT_THROW(ng::gaussian_blur(ng::Raster(3, 3, 1), -1.0), ng::Error);
}

TEST(ConnectedComponents, DiagonalConnectivity) {
  const auto m = from_rows({"#.", ".#"});
  EXPECT_EQ(ng::connected_components(m, 8).label_count, 1u);
  EXPECT_EQ(ng::connected_components(m, 4).label_count, 2u);
}

TEST(ConnectedComponents, RasterScanLabelOrder) {
  const auto m = from_rows({"..#.", "#...", "...#"});
  const auto l = ng::connected_components(m, 4);
  EXPECT_EQ(l(2, 0), 1u);
  EXPECT_EQ(l(0, 1), 2u);
  EXPECT_EQ(l(3, 2), 3u);
  EXPECT_EQ(l(1, 1), 0u);
}

TEST(ConnectedComponents, ExhaustiveFourByFour) {
  for (int bits = 0; bits < (1 << 16); ++bits) {
    ng::BitMask m(4, 4);
    for (int i = 0; i < 16; ++i) m.data()[i] = (bits >> i) & 1;
    for (int conn : {4, 8}) {
      ASSERT_EQ(static_cast<int>(ng::connected_components(m, conn).label_count),
                ng::testing::flood_fill_components(m, conn))
          << "pattern " << bits << " conn " << conn;
    }
  }
}

TEST(ConnectedComponents, RandomMasksMatchFloodFill) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = ng::testing::random_mask(rng, 8 + trial % 25, 8 + trial % 17, 0.45);
    for (int conn : {4, 8}) {
      const auto l = ng::connected_components(m, conn);
      EXPECT_EQ(static_cast<int>(l.label_count), ng::testing::flood_fill_components(m, conn));
      // Labels are contiguous 1..K.
      std::vector<bool> used(l.label_count + 1, false);
      for (auto v : l.data()) used[v] = true;
      for (std::uint32_t k = 1; k <= l.label_count; ++k) EXPECT_TRUE(used[k]);
    }
  }
}

TEST(DistanceTransform, Examples) {
  const auto full = ng::distance_transform(ng::BitMask(5, 5, 1));
  EXPECT_DOUBLE_EQ(full(2, 2), 3.0);
  EXPECT_DOUBLE_EQ(full(0, 0), 1.0);

  ng::BitMask single(7, 7);
  single(3, 3) = 1;
  EXPECT_DOUBLE_EQ(ng::distance_transform(single)(3, 3), 1.0);

  const auto empty = ng::distance_transform(ng::BitMask(6, 4));
  for (double v : empty.data()) EXPECT_EQ(v, 0.0);
}

TEST(DistanceTransform, MatchesBruteForceExactly) {
  std::mt19937 rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    const double density = 0.5 + 0.45 * (trial % 5) / 4.0;
    const auto m = ng::testing::random_mask(rng, 32, 32, density);
    const auto dt = ng::distance_transform(m);
    const auto oracle = ng::testing::brute_force_distance(m);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_EQ(dt.data()[i], oracle.data()[i]) << i;
  }
}

TEST(PngIo, RoundTrips) {
  ng::testing::TempDir dir("png");
  std::mt19937 rng(1);
  ng::Raster gray(17, 9, 1), rgb(5, 6, 3);
  for (auto& v : gray.data()) v = static_cast<std::uint8_t>(rng());
  for (auto& v : rgb.data()) v = static_cast<std::uint8_t>(rng());
  ng::png::write(dir.path / "g.png", gray);
  ng::png::write(dir.path / "c.png", rgb);
  EXPECT_EQ(ng::png::read(dir.path / "g.png"), gray);
  EXPECT_EQ(ng::png::read(dir.path / "c.png"), rgb);

  const auto mask = ng::testing::random_mask(rng, 12, 7, 0.5);
  ng::png::write_mask(dir.path / "m.png", mask);
  EXPECT_EQ(ng::png::read_mask(dir.path / "m.png"), mask);
  const auto stored = ng::png::read(dir.path / "m.png");
  for (auto v : stored.data()) EXPECT_TRUE(v == 0 || v == 255);

  ng::LabelMap labels(6, 5);
  for (std::size_t i = 0; i < labels.size(); ++i) labels.data()[i] = static_cast<std::uint32_t>(i * 2000);
  ng::png::write_labels(dir.path / "l.png", labels);
  const auto back = ng::png::read_labels(dir.path / "l.png");
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), labels.data().begin()));

  labels(0, 0) = 70000;
  EXPECT_THROW(ng::png::write_labels(dir.path / "big.png", labels), ng::Error);
  EXPECT_THROW(ng::png::read(dir.path / "missing.png"), ng::Error);
}
