#pragma once

// Electrode artifacts: dark-region masks, training-data augmentation for
// inpainting models, and a diffusion fill for obstructed pixels.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "neurograph/png_io.hpp"
#include "neurograph/raster.hpp"

namespace neurograph {

/// Dark pixels (value < dark_threshold) grown by `grow`.
inline BitMask segment_artifacts(const Raster& img, int dark_threshold,
                                 const StructuringElement& grow = StructuringElement::disk(5)) {
  return dilate(threshold(ensure_gray(img), dark_threshold, ThresholdMode::below), grow);
}

// ---------------------------------------------------------------------------
// Geometric transforms

namespace detail {

// Summed-area table with a zero first row and column.
inline std::vector<std::uint64_t> integral(const BitMask& m) {
  const auto W = static_cast<std::size_t>(m.width()) + 1;
  std::vector<std::uint64_t> s(W * (static_cast<std::size_t>(m.height()) + 1), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      s[(y + 1) * W + x + 1] = m(x, y) + s[y * W + x + 1] + s[(y + 1) * W + x] - s[y * W + x];
  return s;
}

inline std::uint64_t box_sum(const std::vector<std::uint64_t>& s, int width, int x, int y, int w, int h) {
  const auto W = static_cast<std::size_t>(width) + 1;
  return s[(y + h) * W + x + w] - s[y * W + x + w] - s[(y + h) * W + x] + s[y * W + x];
}

}  // namespace detail

template <class G>
G crop(const G& src, int x0, int y0, int w, int h) {
  G out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = src.at(x0 + x, y0 + y);
  return out;
}

inline Raster crop(const Raster& src, int x0, int y0, int w, int h) {
  Raster out(w, h, src.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < src.channels(); ++c) out(x, y, c) = src.at(x0 + x, y0 + y, c);
  return out;
}

/// Nearest-neighbor rotation about the patch centre, counter-clockwise in
/// image coordinates (y down). Pixels mapped from outside the frame are unset.
inline BitMask rotate_nearest(const BitMask& m, double degrees) {
  const int W = m.width(), H = m.height();
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  double c = 0.0, s = 0.0;
  const double turns = std::fmod(std::fmod(degrees, 360.0) + 360.0, 360.0);
  if (turns == 0.0) c = 1.0;
  else if (turns == 90.0) s = 1.0;
  else if (turns == 180.0) c = -1.0;
  else if (turns == 270.0) s = -1.0;
  else {
    const double r = degrees * std::numbers::pi / 180.0;
    c = std::cos(r);
    s = std::sin(r);
  }
  BitMask out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      // Inverse map: rotate the destination offset by -angle.
      const double dx = x - cx, dy = y - cy;
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      const int ix = static_cast<int>(std::lround(sx)), iy = static_cast<int>(std::lround(sy));
      if (m.get_or_zero(ix, iy)) out.set(x, y);
    }
  return out;
}

/// Quarter turn clockwise in image coordinates: (x, y) -> (H-1-y, x).
inline Raster rot90(const Raster& img) {
  Raster out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(img.height() - 1 - y, x, c) = img(x, y, c);
  return out;
}

inline Raster flip_horizontal(const Raster& img) {
  Raster out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(img.width() - 1 - x, y, c) = img(x, y, c);
  return out;
}

inline const std::array<std::string, 8>& dihedral_tags() {
  static const std::array<std::string, 8> tags{"id",   "rot90",      "rot180",      "rot270",
                                               "flip", "flip_rot90", "flip_rot180", "flip_rot270"};
  return tags;
}

/// Identity, three quarter turns, then the horizontal flip of each.
inline std::array<Raster, 8> dihedral_variants(const Raster& p) {
  std::array<Raster, 8> v;
  v[0] = p;
  for (int i = 1; i < 4; ++i) v[static_cast<std::size_t>(i)] = rot90(v[static_cast<std::size_t>(i - 1)]);
  for (std::size_t i = 0; i < 4; ++i) v[i + 4] = flip_horizontal(v[i]);
  return v;
}

// ---------------------------------------------------------------------------
// Mask pool

struct MaskPatch {
  BitMask mask;
  Point origin;
  int rotation_deg = 0;
};

struct MaskPool {
  std::vector<MaskPatch> patches;
  std::size_t crops_drawn = 0;
  std::size_t crops_kept = 0;
};

struct MaskPoolOptions {
  int patch_size = 256;
  double min_coverage = 0.25;
  int n_crops = 100;
  std::uint64_t seed = 0;
};

inline constexpr int kRotationsPerCrop = 36;

/// Random crops of the artifact mask with enough coverage, each emitted in 36
/// orientations (0, 10, ..., 350 degrees). Output order: crop origin in raster
/// order, then angle.
inline MaskPool build_mask_pool(const BitMask& mask, const MaskPoolOptions& opt) {
  const int P = opt.patch_size;
  if (P < 1) throw Error("patch size must be positive");
  if (mask.width() < P || mask.height() < P)
    throw Error("mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                " is smaller than the " + std::to_string(P) + " px patch");
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> ox(0, mask.width() - P), oy(0, mask.height() - P);
  std::vector<Point> origins;
  for (int i = 0; i < opt.n_crops; ++i) {
    const int x = ox(rng);
    origins.push_back({x, oy(rng)});
  }
  std::stable_sort(origins.begin(), origins.end());

  const auto sums = detail::integral(mask);
  const double area = static_cast<double>(P) * P;
  MaskPool pool;
  pool.crops_drawn = origins.size();
  for (auto o : origins) {
    const auto set = detail::box_sum(sums, mask.width(), o.x, o.y, P, P);
    if (static_cast<double>(set) < opt.min_coverage * area) continue;
    ++pool.crops_kept;
    const BitMask patch = crop(mask, o.x, o.y, P, P);
    for (int r = 0; r < kRotationsPerCrop; ++r)
      pool.patches.push_back({r == 0 ? patch : rotate_nearest(patch, 10.0 * r), o, 10 * r});
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Ground-truth patches

struct ImagePatch {
  Raster image;
  Point origin;
  std::string transform;
};

struct PatchSet {
  std::vector<ImagePatch> patches;
  std::size_t clean_crops = 0;
};

/// Crops on the stride grid that avoid every mask bit, each in 8 dihedral variants.
inline PatchSet extract_ground_truth_patches(const Raster& img, const BitMask& mask, int patch_size, int stride) {
  if (!mask.same_shape(img.width(), img.height())) throw Error("mask and image dimensions differ");
  if (patch_size < 1 || stride < 1) throw Error("patch size and stride must be positive");
  if (img.width() < patch_size || img.height() < patch_size)
    throw Error("image is smaller than the " + std::to_string(patch_size) + " px patch");
  const auto sums = detail::integral(mask);
  PatchSet out;
  for (int y = 0; y + patch_size <= img.height(); y += stride)
    for (int x = 0; x + patch_size <= img.width(); x += stride) {
      if (detail::box_sum(sums, mask.width(), x, y, patch_size, patch_size) != 0) continue;
      ++out.clean_crops;
      const auto variants = dihedral_variants(crop(img, x, y, patch_size, patch_size));
      for (std::size_t i = 0; i < variants.size(); ++i) out.patches.push_back({variants[i], {x, y}, dihedral_tags()[i]});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Diffusion inpainting

struct InpaintOptions {
  int max_iters = 20000;
  double tol = 1e-3;
};

struct InpaintStats {
  int iterations = 0;
  double last_change = 0.0;
  double boundary_min = 0.0;
  double boundary_max = 0.0;
};

/// Called after every iteration with the current hole values (raster order).
using InpaintObserver = std::function<void(int iteration, std::span<const double> hole_values)>;

/// Fills hole pixels with the discrete harmonic extension of their
/// surroundings by Jacobi iteration on the 4-neighbor stencil. Pixels outside
/// the hole are copied bit for bit.
inline Raster inpaint(const Raster& img, const BitMask& hole, const InpaintOptions& opt = {},
                      const InpaintObserver& observe = nullptr, InpaintStats* stats = nullptr) {
  if (img.channels() != 1) throw Error("inpaint expects a grayscale image");
  if (!hole.same_shape(img.width(), img.height())) throw Error("hole and image dimensions differ");
  const int W = img.width(), H = img.height();
  Raster out = img;
  if (hole.none()) return out;

  constexpr Point kFour[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};
  double bsum = 0.0, bmin = 255.0, bmax = 0.0;
  std::size_t bcount = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (hole.test(x, y)) continue;
      bool edge = false;
      for (auto d : kFour) edge |= hole.get_or_zero(x + d.x, y + d.y);
      if (!edge) continue;
      bsum += img(x, y);
      bmin = std::min<double>(bmin, img(x, y));
      bmax = std::max<double>(bmax, img(x, y));
      ++bcount;
    }
  if (bcount == 0) throw Error("no boundary data");

  // Index hole pixels; neighbors refer either to another hole slot or to a fixed value.
  Grid<std::int64_t> slot(W, H, -1);
  std::vector<Point> px;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (hole.test(x, y)) {
        slot(x, y) = static_cast<std::int64_t>(px.size());
        px.push_back({x, y});
      }
  struct Stencil {
    std::array<std::int64_t, 4> nbr{-1, -1, -1, -1};
    int n_nbr = 0;
    double fixed = 0.0;
    int n = 0;
  };
  std::vector<Stencil> st(px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    for (auto d : kFour) {
      const int x = px[i].x + d.x, y = px[i].y + d.y;
      if (!img.contains(x, y)) continue;
      ++st[i].n;
      if (hole.test(x, y)) st[i].nbr[static_cast<std::size_t>(st[i].n_nbr++)] = slot(x, y);
      else st[i].fixed += img(x, y);
    }
  }

  std::vector<double> cur(px.size(), bsum / static_cast<double>(bcount)), next(px.size());
  InpaintStats s{0, 0.0, bmin, bmax};
  if (observe) observe(0, cur);
  for (int it = 1; it <= opt.max_iters; ++it) {
    double change = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
      const auto& p = st[i];
      if (p.n == 0) {
        next[i] = cur[i];
        continue;
      }
      double v = p.fixed;
      for (int k = 0; k < p.n_nbr; ++k) v += cur[static_cast<std::size_t>(p.nbr[static_cast<std::size_t>(k)])];
      next[i] = v / p.n;
      change = std::max(change, std::abs(next[i] - cur[i]));
    }
    cur.swap(next);
    s.iterations = it;
    s.last_change = change;
    if (observe) observe(it, cur);
    if (change < opt.tol) break;
  }
  for (std::size_t i = 0; i < px.size(); ++i)
    out(px[i].x, px[i].y) = static_cast<std::uint8_t>(std::clamp(std::lround(cur[i]), 0L, 255L));
  if (stats) *stats = s;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: a directory of PNGs plus manifest.txt with one record per
// patch, `filename origin_x origin_y transform`.

struct ManifestRecord {
  std::string filename;
  Point origin;
  std::string transform;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline std::string format_manifest(const std::vector<ManifestRecord>& records) {
  std::ostringstream os;
  for (const auto& r : records) os << r.filename << ' ' << r.origin.x << ' ' << r.origin.y << ' ' << r.transform << '\n';
  return os.str();
}

inline std::vector<ManifestRecord> parse_manifest(std::istream& in) {
  std::vector<ManifestRecord> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestRecord r;
    std::string extra;
    if (!(ls >> r.filename >> r.origin.x >> r.origin.y >> r.transform) || (ls >> extra))
      throw Error("manifest line " + std::to_string(lineno) + ": expected 'filename x y transform'");
    out.push_back(r);
  }
  return out;
}

namespace detail {

inline std::string numbered(const char* prefix, std::size_t i, const std::string& tag) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu_", prefix, i);
  return buf + tag + ".png";
}

inline std::vector<ManifestRecord> read_manifest_file(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw Error("missing manifest.txt in " + dir.string());
  return parse_manifest(in);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string rotation_tag(int deg) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "rot%03d", deg);
  return buf;
}

}  // namespace detail

inline void save_mask_pool(const MaskPool& pool, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < pool.patches.size(); ++i) {
    const auto& p = pool.patches[i];
    const auto tag = detail::rotation_tag(p.rotation_deg);
    records.push_back({detail::numbered("mask", i / kRotationsPerCrop, tag), p.origin, tag});
    png::write_mask(dir / records.back().filename, p.mask);
  }
  detail::write_text(dir / "manifest.txt", format_manifest(records));
}

inline MaskPool load_mask_pool(const std::filesystem::path& dir) {
  MaskPool pool;
  for (const auto& r : detail::read_manifest_file(dir)) {
    int deg = 0;
    if (std::sscanf(r.transform.c_str(), "rot%d", &deg) != 1) throw Error("bad mask transform tag '" + r.transform + "'");
    pool.patches.push_back({png::read_mask(dir / r.filename), r.origin, deg});
  }
  pool.crops_kept = pool.patches.size() / kRotationsPerCrop;
  return pool;
}

inline void save_patch_set(const PatchSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < set.patches.size(); ++i) {
    const auto& p = set.patches[i];
    records.push_back({detail::numbered("patch", i / 8, p.transform), p.origin, p.transform});
    png::write(dir / records.back().filename, p.image);
  }
  detail::write_text(dir / "manifest.txt", format_manifest(records));
}

inline PatchSet load_patch_set(const std::filesystem::path& dir) {
  PatchSet set;
  for (const auto& r : detail::read_manifest_file(dir)) set.patches.push_back({png::read(dir / r.filename), r.origin, r.transform});
  set.clean_crops = set.patches.size() / 8;
  return set;
}

}  // namespace neurograph
