#pragma once

// Core raster types and the classical transforms used by every stage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neurograph/error.hpp"

namespace neurograph {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point& a, const Point& b) {
    if (auto c = a.y <=> b.y; c != 0) return c;
    return a.x <=> b.x;
  }
};

// Row-major grid of per-pixel values. Shared storage for all raster kinds.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error("grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& at(int x, int y) { return data_[checked_index(x, y)]; }
  const T& at(int x, int y) const { return data_[checked_index(x, y)]; }

  // Unchecked access for inner loops that already validated bounds.
  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool same_shape(int w, int h) const noexcept { return width_ == w && height_ == h; }

  friend bool operator==(const Grid&, const Grid&) = default;

 protected:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  std::size_t checked_index(int x, int y) const {
    if (!contains(x, y)) {
      throw std::out_of_range("pixel (" + std::to_string(x) + "," + std::to_string(y) +
                              ") outside " + std::to_string(width_) + "x" +
                              std::to_string(height_));
    }
    return index(x, y);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 8-bit image with one (gray) or three (RGB) interleaved channels.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1) throw Error("raster dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw Error("raster channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
      : Raster(width, height, channels) {
    if (data.size() != data_.size()) throw Error("raster data length mismatch");
    data_ = std::move(data);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::uint8_t& at(int x, int y, int c = 0) { return data_[checked_index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data_[checked_index(x, y, c)]; }

  std::uint8_t& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  std::uint8_t operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<std::uint8_t> data() noexcept { return data_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  std::size_t checked_index(int x, int y, int c) const {
    if (!contains(x, y) || c < 0 || c >= channels_) {
      throw std::out_of_range("pixel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                              std::to_string(c) + ") outside raster");
    }
    return index(x, y, c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<std::uint8_t> data_;
};

/// Binary mask; values are 0 or 1.
class BitMask : public Grid<std::uint8_t> {
 public:
  using Grid::Grid;

  bool test(int x, int y) const { return at(x, y) != 0; }
  void set(int x, int y, bool v = true) { at(x, y) = v ? 1 : 0; }
  // Out-of-image reads as background.
  bool get_or_zero(int x, int y) const noexcept { return contains(x, y) && (*this)(x, y) != 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
  }
  bool none() const noexcept { return count() == 0; }

  // True when every set bit of *this is also set in `other`.
  bool subset_of(const BitMask& other) const {
    if (!other.same_shape(width_, height_)) throw Error("mask dimensions differ");
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (data_[i] && !other.data_[i]) return false;
    return true;
  }
};

/// Non-negative integer label per pixel; 0 is background.
class LabelMap : public Grid<std::uint32_t> {
 public:
  using Grid::Grid;
  std::uint32_t label_count = 0;
};

using DistanceMap = Grid<double>;

/// Neighborhood used by dilate/erode. Always contains the origin.
class StructuringElement {
 public:
  enum class Shape { square, disk };

  static StructuringElement square(int radius) {
    if (radius < 0) throw Error("structuring element radius must be >= 0");
    StructuringElement se(Shape::square, radius);
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) se.offsets_.push_back({dx, dy});
    return se;
  }

  // All offsets within Euclidean distance diameter/2 of the center.
  static StructuringElement disk(double diameter) {
    if (!(diameter >= 0.0)) throw Error("structuring element diameter must be >= 0");
    const double r = diameter / 2.0;
    const int extent = static_cast<int>(std::floor(r));
    StructuringElement se(Shape::disk, r);
    for (int dy = -extent; dy <= extent; ++dy)
      for (int dx = -extent; dx <= extent; ++dx)
        if (dx * dx + dy * dy <= r * r) se.offsets_.push_back({dx, dy});
    return se;
  }

  Shape shape() const noexcept { return shape_; }
  double radius() const noexcept { return radius_; }
  int extent() const noexcept { return static_cast<int>(std::floor(radius_)); }
  std::span<const Point> offsets() const noexcept { return offsets_; }

 private:
  StructuringElement(Shape s, double r) : shape_(s), radius_(r) {}
  Shape shape_;
  double radius_;
  std::vector<Point> offsets_;
};

// ---------------------------------------------------------------------------
// Color and intensity

/// ITU-R 601 luma.
inline Raster to_grayscale(const Raster& img) {
  if (img.channels() == 1) throw Error("already grayscale");
  Raster out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double luma = 0.299 * img(x, y, 0) + 0.587 * img(x, y, 1) + 0.114 * img(x, y, 2);
      out(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(luma), 0, 255));
    }
  }
  return out;
}

inline Raster gray_to_rgb(const Raster& img) {
  if (img.channels() == 3) return img;
  Raster out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) out(x, y, c) = img(x, y);
  return out;
}

inline Raster ensure_gray(const Raster& img) {
  return img.channels() == 1 ? img : to_grayscale(img);
}

enum class ThresholdMode { below, above };

/// below: bit set where pixel < t.  above: bit set where pixel >= t.
inline BitMask threshold(const Raster& img, int t, ThresholdMode mode) {
  if (img.channels() != 1) throw Error("threshold expects a grayscale raster");
  BitMask out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int v = img(x, y);
      out(x, y) = (mode == ThresholdMode::below) ? (v < t) : (v >= t);
    }
  }
  return out;
}

inline std::array<std::uint64_t, 256> histogram(const Raster& img) {
  if (img.channels() != 1) throw Error("histogram expects a grayscale raster");
  std::array<std::uint64_t, 256> h{};
  for (auto v : img.data()) ++h[v];
  return h;
}

/// Otsu's threshold: the t in [1,255] maximizing between-class variance when
/// class 0 is {v < t} and class 1 is {v >= t}. Ties go to the smallest t.
inline int otsu_threshold(const Raster& img) {
  const auto h = histogram(img);
  const auto distinct = std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; });
  if (distinct < 2) throw Error("degenerate histogram");

  double total = 0.0, total_sum = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += static_cast<double>(h[v]);
    total_sum += static_cast<double>(v) * static_cast<double>(h[v]);
  }
  double w0 = 0.0, sum0 = 0.0;
  double best = -1.0;
  int best_t = 1;
  for (int t = 1; t < 256; ++t) {
    w0 += static_cast<double>(h[t - 1]);
    sum0 += static_cast<double>(t - 1) * static_cast<double>(h[t - 1]);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (total_sum - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

/// Intensity at quantile q in [0,1] (lower order statistic).
inline int intensity_quantile(const Raster& img, double q) {
  const auto h = histogram(img);
  const std::uint64_t n = img.data().size();
  const auto rank = static_cast<std::uint64_t>(std::floor(q * static_cast<double>(n - 1)));
  std::uint64_t seen = 0;
  for (int v = 0; v < 256; ++v) {
    seen += h[v];
    if (seen > rank) return v;
  }
  return 255;
}

// ---------------------------------------------------------------------------
// Morphology (out-of-image is background)

inline BitMask dilate(const BitMask& mask, const StructuringElement& se) {
  BitMask out(mask.width(), mask.height());
  const auto offsets = se.offsets();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      for (const auto& o : offsets) {
        const int tx = x + o.x, ty = y + o.y;
        if (out.contains(tx, ty)) out(tx, ty) = 1;
      }
    }
  }
  return out;
}

inline BitMask erode(const BitMask& mask, const StructuringElement& se) {
  BitMask out(mask.width(), mask.height());
  const auto offsets = se.offsets();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool all = true;
      for (const auto& o : offsets) {
        if (!mask.get_or_zero(x + o.x, y + o.y)) {
          all = false;
          break;
        }
      }
      out(x, y) = all;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian blur: separable, kernel truncated at +-ceil(3 sigma), reflect border.

namespace detail {

// Symmetric reflection: ... c b a | a b c ... ; valid for any offset.
inline int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

inline Raster gaussian_blur(const Raster& img, double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_blur: sigma must be > 0");
  if (img.channels() != 1) throw Error("gaussian_blur expects a grayscale raster");
  const auto kernel = detail::gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width(), h = img.height();

  Grid<double> horiz(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * img(detail::reflect_index(x + k, w), y);
      horiz(x, y) = acc;
    }
  }
  Raster out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * horiz(x, detail::reflect_index(y + k, h));
      out(x, y) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(acc), 0, 255));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Connected components. Labels 1..K in raster-scan order of each component's
// first pixel.

inline LabelMap connected_components(const BitMask& mask, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8) throw Error("connectivity must be 4 or 8");
  static constexpr std::array<Point, 8> n8{{{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                            {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};
  static constexpr std::array<Point, 4> n4{{{0, -1}, {-1, 0}, {1, 0}, {0, 1}}};
  const std::span<const Point> nbrs =
      connectivity == 8 ? std::span<const Point>(n8) : std::span<const Point>(n4);

  LabelMap labels(mask.width(), mask.height());
  std::vector<Point> stack;
  std::uint32_t next = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || labels(x, y)) continue;
      ++next;
      labels(x, y) = next;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        for (const auto& d : nbrs) {
          const int nx = p.x + d.x, ny = p.y + d.y;
          if (mask.contains(nx, ny) && mask(nx, ny) && !labels(nx, ny)) {
            labels(nx, ny) = next;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  labels.label_count = next;
  return labels;
}

/// Drops 8-connected components with fewer than min_area pixels.
inline BitMask remove_small_components(const BitMask& mask, std::size_t min_area) {
  const LabelMap labels = connected_components(mask, 8);
  std::vector<std::size_t> area(labels.label_count + 1, 0);
  for (auto l : labels.data()) ++area[l];
  BitMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (auto l = labels(x, y); l && area[l] >= min_area) out.set(x, y);
  return out;
}

// ---------------------------------------------------------------------------
// Exact Euclidean distance transform (Felzenszwalb-Huttenlocher lower
// envelope of parabolas). Distance of each set pixel to the nearest unset
// pixel; the region outside the image counts as unset.

namespace detail {

// One-dimensional squared distance transform of sampled function f.
// Infinite samples are skipped; at least one sample must be finite.
inline void squared_edt_1d(std::span<const double> f, std::span<double> d,
                           std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  int first = 0;
  while (first < n && f[first] == inf) ++first;
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (int q = first + 1; q < n; ++q) {
    if (f[q] == inf) continue;
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

inline DistanceMap distance_transform(const BitMask& mask) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Pad by one background ring so the outside of the image acts as unset.
  const int w = mask.width() + 2, h = mask.height() + 2;
  Grid<double> g(w, h, 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) g(x + 1, y + 1) = mask(x, y) ? inf : 0.0;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col_in(h), col_out(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col_in[y] = g(x, y);
    detail::squared_edt_1d(col_in, col_out, v, z);
    for (int y = 0; y < h; ++y) g(x, y) = col_out[y];
  }
  std::vector<double> row_in(w), row_out(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row_in[x] = g(x, y);
    detail::squared_edt_1d(row_in, row_out, v, z);
    for (int x = 0; x < w; ++x) g(x, y) = row_out[x];
  }

  DistanceMap out(mask.width(), mask.height(), 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      out(x, y) = mask(x, y) ? std::sqrt(g(x + 1, y + 1)) : 0.0;
  return out;
}

}  // namespace neurograph
