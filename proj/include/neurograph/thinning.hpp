#pragma once

// Improved Zhang-Suen thinning.
//
// Neighbor order throughout is P2..P9 = N, NE, E, SE, S, SW, W, NW; bit i of a
// neighborhood code is set when neighbor P(i+2) is foreground. Pixels outside
// the image are background.

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "neurograph/raster.hpp"

namespace neurograph {

namespace topology {

inline constexpr std::array<Point, 8> kRing{{{0, -1}, {1, -1}, {1, 0}, {1, 1},
                                             {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

inline std::uint8_t neighborhood(const BitMask& m, int x, int y) noexcept {
  std::uint8_t code = 0;
  for (int i = 0; i < 8; ++i)
    if (m.get_or_zero(x + kRing[i].x, y + kRing[i].y)) code |= static_cast<std::uint8_t>(1u << i);
  return code;
}

// B(p): number of foreground neighbors.
constexpr int neighbor_count(std::uint8_t code) noexcept { return std::popcount(code); }

// A(p): number of 0->1 transitions in the circular sequence P2..P9,P2.
constexpr int transitions(std::uint8_t code) noexcept {
  int a = 0;
  for (int i = 0; i < 8; ++i) {
    const bool cur = (code >> i) & 1u;
    const bool next = (code >> ((i + 1) % 8)) & 1u;
    if (!cur && next) ++a;
  }
  return a;
}

namespace detail {

constexpr bool ring_adjacent(int i, int j, bool four) noexcept {
  const int dx = kRing[i].x - kRing[j].x;
  const int dy = kRing[i].y - kRing[j].y;
  const int adx = dx < 0 ? -dx : dx, ady = dy < 0 ? -dy : dy;
  if (i == j) return false;
  return four ? (adx + ady == 1) : (adx <= 1 && ady <= 1);
}

// Connected components among the ring positions selected by `members`,
// counting only those that contain a position listed in `anchors`.
constexpr int ring_components(std::uint8_t members, std::uint8_t anchors, bool four) noexcept {
  std::uint8_t seen = 0;
  int count = 0;
  for (int start = 0; start < 8; ++start) {
    if (!((members >> start) & 1u) || ((seen >> start) & 1u)) continue;
    std::uint8_t comp = static_cast<std::uint8_t>(1u << start);
    bool grew = true;
    while (grew) {
      grew = false;
      for (int i = 0; i < 8; ++i) {
        if (!((comp >> i) & 1u)) continue;
        for (int j = 0; j < 8; ++j) {
          if (((members >> j) & 1u) && !((comp >> j) & 1u) && ring_adjacent(i, j, four)) {
            comp |= static_cast<std::uint8_t>(1u << j);
            grew = true;
          }
        }
      }
    }
    seen |= comp;
    if (comp & anchors) ++count;
  }
  return count;
}

constexpr std::array<bool, 256> make_simple_table() {
  std::array<bool, 256> t{};
  constexpr std::uint8_t all = 0xFF;
  constexpr std::uint8_t axial = 0b01010101;  // N, E, S, W
  for (int c = 0; c < 256; ++c) {
    const auto code = static_cast<std::uint8_t>(c);
    const int fg = ring_components(code, all, false);
    const int bg = ring_components(static_cast<std::uint8_t>(~code), axial, true);
    t[c] = fg == 1 && bg == 1;
  }
  return t;
}

}  // namespace detail

inline constexpr std::array<bool, 256> kSimple = detail::make_simple_table();

/// Deleting a simple pixel preserves 8-connected foreground and 4-connected
/// background topology.
constexpr bool is_simple(std::uint8_t code) noexcept { return kSimple[code]; }

}  // namespace topology

/// Binary mask satisfying the thinness invariant; produced by thin().
struct Skeleton {
  BitMask mask;
  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

namespace detail {

inline bool zhang_suen_candidate(std::uint8_t code, int step) noexcept {
  const int b = topology::neighbor_count(code);
  if (b < 2 || b > 6) return false;
  if (topology::transitions(code) != 1) return false;
  const auto p = [code](int k) { return (code >> (k - 2)) & 1u; };  // P2..P9
  if (step == 0) return (p(2) * p(4) * p(6)) == 0 && (p(4) * p(6) * p(8)) == 0;
  return (p(2) * p(4) * p(8)) == 0 && (p(2) * p(6) * p(8)) == 0;
}

// Deletion is safe when the pixel is simple and not an endpoint.
inline bool removable(const BitMask& m, int x, int y) noexcept {
  const auto code = topology::neighborhood(m, x, y);
  return topology::neighbor_count(code) >= 2 && topology::is_simple(code);
}

// One sub-pass: candidates are marked against the state at sub-pass start,
// then applied in raster order.
inline bool zhang_suen_subpass(BitMask& m, int step, std::vector<Point>& marked) {
  marked.clear();
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y) && zhang_suen_candidate(topology::neighborhood(m, x, y), step))
        marked.push_back({x, y});
  bool changed = false;
  for (const auto& p : marked) {
    // Parallel deletion alone can erase 2x2 squares and 2-px diagonals; the
    // re-check against the current state keeps every component alive.
    if (removable(m, p.x, p.y)) {
      m(p.x, p.y) = 0;
      changed = true;
    }
  }
  return changed;
}

inline bool in_square_block(const BitMask& m, int x, int y) noexcept {
  for (int oy = -1; oy <= 0; ++oy)
    for (int ox = -1; ox <= 0; ++ox)
      if (m.get_or_zero(x + ox, y + oy) && m.get_or_zero(x + ox + 1, y + oy) &&
          m.get_or_zero(x + ox, y + oy + 1) && m.get_or_zero(x + ox + 1, y + oy + 1))
        return true;
  return false;
}

// Staircase and blob pixels: simple, not endpoints, and either part of a 2x2
// block, touching two 4-adjacent skeleton neighbors, or a two-neighbor pixel
// whose neighbors already touch.
inline bool redundant(const BitMask& m, int x, int y) noexcept {
  const auto code = topology::neighborhood(m, x, y);
  const int b = topology::neighbor_count(code);
  if (b < 2 || !topology::is_simple(code)) return false;
  if (in_square_block(m, x, y)) return true;
  for (int i = 0; i < 8; ++i) {
    if (!((code >> i) & 1u)) continue;
    for (int j = i + 1; j < 8; ++j) {
      if (!((code >> j) & 1u)) continue;
      if (topology::detail::ring_adjacent(i, j, true)) return true;
      if (b == 2 && topology::detail::ring_adjacent(i, j, false)) return true;
    }
  }
  return false;
}

inline bool staircase_pass(BitMask& m) {
  bool changed = false;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y) && redundant(m, x, y)) {
        m(x, y) = 0;
        changed = true;
      }
    }
  }
  return changed;
}

}  // namespace detail

/// Reduces a mask to a one-pixel-wide skeleton. Alternates Zhang-Suen
/// iterations and the staircase post-pass until neither deletes anything, so
/// the result is a fixpoint (thin is idempotent).
inline Skeleton thin(const BitMask& mask) {
  BitMask m = mask;
  std::vector<Point> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    while (true) {
      const bool a = detail::zhang_suen_subpass(m, 0, marked);
      const bool b = detail::zhang_suen_subpass(m, 1, marked);
      if (!a && !b) break;
      changed = true;
    }
    while (detail::staircase_pass(m)) changed = true;
  }
  return Skeleton{std::move(m)};
}

/// Counts 2x2 blocks of set pixels.
inline std::size_t count_square_blocks(const BitMask& m) {
  std::size_t n = 0;
  for (int y = 0; y + 1 < m.height(); ++y)
    for (int x = 0; x + 1 < m.width(); ++x)
      if (m(x, y) && m(x + 1, y) && m(x, y + 1) && m(x + 1, y + 1)) ++n;
  return n;
}

}  // namespace neurograph
