#pragma once

// Geometry of Z^d: vertices, l-infinity boxes, boundaries, dense indexing.
// Adjacency is l1-distance-1; box membership and point norms are l-infinity.
// The two norms are never conflated: every distance helper carries its norm
// in the name.

#include <array>
#include <cstdlib>
#include <vector>

#include "cableperc/common.hpp"

namespace cableperc {

using Coord = i32;

struct LatticeParams {
  int d = 3;
};

struct Vertex {
  std::array<Coord, kMaxDim> c{};

  Coord& operator[](int i) { return c[static_cast<size_t>(i)]; }
  Coord operator[](int i) const { return c[static_cast<size_t>(i)]; }
  bool operator==(const Vertex&) const = default;
};

inline Vertex origin() { return Vertex{}; }

inline Vertex make_vertex(std::initializer_list<Coord> coords) {
  Vertex v;
  int i = 0;
  for (Coord x : coords) v[i++] = x;
  return v;
}

inline Coord linf_norm(const Vertex& v, int d) {
  Coord m = 0;
  for (int i = 0; i < d; ++i) m = std::max(m, std::abs(v[i]));
  return m;
}

inline Coord l1_norm(const Vertex& v, int d) {
  Coord s = 0;
  for (int i = 0; i < d; ++i) s += std::abs(v[i]);
  return s;
}

inline Coord linf_dist(const Vertex& a, const Vertex& b, int d) {
  Coord m = 0;
  for (int i = 0; i < d; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Coord l1_dist(const Vertex& a, const Vertex& b, int d) {
  Coord s = 0;
  for (int i = 0; i < d; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline bool l1_adjacent(const Vertex& a, const Vertex& b, int d) {
  return l1_dist(a, b, d) == 1;
}

// ---- packed vertex codes ------------------------------------------------
// 8 bits per coordinate, offset by 128; supports |coord| <= 127 and d <= 7.
// Hot paths (union-find, hashing, edge keys) work on codes.

inline constexpr Coord kCoordLimit = 127;

inline u64 pack_vertex(const Vertex& v, int d) {
  u64 code = 0;
  for (int i = d - 1; i >= 0; --i)
    code = (code << 8) | static_cast<u64>(v[i] + 128);
  return code;
}

inline Vertex unpack_vertex(u64 code, int d) {
  Vertex v;
  for (int i = 0; i < d; ++i) {
    v[i] = static_cast<Coord>(code & 0xff) - 128;
    code >>= 8;
  }
  return v;
}

/// Packed code of the neighbor one step along `axis` in direction `sign`.
inline u64 step_code(u64 code, int axis, int sign) {
  const u64 unit = u64{1} << (8 * axis);
  return sign > 0 ? code + unit : code - unit;
}

/// Canonical key of the undirected edge from `code` along +axis.
/// Layout: vertex code of the lower endpoint shifted left 3, axis in low bits.
inline u64 edge_code(u64 lower_code, int axis) {
  return (lower_code << 3) | static_cast<u64>(axis);
}

// ---- boxes ---------------------------------------------------------------

/// l-infinity box B(center, radius) with dense row-major indexing.
struct BoxSpec {
  int d = 3;
  Vertex center{};
  Coord radius = 0;

  i64 side() const { return 2 * static_cast<i64>(radius) + 1; }
  i64 size() const {
    i64 n = 1;
    for (int i = 0; i < d; ++i) n *= side();
    return n;
  }
  bool contains(const Vertex& v) const {
    return linf_dist(v, center, d) <= radius;
  }
  /// Dense row-major index; caller must ensure containment.
  i64 index(const Vertex& v) const {
    i64 idx = 0;
    for (int i = 0; i < d; ++i)
      idx = idx * side() + (v[i] - center[i] + radius);
    return idx;
  }
  Vertex vertex(i64 idx) const {
    Vertex v;
    for (int i = d - 1; i >= 0; --i) {
      v[i] = static_cast<Coord>(idx % side()) - radius + center[i];
      idx /= side();
    }
    return v;
  }
  BoxSpec padded(Coord extra) const {
    return BoxSpec{d, center, radius + extra};
  }
};

inline BoxSpec centered_box(int d, Coord radius) {
  require(d >= 1 && d <= kMaxDim, "lattice dimension must be in [1,7]");
  require(radius >= 0 && radius <= kCoordLimit - 1, "box radius out of range");
  return BoxSpec{d, origin(), radius};
}

/// Vertices of the box l1-adjacent to its complement.
std::vector<Vertex> box_boundary(const BoxSpec& box);

/// min over pairs of the l-infinity distance. Errors on empty input.
Coord ext_distance(const std::vector<Vertex>& a, const std::vector<Vertex>& b,
                   int d);

/// The paper's "v ~ A" predicate: ext_distance({v}, A) <= 1.
inline bool near(const Vertex& v, const std::vector<Vertex>& a, int d) {
  return ext_distance({v}, a, d) <= 1;
}

}  // namespace cableperc
