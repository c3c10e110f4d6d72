#include "cableperc/lattice.hpp"

#include <set>

#include "doctest.h"

using namespace cableperc;

namespace {

// Brute-force boundary: vertices with an l1-neighbor outside the box.
std::set<u64> boundary_by_adjacency(const BoxSpec& box) {
  std::set<u64> out;
  for (i64 i = 0; i < box.size(); ++i) {
    const Vertex v = box.vertex(i);
    for (int a = 0; a < box.d; ++a)
      for (int s = -1; s <= 1; s += 2) {
        Vertex w = v;
        w[a] += s;
        if (!box.contains(w)) out.insert(pack_vertex(v, box.d));
      }
  }
  return out;
}

}  // namespace

TEST_CASE("box boundary counts") {
  // d=2, B(0,1): all of the 3x3 box except the center.
  CHECK(box_boundary(centered_box(2, 1)).size() == 8);
  // d=1, B(0,0): a single point is its own boundary.
  const auto b1 = box_boundary(centered_box(1, 0));
  REQUIRE(b1.size() == 1);
  CHECK(b1[0] == origin());
  // d=3, B(0,2): 5^3 - 3^3 = 98, cross-checked by adjacency enumeration.
  const auto b3 = box_boundary(centered_box(3, 2));
  CHECK(b3.size() == 98);
  CHECK(boundary_by_adjacency(centered_box(3, 2)).size() == 98);
}

TEST_CASE("box boundary equals shell for small boxes") {
  for (int d = 1; d <= 4; ++d) {
    for (Coord r = 1; r <= 5; ++r) {
      if (d == 4 && r > 4) continue;
      const BoxSpec box = centered_box(d, r);
      const auto bd = box_boundary(box);
      const auto ref = boundary_by_adjacency(box);
      REQUIRE(bd.size() == ref.size());
      const BoxSpec inner = centered_box(d, r - 1);
      for (const Vertex& v : bd) {
        CHECK(box.contains(v));
        CHECK(!inner.contains(v));
        CHECK(ref.count(pack_vertex(v, d)) == 1);
      }
      CHECK(static_cast<i64>(bd.size()) == box.size() - inner.size());
    }
  }
}

TEST_CASE("ext_distance") {
  CHECK(ext_distance({origin()}, {make_vertex({3, 0})}, 2) == 3);
  CHECK(ext_distance({make_vertex({1, -2})}, {make_vertex({1, -2})}, 2) == 0);
  const auto shell = box_boundary(centered_box(2, 5));
  CHECK(ext_distance({origin()}, shell, 2) == 5);
  CHECK_THROWS_AS(ext_distance({}, {origin()}, 2), Error);
}

TEST_CASE("index bijection round-trips") {
  for (int d = 1; d <= 4; ++d) {
    BoxSpec box = centered_box(d, 3);
    box.center[0] = 2;  // off-center box
    for (i64 i = 0; i < box.size(); ++i) {
      const Vertex v = box.vertex(i);
      CHECK(box.contains(v));
      CHECK(box.index(v) == i);
    }
  }
}

TEST_CASE("vertex codes pack and step") {
  for (int d = 1; d <= 7; ++d) {
    const Coord raw[] = {5, -3, 0, 127, -128, 1, 7};
    Vertex v;  // unused coordinates stay zero by invariant
    for (int i = 0; i < d; ++i) v[i] = raw[i];
    const u64 code = pack_vertex(v, d);
    CHECK(unpack_vertex(code, d) == v);
    for (int a = 0; a < d; ++a) {
      if (v[a] >= 127 || v[a] <= -128) continue;
      Vertex up = v;
      up[a] += 1;
      CHECK(step_code(code, a, +1) == pack_vertex(up, d));
      Vertex dn = v;
      dn[a] -= 1;
      CHECK(step_code(code, a, -1) == pack_vertex(dn, d));
    }
  }
}

TEST_CASE("norms") {
  const Vertex v = make_vertex({3, -4, 1});
  CHECK(linf_norm(v, 3) == 4);
  CHECK(l1_norm(v, 3) == 8);
  CHECK(l1_adjacent(origin(), make_vertex({0, 1, 0}), 3));
  CHECK(!l1_adjacent(origin(), make_vertex({1, 1, 0}), 3));
}
