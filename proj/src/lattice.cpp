#include "cableperc/lattice.hpp"

namespace cableperc {

std::vector<Vertex> box_boundary(const BoxSpec& box) {
  std::vector<Vertex> out;
  if (box.radius == 0) {
    out.push_back(box.center);
    return out;
  }
  const i64 n = box.size();
  for (i64 i = 0; i < n; ++i) {
    const Vertex v = box.vertex(i);
    // A vertex has an l1-neighbor outside iff some coordinate sits on a face.
    bool on_face = false;
    for (int a = 0; a < box.d && !on_face; ++a)
      on_face = std::abs(v[a] - box.center[a]) == box.radius;
    if (on_face) out.push_back(v);
  }
  return out;
}

Coord ext_distance(const std::vector<Vertex>& a, const std::vector<Vertex>& b,
                   int d) {
  require(!a.empty() && !b.empty(), "ext_distance: empty vertex set");
  Coord best = kCoordLimit * 4;
  for (const Vertex& x : a)
    for (const Vertex& y : b) best = std::min(best, linf_dist(x, y, d));
  return best;
}

}  // namespace cableperc
