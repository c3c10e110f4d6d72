#pragma once

// Connectivity queries and intrinsic (chemical) geometry over a realized
// configuration, shared by the GFF and loop routes. Distances count lattice
// edges (unit length per edge), not cable length; unreachable is a distinct
// value, never infinity-as-number.

#include <optional>
#include <unordered_map>
#include <vector>

#include "cableperc/lattice.hpp"

namespace cableperc {

inline constexpr i64 kUnreachable = -1;

/// Connected-component labeling of the opened adjacency, restricted to
/// occupied vertices. Vertices and edges are stored as packed codes; cluster
/// labels are canonical: the minimal packed vertex code in the component.
struct ClusterMap {
  int d = 3;
  BoxSpec region{};                        // where the configuration lives
  std::unordered_map<u64, u64> labels;     // occupied vertex -> cluster label
  std::vector<std::pair<u64, u64>> edges;  // opened adjacency (vertex codes)
  // optional: cluster label -> ids of the loops it contains
  std::unordered_map<u64, std::vector<u64>> loop_members;

  bool occupied(const Vertex& v) const {
    return labels.contains(pack_vertex(v, d));
  }
  std::optional<u64> label_of(const Vertex& v) const {
    const auto it = labels.find(pack_vertex(v, d));
    if (it == labels.end()) return std::nullopt;
    return it->second;
  }
};

/// Builds canonical labels from occupied vertices and opened edges.
/// Isolated occupied vertices form singleton clusters. Deterministic in the
/// input order (labels are per-component minima).
ClusterMap build_cluster_map(int d, const BoxSpec& region,
                             const std::vector<u64>& occupied,
                             std::vector<std::pair<u64, u64>> edges);

/// Same cluster (whole configuration). Errors if a query vertex is outside
/// the configuration region.
bool connected(const ClusterMap& map, const Vertex& x, const Vertex& y);

/// Connectivity recomputed over edges with BOTH endpoints in `sub`.
bool connected_within(const ClusterMap& map, const BoxSpec& sub,
                      const Vertex& x, const Vertex& y);

/// True iff the origin's cluster meets the boundary of B(0, r). The box
/// B(0,r) plus the margin must fit in the configuration region.
bool one_arm(const ClusterMap& map, Coord r);

/// BFS over the opened adjacency; lattice-edge count of the shortest path,
/// or kUnreachable if there is none within `cap` (cap < 0: unbounded).
i64 chemical_distance(const ClusterMap& map, const Vertex& x, const Vertex& y,
                      i64 cap = -1);

struct IntrinsicBall {
  Vertex center{};
  Coord radius = 0;
  std::vector<u64> members;  // d(center, .) <= radius (vertex codes)
  std::vector<u64> sphere;   // d(center, .) == radius
  bool truncated = false;    // BFS touched the region boundary
};

/// BFS truncated at depth r. sphere(r) nonempty iff some vertex sits at
/// chemical distance exactly r.
IntrinsicBall intrinsic_ball(const ClusterMap& map, const Vertex& center,
                             Coord r);

/// Per-vertex label CSV for debug-scale boxes; errors above the size guard.
std::string cluster_label_csv(const ClusterMap& map, i64 max_vertices = 20000);

}  // namespace cableperc
