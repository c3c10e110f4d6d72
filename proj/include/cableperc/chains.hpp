#pragma once

// Glued-loop sequence combinatorics: sequences of glued objects covering a
// lattice path, minimal sequences, simple chains (all members distinct) and
// exact simple geodesics on small cluster fragments.
//
// Glued objects follow the paper's grouping: fundamental loops with the same
// visited vertex set are one object; point occupation at a vertex is one
// object; an opened gluing edge is a two-vertex object covering its edge.
// Sequence rules: segments of the path are covered by one object each,
// consecutive objects share the breakpoint vertex, edge-type objects never
// sit first, last, or adjacent to each other.

#include <optional>

#include "cableperc/loop_route.hpp"

namespace cableperc {

enum class GluedType { loop, point, edge };

struct GluedObject {
  GluedType type = GluedType::loop;
  u64 id = 0;                  // loop: min member loop id; point/edge: code
  std::vector<u64> vertices;   // sorted packed codes
  std::vector<u64> edge_set;   // sorted edge codes (empty for point type)

  bool has_vertex(u64 code) const;
  bool has_edge(u64 ecode) const;
};

/// The glued objects of one realized configuration fragment.
struct GluedSystem {
  int d = 3;
  std::vector<GluedObject> objects;  // chain members are indices here
  std::unordered_map<u64, std::vector<int>> by_vertex;  // touching objects
  std::unordered_map<u64, std::vector<int>> by_edge;    // covering objects

  const GluedObject& at(int i) const {
    return objects[static_cast<size_t>(i)];
  }
  int size() const { return static_cast<int>(objects.size()); }
};

/// Groups a sample's loops by identical vertex set, adds point objects for
/// `point_vertices` and edge objects for the opened gluing edges.
GluedSystem build_glued_system(const LoopSample& sample,
                               const std::vector<u64>& point_vertices,
                               const std::vector<std::pair<u64, u64>>&
                                   gluing_edges);

struct LatticePath {
  std::vector<Vertex> vertices;

  int edge_count() const { return static_cast<int>(vertices.size()) - 1; }
  bool self_avoiding(int d) const;
  void validate(int d) const;  // consecutive l1-adjacency
};

struct GluedChain {
  std::vector<int> objects;  // indices into the GluedSystem
  std::vector<int> breaks;   // edge positions; breaks[i] ends segment i

  bool is_simple() const;
};

/// Definition check: is `chain` (with its segmentation) a glued loop
/// sequence of `path` under the rules above?
bool valid_sequence(const GluedSystem& sys, const LatticePath& path,
                    const GluedChain& chain);

/// Is the path realizable with the allowed object subset at all?
bool coverable(const GluedSystem& sys, const LatticePath& path,
               const std::vector<char>& allowed);

/// Greedy cover (longest next segment, ties by smallest object id), with
/// search fallback so feasible paths always produce a sequence. Errors
/// naming the first uncoverable edge.
GluedChain loop_sequence_of_path(const GluedSystem& sys,
                                 const LatticePath& path);

/// Sequentially drops members whose removal keeps the path realizable,
/// re-deriving a sequence from the reduced set; asserts the minimality
/// predicate and the |Set| <= 3|path| bound on the result.
GluedChain minimal_sequence(const GluedSystem& sys, const LatticePath& path,
                            const GluedChain& chain);

/// Shortest path in the object-intersection graph from an object touching A
/// to one touching B, restricted to Set(chain); the result is automatically
/// simple. Errors if A and B are not connected through the set.
GluedChain simplify_chain(const GluedSystem& sys, const GluedChain& chain,
                          const std::vector<u64>& A, const std::vector<u64>& B);

bool valid_simple_chain(const GluedSystem& sys, const GluedChain& chain,
                        const std::vector<u64>& A, const std::vector<u64>& B);

struct GeodesicLimits {
  int max_objects = 12;
  int max_vertices = 60;
};

struct GeodesicResult {
  i64 distance = kUnreachable;         // ordinary geodesic d(x,y)
  i64 simple_distance = kUnreachable;  // d^simple(x,y)
};

/// Exact d and d^simple on a small fragment (0-1 BFS over
/// (object, vertex, used-object mask) states). Errors above the limits.
GeodesicResult simple_geodesic_exact(const GluedSystem& sys, const Vertex& x,
                                     const Vertex& y,
                                     const GeodesicLimits& limits = {});

/// Debug/audit trace: one line per segment, "edges [a,b) -> object id".
std::string chain_trace(const GluedSystem& sys, const GluedChain& chain);

}  // namespace cableperc
