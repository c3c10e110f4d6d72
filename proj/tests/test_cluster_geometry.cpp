#include "cableperc/cluster_geometry.hpp"

#include <algorithm>
#include <map>

#include "cableperc/rng.hpp"
#include "doctest.h"

using namespace cableperc;

namespace {

ClusterMap path_map(int d, const std::vector<Vertex>& path, Coord radius) {
  std::vector<u64> occupied;
  std::vector<std::pair<u64, u64>> edges;
  for (size_t i = 0; i < path.size(); ++i) {
    occupied.push_back(pack_vertex(path[i], d));
    if (i + 1 < path.size())
      edges.emplace_back(pack_vertex(path[i], d),
                         pack_vertex(path[i + 1], d));
  }
  return build_cluster_map(d, centered_box(d, radius), occupied, edges);
}

// Random site/bond configuration on a small box for property tests.
ClusterMap random_map(int d, Coord radius, u64 seed, double p_site,
                      double p_bond) {
  const BoxSpec box = centered_box(d, radius);
  std::vector<u64> occupied;
  std::vector<std::pair<u64, u64>> edges;
  rng::KeyStream ks(seed, rng::TAG_GENERIC, 0);
  std::vector<char> open(static_cast<size_t>(box.size()), 0);
  for (i64 i = 0; i < box.size(); ++i) {
    if (ks.u01() < p_site) {
      open[static_cast<size_t>(i)] = 1;
      occupied.push_back(pack_vertex(box.vertex(i), d));
    }
  }
  for (i64 i = 0; i < box.size(); ++i) {
    if (!open[static_cast<size_t>(i)]) continue;
    const Vertex v = box.vertex(i);
    for (int axis = 0; axis < d; ++axis) {
      Vertex w = v;
      w[axis] += 1;
      if (!box.contains(w) || !open[static_cast<size_t>(box.index(w))])
        continue;
      if (ks.u01() < p_bond)
        edges.emplace_back(pack_vertex(v, d), pack_vertex(w, d));
    }
  }
  return build_cluster_map(d, box, occupied, edges);
}

}  // namespace

TEST_CASE("labels are canonical and independent of edge order") {
  const BoxSpec box = centered_box(2, 2);
  std::vector<u64> occ;
  std::vector<std::pair<u64, u64>> edges;
  const Vertex a = make_vertex({0, 0}), b = make_vertex({1, 0}),
               c = make_vertex({1, 1});
  for (const Vertex& v : {a, b, c}) occ.push_back(pack_vertex(v, 2));
  edges.emplace_back(pack_vertex(a, 2), pack_vertex(b, 2));
  edges.emplace_back(pack_vertex(b, 2), pack_vertex(c, 2));
  const ClusterMap m1 = build_cluster_map(2, box, occ, edges);
  std::reverse(edges.begin(), edges.end());
  std::reverse(occ.begin(), occ.end());
  const ClusterMap m2 = build_cluster_map(2, box, occ, edges);
  for (const Vertex& v : {a, b, c}) CHECK(m1.label_of(v) == m2.label_of(v));
  // Canonical label is the minimal packed code in the component.
  const u64 min_code =
      std::min({pack_vertex(a, 2), pack_vertex(b, 2), pack_vertex(c, 2)});
  CHECK(*m1.label_of(a) == min_code);
}

TEST_CASE("connected and connected_within") {
  // 5-vertex path along the x axis; the middle edge leaves the sub-box.
  std::vector<Vertex> path;
  for (Coord x = -2; x <= 2; ++x) path.push_back(make_vertex({x, 0}));
  const ClusterMap map = path_map(2, path, 4);
  CHECK(connected(map, make_vertex({-2, 0}), make_vertex({2, 0})));
  CHECK(connected(map, make_vertex({1, 0}), make_vertex({1, 0})));
  // Inside B(0,1) the -1..1 stretch stays connected.
  CHECK(connected_within(map, centered_box(2, 1), make_vertex({-1, 0}),
                         make_vertex({1, 0})));
  // connected_within implies connected on every sample.
  const ClusterMap rnd = random_map(2, 3, 17, 0.7, 0.6);
  const BoxSpec sub = centered_box(2, 2);
  for (i64 i = 0; i < sub.size(); ++i)
    for (i64 j = 0; j < sub.size(); ++j) {
      const Vertex x = sub.vertex(i), y = sub.vertex(j);
      if (connected_within(rnd, sub, x, y)) CHECK(connected(rnd, x, y));
    }
  CHECK_THROWS_AS(connected(map, make_vertex({90, 0}), origin()), Error);
}

TEST_CASE("one_arm") {
  SUBCASE("origin unoccupied") {
    const ClusterMap map = path_map(2, {make_vertex({1, 1})}, 3);
    CHECK(!one_arm(map, 2));
    CHECK(!one_arm(map, 0));
  }
  SUBCASE("r = 0 iff origin occupied") {
    const ClusterMap map = path_map(2, {origin()}, 3);
    CHECK(one_arm(map, 0));
  }
  SUBCASE("arm of exact length r") {
    std::vector<Vertex> path;
    for (Coord x = 0; x <= 2; ++x) path.push_back(make_vertex({x, 0}));
    const ClusterMap map = path_map(2, path, 4);
    CHECK(one_arm(map, 2));
    CHECK(!one_arm(map, 3));
  }
}

TEST_CASE("chemical distance") {
  std::vector<Vertex> path;
  for (Coord x = 0; x <= 3; ++x) path.push_back(make_vertex({x, 0}));
  const ClusterMap map = path_map(2, path, 4);
  CHECK(chemical_distance(map, origin(), origin()) == 0);
  CHECK(chemical_distance(map, origin(), make_vertex({3, 0})) == 3);
  CHECK(chemical_distance(map, origin(), make_vertex({0, 1})) == kUnreachable);
  CHECK(chemical_distance(map, origin(), make_vertex({3, 0}), 2) ==
        kUnreachable);  // cap exhaustion is a value, not an error
}

TEST_CASE("chemical distance equals all-pairs brute force on small clusters") {
  for (u64 seed = 0; seed < 8; ++seed) {
    const ClusterMap map = random_map(2, 3, 1000 + seed, 0.75, 0.7);
    // Floyd-Warshall over occupied vertices.
    std::vector<u64> verts;
    for (const auto& [code, label] : map.labels) verts.push_back(code);
    std::sort(verts.begin(), verts.end());
    const size_t n = verts.size();
    if (n > 50) continue;
    std::vector<std::vector<i64>> dist(n, std::vector<i64>(n, 1 << 20));
    for (size_t i = 0; i < n; ++i) dist[i][i] = 0;
    auto idx = [&](u64 code) {
      return static_cast<size_t>(
          std::lower_bound(verts.begin(), verts.end(), code) - verts.begin());
    };
    for (const auto& [a, b] : map.edges) {
      dist[idx(a)][idx(b)] = 1;
      dist[idx(b)][idx(a)] = 1;
    }
    for (size_t k = 0; k < n; ++k)
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          dist[i][j] = std::min(dist[i][j], dist[i][k] + dist[k][j]);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        const i64 bfs = chemical_distance(map, unpack_vertex(verts[i], 2),
                                          unpack_vertex(verts[j], 2));
        const i64 fw = dist[i][j] >= (1 << 20) ? kUnreachable : dist[i][j];
        CHECK(bfs == fw);
      }
  }
}

TEST_CASE("chemical distance dominates the l-infinity distance") {
  for (u64 seed = 0; seed < 6; ++seed) {
    const ClusterMap map = random_map(3, 2, 2000 + seed, 0.8, 0.7);
    for (const auto& [code, label] : map.labels) {
      const Vertex v = unpack_vertex(code, 3);
      const i64 dist = chemical_distance(map, origin(), v);
      if (dist >= 0) CHECK(dist >= linf_norm(v, 3));
    }
  }
}

TEST_CASE("intrinsic balls") {
  SUBCASE("isolated vertex") {
    const ClusterMap map = path_map(2, {origin()}, 3);
    const IntrinsicBall b0 = intrinsic_ball(map, origin(), 0);
    CHECK(b0.members.size() == 1);
    CHECK(b0.sphere.size() == 1);
    const IntrinsicBall b1 = intrinsic_ball(map, origin(), 1);
    CHECK(b1.members.size() == 1);
    CHECK(b1.sphere.empty());
  }
  SUBCASE("open path of length 5: sphere(5) is the far endpoint") {
    std::vector<Vertex> path;
    for (Coord x = 0; x <= 5; ++x) path.push_back(make_vertex({x, 0}));
    const ClusterMap map = path_map(2, path, 6);
    const IntrinsicBall b = intrinsic_ball(map, origin(), 5);
    REQUIRE(b.sphere.size() == 1);
    CHECK(unpack_vertex(b.sphere[0], 2) == make_vertex({5, 0}));
    CHECK(b.members.size() == 6);
  }
  SUBCASE("nestedness on random samples") {
    for (u64 seed = 0; seed < 40; ++seed) {
      const ClusterMap map = random_map(2, 3, 3000 + seed, 0.8, 0.7);
      if (!map.occupied(origin())) continue;
      IntrinsicBall prev = intrinsic_ball(map, origin(), 0);
      for (Coord r = 1; r <= 5; ++r) {
        const IntrinsicBall cur = intrinsic_ball(map, origin(), r);
        CHECK(std::includes(cur.members.begin(), cur.members.end(),
                            prev.members.begin(), prev.members.end()));
        // sphere(r) = members(r) minus members(r-1)
        std::vector<u64> diff;
        std::set_difference(cur.members.begin(), cur.members.end(),
                            prev.members.begin(), prev.members.end(),
                            std::back_inserter(diff));
        CHECK(diff == cur.sphere);
        prev = cur;
      }
    }
  }
}

TEST_CASE("union-find labels equal BFS connectivity") {
  for (u64 seed = 0; seed < 10; ++seed) {
    const ClusterMap map = random_map(2, 3, 4000 + seed, 0.7, 0.6);
    for (const auto& [code, label] : map.labels) {
      const Vertex v = unpack_vertex(code, 2);
      const bool same_label = map.label_of(origin()) &&
                              *map.label_of(origin()) == label;
      if (!map.occupied(origin())) break;
      const bool reachable =
          chemical_distance(map, origin(), v) != kUnreachable;
      CHECK(same_label == reachable);
    }
  }
}

TEST_CASE("cluster csv export and its guard") {
  const ClusterMap map = path_map(2, {origin(), make_vertex({1, 0})}, 2);
  const std::string csv = cluster_label_csv(map);
  CHECK(csv.find("vertex,label") == 0);
  CHECK_THROWS_AS(cluster_label_csv(map, 1), Error);
}
