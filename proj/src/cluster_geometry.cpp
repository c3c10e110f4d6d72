#include "cableperc/cluster_geometry.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace cableperc {

namespace {

// Minimal union-find over packed codes via index compression.
struct UnionFind {
  std::unordered_map<u64, u32> index;
  std::vector<u32> parent;

  u32 add(u64 code) {
    const auto [it, inserted] =
        index.try_emplace(code, static_cast<u32>(parent.size()));
    if (inserted) parent.push_back(it->second);
    return it->second;
  }
  u32 find(u32 i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  }
  void unite(u32 a, u32 b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  }
};

// Adjacency lists (code -> neighbor codes) built from the opened edge list.
std::unordered_map<u64, std::vector<u64>> adjacency(
    const std::vector<std::pair<u64, u64>>& edges) {
  std::unordered_map<u64, std::vector<u64>> adj;
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

void check_in_region(const ClusterMap& map, const Vertex& v) {
  require(map.region.contains(v),
          "cluster query outside the configuration region");
}

}  // namespace

ClusterMap build_cluster_map(int d, const BoxSpec& region,
                             const std::vector<u64>& occupied,
                             std::vector<std::pair<u64, u64>> edges) {
  ClusterMap map;
  map.d = d;
  map.region = region;
  UnionFind uf;
  for (const u64 v : occupied) uf.add(v);
  for (const auto& [a, b] : edges) uf.unite(uf.add(a), uf.add(b));
  // Canonical label: minimal packed code per component.
  std::vector<u64> root_min(uf.parent.size(), ~u64{0});
  for (auto& [code, idx] : uf.index) {
    const u32 r = uf.find(idx);
    root_min[r] = std::min(root_min[r], code);
  }
  map.labels.reserve(uf.index.size());
  for (auto& [code, idx] : uf.index)
    map.labels.emplace(code, root_min[uf.find(idx)]);
  map.edges = std::move(edges);
  return map;
}

bool connected(const ClusterMap& map, const Vertex& x, const Vertex& y) {
  check_in_region(map, x);
  check_in_region(map, y);
  const auto lx = map.label_of(x);
  const auto ly = map.label_of(y);
  return lx && ly && *lx == *ly;
}

bool connected_within(const ClusterMap& map, const BoxSpec& sub,
                      const Vertex& x, const Vertex& y) {
  check_in_region(map, x);
  check_in_region(map, y);
  require(sub.radius <= map.region.radius,
          "connected_within: sub-box exceeds the configuration region");
  if (!map.occupied(x) || !map.occupied(y)) return false;
  if (x == y) return true;
  if (!sub.contains(x) || !sub.contains(y)) return false;
  UnionFind uf;
  for (const auto& [a, b] : map.edges) {
    if (sub.contains(unpack_vertex(a, map.d)) &&
        sub.contains(unpack_vertex(b, map.d)))
      uf.unite(uf.add(a), uf.add(b));
  }
  const auto ia = uf.index.find(pack_vertex(x, map.d));
  const auto ib = uf.index.find(pack_vertex(y, map.d));
  if (ia == uf.index.end() || ib == uf.index.end()) return false;
  return uf.find(ia->second) == uf.find(ib->second);
}

bool one_arm(const ClusterMap& map, Coord r) {
  require(r <= map.region.radius, "one_arm: radius exceeds the region");
  const auto l0 = map.label_of(origin());
  if (!l0) return false;
  if (r == 0) return true;
  // The cluster is lattice-connected, so it meets the boundary of B_r iff
  // it contains a vertex of l-infinity norm >= r.
  for (const auto& [code, label] : map.labels) {
    if (label == *l0 && linf_norm(unpack_vertex(code, map.d), map.d) >= r)
      return true;
  }
  return false;
}

i64 chemical_distance(const ClusterMap& map, const Vertex& x, const Vertex& y,
                      i64 cap) {
  if (!map.occupied(x) || !map.occupied(y)) return kUnreachable;
  if (x == y) return 0;
  const auto adj = adjacency(map.edges);
  const u64 target = pack_vertex(y, map.d);
  std::unordered_map<u64, i64> dist;
  std::deque<u64> queue;
  dist[pack_vertex(x, map.d)] = 0;
  queue.push_back(pack_vertex(x, map.d));
  while (!queue.empty()) {
    const u64 cur = queue.front();
    queue.pop_front();
    const i64 dcur = dist[cur];
    if (cap >= 0 && dcur >= cap) continue;
    const auto it = adj.find(cur);
    if (it == adj.end()) continue;
    for (const u64 nxt : it->second) {
      if (dist.contains(nxt)) continue;
      if (nxt == target) return dcur + 1;
      dist[nxt] = dcur + 1;
      queue.push_back(nxt);
    }
  }
  return kUnreachable;
}

IntrinsicBall intrinsic_ball(const ClusterMap& map, const Vertex& center,
                             Coord r) {
  IntrinsicBall ball;
  ball.center = center;
  ball.radius = r;
  if (!map.occupied(center)) return ball;
  const auto adj = adjacency(map.edges);
  std::unordered_map<u64, Coord> dist;
  std::deque<u64> queue;
  const u64 c0 = pack_vertex(center, map.d);
  dist[c0] = 0;
  queue.push_back(c0);
  ball.members.push_back(c0);
  if (r == 0) {
    ball.sphere.push_back(c0);
    return ball;
  }
  while (!queue.empty()) {
    const u64 cur = queue.front();
    queue.pop_front();
    const Coord dcur = dist[cur];
    if (linf_norm(unpack_vertex(cur, map.d), map.d) >= map.region.radius)
      ball.truncated = true;
    if (dcur == r) {
      ball.sphere.push_back(cur);
      continue;
    }
    const auto it = adj.find(cur);
    if (it == adj.end()) continue;
    for (const u64 nxt : it->second) {
      if (dist.contains(nxt)) continue;
      dist[nxt] = dcur + 1;
      ball.members.push_back(nxt);
      queue.push_back(nxt);
    }
  }
  std::sort(ball.members.begin(), ball.members.end());
  std::sort(ball.sphere.begin(), ball.sphere.end());
  return ball;
}

std::string cluster_label_csv(const ClusterMap& map, i64 max_vertices) {
  require(static_cast<i64>(map.labels.size()) <= max_vertices,
          "cluster export exceeds the debug size guard", ErrorKind::resource);
  std::vector<std::pair<u64, u64>> rows(map.labels.begin(), map.labels.end());
  std::sort(rows.begin(), rows.end());
  std::ostringstream out;
  out << "vertex,label\n";
  for (const auto& [code, label] : rows) {
    const Vertex v = unpack_vertex(code, map.d);
    for (int i = 0; i < map.d; ++i) out << (i ? " " : "") << v[i];
    out << "," << label << "\n";
  }
  return out.str();
}

}  // namespace cableperc
