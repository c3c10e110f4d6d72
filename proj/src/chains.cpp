#include "cableperc/chains.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

namespace cableperc {

namespace {

u64 edge_code_between(u64 a, u64 b, int d) {
  const Vertex va = unpack_vertex(a, d);
  const Vertex vb = unpack_vertex(b, d);
  for (int axis = 0; axis < d; ++axis) {
    if (vb[axis] == va[axis] + 1) return edge_code(a, axis);
    if (va[axis] == vb[axis] + 1) return edge_code(b, axis);
  }
  throw Error(ErrorKind::validation, "edge_code_between: not adjacent");
}

}  // namespace

bool GluedObject::has_vertex(u64 code) const {
  return std::binary_search(vertices.begin(), vertices.end(), code);
}

bool GluedObject::has_edge(u64 ecode) const {
  return std::binary_search(edge_set.begin(), edge_set.end(), ecode);
}

GluedSystem build_glued_system(const LoopSample& sample,
                               const std::vector<u64>& point_vertices,
                               const std::vector<std::pair<u64, u64>>&
                                   gluing_edges) {
  GluedSystem sys;
  sys.d = sample.d;
  // Fundamental loops grouped by identical VRange.
  std::map<std::vector<u64>, GluedObject> groups;
  for (const RootedLoop& loop : sample.loops) {
    std::vector<u64> vrange;
    std::vector<u64> edges;
    const auto verts = loop.walk_vertices(sample.d);
    for (size_t i = 0; i < verts.size(); ++i) {
      vrange.push_back(pack_vertex(verts[i], sample.d));
      edges.push_back(edge_code_between(
          pack_vertex(verts[i], sample.d),
          pack_vertex(verts[(i + 1) % verts.size()], sample.d), sample.d));
    }
    std::sort(vrange.begin(), vrange.end());
    vrange.erase(std::unique(vrange.begin(), vrange.end()), vrange.end());
    auto& obj = groups[vrange];
    if (obj.vertices.empty()) {
      obj.type = GluedType::loop;
      obj.id = loop.id;
      obj.vertices = vrange;
      obj.edge_set = std::move(edges);
    } else {
      obj.id = std::min(obj.id, loop.id);
      obj.edge_set.insert(obj.edge_set.end(), edges.begin(), edges.end());
    }
  }
  std::vector<GluedObject> loops;
  for (auto& [key, obj] : groups) {
    std::sort(obj.edge_set.begin(), obj.edge_set.end());
    obj.edge_set.erase(std::unique(obj.edge_set.begin(), obj.edge_set.end()),
                       obj.edge_set.end());
    loops.push_back(std::move(obj));
  }
  std::sort(loops.begin(), loops.end(),
            [](const GluedObject& a, const GluedObject& b) { return a.id < b.id; });
  for (auto& obj : loops) sys.objects.push_back(std::move(obj));

  std::vector<u64> pts = point_vertices;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  for (const u64 code : pts) {
    GluedObject obj;
    obj.type = GluedType::point;
    obj.id = code;
    obj.vertices = {code};
    sys.objects.push_back(std::move(obj));
  }

  std::vector<std::pair<u64, u64>> glue = gluing_edges;
  std::sort(glue.begin(), glue.end());
  glue.erase(std::unique(glue.begin(), glue.end()), glue.end());
  for (const auto& [a, b] : glue) {
    GluedObject obj;
    obj.type = GluedType::edge;
    obj.id = edge_code_between(a, b, sys.d);
    obj.vertices = {std::min(a, b), std::max(a, b)};
    obj.edge_set = {obj.id};
    sys.objects.push_back(std::move(obj));
  }

  for (int i = 0; i < sys.size(); ++i) {
    for (const u64 v : sys.at(i).vertices) sys.by_vertex[v].push_back(i);
    for (const u64 e : sys.at(i).edge_set) sys.by_edge[e].push_back(i);
  }
  return sys;
}

bool LatticePath::self_avoiding(int d) const {
  std::vector<u64> codes;
  for (const Vertex& v : vertices) codes.push_back(pack_vertex(v, d));
  std::sort(codes.begin(), codes.end());
  return std::adjacent_find(codes.begin(), codes.end()) == codes.end();
}

void LatticePath::validate(int d) const {
  require(!vertices.empty(), "lattice path: empty");
  for (size_t i = 0; i + 1 < vertices.size(); ++i)
    require(l1_adjacent(vertices[i], vertices[i + 1], d),
            "lattice path: vertices " + std::to_string(i) + "," +
                std::to_string(i + 1) + " not adjacent");
}

bool GluedChain::is_simple() const {
  std::vector<int> ids = objects;
  std::sort(ids.begin(), ids.end());
  return std::adjacent_find(ids.begin(), ids.end()) == ids.end();
}

namespace {

// Shared machinery for the sequence rules. Path edges are indexed 0..m-1;
// a segmentation state is (edge position, whether the last member was an
// edge-type object).
struct SeqContext {
  const GluedSystem& sys;
  const LatticePath& path;
  std::vector<u64> vcodes;  // per path vertex
  std::vector<u64> ecodes;  // per path edge

  SeqContext(const GluedSystem& s, const LatticePath& p) : sys(s), path(p) {
    p.validate(s.d);
    for (const Vertex& v : p.vertices) vcodes.push_back(pack_vertex(v, s.d));
    for (size_t i = 0; i + 1 < p.vertices.size(); ++i)
      ecodes.push_back(edge_code_between(vcodes[i], vcodes[i + 1], s.d));
  }

  // Longest run of path edges starting at `pos` covered by object `o`.
  int run_length(int o, int pos) const {
    const GluedObject& obj = sys.at(o);
    int q = pos;
    while (q < static_cast<int>(ecodes.size()) &&
           obj.has_edge(ecodes[static_cast<size_t>(q)]))
      ++q;
    return q - pos;
  }
};

// Search for a valid segmentation over the allowed objects. Greedy order
// (longest run first, then smallest id) with backtracking and a visited-set
// memo, so it is complete. Returns breakpoints and members.
std::optional<GluedChain> derive(const SeqContext& ctx,
                                 const std::vector<char>& allowed) {
  const int m = static_cast<int>(ctx.ecodes.size());
  // state: pos * 2 + last_was_edge
  std::vector<char> dead(static_cast<size_t>(2 * (m + 1)), 0);
  GluedChain chain;

  std::function<bool(int, bool)> go = [&](int pos, bool last_edge) -> bool {
    if (pos == m) {
      if (!last_edge) return true;
      // Append a zero-length non-edge member at the endpoint.
      for (const int o : ctx.sys.by_vertex.contains(ctx.vcodes.back())
                             ? ctx.sys.by_vertex.at(ctx.vcodes.back())
                             : std::vector<int>{}) {
        if (!allowed[static_cast<size_t>(o)]) continue;
        if (ctx.sys.at(o).type == GluedType::edge) continue;
        chain.objects.push_back(o);
        chain.breaks.push_back(pos);
        return true;
      }
      return false;
    }
    const size_t key = static_cast<size_t>(2 * pos + (last_edge ? 1 : 0));
    if (dead[key]) return false;
    const u64 here = ctx.vcodes[static_cast<size_t>(pos)];
    // Candidates: objects covering the next edge, by run length then id.
    std::vector<std::pair<int, int>> cands;  // (-run, object)
    const auto it = ctx.sys.by_edge.find(ctx.ecodes[static_cast<size_t>(pos)]);
    if (it != ctx.sys.by_edge.end()) {
      for (const int o : it->second) {
        if (!allowed[static_cast<size_t>(o)]) continue;
        cands.emplace_back(-ctx.run_length(o, pos), o);
      }
    }
    std::sort(cands.begin(), cands.end());
    for (const auto& [neg_run, o] : cands) {
      const bool is_edge = ctx.sys.at(o).type == GluedType::edge;
      if (is_edge && last_edge) continue;  // needs a bridge, handled below
      chain.objects.push_back(o);
      chain.breaks.push_back(pos - neg_run);
      if (go(pos - neg_run, is_edge)) return true;
      chain.objects.pop_back();
      chain.breaks.pop_back();
    }
    // Zero-length bridge: a non-edge member at the current vertex lets an
    // edge-type member follow an edge-type member.
    if (last_edge) {
      const auto vit = ctx.sys.by_vertex.find(here);
      if (vit != ctx.sys.by_vertex.end()) {
        for (const int o : vit->second) {
          if (!allowed[static_cast<size_t>(o)]) continue;
          if (ctx.sys.at(o).type == GluedType::edge) continue;
          chain.objects.push_back(o);
          chain.breaks.push_back(pos);
          if (go(pos, false)) return true;
          chain.objects.pop_back();
          chain.breaks.pop_back();
          break;  // any one non-edge bridge is as good as another here
        }
      }
    }
    dead[key] = 1;
    return false;
  };

  // A single-vertex path is covered by one non-edge member at the vertex.
  if (m == 0) {
    const auto vit = ctx.sys.by_vertex.find(ctx.vcodes[0]);
    if (vit != ctx.sys.by_vertex.end()) {
      for (const int o : vit->second) {
        if (!allowed[static_cast<size_t>(o)]) continue;
        if (ctx.sys.at(o).type == GluedType::edge) continue;
        chain.objects.push_back(o);
        chain.breaks.push_back(0);
        return chain;
      }
    }
    return std::nullopt;
  }
  if (!go(0, /*last_edge=*/true)) return std::nullopt;
  return chain;
}

}  // namespace

bool valid_sequence(const GluedSystem& sys, const LatticePath& path,
                    const GluedChain& chain) {
  if (chain.objects.empty() || chain.objects.size() != chain.breaks.size())
    return false;
  const SeqContext ctx(sys, path);
  const int m = static_cast<int>(ctx.ecodes.size());
  int pos = 0;
  bool last_edge = false;
  for (size_t i = 0; i < chain.objects.size(); ++i) {
    const GluedObject& obj = sys.at(chain.objects[i]);
    const int end = chain.breaks[i];
    if (end < pos || end > m) return false;
    const bool is_edge = obj.type == GluedType::edge;
    // Edge-type members never sit first or follow another edge member.
    if (is_edge && (i == 0 || last_edge)) return false;
    // The member must contain the segment's start vertex and its edges.
    if (!obj.has_vertex(ctx.vcodes[static_cast<size_t>(pos)])) return false;
    for (int e = pos; e < end; ++e)
      if (!obj.has_edge(ctx.ecodes[static_cast<size_t>(e)])) return false;
    pos = end;
    last_edge = is_edge;
  }
  if (pos != m) return false;
  if (last_edge) return false;  // edge-type member last
  // Last member contains the endpoint.
  return sys.at(chain.objects.back())
      .has_vertex(ctx.vcodes[static_cast<size_t>(m)]);
}

bool coverable(const GluedSystem& sys, const LatticePath& path,
               const std::vector<char>& allowed) {
  const SeqContext ctx(sys, path);
  return derive(ctx, allowed).has_value();
}

GluedChain loop_sequence_of_path(const GluedSystem& sys,
                                 const LatticePath& path) {
  const SeqContext ctx(sys, path);
  std::vector<char> allowed(static_cast<size_t>(sys.size()), 1);
  auto chain = derive(ctx, allowed);
  if (!chain) {
    // Name the first edge no object covers (or the first position where the
    // interface rules fail).
    for (size_t e = 0; e < ctx.ecodes.size(); ++e) {
      const auto it = sys.by_edge.find(ctx.ecodes[e]);
      if (it == sys.by_edge.end() || it->second.empty())
        throw Error(ErrorKind::validation,
                    "loop_sequence_of_path: edge " + std::to_string(e) +
                        " of the path is uncovered");
    }
    throw Error(ErrorKind::validation,
                "loop_sequence_of_path: no valid segmentation (edge-type "
                "interface rules cannot be satisfied)");
  }
  return *chain;
}

GluedChain minimal_sequence(const GluedSystem& sys, const LatticePath& path,
                            const GluedChain& chain) {
  const SeqContext ctx(sys, path);
  require(valid_sequence(sys, path, chain),
          "minimal_sequence: input chain is not a sequence of the path");
  std::vector<char> allowed(static_cast<size_t>(sys.size()), 0);
  for (const int o : chain.objects) allowed[static_cast<size_t>(o)] = 1;
  // The paper's pruning: drop members one by one when the path stays
  // realizable without them.
  for (const int o : chain.objects) {
    if (!allowed[static_cast<size_t>(o)]) continue;  // duplicate member
    allowed[static_cast<size_t>(o)] = 0;
    if (!derive(ctx, allowed)) allowed[static_cast<size_t>(o)] = 1;
  }
  auto reduced = derive(ctx, allowed);
  require(reduced.has_value(), "minimal_sequence: reduction lost the path");
  // Minimality: no remaining member is removable.
  std::vector<char> used(static_cast<size_t>(sys.size()), 0);
  for (const int o : reduced->objects) used[static_cast<size_t>(o)] = 1;
  int set_size = 0;
  for (int o = 0; o < sys.size(); ++o) {
    if (!used[static_cast<size_t>(o)]) continue;
    ++set_size;
    used[static_cast<size_t>(o)] = 0;
    require(!derive(ctx, used).has_value(),
            "minimal_sequence: result is not minimal", ErrorKind::strict_check);
    used[static_cast<size_t>(o)] = 1;
  }
  require(set_size <= 3 * std::max(1, path.edge_count()),
          "minimal_sequence: |Set| exceeds 3|path|", ErrorKind::strict_check);
  return *reduced;
}

namespace {

bool objects_adjacent(const GluedSystem& sys, int a, int b) {
  const GluedObject& oa = sys.at(a);
  const GluedObject& ob = sys.at(b);
  if (oa.type == GluedType::edge && ob.type == GluedType::edge) return false;
  const auto& small = oa.vertices.size() <= ob.vertices.size() ? oa : ob;
  const auto& big = oa.vertices.size() <= ob.vertices.size() ? ob : oa;
  for (const u64 v : small.vertices)
    if (big.has_vertex(v)) return true;
  return false;
}

bool touches(const GluedSystem& sys, int o, const std::vector<u64>& set) {
  for (const u64 v : set)
    if (sys.at(o).has_vertex(v)) return true;
  return false;
}

}  // namespace

GluedChain simplify_chain(const GluedSystem& sys, const GluedChain& chain,
                          const std::vector<u64>& A,
                          const std::vector<u64>& B) {
  std::vector<int> members = chain.objects;
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  // BFS in the intersection graph restricted to Set(chain); endpoints must
  // be non-edge members touching A / B.
  std::unordered_map<int, int> parent;
  std::deque<int> queue;
  for (const int o : members) {
    if (sys.at(o).type == GluedType::edge) continue;
    if (touches(sys, o, A)) {
      parent.emplace(o, -1);
      queue.push_back(o);
    }
  }
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    if (sys.at(cur).type != GluedType::edge && touches(sys, cur, B)) {
      GluedChain out;
      for (int o = cur; o != -1; o = parent.at(o)) out.objects.push_back(o);
      std::reverse(out.objects.begin(), out.objects.end());
      out.breaks.assign(out.objects.size(), 0);  // no path segmentation here
      return out;
    }
    for (const int nxt : members) {
      if (parent.contains(nxt) || nxt == cur) continue;
      if (objects_adjacent(sys, cur, nxt)) {
        parent.emplace(nxt, cur);
        queue.push_back(nxt);
      }
    }
  }
  throw Error(ErrorKind::validation,
              "simplify_chain: endpoints not connected through Set(chain)");
}

bool valid_simple_chain(const GluedSystem& sys, const GluedChain& chain,
                        const std::vector<u64>& A, const std::vector<u64>& B) {
  if (chain.objects.empty() || !chain.is_simple()) return false;
  if (sys.at(chain.objects.front()).type == GluedType::edge) return false;
  if (sys.at(chain.objects.back()).type == GluedType::edge) return false;
  if (!touches(sys, chain.objects.front(), A)) return false;
  if (!touches(sys, chain.objects.back(), B)) return false;
  for (size_t i = 0; i + 1 < chain.objects.size(); ++i)
    if (!objects_adjacent(sys, chain.objects[i], chain.objects[i + 1]))
      return false;
  return true;
}

GeodesicResult simple_geodesic_exact(const GluedSystem& sys, const Vertex& x,
                                     const Vertex& y,
                                     const GeodesicLimits& limits) {
  require(sys.size() <= limits.max_objects,
          "simple_geodesic_exact: fragment exceeds the object limit; use the "
          "sampling estimators instead",
          ErrorKind::resource);
  std::vector<u64> all_vertices;
  for (const auto& obj : sys.objects)
    all_vertices.insert(all_vertices.end(), obj.vertices.begin(),
                        obj.vertices.end());
  std::sort(all_vertices.begin(), all_vertices.end());
  all_vertices.erase(std::unique(all_vertices.begin(), all_vertices.end()),
                     all_vertices.end());
  require(static_cast<int>(all_vertices.size()) <= limits.max_vertices,
          "simple_geodesic_exact: fragment exceeds the vertex limit; use the "
          "sampling estimators instead",
          ErrorKind::resource);

  GeodesicResult res;
  const u64 xc = pack_vertex(x, sys.d);
  const u64 yc = pack_vertex(y, sys.d);
  const auto vid = [&](u64 code) {
    return static_cast<int>(std::lower_bound(all_vertices.begin(),
                                             all_vertices.end(), code) -
                            all_vertices.begin());
  };
  if (!std::binary_search(all_vertices.begin(), all_vertices.end(), xc) ||
      !std::binary_search(all_vertices.begin(), all_vertices.end(), yc))
    return res;
  const int nv = static_cast<int>(all_vertices.size());

  // Ordinary geodesic: BFS over the union of all object edges.
  {
    std::vector<std::vector<int>> adj(static_cast<size_t>(nv));
    for (const auto& obj : sys.objects)
      for (const u64 e : obj.edge_set) {
        const u64 lower = e >> 3;
        const u64 upper = step_code(lower, static_cast<int>(e & 7), +1);
        adj[static_cast<size_t>(vid(lower))].push_back(vid(upper));
        adj[static_cast<size_t>(vid(upper))].push_back(vid(lower));
      }
    std::vector<i64> dist(static_cast<size_t>(nv), kUnreachable);
    std::deque<int> queue;
    dist[static_cast<size_t>(vid(xc))] = 0;
    queue.push_back(vid(xc));
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      for (const int nxt : adj[static_cast<size_t>(cur)])
        if (dist[static_cast<size_t>(nxt)] < 0) {
          dist[static_cast<size_t>(nxt)] = dist[static_cast<size_t>(cur)] + 1;
          queue.push_back(nxt);
        }
    }
    res.distance = dist[static_cast<size_t>(vid(yc))];
  }

  // Simple geodesic: 0-1 BFS over (object, vertex, used-object mask). Moves
  // along the current object's edges cost 1; switching to an unused object
  // at a shared vertex costs 0 (edge-type may not follow edge-type).
  const int no = sys.size();
  const u32 nmask = u32{1} << no;
  std::vector<i64> dist(static_cast<size_t>(no) * nv * nmask, kUnreachable);
  const auto sid = [&](int o, int v, u32 mask) {
    return (static_cast<size_t>(mask) * no + static_cast<size_t>(o)) * nv +
           static_cast<size_t>(v);
  };
  std::deque<std::tuple<int, int, u32>> dq;
  for (int o = 0; o < no; ++o) {
    if (sys.at(o).type == GluedType::edge) continue;
    if (!sys.at(o).has_vertex(xc)) continue;
    const u32 mask = u32{1} << o;
    dist[sid(o, vid(xc), mask)] = 0;
    dq.emplace_back(o, vid(xc), mask);
  }
  while (!dq.empty()) {
    const auto [o, v, mask] = dq.front();
    dq.pop_front();
    const i64 dcur = dist[sid(o, v, mask)];
    if (all_vertices[static_cast<size_t>(v)] == yc &&
        sys.at(o).type != GluedType::edge) {
      if (res.simple_distance < 0 || dcur < res.simple_distance)
        res.simple_distance = dcur;
      continue;
    }
    // Switch objects at the shared vertex (cost 0).
    const auto vit = sys.by_vertex.find(all_vertices[static_cast<size_t>(v)]);
    if (vit != sys.by_vertex.end()) {
      for (const int o2 : vit->second) {
        if (mask & (u32{1} << o2)) continue;
        if (sys.at(o).type == GluedType::edge &&
            sys.at(o2).type == GluedType::edge)
          continue;
        const u32 mask2 = mask | (u32{1} << o2);
        if (dist[sid(o2, v, mask2)] >= 0 && dist[sid(o2, v, mask2)] <= dcur)
          continue;
        dist[sid(o2, v, mask2)] = dcur;
        dq.emplace_front(o2, v, mask2);
      }
    }
    // Walk the current object's edges (cost 1).
    const u64 vcode = all_vertices[static_cast<size_t>(v)];
    const GluedObject& obj = sys.at(o);
    for (const u64 e : obj.edge_set) {
      const u64 lower = e >> 3;
      const u64 upper = step_code(lower, static_cast<int>(e & 7), +1);
      u64 to = 0;
      if (lower == vcode)
        to = upper;
      else if (upper == vcode)
        to = lower;
      else
        continue;
      const int v2 = vid(to);
      if (dist[sid(o, v2, mask)] >= 0 && dist[sid(o, v2, mask)] <= dcur + 1)
        continue;
      dist[sid(o, v2, mask)] = dcur + 1;
      dq.emplace_back(o, v2, mask);
    }
  }
  return res;
}

std::string chain_trace(const GluedSystem& sys, const GluedChain& chain) {
  std::ostringstream out;
  int pos = 0;
  for (size_t i = 0; i < chain.objects.size(); ++i) {
    const GluedObject& obj = sys.at(chain.objects[i]);
    const char* kind = obj.type == GluedType::loop
                           ? "loop"
                           : (obj.type == GluedType::point ? "point" : "edge");
    out << "edges [" << pos << "," << chain.breaks[i] << ") -> " << kind
        << " object " << obj.id << "\n";
    pos = chain.breaks[i];
  }
  return out.str();
}

}  // namespace cableperc
