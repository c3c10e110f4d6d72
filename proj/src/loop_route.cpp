#include "cableperc/loop_route.hpp"

#include <algorithm>
#include <cmath>

#include "cableperc/rng.hpp"
#include "cableperc/stats.hpp"

namespace cableperc {

std::vector<Vertex> RootedLoop::walk_vertices(int d) const {
  std::vector<Vertex> out;
  out.reserve(steps.size());
  Vertex cur = root;
  out.push_back(cur);
  for (size_t i = 0; i + 1 < steps.size(); ++i) {
    const int axis = steps[i] / 2;
    cur[axis] += (steps[i] % 2 == 0 ? 1 : -1);
    out.push_back(cur);
  }
  (void)d;
  return out;
}

int RootedLoop::multiplicity(int d) const {
  const std::vector<Vertex> w = walk_vertices(d);
  const int k = static_cast<int>(w.size());
  for (int j = k; j >= 1; --j) {
    if (k % j != 0) continue;
    const int period = k / j;
    bool ok = true;
    for (int i = 0; ok && i < k; ++i) ok = w[static_cast<size_t>(i)] ==
                                           w[static_cast<size_t>((i + period) % k)];
    if (ok) return j;
  }
  return 1;
}

namespace {

double layer_mass(const BoxSpec& region, int k, KernelMode mode,
                  const SoupKernels& kernels) {
  switch (mode) {
    case KernelMode::free_lattice:
      return loop_mass_by_length(*kernels.free_table, region.size(), k);
    case KernelMode::torus:
      return loop_mass_by_length(*kernels.torus_table, region.size(), k);
    case KernelMode::box_killed: {
      std::vector<i64> idx(static_cast<size_t>(region.size()));
      for (i64 i = 0; i < region.size(); ++i) idx[static_cast<size_t>(i)] = i;
      return loop_mass_by_length(*kernels.box_table, idx, k);
    }
  }
  return 0.0;
}

// Root distribution: uniform in free/torus mode; proportional to the
// diagonal p_k(x,x) in box-killed mode (cumulative table per k).
struct RootSampler {
  const BoxSpec& region;
  KernelMode mode;
  const SoupKernels& kernels;
  std::vector<double> cdf;  // box-killed only

  RootSampler(const BoxSpec& r, int k, KernelMode m, const SoupKernels& ks)
      : region(r), mode(m), kernels(ks) {
    if (mode == KernelMode::box_killed) {
      cdf.resize(static_cast<size_t>(region.size()));
      double acc = 0.0;
      for (i64 i = 0; i < region.size(); ++i) {
        acc += kernels.box_table->diagonal(k, i);
        cdf[static_cast<size_t>(i)] = acc;
      }
      for (double& x : cdf) x /= acc;
    }
  }

  i64 draw(rng::KeyStream& ks) const {
    if (mode != KernelMode::box_killed)
      return static_cast<i64>(ks.below(static_cast<u64>(region.size())));
    const double u = ks.u01();
    return std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
  }
};

// Closed-path step sampling for one loop; offset bookkeeping relative to
// the root keeps free-mode lookups in the canonical table.
void trace_loop(RootedLoop& loop, int d, int k, KernelMode mode,
                const SoupKernels& kernels, const BoxSpec& region,
                rng::KeyStream& ks) {
  loop.steps.resize(static_cast<size_t>(k));
  Vertex offset{};  // current - root
  Vertex cur = loop.root;
  const i64 root_idx =
      mode == KernelMode::box_killed ? region.index(loop.root) : 0;
  for (int j = k; j >= 1; --j) {
    int axis = 0, sign = 1;
    const double u = ks.u01();
    if (mode == KernelMode::free_lattice) {
      std::tie(axis, sign) = kernels.free_table->sample_step(offset, j, u);
    } else if (mode == KernelMode::torus) {
      // Direct neighbor-weight scan on the torus table.
      const TorusKernelTable& tt = *kernels.torus_table;
      double weights[2 * kMaxDim];
      double total = 0.0;
      for (int dir = 0; dir < 2 * d; ++dir) {
        Vertex w = offset;
        w[dir / 2] += (dir % 2 == 0 ? 1 : -1);
        weights[dir] = tt.p(j - 1, w);
        total += weights[dir];
      }
      double acc = 0.0;
      int dir = 0;
      for (; dir < 2 * d - 1; ++dir) {
        acc += weights[dir] / total;
        if (u <= acc) break;
      }
      axis = dir / 2;
      sign = dir % 2 == 0 ? 1 : -1;
    } else {
      BoxKernelTable& bt = *kernels.box_table;
      double weights[2 * kMaxDim];
      double total = 0.0;
      for (int dir = 0; dir < 2 * d; ++dir) {
        Vertex w = cur;
        w[dir / 2] += (dir % 2 == 0 ? 1 : -1);
        weights[dir] =
            region.contains(w) ? bt.p(j - 1, region.index(w), root_idx) : 0.0;
        total += weights[dir];
      }
      double acc = 0.0;
      int dir = 0;
      for (; dir < 2 * d - 1; ++dir) {
        acc += weights[dir] / total;
        if (u <= acc) break;
      }
      axis = dir / 2;
      sign = dir % 2 == 0 ? 1 : -1;
    }
    loop.steps[static_cast<size_t>(k - j)] =
        static_cast<u8>(2 * axis + (sign < 0 ? 1 : 0));
    offset[axis] += static_cast<Coord>(sign);
    cur[axis] += static_cast<Coord>(sign);
  }
}

}  // namespace

std::vector<RootedLoop> sample_loops_layer(const BoxSpec& root_region, int k,
                                           KernelMode mode,
                                           const SoupKernels& kernels,
                                           u64 master_seed, u64 replica,
                                           double* lambda_out) {
  require(k >= 2, "loop layer: k >= 2");
  const int d = root_region.d;
  std::vector<RootedLoop> loops;
  const double lambda = layer_mass(root_region, k, mode, kernels);
  if (lambda_out) *lambda_out = lambda;
  if (lambda <= 0.0) return loops;  // odd k on the bipartite lattice
  const u64 rs = rng::replica_seed(master_seed, replica);
  rng::KeyStream count_stream(rs, rng::TAG_SOUP_COUNT, static_cast<u64>(k));
  const u64 n = count_stream.poisson(lambda);
  loops.reserve(n);
  const RootSampler roots(root_region, k, mode, kernels);
  for (u64 i = 0; i < n; ++i) {
    RootedLoop loop;
    loop.id = (static_cast<u64>(k) << 32) | i;
    rng::KeyStream root_stream(rs, rng::TAG_SOUP_ROOT, static_cast<u64>(k), i);
    loop.root = root_region.vertex(roots.draw(root_stream));
    rng::KeyStream step_stream(rs, rng::TAG_SOUP_STEP, static_cast<u64>(k), i);
    trace_loop(loop, d, k, mode, kernels, root_region, step_stream);
    loops.push_back(std::move(loop));
  }
  return loops;
}

LoopSample sample_loop_soup(const BoxSpec& root_region, int k_max,
                            KernelMode mode, const SoupKernels& kernels,
                            u64 master_seed, u64 replica) {
  require(k_max >= 2, "sample_loop_soup: k_max >= 2");
  switch (mode) {
    case KernelMode::free_lattice:
      require(kernels.free_table && kernels.free_table->k_max() >= k_max,
              "sample_loop_soup: free kernel table missing lengths up to " +
                  std::to_string(k_max));
      break;
    case KernelMode::box_killed:
      require(kernels.box_table && kernels.box_table->k_max() >= k_max,
              "sample_loop_soup: box kernel table missing lengths up to " +
                  std::to_string(k_max));
      break;
    case KernelMode::torus:
      require(kernels.torus_table,
              "sample_loop_soup: torus kernel table required");
      break;
  }
  LoopSample sample;
  sample.d = root_region.d;
  sample.mode = mode;
  sample.root_region = root_region;
  sample.sample_region = mode == KernelMode::box_killed
                             ? root_region
                             : root_region.padded(static_cast<Coord>(k_max / 2));
  sample.k_max = k_max;
  sample.master_seed = master_seed;
  sample.replica = replica;
  for (int k = 2; k <= k_max; ++k) {
    auto layer =
        sample_loops_layer(root_region, k, mode, kernels, master_seed, replica);
    for (auto& loop : layer) sample.loops.push_back(std::move(loop));
  }
  return sample;
}

void lift_local_times(LoopSample& sample, const PointLoopLaw& law) {
  const u64 rs = rng::replica_seed(sample.master_seed, sample.replica);
  const BoxSpec& region = sample.sample_region;
  sample.point_law = law;
  sample.fundamental_times.assign(static_cast<size_t>(region.size()), 0.0);
  sample.point_times.assign(static_cast<size_t>(region.size()), 0.0);
  for (const RootedLoop& loop : sample.loops) {
    const auto verts = loop.walk_vertices(sample.d);
    for (size_t visit = 0; visit < verts.size(); ++visit) {
      const double t =
          rng::keyed_exponential(rs, rng::TAG_VISIT_TIME, loop.id, visit);
      sample.fundamental_times[static_cast<size_t>(region.index(
          verts[visit]))] += t;
    }
  }
  for (i64 i = 0; i < region.size(); ++i) {
    const u64 vc = pack_vertex(region.vertex(i), sample.d);
    rng::KeyStream ks(rs, rng::TAG_POINT_TIME, vc);
    sample.point_times[static_cast<size_t>(i)] = ks.gamma(law.shape, law.scale);
  }
  sample.has_local_times = true;
}

ClusterMap cable_gluing(const LoopSample& sample) {
  require(sample.has_local_times, "cable_gluing: local times missing");
  const u64 rs = rng::replica_seed(sample.master_seed, sample.replica);
  const BoxSpec& region = sample.sample_region;
  const int d = sample.d;

  std::vector<u64> occupied;
  occupied.reserve(static_cast<size_t>(region.size()));
  for (i64 i = 0; i < region.size(); ++i)
    if (sample.total_time(i) > 0.0)
      occupied.push_back(pack_vertex(region.vertex(i), d));

  std::vector<std::pair<u64, u64>> edges;
  for (const RootedLoop& loop : sample.loops) {
    const auto verts = loop.walk_vertices(d);
    for (size_t i = 0; i < verts.size(); ++i) {
      const Vertex& a = verts[i];
      const Vertex& b = verts[(i + 1) % verts.size()];
      edges.emplace_back(pack_vertex(a, d), pack_vertex(b, d));
    }
  }
  // Gluing layer: every region edge with positive occupation at both ends,
  // opened with the |phi| = sqrt(2 L) bridge law.
  for (i64 i = 0; i < region.size(); ++i) {
    const Vertex v = region.vertex(i);
    const double lv = sample.total_time(i);
    if (lv <= 0.0) continue;
    const u64 vc = pack_vertex(v, d);
    for (int axis = 0; axis < d; ++axis) {
      Vertex w = v;
      w[axis] += 1;
      if (!region.contains(w)) continue;
      const double lw = sample.total_time(region.index(w));
      if (lw <= 0.0) continue;
      const double p = 1.0 - std::exp(-2.0 * std::sqrt(lv * lw) / d);
      const double u =
          rng::to_u01(rng::keyed_u64(rs, rng::TAG_GLUE_EDGE,
                                     edge_code(vc, axis)));
      if (u < p) edges.emplace_back(vc, pack_vertex(w, d));
    }
  }
  ClusterMap map = build_cluster_map(d, region, occupied, std::move(edges));
  for (const RootedLoop& loop : sample.loops) {
    const auto label = map.label_of(loop.root);
    if (label) map.loop_members[*label].push_back(loop.id);
  }
  return map;
}

LoopSample delete_large_loops(const LoopSample& sample, double cutoff) {
  require(cutoff >= 0.0, "delete_large_loops: cutoff >= 0");
  LoopSample out = sample;
  out.loops.clear();
  for (const RootedLoop& loop : sample.loops)
    if (loop.length() <= cutoff) out.loops.push_back(loop);
  if (sample.has_local_times) {
    // Re-lift: keyed visit times make this a pure filter of the originals.
    out.has_local_times = false;
    lift_local_times(out, sample.point_law);
  }
  return out;
}

ClusterMap positive_part(const ClusterMap& map, u64 master_seed, u64 replica) {
  const u64 rs = rng::replica_seed(master_seed, replica);
  ClusterMap out;
  out.d = map.d;
  out.region = map.region;
  auto cluster_sign = [&](u64 label) {
    return (rng::keyed_u64(rs, rng::TAG_CLUSTER_SIGN, label) & 1) == 0;
  };
  for (const auto& [code, label] : map.labels)
    if (cluster_sign(label)) out.labels.emplace(code, label);
  for (const auto& [a, b] : map.edges) {
    const auto it = map.labels.find(a);
    if (it != map.labels.end() && cluster_sign(it->second))
      out.edges.emplace_back(a, b);
  }
  for (const auto& [label, loops] : map.loop_members)
    if (cluster_sign(label)) out.loop_members.emplace(label, loops);
  return out;
}

TruncationReport truncation_sweep(
    const BoxSpec& root_region, const std::vector<int>& k_grid,
    KernelMode mode, const SoupKernels& kernels, u64 master_seed, u64 replicas,
    const std::function<double(const LoopSample&, const ClusterMap&)>&
        observable) {
  require(!k_grid.empty(), "truncation_sweep: empty grid");
  for (size_t i = 1; i < k_grid.size(); ++i)
    require(k_grid[i] > k_grid[i - 1], "truncation_sweep: grid not increasing");
  const int k_top = k_grid.back();
  std::vector<std::vector<double>> values(k_grid.size());
  for (u64 rep = 0; rep < replicas; ++rep) {
    const LoopSample full =
        sample_loop_soup(root_region, k_top, mode, kernels, master_seed, rep);
    for (size_t gi = 0; gi < k_grid.size(); ++gi) {
      LoopSample sub = delete_large_loops(full, k_grid[gi]);
      if (!sub.has_local_times) lift_local_times(sub);
      const ClusterMap map = cable_gluing(sub);
      values[gi].push_back(observable(sub, map));
    }
  }
  TruncationReport rep;
  double prev_mean = 0.0;
  for (size_t gi = 0; gi < k_grid.size(); ++gi) {
    const auto ms = stats::mean_se(values[gi]);
    TruncationRow row;
    row.k_max = k_grid[gi];
    row.mean = ms.mean;
    row.se = ms.se;
    row.diff_prev = gi == 0 ? 0.0 : ms.mean - prev_mean;
    row.accepted = gi > 0 && std::fabs(row.diff_prev) <= 0.5 * ms.se;
    prev_mean = ms.mean;
    rep.rows.push_back(row);
  }
  rep.chosen_k = k_grid.back();
  for (const auto& row : rep.rows)
    if (row.accepted) {
      rep.chosen_k = row.k_max;
      break;
    }
  return rep;
}

}  // namespace cableperc
