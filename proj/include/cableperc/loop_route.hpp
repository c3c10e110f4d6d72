#pragma once

// The loop-soup side of the simulation: Poisson sampling of rooted discrete
// loops at intensity alpha = 1/2, exponential local-time lifts, point-loop
// occupation, and cable gluing into clusters.
//
// All randomness is keyed by (master seed, replica, tag, loop/vertex/edge
// key), so a filtered sub-sample (delete_large_loops) replays local times
// and gluing draws identically: deletion is a pure filter, pathwise coupled
// to the full sample.

#include <functional>
#include <optional>

#include "cableperc/cluster_geometry.hpp"
#include "cableperc/walk_oracle.hpp"

namespace cableperc {

struct RootedLoop {
  u64 id = 0;
  Vertex root{};
  std::vector<u8> steps;  // dir code: axis*2 + (1 if negative step)

  int length() const { return static_cast<int>(steps.size()); }
  /// Vertices visited, in walk order (k entries, root first).
  std::vector<Vertex> walk_vertices(int d) const;
  /// Rotational multiplicity J of the vertex word; J divides the length.
  int multiplicity(int d) const;
};

struct PointLoopLaw {
  double shape = 0.5;  // Gamma(1/2, 1): the alpha = 1/2 trivial-loop mass
  double scale = 1.0;
};

struct LoopSample {
  int d = 3;
  KernelMode mode = KernelMode::free_lattice;
  BoxSpec root_region{};    // where roots were drawn
  BoxSpec sample_region{};  // root region padded by floor(k_max/2)
  int k_max = 0;
  u64 master_seed = 0;
  u64 replica = 0;
  std::vector<RootedLoop> loops;

  // Filled by lift_local_times (dense over sample_region):
  bool has_local_times = false;
  PointLoopLaw point_law{};
  std::vector<double> fundamental_times;  // sum of Exp(1) per loop visit
  std::vector<double> point_times;        // iid Gamma(shape, scale)

  double total_time(i64 region_idx) const {
    return fundamental_times[static_cast<size_t>(region_idx)] +
           point_times[static_cast<size_t>(region_idx)];
  }
};

/// Kernel context for the sampler; exactly one member is used per mode.
struct SoupKernels {
  const FreeKernelTable* free_table = nullptr;
  BoxKernelTable* box_table = nullptr;       // box == root region
  const TorusKernelTable* torus_table = nullptr;
};

/// Poisson loop soup on the given root region: for each length k in
/// {2..k_max}, N_k ~ Poisson(Lambda_k(region)) loops, each rooted with
/// probability proportional to p_k(x,x) and traced by the kernel bridge.
LoopSample sample_loop_soup(const BoxSpec& root_region, int k_max,
                            KernelMode mode, const SoupKernels& kernels,
                            u64 master_seed, u64 replica);

/// One length layer (exposed for calibration tests).
std::vector<RootedLoop> sample_loops_layer(const BoxSpec& root_region, int k,
                                           KernelMode mode,
                                           const SoupKernels& kernels,
                                           u64 master_seed, u64 replica,
                                           double* lambda_out = nullptr);

/// Adds exponential visit times for fundamental loops and iid point-loop
/// occupation at every vertex of the sample region.
void lift_local_times(LoopSample& sample, const PointLoopLaw& law = {});

/// Loop-resolved clusters: loops merge where their vertex sets intersect
/// (via their traversed edges), and every lattice edge {x,y} of the sample
/// region glues independently with probability 1 - exp(-2 sqrt(L_x L_y)/d).
/// Adjacency = traversed edges + opened gluing edges; labels cover every
/// occupied vertex (point loops occupy all of them a.s.).
ClusterMap cable_gluing(const LoopSample& sample);

/// Loops with length <= cutoff, sharing ids and RNG keys (pure filter).
LoopSample delete_large_loops(const LoopSample& sample, double cutoff);

/// Independent per-cluster sign at intensity 1/2 (the isomorphism's cluster
/// signs); returns labels of positive clusters only.
ClusterMap positive_part(const ClusterMap& map, u64 master_seed, u64 replica);

// ---- truncation sweep -------------------------------------------------------

struct TruncationRow {
  int k_max;
  double mean;
  double se;
  double diff_prev;  // mean(K_i) - mean(K_{i-1})
  bool accepted;     // |diff| <= se/2
};

struct TruncationReport {
  std::vector<TruncationRow> rows;
  int chosen_k = 0;  // first accepted K, or the largest K in the grid
};

/// Runs `observable` at each K in the increasing grid over coupled samples
/// (one soup per replica at max K; smaller K evaluate the filtered
/// sub-sample). An experiment's K is accepted when the last difference is
/// below half its Monte Carlo standard error.
TruncationReport truncation_sweep(
    const BoxSpec& root_region, const std::vector<int>& k_grid,
    KernelMode mode, const SoupKernels& kernels, u64 master_seed, u64 replicas,
    const std::function<double(const LoopSample&, const ClusterMap&)>&
        observable);

}  // namespace cableperc
