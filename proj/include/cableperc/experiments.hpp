#pragma once

// Monte Carlo estimators for the percolation observables: one-arm, two-point,
// local connectivity, chemical distance, intrinsic one-arm and the
// large-loop-deletion (Werner) gap. Replica-parallel with a deterministic
// reduction; every estimator is bit-reproducible given (master seed, config)
// regardless of the thread budget.

#include <string>

#include "cableperc/chains.hpp"
#include "cableperc/gff_route.hpp"
#include "cableperc/loop_route.hpp"
#include "cableperc/stats.hpp"

namespace cableperc {

enum class Route { gff, loops };

inline const char* route_name(Route r) {
  return r == Route::gff ? "gff" : "loops";
}

enum class EngineKind { auto_pick, materialized, sparse };

struct ExperimentConfig {
  int d = 3;
  Route route = Route::loops;
  Coord box_radius = 3;
  int k_max = 8;                    // loop-route length truncation
  KernelMode loop_mode = KernelMode::free_lattice;
  EngineKind engine = EngineKind::auto_pick;
  double margin_fraction = 0.5;     // observables confined to radius*fraction
  u64 replicas = 1000;
  u64 master_seed = 1;
  int threads = 0;                  // 0: hardware; THREADS env overrides
  PointLoopLaw point_law{};
  bool keep_replica_data = false;   // retain per-replica values for bootstrap

  void validate() const;
  Coord margin_reach() const {
    return static_cast<Coord>(box_radius * margin_fraction + 1e-9);
  }
};

struct EstimateRecord {
  std::string name;
  double param = 0.0;          // the grid value (r, |x|, or b)
  std::string params_json;
  double estimate = 0.0;
  double se = 0.0;
  u64 n = 0;                   // replicas
  u64 events = 0;              // conditioning denominator where applicable
  bool insufficient_data = false;  // events < 30 on a conditional estimate
  u64 seed = 0;
  std::string route;
  std::string truncation_note;
  std::vector<double> replica_values;  // kept when keep_replica_data
};

// ---- per-replica origin-cluster view ----------------------------------------

struct ClusterView {
  bool occupied = false;   // origin occupied
  bool positive = false;   // the cluster's isomorphism sign
  std::vector<u64> members;
  std::vector<std::pair<u64, u64>> adjacency;  // covered edges, both ends in cluster
  Coord max_norm = 0;
  bool truncated = false;  // cluster touched the configuration boundary
  BoxSpec config_region{};
};

/// One replica generator. `cutoff < 0` means the unfiltered configuration;
/// a nonnegative cutoff keeps loops of length <= cutoff with all shared
/// randomness replayed (pathwise coupling).
class ReplicaEngine {
 public:
  virtual ~ReplicaEngine() = default;
  virtual ClusterView run(u64 replica, double cutoff) = 0;
  virtual std::string describe() const = 0;
};

/// Engine picked from the config: gff (exact/heat-bath field), materializing
/// loop engine for small volumes, or the revealed-on-demand loop engine for
/// large ones. Each thread owns one instance.
std::unique_ptr<ReplicaEngine> make_engine(const ExperimentConfig& cfg);

// ---- estimators -------------------------------------------------------------

enum class ChemicalMode { point, boundary };

/// Several observables evaluated on one shared replica pass (one engine.run
/// per replica). Empty members are skipped.
struct CombinedRequest {
  std::vector<Coord> pi1_r;
  std::vector<Coord> two_point_x;
  bool two_point_orbit = false;
  std::vector<Coord> local_r;
  double beta = 8.0;
  std::vector<Coord> chemical_x;  // point mode, orbit-pooled
  std::vector<Coord> chemical_boundary_r;
  double kappa = 0.5;
  std::vector<double> tail_m;  // boundary-mode tail thresholds
  std::vector<Coord> intrinsic_r;
};

std::vector<EstimateRecord> run_combined(const ExperimentConfig& cfg,
                                         const CombinedRequest& req);

std::vector<EstimateRecord> estimate_pi1(const ExperimentConfig& cfg,
                                         const std::vector<Coord>& r_grid);

/// P(0 <-> x) for x = n e_1. With `orbit_pool` the estimator averages over
/// the 2d axis images of x (estimand-identical by lattice symmetry) to
/// raise the event rate; orbit size is recorded in the params.
std::vector<EstimateRecord> estimate_two_point(const ExperimentConfig& cfg,
                                               const std::vector<Coord>& x_list,
                                               bool orbit_pool = false);

/// S(r) = |{y in B_2r : 0 <-> y within B_{beta r}}| / r^2. The restriction
/// box is clipped to the configuration region (noted in the record) and
/// beta-monotonicity S_{2beta} >= S_beta is asserted on every replica.
std::vector<EstimateRecord> estimate_local_connectivity(
    const ExperimentConfig& cfg, const std::vector<Coord>& r_grid, double beta);

/// point: E[d(0,x) | 0 <-> x] pooled over the axis orbit of x.
/// boundary: E[d(0, boundary B_{kappa r}) | 0 <-> boundary B_r] plus the
/// conditional tail P(d(0, boundary B_r) >= M r^2) over the M grid.
std::vector<EstimateRecord> estimate_chemical(const ExperimentConfig& cfg,
                                              const std::vector<Coord>& grid,
                                              ChemicalMode mode,
                                              double kappa = 0.5,
                                              const std::vector<double>& m_grid = {});

std::vector<EstimateRecord> estimate_intrinsic_one_arm(
    const ExperimentConfig& cfg, const std::vector<Coord>& r_grid);

/// Coupled large-loop-deletion gap at radius r: per replica, connectivity
/// counts over B_r with the full sample and with loops of length <= r^b,
/// same randomness. Loop route only; unsigned soup connectivity.
/// Emits, per b: gap/r^2 and filtered count/r^2 records.
std::vector<EstimateRecord> werner_gap(const ExperimentConfig& cfg, Coord r,
                                       double beta,
                                       const std::vector<double>& b_grid);

/// Least-squares exponent on log-log with replica bootstrap; `records` must
/// carry >= 3 grid points (and replica values when available).
stats::PowerLawFit fit_exponent(const std::vector<EstimateRecord>& records,
                                u64 bootstrap_seed = 1);

/// Thread budget resolution: cfg.threads, then THREADS env, then hardware.
int resolve_threads(const ExperimentConfig& cfg);

}  // namespace cableperc
