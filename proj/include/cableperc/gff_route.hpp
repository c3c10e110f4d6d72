#pragma once

// The GFF side of the simulation: discrete GFF on a box with zero boundary
// conditions, cable-edge openings, and the resulting sign clusters.

#include <Eigen/SparseCholesky>
#include <memory>

#include "cableperc/cluster_geometry.hpp"
#include "cableperc/lattice.hpp"

namespace cableperc {

enum class FieldMethod { exact_factor, heat_bath };

struct Field {
  BoxSpec box{};
  std::vector<double> phi;  // dense box indexing; exterior frozen at 0
  u64 master_seed = 0;
  u64 replica = 0;
  FieldMethod method = FieldMethod::exact_factor;
  int sweeps = 0;  // heat-bath only

  double at(const Vertex& v) const {
    return box.contains(v) ? phi[static_cast<size_t>(box.index(v))] : 0.0;
  }
};

struct CableConfig {
  Field field;
  std::vector<std::pair<u64, u64>> open_edges;  // packed vertex codes
  std::vector<i8> sign;                          // per-vertex sign of phi
};

struct DgffOptions {
  i64 exact_vertex_limit = 20000;  // switch to heat-bath above this
  i64 memory_budget_bytes = i64{2} << 30;
  int heat_bath_sweeps = 0;  // 0: pick by the autocorrelation diagnostic
};

/// Cached Cholesky factor of the precision operator I - P_B, shared by all
/// replicas of one box.
class DgffSampler {
 public:
  DgffSampler(const BoxSpec& box, const DgffOptions& opts = {});
  Field sample(u64 master_seed, u64 replica) const;
  FieldMethod method() const { return method_; }
  int heat_bath_sweeps() const { return sweeps_; }

 private:
  Field sample_exact(u64 master_seed, u64 replica) const;
  Field sample_heat_bath(u64 master_seed, u64 replica) const;

  BoxSpec box_;
  DgffOptions opts_;
  FieldMethod method_;
  int sweeps_ = 0;
  std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
  std::vector<std::array<i64, 2 * kMaxDim>> nbr_;  // -1 outside box
};

/// One-shot convenience wrapper around DgffSampler.
Field sample_dgff(const BoxSpec& box, u64 master_seed, u64 replica = 0,
                  const DgffOptions& opts = {});

/// Heat-bath autocorrelation diagnostic: integrated autocorrelation time of
/// phi_0 across sweeps on a pilot run; the sampler uses
/// max(64, ceil(8 * tau_int)) sweeps.
double heat_bath_autocorr_time(const BoxSpec& box, u64 seed, int pilot_sweeps);

/// For each lattice edge {x,y} with phi_x phi_y > 0, opens it independently
/// with probability 1 - exp(-phi_x phi_y / d): the chance that a Brownian
/// bridge of duration d and variance rate 2 between the endpoint values
/// avoids 0. Edges with phi_x phi_y <= 0 stay closed.
CableConfig open_edges(Field field, u64 master_seed, u64 replica = 0);

/// Direct-path Monte Carlo estimate of P(min of the bridge > 0); the
/// independent oracle for the edge-opening law. With `barrier_correction`
/// the discrete minimum is tested against the Broadie-Glasserman-Kou
/// continuity shift instead of 0.
struct BridgeEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  u64 replicas = 0;
};
BridgeEstimate bridge_min_oracle(double a, double b, double duration,
                                 double variance_rate, int steps, u64 replicas,
                                 u64 seed, bool barrier_correction = true);

/// Closed form the oracle validates: 1 - exp(-2ab/(rate*T)) for a,b > 0.
inline double bridge_positive_prob(double a, double b, double duration,
                                   double variance_rate) {
  if (a <= 0.0 || b <= 0.0) return 0.0;
  return 1.0 - std::exp(-2.0 * a * b / (variance_rate * duration));
}

/// Union-find over vertices with phi > 0, merging across open edges.
ClusterMap positive_clusters(const CableConfig& config);

}  // namespace cableperc
