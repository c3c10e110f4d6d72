#include "cableperc/gff_route.hpp"

#include <cmath>

#include "cableperc/rng.hpp"

namespace cableperc {

namespace {

std::vector<std::array<i64, 2 * kMaxDim>> box_neighbors(const BoxSpec& box) {
  std::vector<std::array<i64, 2 * kMaxDim>> nbr(
      static_cast<size_t>(box.size()));
  for (i64 i = 0; i < box.size(); ++i) {
    const Vertex v = box.vertex(i);
    for (int a = 0; a < box.d; ++a)
      for (int s = 0; s < 2; ++s) {
        Vertex w = v;
        w[a] += (s == 0 ? 1 : -1);
        nbr[static_cast<size_t>(i)][static_cast<size_t>(2 * a + s)] =
            box.contains(w) ? box.index(w) : -1;
      }
  }
  return nbr;
}

}  // namespace

DgffSampler::DgffSampler(const BoxSpec& box, const DgffOptions& opts)
    : box_(box), opts_(opts) {
  const i64 n = box.size();
  require(n * 16 <= opts.memory_budget_bytes,
          "sample_dgff: box needs " + std::to_string(n * 16) +
              " bytes, over the configured budget",
          ErrorKind::resource);
  nbr_ = box_neighbors(box);
  if (n <= opts.exact_vertex_limit) {
    method_ = FieldMethod::exact_factor;
    // Precision Q = I - P_B, factorized once and reused per replica.
    Eigen::SparseMatrix<double> q(n, n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * (2 * box.d + 1));
    const double off = -1.0 / (2.0 * box.d);
    for (i64 i = 0; i < n; ++i) {
      trip.emplace_back(i, i, 1.0);
      for (int dir = 0; dir < 2 * box.d; ++dir) {
        const i64 j = nbr_[static_cast<size_t>(i)][static_cast<size_t>(dir)];
        if (j >= 0) trip.emplace_back(i, j, off);
      }
    }
    q.setFromTriplets(trip.begin(), trip.end());
    llt_ = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
    llt_->compute(q);
    require(llt_->info() == Eigen::Success,
            "sample_dgff: precision factorization failed");
  } else {
    method_ = FieldMethod::heat_bath;
    sweeps_ = opts.heat_bath_sweeps;
    if (sweeps_ == 0) {
      const double tau = heat_bath_autocorr_time(box, 0x9eadbeef, 256);
      sweeps_ = std::max(64, static_cast<int>(std::ceil(8.0 * tau)));
    }
  }
}

Field DgffSampler::sample(u64 master_seed, u64 replica) const {
  return method_ == FieldMethod::exact_factor
             ? sample_exact(master_seed, replica)
             : sample_heat_bath(master_seed, replica);
}

Field DgffSampler::sample_exact(u64 master_seed, u64 replica) const {
  const i64 n = box_.size();
  const u64 rs = rng::replica_seed(master_seed, replica);
  Eigen::VectorXd z(n);
  for (i64 i = 0; i < n; ++i)
    z(i) = rng::keyed_gaussian(rs, rng::TAG_DGFF_NOISE, static_cast<u64>(i));
  // Q = P^T L L^T P  =>  phi = P^T L^{-T} z has covariance Q^{-1} = G_B.
  Eigen::VectorXd w = llt_->matrixU().solve(z);
  Eigen::VectorXd phi = llt_->permutationPinv() * w;
  Field f;
  f.box = box_;
  f.master_seed = master_seed;
  f.replica = replica;
  f.method = FieldMethod::exact_factor;
  f.phi.assign(phi.data(), phi.data() + n);
  return f;
}

Field DgffSampler::sample_heat_bath(u64 master_seed, u64 replica) const {
  const i64 n = box_.size();
  const u64 rs = rng::replica_seed(master_seed, replica);
  Field f;
  f.box = box_;
  f.master_seed = master_seed;
  f.replica = replica;
  f.method = FieldMethod::heat_bath;
  f.sweeps = sweeps_;
  f.phi.assign(static_cast<size_t>(n), 0.0);
  const double inv2d = 1.0 / (2.0 * box_.d);
  // phi_x | rest ~ N(mean of in-box neighbors / (2d), 1). Red-black order:
  // each color only reads the other, so updates are keyed per (sweep,
  // vertex) and independent of traversal order within a color.
  std::vector<u8> color(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i)
    color[static_cast<size_t>(i)] =
        static_cast<u8>(l1_norm(box_.vertex(i), box_.d) & 1);
  for (int sweep = 0; sweep < sweeps_; ++sweep) {
    for (u8 c = 0; c < 2; ++c) {
      for (i64 i = 0; i < n; ++i) {
        if (color[static_cast<size_t>(i)] != c) continue;
        double m = 0.0;
        for (int dir = 0; dir < 2 * box_.d; ++dir) {
          const i64 j = nbr_[static_cast<size_t>(i)][static_cast<size_t>(dir)];
          if (j >= 0) m += f.phi[static_cast<size_t>(j)];
        }
        f.phi[static_cast<size_t>(i)] =
            m * inv2d + rng::keyed_gaussian(rs, rng::TAG_HEATBATH,
                                            static_cast<u64>(sweep),
                                            static_cast<u64>(i));
      }
    }
  }
  return f;
}

Field sample_dgff(const BoxSpec& box, u64 master_seed, u64 replica,
                  const DgffOptions& opts) {
  return DgffSampler(box, opts).sample(master_seed, replica);
}

double heat_bath_autocorr_time(const BoxSpec& box, u64 seed,
                               int pilot_sweeps) {
  // Track phi at the center across sweeps and integrate the autocorrelation
  // with a windowing cutoff.
  const i64 n = box.size();
  const auto nbr = box_neighbors(box);
  std::vector<double> phi(static_cast<size_t>(n), 0.0);
  std::vector<u8> color(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i)
    color[static_cast<size_t>(i)] =
        static_cast<u8>(l1_norm(box.vertex(i), box.d) & 1);
  const double inv2d = 1.0 / (2.0 * box.d);
  const i64 center = box.index(box.center);
  std::vector<double> series;
  for (int sweep = 0; sweep < pilot_sweeps; ++sweep) {
    for (u8 c = 0; c < 2; ++c)
      for (i64 i = 0; i < n; ++i) {
        if (color[static_cast<size_t>(i)] != c) continue;
        double m = 0.0;
        for (int dir = 0; dir < 2 * box.d; ++dir) {
          const i64 j = nbr[static_cast<size_t>(i)][static_cast<size_t>(dir)];
          if (j >= 0) m += phi[static_cast<size_t>(j)];
        }
        phi[static_cast<size_t>(i)] =
            m * inv2d + rng::keyed_gaussian(seed, rng::TAG_HEATBATH,
                                            static_cast<u64>(sweep),
                                            static_cast<u64>(i));
      }
    series.push_back(phi[static_cast<size_t>(center)]);
  }
  const size_t burn = series.size() / 4;
  series.erase(series.begin(),
               series.begin() + static_cast<std::ptrdiff_t>(burn));
  double mean = 0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(series.size());
  double var = 0;
  for (double x : series) var += (x - mean) * (x - mean);
  var /= static_cast<double>(series.size());
  if (var <= 0) return 1.0;
  double tau = 0.5;
  for (size_t lag = 1; lag < series.size() / 4; ++lag) {
    double c = 0;
    for (size_t t = 0; t + lag < series.size(); ++t)
      c += (series[t] - mean) * (series[t + lag] - mean);
    c /= static_cast<double>(series.size() - lag) * var;
    if (c < 0.05) break;
    tau += c;
  }
  return tau;
}

CableConfig open_edges(Field field, u64 master_seed, u64 replica) {
  const u64 rs = rng::replica_seed(master_seed, replica);
  CableConfig cfg;
  const BoxSpec& box = field.box;
  const int d = box.d;
  cfg.sign.resize(static_cast<size_t>(box.size()));
  for (i64 i = 0; i < box.size(); ++i) {
    const double p = field.phi[static_cast<size_t>(i)];
    cfg.sign[static_cast<size_t>(i)] = p > 0 ? 1 : (p < 0 ? -1 : 0);
  }
  for (i64 i = 0; i < box.size(); ++i) {
    const Vertex v = box.vertex(i);
    const u64 vc = pack_vertex(v, d);
    for (int axis = 0; axis < d; ++axis) {
      Vertex w = v;
      w[axis] += 1;
      if (!box.contains(w)) continue;  // exterior phi = 0: never opens
      const double prod = field.phi[static_cast<size_t>(i)] *
                          field.phi[static_cast<size_t>(box.index(w))];
      if (prod <= 0.0) continue;  // sign change: the bridge hits 0
      const double u = rng::to_u01(
          rng::keyed_u64(rs, rng::TAG_EDGE_OPEN, edge_code(vc, axis)));
      if (u < 1.0 - std::exp(-prod / d))
        cfg.open_edges.emplace_back(vc, pack_vertex(w, d));
    }
  }
  cfg.field = std::move(field);
  return cfg;
}

BridgeEstimate bridge_min_oracle(double a, double b, double duration,
                                 double variance_rate, int steps, u64 replicas,
                                 u64 seed, bool barrier_correction) {
  require(steps >= 1000, "bridge_min_oracle: steps >= 1e3 required");
  const double dt = duration / steps;
  // Discrete monitoring misses excursions between grid points; the
  // Broadie-Glasserman-Kou shift beta*sigma*sqrt(dt) compensates.
  const double barrier =
      barrier_correction ? 0.5826 * std::sqrt(variance_rate * dt) : 0.0;
  u64 hits = 0;
  for (u64 rep = 0; rep < replicas; ++rep) {
    rng::KeyStream ks(seed, rng::TAG_BRIDGE_PATH, rep);
    // Sequential bridge: X_{i+1} | X_i ~ N(X_i + (b-X_i) dt/(T-t_i),
    // rate * dt * (T-t_i-dt)/(T-t_i)); early exit once the barrier is hit.
    double x = a;
    bool positive = x > barrier;
    for (int i = 0; positive && i < steps - 1; ++i) {
      const double remain = duration - i * dt;
      const double mean = x + (b - x) * dt / remain;
      const double var = variance_rate * dt * (remain - dt) / remain;
      x = mean + std::sqrt(std::max(var, 0.0)) * ks.gaussian();
      positive = x > barrier;
    }
    positive = positive && b > barrier;
    if (positive) ++hits;
  }
  BridgeEstimate est;
  est.replicas = replicas;
  est.estimate = static_cast<double>(hits) / static_cast<double>(replicas);
  est.stderr_ = std::sqrt(est.estimate * (1.0 - est.estimate) /
                          static_cast<double>(replicas));
  return est;
}

ClusterMap positive_clusters(const CableConfig& config) {
  const BoxSpec& box = config.field.box;
  std::vector<u64> occupied;
  for (i64 i = 0; i < box.size(); ++i)
    if (config.field.phi[static_cast<size_t>(i)] > 0.0)
      occupied.push_back(pack_vertex(box.vertex(i), box.d));
  // Open edges exist wherever phi_x phi_y > 0; E^{>=0} only keeps the
  // positive-positive ones (negative-negative edges belong to the negative
  // sign clusters).
  std::vector<std::pair<u64, u64>> edges;
  for (const auto& [a, b] : config.open_edges)
    if (config.field.at(unpack_vertex(a, box.d)) > 0.0 &&
        config.field.at(unpack_vertex(b, box.d)) > 0.0)
      edges.push_back({a, b});
  return build_cluster_map(box.d, box, occupied, std::move(edges));
}

}  // namespace cableperc
