#include "cableperc/gff_route.hpp"

#include <cmath>
#include <set>

#include "cableperc/stats.hpp"
#include "cableperc/walk_oracle.hpp"
#include "doctest.h"

using namespace cableperc;

TEST_CASE("single-vertex box: phi ~ N(0, 1)") {
  const BoxSpec box = centered_box(1, 0);
  DgffSampler sampler(box);
  const int n = 100000;
  double s = 0, ss = 0;
  for (int rep = 0; rep < n; ++rep) {
    const Field f = sampler.sample(42, rep);
    s += f.phi[0];
    ss += f.phi[0] * f.phi[0];
  }
  const double mean = s / n;
  const double var = ss / n - mean * mean;
  // G_B(0,0) = 1; se of the variance estimate is ~ sqrt(2/n).
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("d=1 B(0,1): Var(phi_0)=2, Cov(phi_0,phi_1)=1") {
  const BoxSpec box = centered_box(1, 1);
  DgffSampler sampler(box);
  const int n = 100000;
  double v0 = 0, c01 = 0;
  const i64 i0 = box.index(origin());
  const i64 i1 = box.index(make_vertex({1}));
  for (int rep = 0; rep < n; ++rep) {
    const Field f = sampler.sample(7, rep);
    v0 += f.phi[static_cast<size_t>(i0)] * f.phi[static_cast<size_t>(i0)];
    c01 += f.phi[static_cast<size_t>(i0)] * f.phi[static_cast<size_t>(i1)];
  }
  CHECK(v0 / n == doctest::Approx(2.0).epsilon(0.05));
  CHECK(c01 / n == doctest::Approx(1.0).epsilon(0.08));
}

TEST_CASE("exact sampler covariance matches the box greens table") {
  const BoxSpec box = centered_box(2, 2);
  DgffSampler sampler(box);
  GreensBox greens(box);
  const int n = 40000;
  const i64 m = box.size();
  std::vector<double> acc(static_cast<size_t>(m * m), 0.0);
  for (int rep = 0; rep < n; ++rep) {
    const Field f = sampler.sample(1234, rep);
    for (i64 i = 0; i < m; ++i)
      for (i64 j = i; j < m; ++j)
        acc[static_cast<size_t>(i * m + j)] +=
            f.phi[static_cast<size_t>(i)] * f.phi[static_cast<size_t>(j)];
  }
  for (i64 i = 0; i < m; ++i)
    for (i64 j = i; j < m; ++j) {
      const double est = acc[static_cast<size_t>(i * m + j)] / n;
      const double truth = greens.g(i, j);
      // Var(phi_i phi_j) = G_ii G_jj + G_ij^2.
      const double se =
          std::sqrt((greens.g(i, i) * greens.g(j, j) + truth * truth) / n);
      CHECK(std::fabs(est - truth) < 5.0 * se);
    }
}

TEST_CASE("heat-bath sampler reproduces the same covariance") {
  const BoxSpec box = centered_box(2, 1);
  DgffOptions opts;
  opts.exact_vertex_limit = 0;  // force the iterative sampler
  DgffSampler sampler(box, opts);
  CHECK(sampler.method() == FieldMethod::heat_bath);
  CHECK(sampler.heat_bath_sweeps() >= 64);
  GreensBox greens(box);
  const int n = 20000;
  const i64 i0 = box.index(origin());
  const i64 i1 = box.index(make_vertex({1, 0}));
  double v0 = 0, c01 = 0;
  for (int rep = 0; rep < n; ++rep) {
    const Field f = sampler.sample(9, rep);
    v0 += f.phi[static_cast<size_t>(i0)] * f.phi[static_cast<size_t>(i0)];
    c01 += f.phi[static_cast<size_t>(i0)] * f.phi[static_cast<size_t>(i1)];
  }
  CHECK(v0 / n == doctest::Approx(greens.g(i0, i0)).epsilon(0.06));
  CHECK(c01 / n == doctest::Approx(greens.g(i0, i1)).epsilon(0.15));
}

TEST_CASE("dgff memory budget is enforced") {
  DgffOptions opts;
  opts.memory_budget_bytes = 1024;
  CHECK_THROWS_AS(sample_dgff(centered_box(3, 3), 1, 0, opts), Error);
}

TEST_CASE("bridge oracle trivial endpoints") {
  const auto zero = bridge_min_oracle(0.0, 0.0, 7.0, 2.0, 1024, 2000, 5);
  CHECK(zero.estimate == 0.0);
  const double big = 5.0 * std::sqrt(2.0 * 7.0);
  const auto sure = bridge_min_oracle(big, big, 7.0, 2.0, 1024, 2000, 6);
  CHECK(sure.estimate > 0.999);
}

TEST_CASE("bridge oracle matches the closed form (two resolutions)") {
  const double a = 1.0, b = 1.0, T = 7.0, rate = 2.0;
  const double truth = bridge_positive_prob(a, b, T, rate);
  CHECK(truth == doctest::Approx(1.0 - std::exp(-1.0 / 7.0)));
  for (const int steps : {2048, 4096}) {
    const auto est = bridge_min_oracle(a, b, T, rate, steps, 20000, 11);
    CHECK(std::fabs(est.estimate - truth) < 3.5 * est.stderr_);
  }
}

TEST_CASE("open_edges closes sign changes, opens by the bridge law") {
  const BoxSpec box = centered_box(1, 2);
  Field f;
  f.box = box;
  f.phi = {1.0, -1.0, 2.0, 2.0, 0.0};  // vertices -2..2
  int opened = 0;
  const int n = 60000;
  for (int rep = 0; rep < n; ++rep) {
    Field g = f;
    const CableConfig cfg = open_edges(std::move(g), 99, rep);
    for (const auto& [u, v] : cfg.open_edges) {
      const Vertex a = unpack_vertex(u, 1);
      const Vertex b = unpack_vertex(v, 1);
      // Only the {0,1} edge (phi = 2,2) has a positive product.
      CHECK(a == origin());
      CHECK(b == make_vertex({1}));
      ++opened;
    }
  }
  const double p = 1.0 - std::exp(-4.0 / 1.0);
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::fabs(static_cast<double>(opened) / n - p) < 4 * se);
}

TEST_CASE("open_edges is monotone under coupled field increases") {
  const BoxSpec box = centered_box(2, 2);
  DgffSampler sampler(box);
  for (int rep = 0; rep < 200; ++rep) {
    Field f = sampler.sample(5, rep);
    Field boosted = f;
    for (double& p : boosted.phi)
      if (p > 0) p *= 1.5;  // increase positive values pointwise
    const CableConfig base = open_edges(std::move(f), 77, rep);
    const CableConfig more = open_edges(std::move(boosted), 77, rep);
    // Same uniforms (same seed/replica/edge keys): no open edge may close.
    const std::set<std::pair<u64, u64>> open_now(more.open_edges.begin(),
                                                 more.open_edges.end());
    for (const auto& e : base.open_edges) {
      const Vertex a = unpack_vertex(e.first, 2);
      const Vertex b = unpack_vertex(e.second, 2);
      if (base.field.at(a) > 0 && base.field.at(b) > 0)
        CHECK(open_now.count(e) == 1);
    }
  }
}

TEST_CASE("positive_clusters") {
  const BoxSpec box = centered_box(1, 3);
  Field f;
  f.box = box;

  SUBCASE("all negative: no clusters") {
    f.phi.assign(static_cast<size_t>(box.size()), -1.0);
    const ClusterMap map = positive_clusters(open_edges(std::move(f), 1, 0));
    CHECK(map.labels.empty());
  }

  SUBCASE("two adjacent positives with the edge open: one cluster of 2") {
    f.phi.assign(static_cast<size_t>(box.size()), -1.0);
    f.phi[static_cast<size_t>(box.index(origin()))] = 50.0;
    f.phi[static_cast<size_t>(box.index(make_vertex({1})))] = 50.0;
    // p = 1 - exp(-2500) ~ 1: the edge opens.
    const ClusterMap map = positive_clusters(open_edges(std::move(f), 1, 0));
    CHECK(map.labels.size() == 2);
    CHECK(connected(map, origin(), make_vertex({1})));
  }

  SUBCASE("hand-built openings match brute-force connectivity") {
    f.phi.assign(static_cast<size_t>(box.size()), -1.0);
    f.phi[static_cast<size_t>(box.index(make_vertex({-3})))] = 40.0;
    f.phi[static_cast<size_t>(box.index(make_vertex({-2})))] = 40.0;
    f.phi[static_cast<size_t>(box.index(make_vertex({1})))] = 40.0;
    const ClusterMap map = positive_clusters(open_edges(std::move(f), 3, 1));
    CHECK(map.labels.size() == 3);
    CHECK(connected(map, make_vertex({-3}), make_vertex({-2})));
    CHECK(!connected(map, make_vertex({-2}), make_vertex({1})));
    CHECK(map.label_of(make_vertex({1})) ==
          pack_vertex(make_vertex({1}), 1));  // singleton canonical label
  }
}
