#include "cableperc/walk_oracle.hpp"

#include <cmath>
#include <functional>

#include "doctest.h"

using namespace cableperc;

namespace {

// Literal enumeration of all (2d)^k walks; the crudest possible oracle.
i64 closed_walks_brute(int d, int k) {
  i64 count = 0;
  Vertex pos{};
  std::function<void(int)> rec = [&](int step) {
    if (step == k) {
      if (pos == origin()) ++count;
      return;
    }
    for (int a = 0; a < d; ++a)
      for (int s = -1; s <= 1; s += 2) {
        pos[a] += s;
        rec(step + 1);
        pos[a] -= s;
      }
  };
  rec(0);
  return count;
}

}  // namespace

TEST_CASE("return_prob trivial values") {
  CHECK(return_prob_dp(7, 3) == 0.0);  // odd k on a bipartite lattice
  CHECK(return_prob_quadrature(7, 3) == doctest::Approx(0.0).epsilon(1e-12));
  for (int d = 1; d <= 7; ++d)
    CHECK(return_prob_dp(d, 2) == doctest::Approx(1.0 / (2 * d)).epsilon(1e-14));
}

TEST_CASE("return_prob d=2 k=4 against walk enumeration") {
  const i64 walks = closed_walks_brute(2, 4);
  CHECK(walks == 36);
  CHECK(return_prob_dp(2, 4) == doctest::Approx(36.0 / 256.0).epsilon(1e-14));
  CHECK(return_prob_quadrature(2, 4) ==
        doctest::Approx(36.0 / 256.0).epsilon(1e-11));
}

TEST_CASE("DP vs quadrature cross-validation (sampled grid)") {
  for (const int d : {1, 2, 3, 5, 7}) {
    for (const int k : {2, 4, 6, 8, 12, 16}) {
      const double a = return_prob_dp(d, k);
      const double b = return_prob_quadrature(d, k);
      CHECK(std::fabs(a - b) <= 1e-9);
      CHECK_NOTHROW(return_prob(d, k));
    }
  }
}

TEST_CASE("walk count row sums are exact in integer arithmetic") {
  for (const int d : {1, 2, 3, 7})
    for (int k = 1; k <= 12; ++k) CHECK(walk_count_row_sums_exact(d, k));
}

TEST_CASE("free kernel table matches the DP and walk enumeration") {
  FreeKernelTable tab(3, 8);
  CHECK(tab.p(0, origin()) == 1.0);
  CHECK(tab.return_prob(4) == doctest::Approx(return_prob_dp(3, 4)).epsilon(1e-13));
  CHECK(tab.return_prob(8) == doctest::Approx(return_prob_dp(3, 8)).epsilon(1e-13));
  // p_1 is uniform over the 2d neighbors.
  CHECK(tab.p(1, make_vertex({1, 0, 0})) == doctest::Approx(1.0 / 6.0));
  CHECK(tab.p(1, make_vertex({0, 0, -1})) == doctest::Approx(1.0 / 6.0));
  // Symmetry: permuted/reflected displacements share values.
  CHECK(tab.p(4, make_vertex({2, 0, 0})) ==
        doctest::Approx(tab.p(4, make_vertex({0, -2, 0}))).epsilon(1e-15));
  // Row sums are 1 in free mode.
  for (int k = 1; k <= 6; ++k) {
    double sum = 0;
    const BoxSpec support = centered_box(3, static_cast<Coord>(k));
    for (i64 i = 0; i < support.size(); ++i)
      sum += tab.p(k, support.vertex(i));
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("kernel_series_at agrees with the canonical table") {
  FreeKernelTable tab(3, 10);
  for (const auto& z :
       {origin(), make_vertex({1, 1, 0}), make_vertex({2, 0, 1})}) {
    const auto series = kernel_series_at(3, z, 10);
    for (int k = 0; k <= 10; ++k)
      CHECK(series[static_cast<size_t>(k)] ==
            doctest::Approx(tab.p(k, z)).epsilon(1e-11));
  }
}

TEST_CASE("step sampler matches step probabilities") {
  FreeKernelTable tab(3, 8);
  const Vertex z = make_vertex({1, 1, 0});
  const int j = 4;
  // Empirical distribution from a uniform sweep.
  const int n = 20000;
  std::array<int, 6> hits{};
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    const auto [axis, sign] = tab.sample_step(z, j, u);
    hits[static_cast<size_t>(2 * axis + (sign > 0 ? 0 : 1))]++;
  }
  double total_prob = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (int s = -1; s <= 1; s += 2) {
      const double p = tab.step_prob(z, j, axis, s);
      total_prob += p;
      const int h = hits[static_cast<size_t>(2 * axis + (s > 0 ? 0 : 1))];
      CHECK(static_cast<double>(h) / n == doctest::Approx(p).epsilon(0.02));
    }
  CHECK(total_prob == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("box-killed greens: hand-sized cases") {
  // 1x1 box in d=1: the walk is killed on its first jump, G = 1.
  GreensBox g1(centered_box(1, 0));
  CHECK(g1.g(origin(), origin()) == doctest::Approx(1.0).epsilon(1e-12));
  // B(0,1) in d=1: elimination gives G(0,0)=2, G(0,1)=1, G(1,1)=3/2.
  GreensBox g3(centered_box(1, 1));
  CHECK(g3.g(origin(), origin()) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g3.g(origin(), make_vertex({1})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g3.g(make_vertex({1}), make_vertex({1})) ==
        doctest::Approx(1.5).epsilon(1e-12));
  CHECK(g3.g(make_vertex({-1}), make_vertex({1})) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("box-killed greens: symmetry, positivity, series consistency") {
  const BoxSpec box = centered_box(2, 2);
  GreensBox g(box);
  // Killed-walk survival decays like cos(pi/6)^k here; 200 terms reach 1e-12.
  BoxKernelTable kt(box, 200);
  for (i64 i = 0; i < box.size(); ++i)
    for (i64 j = 0; j < box.size(); ++j) {
      CHECK(g.g(i, j) == doctest::Approx(g.g(j, i)).epsilon(1e-12));
      CHECK(g.g(i, j) >= 0.0);
      double s = 0;
      for (int k = 0; k <= 200; ++k) s += kt.p(k, i, j);
      CHECK(g.g(i, j) == doctest::Approx(s).epsilon(1e-9));
    }
}

TEST_CASE("free greens in d=3 hits the Watson value") {
  // G(0,0) for the simple cubic lattice: 1.51638605915...
  const double g = greens_free(3, origin());
  CHECK(g == doctest::Approx(1.5163860591).epsilon(1e-8));
  CHECK_THROWS_AS(greens_free(2, origin()), Error);
}

TEST_CASE("free greens quadrature vs truncated series") {
  for (const auto& [d, x] :
       std::vector<std::pair<int, Vertex>>{{3, origin()},
                                           {3, make_vertex({1, 0, 0})},
                                           {3, make_vertex({2, 1, 0})},
                                           {5, origin()},
                                           {7, origin()},
                                           {7, make_vertex({2, 0, 0, 0, 0, 0, 0})}}) {
    const double a = greens_free(d, x);
    const double b = greens_free_series(d, x, 2048);
    CHECK(std::fabs(a - b) < 1e-6);
  }
}

TEST_CASE("free greens relation G(0,0) = 1 + G(0,e1)") {
  for (const int d : {3, 5, 7}) {
    Vertex e1{};
    e1[0] = 1;
    CHECK(greens_free(d, origin()) ==
          doctest::Approx(1.0 + greens_free(d, e1)).epsilon(1e-9));
  }
}

TEST_CASE("loop masses by length") {
  FreeKernelTable t7(7, 4);
  // Single vertex region, k=2: (1/2) * (1/14) / 2 = 1/56.
  CHECK(loop_mass_by_length(t7, 1, 2) == doctest::Approx(1.0 / 56.0).epsilon(1e-14));
  CHECK_THROWS_AS(loop_mass_by_length(t7, 1, 1), Error);
  // Odd lengths carry no mass.
  FreeKernelTable t3(3, 5);
  CHECK(loop_mass_by_length(t3, 10, 3) == 0.0);
  // d=2 single vertex, k=4 from the enumeration oracle: (1/2)(36/256)/4.
  FreeKernelTable t2(2, 4);
  CHECK(loop_mass_by_length(t2, 1, 4) ==
        doctest::Approx(0.5 * (36.0 / 256.0) / 4.0).epsilon(1e-13));
}

TEST_CASE("loop mass sums equal alpha * sum tr(P^k)/k") {
  BoxKernelTable kt(centered_box(2, 2), 10);
  std::vector<i64> all;
  for (i64 i = 0; i < kt.box().size(); ++i) all.push_back(i);
  double via_op = 0, via_trace = 0;
  for (int k = 2; k <= 10; ++k) {
    via_op += loop_mass_by_length(kt, all, k);
    via_trace += kLoopIntensityAlpha * kt.trace(k) / k;
  }
  CHECK(via_op == doctest::Approx(via_trace).epsilon(1e-14));
}

TEST_CASE("one-point loop tail scaling (d=7)") {
  const auto rep = loop_tail_one_point(7, {4, 8, 16, 32}, 0);
  CHECK(rep.ratio_spread < 2.0);
  for (const auto& row : rep.rows) CHECK(row.tail_sum > 0.0);
  // i=2: tails decrease between L=4 and L=16.
  const auto rep2 = loop_tail_one_point(7, {4, 16}, 2);
  CHECK(rep2.rows[0].tail_sum > rep2.rows[1].tail_sum);
  // Summability precondition.
  CHECK_THROWS_AS(loop_tail_one_point(7, {4}, 3), Error);
}

TEST_CASE("two-point loop tail (d=7)") {
  Vertex z{};
  z[0] = 2;
  const auto rep = loop_tail_two_point(7, z, {4, 8, 16});
  for (const auto& row : rep.rows) CHECK(row.tail_sum > 0.0);
  CHECK(rep.rows[0].tail_sum > rep.rows[2].tail_sum);  // tail monotonicity
  // L = |u-v|^2 sum sits at or below the L=2 sum (equal here: no loop of
  // length < 4 reaches distance 2, so nothing is cut between L=2 and 4).
  const auto rep2 = loop_tail_two_point(7, z, {2, 4});
  CHECK(rep2.rows[1].tail_sum <= rep2.rows[0].tail_sum);
  CHECK(rep2.rows[1].tail_sum > 0.0);
}

TEST_CASE("local clt short-loop masses decay like the gaussian bound") {
  const auto rows = loop_local_clt_check(7, 0.5, {2, 4, 6});
  for (const auto& row : rows) {
    CHECK(row.mass >= 0.0);
    CHECK(row.bound > 0.0);
  }
  // Mass through points at distance n with length <= n shrinks fast in n.
  CHECK(rows[2].mass < rows[0].mass + 1e-12);
}

TEST_CASE("convolution inequality check") {
  // alpha_1 = alpha_2 = 2-d at d=7. The empirical C settles once |x-y|
  // clears the first couple of lattice shells: 2542, 1822, 1648 over
  // {4, 8, 16} (converged R), within factor 2; |x-y|=2 is pre-asymptotic.
  const double a = 2.0 - 7.0;
  const auto rows = convolution_inequality_check(a, a, 7, 64, {4, 8, 16});
  double lo = rows[0].empirical_c, hi = rows[0].empirical_c;
  for (const auto& row : rows) {
    CHECK(row.sum > 0.0);
    lo = std::min(lo, row.empirical_c);
    hi = std::max(hi, row.empirical_c);
    CHECK(row.tail_growth < 0.01);  // R doubled changes the sum by < 1%
  }
  CHECK(hi / lo < 2.0);
  CHECK(rows[0].empirical_c == doctest::Approx(2542).epsilon(0.01));
  // x = y reduces to a single-center sum, finite for a1+a2 < -d.
  const auto same = convolution_inequality_check(a, a, 7, 32, {0});
  CHECK(same[0].sum > 0.0);
  CHECK(same[0].tail_growth < 0.01);
  CHECK_THROWS_AS(convolution_inequality_check(-8, 0.5, 7, 4, {2}), Error);
}

TEST_CASE("torus kernel: uniform diagonal, row sums 1, no wrap for small k") {
  TorusKernelTable tt(2, 7, 8);
  FreeKernelTable ft(2, 8);
  for (int k = 0; k <= 6; ++k)
    CHECK(tt.return_prob(k) == doctest::Approx(ft.return_prob(k)).epsilon(1e-13));
  double sum = 0;
  Vertex z{};
  for (z[0] = 0; z[0] < 7; ++z[0])
    for (z[1] = 0; z[1] < 7; ++z[1]) sum += tt.p(8, z);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("box kernel: sub-stochastic rows, symmetry in the diagonal") {
  BoxKernelTable kt(centered_box(3, 2), 8);
  const i64 n = kt.box().size();
  // Killed-walk mass leaks once the boundary is reachable (3 steps from
  // the center of a radius-2 box).
  const auto& tab = kt.root_table(kt.box().index(origin()));
  for (int k = 1; k <= 8; ++k) {
    double s = 0;
    for (i64 i = 0; i < n; ++i)
      s += tab[static_cast<size_t>(k) * static_cast<size_t>(n) +
               static_cast<size_t>(i)];
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s > 0.0);
    if (k >= 3) CHECK(s < 1.0);
  }
  // p_k(x,y) = p_k(y,x).
  const i64 a = kt.box().index(make_vertex({1, 0, -1}));
  const i64 b = kt.box().index(make_vertex({-1, 2, 0}));
  for (int k = 2; k <= 8; ++k)
    CHECK(kt.p(k, a, b) == doctest::Approx(kt.p(k, b, a)).epsilon(1e-12));
}
