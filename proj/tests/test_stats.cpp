#include "cableperc/stats.hpp"

#include <cmath>

#include "cableperc/rng.hpp"
#include "doctest.h"

using namespace cableperc;
using namespace cableperc::stats;

TEST_CASE("mean_se basics") {
  const double xs[] = {1.0, 2.0, 3.0, 4.0};
  const auto ms = mean_se(xs);
  CHECK(ms.mean == doctest::Approx(2.5));
  // sd = sqrt(5/3), se = sd/2
  CHECK(ms.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("chi2 survival function sanity") {
  CHECK(chi2_sf(0.0, 5) == doctest::Approx(1.0));
  // Median of chi2(1) is ~0.455.
  CHECK(chi2_sf(0.455, 1) == doctest::Approx(0.5).epsilon(0.01));
  CHECK(chi2_sf(100.0, 3) < 1e-10);
}

TEST_CASE("poisson gof accepts poisson data and rejects shifted data") {
  const double lambda = 4.0;
  rng::KeyStream ks(3, rng::TAG_GENERIC, 77);
  std::vector<u64> good, bad;
  for (int i = 0; i < 20000; ++i) {
    good.push_back(ks.poisson(lambda));
    bad.push_back(ks.poisson(lambda * 1.12));
  }
  CHECK(poisson_gof_pvalue(good, lambda) > 0.001);
  CHECK(poisson_gof_pvalue(bad, lambda) < 1e-6);
}

TEST_CASE("ks two-sample") {
  rng::KeyStream ks(9, rng::TAG_GENERIC, 1);
  std::vector<double> a, b, c;
  for (int i = 0; i < 4000; ++i) {
    a.push_back(ks.gaussian());
    b.push_back(ks.gaussian());
    c.push_back(ks.gaussian() + 0.25);
  }
  CHECK(ks_two_sample_pvalue(a, b) > 0.001);
  CHECK(ks_two_sample_pvalue(a, c) < 1e-6);
}

TEST_CASE("fit_power_law exact and constant data") {
  const std::vector<double> grid = {2, 4, 8, 16};
  std::vector<double> vals, ses;
  for (double r : grid) {
    vals.push_back(std::pow(r, -2.0));
    ses.push_back(0.0);
  }
  auto fit = fit_power_law(grid, vals, ses, {}, 1);
  CHECK(fit.exponent == doctest::Approx(-2.0).epsilon(1e-12));

  std::vector<double> cvals(grid.size(), 3.5);
  auto cfit = fit_power_law(grid, cvals, ses, {}, 1);
  CHECK(cfit.exponent == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cfit.amplitude == doctest::Approx(3.5));
}

TEST_CASE("fit_power_law bootstrap CI shrinks with replicas") {
  // Synthetic noisy power law, replica-level data; CI width should drop by
  // about half when replicas quadruple.
  auto make = [](size_t nrep, u64 seed) {
    const std::vector<double> grid = {2, 4, 8};
    std::vector<std::vector<double>> reps(grid.size());
    rng::KeyStream ks(seed, rng::TAG_GENERIC, 5);
    std::vector<double> vals, ses;
    for (size_t i = 0; i < grid.size(); ++i) {
      const double truth = 2.0 * std::pow(grid[i], -1.5);
      double s = 0;
      for (size_t j = 0; j < nrep; ++j) {
        const double x = truth * (1.0 + 0.5 * ks.gaussian());
        reps[i].push_back(x);
        s += x;
      }
      vals.push_back(s / static_cast<double>(nrep));
      ses.push_back(truth * 0.5 / std::sqrt(static_cast<double>(nrep)));
    }
    return fit_power_law(grid, vals, ses, reps, 17);
  };
  const auto small = make(400, 21);
  const auto big = make(6400, 23);
  const double w_small = small.ci_hi - small.ci_lo;
  const double w_big = big.ci_hi - big.ci_lo;
  CHECK(w_big < w_small);
  CHECK(w_big / w_small == doctest::Approx(0.25).epsilon(0.8));
  CHECK(small.exponent == doctest::Approx(-1.5).epsilon(0.15));
}

TEST_CASE("fit_power_law rejects nonpositive values") {
  const std::vector<double> grid = {2, 4, 8};
  const std::vector<double> vals = {1.0, -0.1, 0.2};
  const std::vector<double> ses = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(fit_power_law(grid, vals, ses, {}, 1), Error);
}
