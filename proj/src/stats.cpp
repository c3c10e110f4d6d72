#include "cableperc/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "cableperc/rng.hpp"

namespace cableperc::stats {

MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  r.n = xs.size();
  if (r.n == 0) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(r.n);
  if (r.n < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double var = ss / static_cast<double>(r.n - 1);
  r.se = std::sqrt(var / static_cast<double>(r.n));
  return r;
}

bool agree_within_se(double a, double se_a, double b, double se_b, double k) {
  return std::fabs(a - b) <= k * std::sqrt(se_a * se_a + se_b * se_b);
}

double chi2_sf(double stat, int dof) {
  if (dof <= 0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * stat);
}

double poisson_gof_pvalue(std::span<const u64> counts, double lambda,
                          double min_expected) {
  const double n = static_cast<double>(counts.size());
  require(counts.size() >= 2, "poisson_gof: need at least 2 observations");
  // Expected cell counts n * P(N = k), k = 0,1,2,... with pooled tail.
  std::vector<double> expected;
  std::vector<double> observed;
  double p = std::exp(-lambda);  // P(N = 0)
  double cum = 0.0;
  u64 kmax = 0;
  for (const u64 c : counts) kmax = std::max(kmax, c);
  std::vector<double> obs_hist(kmax + 1, 0.0);
  for (const u64 c : counts) obs_hist[c] += 1.0;

  double acc_exp = 0.0, acc_obs = 0.0;
  for (u64 k = 0; k <= kmax; ++k) {
    acc_exp += n * p;
    acc_obs += obs_hist[k];
    cum += p;
    p *= lambda / static_cast<double>(k + 1);
    if (acc_exp >= min_expected) {
      expected.push_back(acc_exp);
      observed.push_back(acc_obs);
      acc_exp = acc_obs = 0.0;
    }
  }
  // Tail cell: everything above kmax plus any unfinished accumulator.
  acc_exp += n * (1.0 - cum);
  if (!expected.empty() && acc_exp < min_expected) {
    expected.back() += acc_exp;
    observed.back() += acc_obs;
  } else {
    expected.push_back(acc_exp);
    observed.push_back(acc_obs);
  }
  if (expected.size() < 2) return 1.0;  // not enough resolution to reject
  double stat = 0.0;
  for (size_t i = 0; i < expected.size(); ++i) {
    const double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
  }
  return chi2_sf(stat, static_cast<int>(expected.size()) - 1);
}

double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double dmax = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    dmax = std::max(dmax, std::fabs(static_cast<double>(i) / na -
                                    static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lam = (ne + 0.12 + 0.11 / ne) * dmax;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term =
        2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
    q += term;
    if (std::fabs(term) < 1e-12) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

namespace {

struct LogFit {
  double slope, intercept;
};

LogFit loglog_ls(std::span<const double> grid, std::span<const double> vals) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    const double x = std::log(grid[i]);
    const double y = std::log(vals[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  return {slope, (sy - slope * sx) / n};
}

}  // namespace

PowerLawFit fit_power_law(std::span<const double> grid,
                          std::span<const double> values,
                          std::span<const double> ses,
                          const std::vector<std::vector<double>>& per_replica,
                          u64 bootstrap_seed, int bootstrap_rounds) {
  require(grid.size() >= 3, "fit_exponent: need >= 3 grid points");
  require(grid.size() == values.size() && grid.size() == ses.size(),
          "fit_exponent: mismatched inputs");
  for (size_t i = 0; i < values.size(); ++i)
    require(values[i] > 0.0 && std::isfinite(ses[i]),
            "fit_exponent: nonpositive estimate in fit window; "
            "increase replicas");

  PowerLawFit out;
  out.window.assign(grid.begin(), grid.end());
  const LogFit base = loglog_ls(grid, values);
  out.exponent = base.slope;
  out.amplitude = std::exp(base.intercept);

  std::vector<double> slopes;
  slopes.reserve(static_cast<size_t>(bootstrap_rounds));
  rng::KeyStream ks(bootstrap_seed, rng::TAG_GENERIC, 0xb007);
  std::vector<double> resampled(values.size());
  const bool have_replicas =
      !per_replica.empty() && !per_replica.front().empty();
  for (int round = 0; round < bootstrap_rounds; ++round) {
    bool ok = true;
    if (have_replicas) {
      // Resample replica indices (shared across grid points: the grid values
      // of one replica are correlated, so resample whole replicas).
      const size_t nrep = per_replica.front().size();
      std::vector<size_t> idx(nrep);
      for (size_t j = 0; j < nrep; ++j) idx[j] = ks.below(nrep);
      for (size_t i = 0; i < values.size(); ++i) {
        double s = 0.0;
        for (size_t j : idx) s += per_replica[i][j];
        resampled[i] = s / static_cast<double>(nrep);
        if (resampled[i] <= 0.0) ok = false;
      }
    } else {
      // Gaussian perturbation from the reported standard errors.
      for (size_t i = 0; i < values.size(); ++i) {
        resampled[i] = values[i] + ses[i] * ks.gaussian();
        if (resampled[i] <= 0.0) ok = false;
      }
    }
    if (!ok) continue;
    slopes.push_back(loglog_ls(grid, resampled).slope);
  }
  if (slopes.size() >= 20) {
    std::sort(slopes.begin(), slopes.end());
    out.ci_lo = slopes[static_cast<size_t>(0.025 * slopes.size())];
    out.ci_hi = slopes[static_cast<size_t>(0.975 * slopes.size())];
  } else {
    out.ci_lo = out.ci_hi = out.exponent;
  }
  return out;
}

}  // namespace cableperc::stats
