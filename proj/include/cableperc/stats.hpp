#pragma once

// Small statistics helpers shared by estimators, oracle checks and tests.

#include <span>
#include <vector>

#include "cableperc/common.hpp"

namespace cableperc::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n)
  u64 n = 0;
};

MeanSe mean_se(std::span<const double> xs);

/// |a - b| <= k * sqrt(se_a^2 + se_b^2)
bool agree_within_se(double a, double se_a, double b, double se_b, double k);

/// Upper tail of the chi-square distribution (p-value for a GOF statistic).
double chi2_sf(double stat, int dof);

/// Chi-square goodness of fit of integer counts against Poisson(lambda).
/// Cells with expectation below `min_expected` are pooled into the tail.
/// Returns the p-value; dof = cells - 1.
double poisson_gof_pvalue(std::span<const u64> counts, double lambda,
                          double min_expected = 5.0);

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

struct PowerLawFit {
  double exponent = 0.0;   // gamma in value ~ A * r^gamma
  double amplitude = 0.0;  // A
  double ci_lo = 0.0;      // bootstrap CI for gamma
  double ci_hi = 0.0;
  std::vector<double> window;  // r values used
};

/// Least squares on log-log with replica-bootstrap CI.
/// `per_replica[i][j]` = replica j's value at grid point i (may be empty:
/// then the CI is propagated from the provided standard errors instead).
PowerLawFit fit_power_law(std::span<const double> grid,
                          std::span<const double> values,
                          std::span<const double> ses,
                          const std::vector<std::vector<double>>& per_replica,
                          u64 bootstrap_seed, int bootstrap_rounds = 400);

}  // namespace cableperc::stats
