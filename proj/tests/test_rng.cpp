#include "cableperc/rng.hpp"

#include <vector>

#include "cableperc/stats.hpp"
#include "doctest.h"

using namespace cableperc;
using namespace cableperc::rng;

TEST_CASE("keyed draws are pure functions of their keys") {
  CHECK(keyed_u64(1, 2, 3, 4) == keyed_u64(1, 2, 3, 4));
  CHECK(keyed_u64(1, 2, 3, 4) != keyed_u64(1, 2, 3, 5));
  CHECK(keyed_u64(1, 2, 3, 4) != keyed_u64(2, 2, 3, 4));
  const double g = keyed_gaussian(42, TAG_DGFF_NOISE, 7, 9);
  CHECK(g == keyed_gaussian(42, TAG_DGFF_NOISE, 7, 9));
}

TEST_CASE("u01 range and uniformity") {
  int bins[16] = {};
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = keyed_u01(123, TAG_GENERIC, i);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    bins[static_cast<int>(u * 16)]++;
  }
  for (int b = 0; b < 16; ++b) {
    // ~12500 per bin, sd ~110; allow 6 sigma.
    CHECK(std::abs(bins[b] - n / 16) < 700);
  }
}

TEST_CASE("gaussian moments") {
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i)
    xs.push_back(keyed_gaussian(7, TAG_GENERIC, i));
  const auto ms = stats::mean_se(xs);
  CHECK(std::fabs(ms.mean) < 4 * ms.se);
  double var = 0;
  for (double x : xs) var += x * x;
  var /= static_cast<double>(xs.size());
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson mean and variance, small and large lambda") {
  for (const double lam : {0.3, 3.0, 25.0, 3000.0}) {
    KeyStream ks(99, TAG_SOUP_COUNT, static_cast<u64>(lam * 100));
    const int n = lam > 100 ? 20000 : 100000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(ks.poisson(lam));
      s += x;
      ss += x * x;
    }
    const double mean = s / n;
    const double var = ss / n - mean * mean;
    CHECK(mean == doctest::Approx(lam).epsilon(0.03));
    CHECK(var == doctest::Approx(lam).epsilon(0.08));
  }
}

TEST_CASE("gamma(1/2,1) equals half chi-square(1)") {
  KeyStream ks(5, TAG_POINT_TIME, 0);
  double s = 0;
  const int n = 200000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    const double x = ks.gamma(0.5, 1.0);
    if (x <= 0) ++zeros;
    s += x;
  }
  CHECK(zeros == 0);  // strictly positive a.s.
  CHECK(s / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("below(n) is in range and roughly uniform") {
  KeyStream ks(11, TAG_GENERIC, 1);
  const u64 n = 7;
  u64 counts[7] = {};
  for (int i = 0; i < 70000; ++i) {
    const u64 v = ks.below(n);
    REQUIRE(v < n);
    counts[v]++;
  }
  for (u64 c : counts) CHECK(std::abs(static_cast<i64>(c) - 10000) < 500);
}

TEST_CASE("streams with different tags are uncorrelated in sequence") {
  KeyStream a(1, TAG_SOUP_ROOT, 0);
  KeyStream b(1, TAG_SOUP_STEP, 0);
  int agree = 0;
  for (int i = 0; i < 1000; ++i)
    if ((a.next_u64() & 1) == (b.next_u64() & 1)) ++agree;
  CHECK(agree > 400);
  CHECK(agree < 600);
}
