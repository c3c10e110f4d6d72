#include "cableperc/walk_oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace cableperc {

namespace {

// Canonical representative: coordinate magnitudes sorted descending.
u64 canonical_key(const Vertex& z, int d) {
  std::array<Coord, kMaxDim> a{};
  for (int i = 0; i < d; ++i) a[static_cast<size_t>(i)] = std::abs(z[i]);
  std::sort(a.begin(), a.begin() + d, std::greater<>());
  u64 key = 0;
  for (int i = d - 1; i >= 0; --i)
    key = (key << 8) | static_cast<u64>(a[static_cast<size_t>(i)]);
  return key;
}

// Enumerate canonical classes (non-increasing magnitude vectors) with
// l1 norm <= k_max.
void enumerate_classes(int d, int budget, int slot, Coord cap, Vertex& cur,
                       std::vector<Vertex>& out) {
  if (slot == d) {
    out.push_back(cur);
    return;
  }
  for (Coord v = 0; v <= std::min<Coord>(cap, static_cast<Coord>(budget));
       ++v) {
    cur[slot] = v;
    enumerate_classes(d, budget - v, slot + 1, v, cur, out);
  }
  cur[slot] = 0;
}

}  // namespace

FreeKernelTable::FreeKernelTable(int d, int k_max) : d_(d), k_max_(k_max) {
  require(d >= 1 && d <= kMaxDim, "kernel table: d out of range");
  require(k_max >= 0 && k_max <= 120, "kernel table: k_max out of range");

  std::vector<Vertex> classes;
  Vertex scratch{};
  enumerate_classes(d, k_max, 0, static_cast<Coord>(k_max), scratch, classes);
  n_classes_ = static_cast<int>(classes.size());
  index_.reserve(static_cast<size_t>(n_classes_) * 2);
  for (int c = 0; c < n_classes_; ++c)
    index_[canonical_key(classes[static_cast<size_t>(c)], d)] = c;

  nbr_.resize(static_cast<size_t>(n_classes_));
  for (int c = 0; c < n_classes_; ++c) {
    const Vertex& z = classes[static_cast<size_t>(c)];
    for (int axis = 0; axis < d; ++axis) {
      for (int s = 0; s < 2; ++s) {
        Vertex w = z;
        w[axis] += (s == 0 ? 1 : -1);
        const auto it = index_.find(canonical_key(w, d));
        nbr_[static_cast<size_t>(c)][static_cast<size_t>(2 * axis + s)] =
            it == index_.end() ? -1 : it->second;
      }
    }
  }

  // p_{j+1}(z) = (1/2d) sum over the 2d unit steps of p_j.
  p_.assign(static_cast<size_t>(k_max + 1),
            std::vector<double>(static_cast<size_t>(n_classes_), 0.0));
  p_[0][static_cast<size_t>(index_.at(canonical_key(origin(), d)))] = 1.0;
  const double inv2d = 1.0 / (2.0 * d);
  for (int j = 0; j < k_max; ++j) {
    for (int c = 0; c < n_classes_; ++c) {
      double acc = 0.0;
      for (int dir = 0; dir < 2 * d; ++dir) {
        const int n = nbr_[static_cast<size_t>(c)][static_cast<size_t>(dir)];
        if (n >= 0) acc += p_[static_cast<size_t>(j)][static_cast<size_t>(n)];
      }
      p_[static_cast<size_t>(j + 1)][static_cast<size_t>(c)] = acc * inv2d;
    }
  }

  // Step CDFs over the 2d canonical-frame directions, per (class, j).
  step_cdf_.assign(static_cast<size_t>(n_classes_) *
                       static_cast<size_t>(k_max + 1),
                   {});
  for (int c = 0; c < n_classes_; ++c) {
    for (int j = 1; j <= k_max; ++j) {
      const double denom = p_[static_cast<size_t>(j)][static_cast<size_t>(c)];
      if (denom <= 0.0) continue;
      std::vector<double> cdf(static_cast<size_t>(2 * d));
      double acc = 0.0;
      for (int dir = 0; dir < 2 * d; ++dir) {
        const int n = nbr_[static_cast<size_t>(c)][static_cast<size_t>(dir)];
        const double w =
            n >= 0 ? p_[static_cast<size_t>(j - 1)][static_cast<size_t>(n)]
                   : 0.0;
        acc += w;
        cdf[static_cast<size_t>(dir)] = acc;
      }
      for (double& x : cdf) x /= acc;  // kernel identity makes acc = 2d*denom
      step_cdf_[static_cast<size_t>(c) * static_cast<size_t>(k_max + 1) +
                static_cast<size_t>(j)] = std::move(cdf);
    }
  }
}

int FreeKernelTable::class_index(const Vertex& z) const {
  const auto it = index_.find(canonical_key(z, d_));
  return it == index_.end() ? -1 : it->second;
}

double FreeKernelTable::p(int k, const Vertex& z) const {
  require(k >= 0 && k <= k_max_, "kernel table: k out of range");
  const int c = class_index(z);
  return c < 0 ? 0.0 : p_[static_cast<size_t>(k)][static_cast<size_t>(c)];
}

std::pair<int, int> FreeKernelTable::sample_step(const Vertex& z, int j,
                                                 double u) const {
  // Map the actual offset onto its canonical frame: slot_of_axis is a
  // bijection, sign flips carried separately; zero coordinates keep +.
  std::array<int, kMaxDim> order{};
  std::array<Coord, kMaxDim> mag{};
  std::array<int, kMaxDim> sgn{};
  for (int i = 0; i < d_; ++i) {
    order[static_cast<size_t>(i)] = i;
    mag[static_cast<size_t>(i)] = std::abs(z[i]);
    sgn[static_cast<size_t>(i)] = z[i] < 0 ? -1 : 1;
  }
  std::stable_sort(order.begin(), order.begin() + d_, [&](int a, int b) {
    return mag[static_cast<size_t>(a)] > mag[static_cast<size_t>(b)];
  });
  const int c = class_index(z);
  require(c >= 0, "sample_step: offset outside kernel support");
  const auto& cdf =
      step_cdf_[static_cast<size_t>(c) * static_cast<size_t>(k_max_ + 1) +
                static_cast<size_t>(j)];
  require(!cdf.empty(), "sample_step: zero-probability state");
  int dir = 0;
  while (dir + 1 < 2 * d_ && u > cdf[static_cast<size_t>(dir)]) ++dir;
  // Canonical-frame direction (slot, s) pulled back to the actual frame.
  const int slot = dir / 2;
  const int s = dir % 2 == 0 ? 1 : -1;
  const int axis = order[static_cast<size_t>(slot)];
  return {axis, s * sgn[static_cast<size_t>(axis)]};
}

double FreeKernelTable::step_prob(const Vertex& z, int j, int axis,
                                  int sign) const {
  Vertex w = z;
  w[axis] += sign;
  const double denom = p(j, z);
  return denom > 0.0 ? p(j - 1, w) / (2.0 * d_ * denom) : 0.0;
}

// ---- box-killed kernels ----------------------------------------------------

BoxKernelTable::BoxKernelTable(const BoxSpec& box, int k_max)
    : box_(box), k_max_(k_max) {
  const i64 n = box.size();
  require(n * static_cast<i64>(k_max + 1) * 8 <= (i64{1} << 31),
          "box kernel table: per-root table exceeds budget",
          ErrorKind::resource);
  tables_.resize(static_cast<size_t>(n));
  nbr_.resize(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i) {
    const Vertex v = box.vertex(i);
    for (int axis = 0; axis < box.d; ++axis) {
      for (int s = 0; s < 2; ++s) {
        Vertex w = v;
        w[axis] += (s == 0 ? 1 : -1);
        nbr_[static_cast<size_t>(i)][static_cast<size_t>(2 * axis + s)] =
            box.contains(w) ? box.index(w) : -1;
      }
    }
  }
}

const std::vector<double>& BoxKernelTable::root_table(i64 root_idx) {
  auto& tab = tables_[static_cast<size_t>(root_idx)];
  if (!tab.empty()) return tab;
  const i64 n = box_.size();
  tab.assign(static_cast<size_t>(n) * static_cast<size_t>(k_max_ + 1), 0.0);
  tab[static_cast<size_t>(root_idx)] = 1.0;  // p_0(y, root) = [y == root]
  const double inv2d = 1.0 / (2.0 * box_.d);
  for (int j = 0; j < k_max_; ++j) {
    const double* prev = tab.data() + static_cast<size_t>(j) * n;
    double* next = tab.data() + static_cast<size_t>(j + 1) * n;
    for (i64 i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int dir = 0; dir < 2 * box_.d; ++dir) {
        const i64 m = nbr_[static_cast<size_t>(i)][static_cast<size_t>(dir)];
        if (m >= 0) acc += prev[m];
      }
      next[i] = acc * inv2d;
    }
  }
  return tab;
}

double BoxKernelTable::trace(int k) {
  double t = 0.0;
  for (i64 i = 0; i < box_.size(); ++i) t += diagonal(k, i);
  return t;
}

// ---- torus ------------------------------------------------------------------

TorusKernelTable::TorusKernelTable(int d, int side, int k_max)
    : d_(d), side_(side), k_max_(k_max) {
  require(side >= 2, "torus side must be >= 2");
  i64 n = 1;
  for (int i = 0; i < d; ++i) n *= side;
  require(n * (k_max + 1) * 8 <= (i64{1} << 31), "torus table too large",
          ErrorKind::resource);
  p_.assign(static_cast<size_t>(k_max + 1),
            std::vector<double>(static_cast<size_t>(n), 0.0));
  p_[0][0] = 1.0;
  const double inv2d = 1.0 / (2.0 * d);
  std::vector<i64> stride(static_cast<size_t>(d));
  stride[0] = 1;
  for (int i = 1; i < d; ++i)
    stride[static_cast<size_t>(i)] = stride[static_cast<size_t>(i - 1)] * side;
  for (int j = 0; j < k_max; ++j) {
    for (i64 idx = 0; idx < n; ++idx) {
      double acc = 0.0;
      i64 rem = idx;
      for (int a = 0; a < d; ++a) {
        const i64 coord = rem % side;
        rem /= side;
        const i64 up = idx + (coord + 1 == side ? -(side - 1) : 1) *
                                 stride[static_cast<size_t>(a)];
        const i64 dn = idx + (coord == 0 ? (side - 1) : -1) *
                                 stride[static_cast<size_t>(a)];
        acc += p_[static_cast<size_t>(j)][static_cast<size_t>(up)] +
               p_[static_cast<size_t>(j)][static_cast<size_t>(dn)];
      }
      p_[static_cast<size_t>(j + 1)][static_cast<size_t>(idx)] = acc * inv2d;
    }
  }
}

i64 TorusKernelTable::index(const Vertex& z) const {
  i64 idx = 0;
  for (int i = d_ - 1; i >= 0; --i) {
    i64 c = z[i] % side_;
    if (c < 0) c += side_;
    idx = idx * side_ + c;
  }
  return idx;
}

double TorusKernelTable::p(int k, const Vertex& z) const {
  require(k >= 0 && k <= k_max_, "torus table: k out of range");
  return p_[static_cast<size_t>(k)][static_cast<size_t>(index(z))];
}

double TorusKernelTable::return_prob(int k) const {
  return p_[static_cast<size_t>(k)][0];
}

// ---- return probability, route (a): integer convolution DP ------------------

namespace {

struct CountTable {
  // Exact counts of k-step walks 0 -> z on canonical classes.
  std::vector<unsigned __int128> counts;
  std::vector<u64> orbit;  // class orbit sizes, for row-sum checks
};

CountTable walk_counts(int d, int k) {
  require(k <= 32, "integer DP limited to k <= 32 (128-bit counts)");
  std::vector<Vertex> classes;
  Vertex scratch{};
  enumerate_classes(d, k, 0, static_cast<Coord>(k), scratch, classes);
  std::unordered_map<u64, int> index;
  for (size_t c = 0; c < classes.size(); ++c)
    index[canonical_key(classes[c], d)] = static_cast<int>(c);

  std::vector<std::array<int, 2 * kMaxDim>> nbr(classes.size());
  for (size_t c = 0; c < classes.size(); ++c) {
    for (int axis = 0; axis < d; ++axis)
      for (int s = 0; s < 2; ++s) {
        Vertex w = classes[c];
        w[axis] += (s == 0 ? 1 : -1);
        const auto it = index.find(canonical_key(w, d));
        nbr[c][static_cast<size_t>(2 * axis + s)] =
            it == index.end() ? -1 : it->second;
      }
  }
  std::vector<unsigned __int128> cur(classes.size(), 0), next(classes.size());
  cur[static_cast<size_t>(index.at(canonical_key(origin(), d)))] = 1;
  for (int j = 0; j < k; ++j) {
    std::fill(next.begin(), next.end(), 0);
    for (size_t c = 0; c < classes.size(); ++c) {
      unsigned __int128 acc = 0;
      for (int dir = 0; dir < 2 * d; ++dir) {
        const int n = nbr[c][static_cast<size_t>(dir)];
        if (n >= 0) acc += cur[static_cast<size_t>(n)];
      }
      next[c] = acc;
    }
    std::swap(cur, next);
  }

  CountTable out;
  out.counts = std::move(cur);
  out.orbit.resize(classes.size());
  for (size_t c = 0; c < classes.size(); ++c) {
    // Orbit size: sign flips on nonzero coordinates times distinct
    // permutations of the magnitude multiset.
    const Vertex& z = classes[c];
    u64 orb = 1;
    int nonzero = 0;
    for (int i = 0; i < d; ++i)
      if (z[i] != 0) ++nonzero;
    for (int i = 0; i < nonzero; ++i) orb *= 2;
    // d! / prod(multiplicities!)
    u64 fact = 1;
    for (int i = 2; i <= d; ++i) fact *= static_cast<u64>(i);
    int i = 0;
    while (i < d) {
      int j = i;
      while (j < d && z[j] == z[i]) ++j;
      u64 mf = 1;
      for (int m = 2; m <= j - i; ++m) mf *= static_cast<u64>(m);
      fact /= mf;
      i = j;
    }
    out.orbit[c] = orb * fact;
  }
  return out;
}

double int128_to_double(unsigned __int128 v) {
  return std::ldexp(static_cast<double>(static_cast<u64>(v >> 64)), 64) +
         static_cast<double>(static_cast<u64>(v));
}

}  // namespace

double return_prob_dp(int d, int k) {
  require(k >= 0, "return_prob: k must be >= 0");
  if (k == 0) return 1.0;
  if (k % 2 == 1) return 0.0;  // bipartite lattice
  const CountTable tab = walk_counts(d, k);
  // class 0 is the origin (all-zero is the lexicographically first class).
  long double total = std::pow(static_cast<long double>(2 * d), k);
  return static_cast<double>(
      static_cast<long double>(int128_to_double(tab.counts[0])) / total);
}

bool walk_count_row_sums_exact(int d, int k) {
  const CountTable tab = walk_counts(d, k);
  unsigned __int128 sum = 0;
  for (size_t c = 0; c < tab.counts.size(); ++c)
    sum += tab.counts[c] * static_cast<unsigned __int128>(tab.orbit[c]);
  unsigned __int128 expect = 1;
  for (int j = 0; j < k; ++j) expect *= static_cast<unsigned>(2 * d);
  return sum == expect;
}

// ---- return probability, route (b): characteristic-function quadrature ------

namespace {

// (1/2pi) int_{-pi}^{pi} cos^j(t) dt by adaptive Gauss-Legendre.
std::vector<double> cosine_moments_quadrature(int j_max) {
  std::vector<double> m(static_cast<size_t>(j_max + 1), 0.0);
  // Gauss-Legendre nodes on [0, pi], refined until stable to 1e-10.
  auto eval = [&](int n, int j) {
    // Nodes/weights by Newton iteration on Legendre polynomials.
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int l = 2; l <= n; ++l) {
          const double p2 = ((2 * l - 1) * x * p1 - (l - 1) * p0) / l;
          p0 = p1;
          p1 = p2;
        }
        const double dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      double p0 = 1.0, p1 = x;
      for (int l = 2; l <= n; ++l) {
        const double p2 = ((2 * l - 1) * x * p1 - (l - 1) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      const double theta = 0.5 * std::numbers::pi * (x + 1.0);
      acc += w * std::pow(std::cos(theta), j);
    }
    // scale: dt = (pi/2) dx, integral over [0,pi] doubled, /(2pi)
    return acc * (std::numbers::pi / 2.0) * 2.0 / (2.0 * std::numbers::pi);
  };
  for (int j = 0; j <= j_max; ++j) {
    if (j % 2 == 1) continue;  // odd moments vanish
    int n = std::max(8, j / 2 + 4);
    double prev = eval(n, j);
    for (;;) {
      n *= 2;
      const double cur = eval(n, j);
      if (std::fabs(cur - prev) < 1e-12) {
        m[static_cast<size_t>(j)] = cur;
        break;
      }
      prev = cur;
    }
  }
  return m;
}

// d-fold convolution of a_j = M_j / j!, evaluated at k.
double multinomial_combine(const std::vector<double>& moments, int d, int k) {
  std::vector<double> lf(static_cast<size_t>(k + 1));
  for (int j = 0; j <= k; ++j) lf[static_cast<size_t>(j)] = std::lgamma(j + 1.0);
  std::vector<double> a(static_cast<size_t>(k + 1));
  for (int j = 0; j <= k; ++j)
    a[static_cast<size_t>(j)] =
        moments[static_cast<size_t>(j)] * std::exp(-lf[static_cast<size_t>(j)]);
  std::vector<double> acc = a;
  for (int rep = 1; rep < d; ++rep) {
    std::vector<double> next(static_cast<size_t>(k + 1), 0.0);
    for (int i = 0; i <= k; ++i)
      for (int j = 0; i + j <= k; ++j)
        next[static_cast<size_t>(i + j)] +=
            acc[static_cast<size_t>(i)] * a[static_cast<size_t>(j)];
    acc = std::move(next);
  }
  return acc[static_cast<size_t>(k)] * std::exp(lf[static_cast<size_t>(k)]);
}

}  // namespace

double return_prob_quadrature(int d, int k) {
  require(k >= 0, "return_prob: k must be >= 0");
  if (k == 0) return 1.0;
  const std::vector<double> m = cosine_moments_quadrature(k);
  return multinomial_combine(m, d, k) * std::pow(1.0 / d, k);
}

double return_prob(int d, int k, double tol) {
  const double a = return_prob_dp(d, k);
  const double b = return_prob_quadrature(d, k);
  require(std::fabs(a - b) <= tol,
          "return_prob cross-validation failed: DP and quadrature disagree",
          ErrorKind::strict_check);
  return a;
}

// ---- scaled Bessel and the free Green's function -----------------------------

namespace {

// e^{-u} I_j(u), stable across the whole range.
double scaled_bessel_i(int j, double u) {
  if (u == 0.0) return j == 0 ? 1.0 : 0.0;
  if (u <= 40.0) {
    // Power series times e^{-u}.
    const double half = 0.5 * u;
    double term = std::exp(j * std::log(half) - std::lgamma(j + 1.0) - u);
    double sum = term;
    for (int m = 1; m < 400; ++m) {
      term *= half * half / (m * (m + j));
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return sum;
  }
  if (u <= 4.0e4) {
    // Miller backward recurrence, normalized by i0 + 2 sum i_m = 1.
    const int start = static_cast<int>(u + 12.0 * std::sqrt(u)) + j + 20;
    double fp = 0.0, fc = 1e-280;
    double norm = 0.0, fj = 0.0;
    for (int m = start; m >= 0; --m) {
      const double fm = fp + (2.0 * (m + 1) / u) * fc;
      fp = fc;
      fc = fm;
      if (m == j) fj = fc;
      norm += (m == 0 ? fc : 2.0 * fc);
      if (fc > 1e250) {  // rescale to avoid overflow
        fp /= 1e250;
        fc /= 1e250;
        fj /= 1e250;
        norm /= 1e250;
      }
    }
    return fj / norm;
  }
  // Uniform asymptotic expansion (u >> j^2).
  const double mu = 4.0 * static_cast<double>(j) * j;
  double term = 1.0, sum = 1.0;
  for (int t = 1; t <= 10; ++t) {
    term *= -(mu - (2.0 * t - 1.0) * (2.0 * t - 1.0)) / (8.0 * t * u);
    sum += term;
  }
  return sum / std::sqrt(2.0 * std::numbers::pi * u);
}

double bessel_integrand(int d, const Vertex& x, double t) {
  double prod = 1.0;
  for (int i = 0; i < d; ++i)
    prod *= scaled_bessel_i(std::abs(x[i]), t / d);
  return prod;
}

// 32-point Gauss-Legendre nodes/weights on [-1, 1].
struct GL32 {
  std::array<double, 32> x{}, w{};
  GL32() {
    const int n = 32;
    for (int i = 0; i < n / 2; ++i) {
      double xi = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = xi;
        for (int l = 2; l <= n; ++l) {
          const double p2 = ((2 * l - 1) * xi * p1 - (l - 1) * p0) / l;
          p0 = p1;
          p1 = p2;
        }
        const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
        const double dx = p1 / dp;
        xi -= dx;
        if (std::fabs(dx) < 1e-15) break;
      }
      double p0 = 1.0, p1 = xi;
      for (int l = 2; l <= n; ++l) {
        const double p2 = ((2 * l - 1) * xi * p1 - (l - 1) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
      const double wi = 2.0 / ((1.0 - xi * xi) * dp * dp);
      x[static_cast<size_t>(i)] = -xi;
      w[static_cast<size_t>(i)] = wi;
      x[static_cast<size_t>(n - 1 - i)] = xi;
      w[static_cast<size_t>(n - 1 - i)] = wi;
    }
  }
};

const GL32& gl32() {
  static const GL32 table;
  return table;
}

}  // namespace

double greens_free(int d, const Vertex& x) {
  require(d >= 3,
          "greens_function: free mode requires d >= 3 (walk is recurrent, "
          "G diverges)");
  // G(0,x) = int_0^inf prod_i e^{-t/d} I_{|x_i|}(t/d) dt: the Laplace form
  // of the characteristic-function integral. Dyadic panels to T, then a
  // two-term asymptotic tail.
  const GL32& gl = gl32();
  const double T = 1.0e8;
  double total = 0.0;
  double lo = 0.0, hi = 1.0;
  while (lo < T) {
    double acc = 0.0;
    for (int i = 0; i < 32; ++i) {
      const double t =
          0.5 * (hi + lo) + 0.5 * (hi - lo) * gl.x[static_cast<size_t>(i)];
      acc += gl.w[static_cast<size_t>(i)] * bessel_integrand(d, x, t);
    }
    total += acc * 0.5 * (hi - lo);
    lo = hi;
    hi = std::min(2.0 * hi, T);
    if (hi <= lo) break;
  }
  // Tail: prod_i scaled_bessel ~ (d/(2 pi t))^{d/2} (1 - d sum(4x_i^2-1)/(8t)).
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += 4.0 * x[i] * x[i] - 1.0;
  const double c0 = std::pow(d / (2.0 * std::numbers::pi), 0.5 * d);
  const double e = 0.5 * d;
  total += c0 * std::pow(T, 1.0 - e) / (e - 1.0);
  total -= c0 * (d * s / 8.0) * std::pow(T, -e) / e;
  return total;
}

std::vector<double> kernel_series_at(int d, const Vertex& z, int k_trunc) {
  // Merge axes one at a time: P_j(a) = probability that an a-step walk on
  // the first j axes lands at (z_1..z_j). Every factor in the merge is a
  // probability, so the recurrence is overflow-free up to any k_trunc.
  const int K = k_trunc;
  std::vector<double> lf(static_cast<size_t>(K + 1));
  for (int j = 0; j <= K; ++j) lf[static_cast<size_t>(j)] = std::lgamma(j + 1.0);
  auto rho = [&](int xabs) {
    // 1D displacement probabilities: binom(m, (m+x)/2) / 2^m.
    std::vector<double> r(static_cast<size_t>(K + 1), 0.0);
    for (int m = xabs; m <= K; m += 2)
      r[static_cast<size_t>(m)] =
          std::exp(lf[static_cast<size_t>(m)] -
                   lf[static_cast<size_t>((m + xabs) / 2)] -
                   lf[static_cast<size_t>((m - xabs) / 2)] -
                   m * std::numbers::ln2);
    return r;
  };
  std::vector<double> acc = rho(std::abs(z[0]));
  for (int j = 1; j < d; ++j) {
    const std::vector<double> r = rho(std::abs(z[j]));
    const double log_new = std::log(1.0 / (j + 1.0));
    const double log_old = std::log(j / (j + 1.0));
    std::vector<double> next(static_cast<size_t>(K + 1), 0.0);
    for (int a = 0; a <= K; ++a) {
      double s = 0.0;
      for (int m = std::abs(z[j]); m <= a; m += 2) {
        const double pj = acc[static_cast<size_t>(a - m)];
        if (pj == 0.0) continue;
        const double w = std::exp(
            lf[static_cast<size_t>(a)] - lf[static_cast<size_t>(m)] -
            lf[static_cast<size_t>(a - m)] + m * log_new + (a - m) * log_old);
        s += w * r[static_cast<size_t>(m)] * pj;
      }
      next[static_cast<size_t>(a)] = s;
    }
    acc = std::move(next);
  }
  return acc;
}

double greens_free_series(int d, const Vertex& x, int k_trunc) {
  require(d >= 3, "greens series: d >= 3");
  const std::vector<double> p = kernel_series_at(d, x, k_trunc);
  // Local CLT: p_k ~ c0 k^{-d/2} (1 + a1/k + a2/k^2) on k == |x|_1 mod 2,
  // with a1, a2 fitted at the truncation edge (they absorb the gaussian
  // displacement factor). Tail summed by parity-aware Euler-Maclaurin.
  const int parity = l1_norm(x, d) % 2;
  const int kfit = k_trunc - ((k_trunc - parity) % 2);
  const double c0 = 2.0 * std::pow(d / (2.0 * std::numbers::pi), 0.5 * d);
  const double s = 0.5 * d;
  auto base = [&](int k) { return c0 * std::pow(k, -s); };
  const double r1 = p[static_cast<size_t>(kfit)] / base(kfit) - 1.0;
  const double r2 = p[static_cast<size_t>(kfit - 2)] / base(kfit - 2) - 1.0;
  // Solve r = a1/k + a2/k^2 at the two fit points.
  const double k1 = kfit, k2 = kfit - 2;
  const double det = 1.0 / k1 / (k2 * k2) - 1.0 / k2 / (k1 * k1);
  const double a1 = (r1 / (k2 * k2) - r2 / (k1 * k1)) / det;
  const double a2 = (r2 / k1 - r1 / k2) / det;
  auto tail_power = [&](double ss) {
    // sum over k > kfit, k == parity (mod 2), of k^{-ss}.
    const double K0 = kfit;
    return std::pow(K0, 1.0 - ss) / (2.0 * (ss - 1.0)) -
           0.5 * std::pow(K0, -ss) + ss * std::pow(K0, -ss - 1.0) / 6.0;
  };
  double sum = 0.0;
  for (double v : p) sum += v;
  return sum + c0 * (tail_power(s) + a1 * tail_power(s + 1.0) +
                     a2 * tail_power(s + 2.0));
}

GreensBox::GreensBox(const BoxSpec& box) : box_(box) {
  const i64 n = box.size();
  require(n <= 20000, "greens box: too many vertices for a dense table",
          ErrorKind::resource);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  const double inv2d = 1.0 / (2.0 * box.d);
  for (i64 i = 0; i < n; ++i) {
    const Vertex v = box.vertex(i);
    for (int axis = 0; axis < box.d; ++axis)
      for (int s = -1; s <= 1; s += 2) {
        Vertex w = v;
        w[axis] += s;
        if (box.contains(w)) A(i, box.index(w)) -= inv2d;
      }
  }
  const Eigen::MatrixXd G = A.llt().solve(Eigen::MatrixXd::Identity(n, n));
  mat_.resize(static_cast<size_t>(n) * static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < n; ++j)
      mat_[static_cast<size_t>(i) * static_cast<size_t>(n) +
           static_cast<size_t>(j)] = G(i, j);
}

double GreensBox::g(const Vertex& x, const Vertex& y) const {
  require(box_.contains(x) && box_.contains(y),
          "greens box: vertex outside box");
  return g(box_.index(x), box_.index(y));
}

// ---- loop masses -------------------------------------------------------------

double loop_mass_by_length(const FreeKernelTable& table, i64 region_size,
                           int k) {
  require(k >= 2, "loop_mass_by_length: no discrete loops shorter than 2");
  return kLoopIntensityAlpha * static_cast<double>(region_size) *
         table.return_prob(k) / k;
}

double loop_mass_by_length(BoxKernelTable& table,
                           const std::vector<i64>& region_indices, int k) {
  require(k >= 2, "loop_mass_by_length: no discrete loops shorter than 2");
  double s = 0.0;
  for (i64 idx : region_indices) s += table.diagonal(k, idx);
  return kLoopIntensityAlpha * s / k;
}

double loop_mass_by_length(const TorusKernelTable& table, i64 region_size,
                           int k) {
  require(k >= 2, "loop_mass_by_length: no discrete loops shorter than 2");
  return kLoopIntensityAlpha * static_cast<double>(region_size) *
         table.return_prob(k) / k;
}

ScalingReport loop_tail_one_point(int d, const std::vector<int>& L_grid,
                                  int i, int k_trunc) {
  require(i + 1 < 0.5 * d,
          "loop_tail_one_point: i+1 < d/2 required for summability");
  const std::vector<double> r = kernel_series_at(d, origin(), k_trunc);
  ScalingReport rep;
  rep.exponent = i + 1.0 - 0.5 * d;
  for (int L : L_grid) {
    double s = 0.0;
    for (int k = L; k <= k_trunc; ++k)
      s += std::pow(static_cast<double>(k), i) * kLoopIntensityAlpha *
           r[static_cast<size_t>(k)];
    rep.rows.push_back(
        {static_cast<double>(L), s, s / std::pow(L, rep.exponent)});
  }
  double lo = rep.rows[0].ratio, hi = rep.rows[0].ratio;
  for (const auto& row : rep.rows) {
    lo = std::min(lo, row.ratio);
    hi = std::max(hi, row.ratio);
  }
  rep.ratio_spread = hi / lo;
  return rep;
}

ScalingReport loop_tail_two_point(int d, const Vertex& z,
                                  const std::vector<int>& L_grid,
                                  int k_trunc) {
  const std::vector<double> p = kernel_series_at(d, z, k_trunc);
  // m_k(z) = sum_{a=1}^{k-1} p_a(z) p_{k-a}(z): visit-pair weighted mass of
  // unrooted k-loops through 0 and z.
  std::vector<double> m(static_cast<size_t>(k_trunc + 1), 0.0);
  for (int a = 1; a <= k_trunc; ++a) {
    if (p[static_cast<size_t>(a)] == 0.0) continue;
    for (int b = 1; a + b <= k_trunc; ++b)
      m[static_cast<size_t>(a + b)] +=
          p[static_cast<size_t>(a)] * p[static_cast<size_t>(b)];
  }
  ScalingReport rep;
  rep.exponent = 1.0 - 0.5 * d;
  const double dist = static_cast<double>(linf_norm(z, d));
  for (int L : L_grid) {
    double s = 0.0;
    for (int k = L; k <= k_trunc; ++k)
      s += kLoopIntensityAlpha * m[static_cast<size_t>(k)];
    rep.rows.push_back({static_cast<double>(L), s,
                        s / (std::pow(L, rep.exponent) *
                             std::pow(dist, 2.0 - d))});
  }
  double lo = rep.rows[0].ratio, hi = rep.rows[0].ratio;
  for (const auto& row : rep.rows) {
    lo = std::min(lo, row.ratio);
    hi = std::max(hi, row.ratio);
  }
  rep.ratio_spread = hi / lo;
  return rep;
}

std::vector<LocalCltRow> loop_local_clt_check(int d, double kappa,
                                              const std::vector<int>& dist_grid,
                                              int k_trunc) {
  std::vector<LocalCltRow> rows;
  for (int n : dist_grid) {
    Vertex z;
    z[0] = static_cast<Coord>(n);
    const std::vector<double> p = kernel_series_at(d, z, k_trunc);
    std::vector<double> m(static_cast<size_t>(k_trunc + 1), 0.0);
    for (int a = 1; a <= k_trunc; ++a) {
      if (p[static_cast<size_t>(a)] == 0.0) continue;
      for (int b = 1; a + b <= k_trunc; ++b)
        m[static_cast<size_t>(a + b)] +=
            p[static_cast<size_t>(a)] * p[static_cast<size_t>(b)];
    }
    const int cutoff = static_cast<int>(
        std::floor(std::pow(static_cast<double>(n), 2.0 * (1.0 - kappa))));
    double s = 0.0;
    for (int k = 2; k <= std::min(cutoff, k_trunc); ++k)
      s += kLoopIntensityAlpha * m[static_cast<size_t>(k)];
    rows.push_back({static_cast<double>(n), s,
                    std::exp(-std::pow(static_cast<double>(n), 2.0 * kappa) /
                             4.0)});
  }
  return rows;
}

std::vector<ConvolutionRow> convolution_inequality_check(
    double a1, double a2, int d, int R, const std::vector<int>& dist_grid) {
  require(std::min(a1, a2) > -static_cast<double>(d),
          "convolution check: min{a1,a2} > -d required");
  require(a1 + a2 < -static_cast<double>(d),
          "convolution check: a1+a2 < -d required for a finite fixed-x sum");
  // Axis-separated exact sum over B_R for y - x = n e_1: group z by
  // (z_1, s = max_{i >= 2} |z_i|).
  auto shell_count = [&](int s) -> double {
    if (d == 1) return s == 0 ? 1.0 : 0.0;
    const double out = std::pow(2.0 * s + 1.0, d - 1);
    const double in = s == 0 ? 0.0 : std::pow(2.0 * s - 1.0, d - 1);
    return out - in;
  };
  auto eval = [&](int n, int radius) {
    double sum = 0.0;
    for (int z1 = -radius; z1 <= radius; ++z1) {
      for (int s = 0; s <= radius; ++s) {
        const double cnt = shell_count(s);
        if (cnt == 0.0) continue;
        const double r1 = std::max(std::abs(z1), s);          // |z - x|_inf
        const double r2 = std::max(std::abs(z1 - n), s);      // |z - y|_inf
        if (r1 == 0.0 || r2 == 0.0) continue;                 // z != x, y
        sum += cnt * std::pow(r1, a1) * std::pow(r2, a2);
      }
    }
    return sum;
  };
  std::vector<ConvolutionRow> rows;
  for (int n : dist_grid) {
    const double s1 = eval(n, R);
    const double s2 = eval(n, 2 * R);
    rows.push_back({n, s1, s1 / std::pow(static_cast<double>(n), a1 + a2 + d),
                    s2 / s1 - 1.0});
  }
  return rows;
}

}  // namespace cableperc
