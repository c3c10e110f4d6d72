#pragma once

// Exact numerics for the simple random walk: kernel powers, return
// probabilities, Green's functions and loop-measure masses. Everything here
// is deterministic and serves as the independent ground truth the samplers
// are calibrated against.
//
// The free-lattice kernel p_k(z) is stored on canonical classes (coordinates
// sorted by absolute value), which shrinks a box of ~1e9 sites to a few
// thousand entries in d=7.

#include <array>
#include <memory>
#include <unordered_map>
#include <vector>

#include "cableperc/lattice.hpp"

namespace cableperc {

enum class KernelMode { free_lattice, box_killed, torus };

inline constexpr double kLoopIntensityAlpha = 0.5;

// ---- free-lattice kernel on canonical classes ----------------------------

class FreeKernelTable {
 public:
  FreeKernelTable(int d, int k_max);

  int d() const { return d_; }
  int k_max() const { return k_max_; }

  /// p_k(0, z) for |z|_1 <= k_max; zero outside the table's support.
  double p(int k, const Vertex& z) const;
  double return_prob(int k) const { return p_[static_cast<size_t>(k)][0]; }

  /// Neighbor-step distribution for closed-walk (bridge) sampling:
  /// from relative offset `z` with `j` steps remaining to return to 0,
  /// picks the next step with probability p_{j-1}(z + s e_i) / (2d p_j(z)).
  /// `u` is the caller's uniform; returns (axis, sign).
  std::pair<int, int> sample_step(const Vertex& z, int j, double u) const;

  /// Step probability, for cross-checking the sampler.
  double step_prob(const Vertex& z, int j, int axis, int sign) const;

 private:
  int class_index(const Vertex& z) const;  // -1 if outside support
  int d_;
  int k_max_;
  int n_classes_;
  std::unordered_map<u64, int> index_;              // canonical key -> class
  std::vector<std::array<int, 2 * kMaxDim>> nbr_;   // class -> neighbor class
  std::vector<std::vector<double>> p_;              // p_[k][class]
  std::vector<std::vector<double>> step_cdf_;       // [class*k_max+j][2d]
};

// ---- box-killed and torus kernels ----------------------------------------

/// Kernels of the walk killed on exiting a box. Backward tables are built
/// lazily per root and cached; diagonals feed root sampling for the soup.
class BoxKernelTable {
 public:
  BoxKernelTable(const BoxSpec& box, int k_max);

  const BoxSpec& box() const { return box_; }
  int k_max() const { return k_max_; }

  /// p^B_j(y, root) for all y (dense box indexing), j <= k_max.
  const std::vector<double>& root_table(i64 root_idx);

  double p(int k, i64 from_idx, i64 root_idx) {
    return root_table(root_idx)[static_cast<size_t>(k) *
                                    static_cast<size_t>(box_.size()) +
                                static_cast<size_t>(from_idx)];
  }
  double diagonal(int k, i64 idx) { return p(k, idx, idx); }

  /// Sum of diagonal entries: tr(P_B^k).
  double trace(int k);

 private:
  BoxSpec box_;
  int k_max_;
  std::vector<std::vector<double>> tables_;  // per root, lazily built
  std::vector<std::array<i64, 2 * kMaxDim>> nbr_;  // -1 = killed
};

/// Torus kernel (translation invariant). Exists for boundary-free
/// calibration tests only.
class TorusKernelTable {
 public:
  TorusKernelTable(int d, int side, int k_max);
  int d() const { return d_; }
  int side() const { return side_; }
  /// p^T_k(0, z) with z in torus coordinates [0, side)^d.
  double p(int k, const Vertex& z) const;
  double return_prob(int k) const;

 private:
  i64 index(const Vertex& z) const;
  int d_, side_, k_max_;
  std::vector<std::vector<double>> p_;
};

// ---- return probability, two independent routes ---------------------------

/// Exact integer-weighted convolution dynamic program (128-bit counts).
double return_prob_dp(int d, int k);

/// Quadrature of the characteristic function: per-axis Gauss-Legendre cosine
/// moments combined through the multinomial expansion of ((1/d) sum cos)^k.
double return_prob_quadrature(int d, int k);

/// Both routes, asserting agreement to `tol`; returns the DP value.
double return_prob(int d, int k, double tol = 1e-9);

/// Exactness check: sum_z (count of k-step walks to z) == (2d)^k in integers.
bool walk_count_row_sums_exact(int d, int k);

// ---- Green's functions -----------------------------------------------------

/// Free-lattice G(0, x) for d >= 3 via the Laplace-Bessel form of the
/// characteristic-function integral. Errors (recurrence) for d < 3.
double greens_free(int d, const Vertex& x);

/// Cross-check route: truncated series sum_{k<=K} p_k(0,x) plus a local-CLT
/// tail with an empirically fitted 1/k correction.
double greens_free_series(int d, const Vertex& x, int k_trunc = 2048);

/// Dense box-killed Green's table: (I - P_B) G = I.
class GreensBox {
 public:
  explicit GreensBox(const BoxSpec& box);
  const BoxSpec& box() const { return box_; }
  double g(const Vertex& x, const Vertex& y) const;
  double g(i64 i, i64 j) const {
    return mat_[static_cast<size_t>(i) * static_cast<size_t>(box_.size()) +
                static_cast<size_t>(j)];
  }

 private:
  BoxSpec box_;
  std::vector<double> mat_;
};

// ---- loop-measure masses ---------------------------------------------------

/// Lambda_k(region) = (alpha/k) sum_{x in region} p_k(x,x): the Poisson mean
/// of rooted length-k loops in the region. Errors for k < 2.
double loop_mass_by_length(const FreeKernelTable& table, i64 region_size,
                           int k);
double loop_mass_by_length(BoxKernelTable& table,
                           const std::vector<i64>& region_indices, int k);
double loop_mass_by_length(const TorusKernelTable& table, i64 region_size,
                           int k);

/// Per-displacement kernel series p_a(z) for a <= k_trunc, via per-axis
/// 1D walk counts combined by convolution. Used by the scaling checks.
std::vector<double> kernel_series_at(int d, const Vertex& z, int k_trunc);

/// Visit-weighted mass of length-k loops at the origin equals alpha * r_k;
/// the one-point tail is S_i(L) = sum_{k>=L} k^i alpha r_k.
struct ScalingRow {
  double L;
  double tail_sum;
  double ratio;  // tail_sum / L^{exponent}
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  double exponent;      // the paper's target exponent for the ratio
  double ratio_spread;  // max ratio / min ratio over the grid
};

/// One-point check (target L^{i+1-d/2}); requires i+1 < d/2.
ScalingReport loop_tail_one_point(int d, const std::vector<int>& L_grid,
                                  int i, int k_trunc = 2048);

/// Two-point check: T(L) = sum_{k>=L} alpha m_k(z) with
/// m_k(z) = sum_{a=1}^{k-1} p_a(z) p_{k-a}(z); target L^{1-d/2} |z|^{2-d}.
ScalingReport loop_tail_two_point(int d, const Vertex& z,
                                  const std::vector<int>& L_grid,
                                  int k_trunc = 2048);

/// Short-loop mass through two far points vs the local-CLT bound
/// C e^{-|z|^{2 kappa}/4}: returns (mass, bound) pairs over |z| grid.
struct LocalCltRow {
  double dist;
  double mass;
  double bound;
};
std::vector<LocalCltRow> loop_local_clt_check(int d, double kappa,
                                              const std::vector<int>& dist_grid,
                                              int k_trunc = 2048);

/// Truncated lattice sum sum_{z in B_R, z != x,y} |z-x|^{a1} |z-y|^{a2}
/// against C |x-y|^{a1+a2+d}; axis-separated exact evaluation (y - x on an
/// axis). Returns the empirical C per distance plus the R-doubling ratio.
struct ConvolutionRow {
  int dist;
  double sum;
  double empirical_c;
  double tail_growth;  // sum(2R) / sum(R) - 1
};
std::vector<ConvolutionRow> convolution_inequality_check(
    double a1, double a2, int d, int R, const std::vector<int>& dist_grid);

}  // namespace cableperc
