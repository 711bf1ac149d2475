#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sparsechan/core.hpp"

namespace sparsechan {

struct CiStats {
  double ci = 0.0;
  double adjusted_ci = 0.0;        // (M / L) ci
  double kurtosis_estimate = 0.0;  // 1 / ci
};

/// (sum p)^2 / (n sum p^2) for nonnegative powers p; NaN when all are zero.
inline double ci_of_powers(const double* p, std::size_t n) {
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 += p[i];
    s2 += p[i] * p[i];
  }
  if (n == 0 || s2 == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return s1 * s1 / (static_cast<double>(n) * s2);
}

/// Compressibility index of v. `mpc_count` (L) sets the adjusted index; 0 means L = M.
inline CiStats compressibility_index(const CVector& v, int mpc_count = 0) {
  const RVector p = v.cwiseAbs2();
  const double ci = ci_of_powers(p.data(), static_cast<std::size_t>(p.size()));
  if (std::isnan(ci)) throw std::invalid_argument("compressibility_index: all-zero vector");
  const int l = mpc_count > 0 ? mpc_count : static_cast<int>(v.size());
  return {ci, ci * static_cast<double>(v.size()) / l, 1.0 / ci};
}

inline CiStats compressibility_index(const RVector& v, int mpc_count = 0) {
  return compressibility_index(CVector(v.cast<cplx>()), mpc_count);
}

/// Oracle residual for an orthogonal dictionary: the d strongest taps are
/// recovered exactly.
struct ResidualProfile {
  RVector sorted_powers;  // m_1 >= m_2 >= ... (length M)
  RVector rho_bar;        // rho_bar(0..M)
  RVector ci_rd;          // CI(R_d), d = 0..M-1; NaN once R_d carries no power
  int K = 1;
  double total_power = 0.0;

  int fir_length() const { return static_cast<int>(sorted_powers.size()); }
  /// K rho_bar(d) / ||h||^2, the quantity the CI bounds apply to.
  double normalized_rho(int d) const { return K * rho_bar(d) / total_power; }
};

inline ResidualProfile oracle_residual_profile(const CVector& h_m, int K) {
  if (K < 1) throw std::invalid_argument("oracle_residual_profile: K must be >= 1");
  const int m = static_cast<int>(h_m.size());
  ResidualProfile r;
  r.K = K;
  std::vector<double> p(m);
  for (int i = 0; i < m; ++i) p[i] = std::norm(h_m(i));
  std::sort(p.begin(), p.end(), std::greater<>());
  r.sorted_powers = Eigen::Map<RVector>(p.data(), m);
  // Tail sums accumulated from the weakest tap up keep rho_bar(M) exactly 0.
  RVector tail1(m + 1), tail2(m + 1);
  tail1(m) = tail2(m) = 0.0;
  for (int i = m - 1; i >= 0; --i) {
    tail1(i) = tail1(i + 1) + p[i];
    tail2(i) = tail2(i + 1) + p[i] * p[i];
  }
  r.total_power = tail1(0);
  if (!(r.total_power > 0.0)) throw std::invalid_argument("oracle_residual_profile: all-zero channel");
  r.rho_bar = tail1 / K;
  r.ci_rd.resize(m);
  for (int d = 0; d < m; ++d)
    r.ci_rd(d) = tail2(d) > 0.0 ? tail1(d) * tail1(d) / ((m - d) * tail2(d))
                                : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct BoundValue {
  double value = 0.0;
  bool clamped = false;     // some factor went negative and was set to 0
  bool degenerate = false;  // the index argument made the bound vacuous
};

/// prod_{i<d} (1 - 1/sqrt((M - i) CI(R_i))). Lower-bounds normalized_rho(d).
inline BoundValue rho_lower_bound_product(const ResidualProfile& prof, int d) {
  const int m = prof.fir_length();
  if (d < 0 || d > m) throw std::out_of_range("rho_lower_bound_product: d outside [0, M]");
  BoundValue b{1.0, false, false};
  for (int i = 0; i < d; ++i) {
    const double c = prof.ci_rd(i);
    if (std::isnan(c)) {
      b.value = 0.0;
      b.degenerate = true;
      break;
    }
    double f = 1.0 - 1.0 / std::sqrt((m - i) * c);
    if (f < 0.0) {
      f = 0.0;
      b.clamped = true;
    }
    b.value *= f;
  }
  return b;
}

namespace detail {

inline BoundValue geometric_bound(double ci, int n, int d) {
  if (!(ci > 0.0 && ci <= 1.0 + 1e-12)) throw std::invalid_argument("CI must lie in (0, 1]");
  if (n < 1 || d < 0) throw std::invalid_argument("bound: need n >= 1 and d >= 0");
  if (d == 0) return {1.0, false, false};
  const double nc = n * ci;
  if (nc < 1.0) return {0.0, true, true};
  return {std::pow(1.0 - 1.0 / std::sqrt(nc), d), false, nc == 1.0};
}

}  // namespace detail

/// (1 - 1/sqrt(M CI(h_M)))^d
inline BoundValue rho_lower_bound_geometric(double ci_h, int M, int d) {
  return detail::geometric_bound(ci_h, M, d);
}

/// (1 - 1/sqrt(L CI(alpha)))^d
inline BoundValue rho_lower_bound_amplitude(double ci_alpha, int L, int d) {
  return detail::geometric_bound(ci_alpha, L, d);
}

/// (1 - sqrt(kappa / L))^d, clamped at 0.
inline double rho_kurtosis_approximation(double kappa, int L, int d) {
  return std::pow(std::max(0.0, 1.0 - std::sqrt(kappa / L)), d);
}

struct CiGrowth {
  std::vector<double> ratios;  // r_1 .. r_dmax (shorter if degenerate)
  int d_max = 0;
  bool degenerate = false;     // some R_d ran out of power before d_max
};

/// r_d = ((M - d + 1)/(M - d)) CI(R_{d-1}) / CI(R_d), d = 1..min(40, M/2).
/// Values at or below 1 agree with the CI-growth assumption.
inline CiGrowth ci_growth_check(const CVector& h_m) {
  const auto prof = oracle_residual_profile(h_m, 1);
  const int m = prof.fir_length();
  CiGrowth g;
  g.d_max = std::min(40, m / 2);
  for (int d = 1; d <= g.d_max; ++d) {
    const double prev = prof.ci_rd(d - 1), cur = prof.ci_rd(d);
    if (std::isnan(cur) || std::isnan(prev)) {
      g.degenerate = true;
      break;
    }
    g.ratios.push_back(static_cast<double>(m - d + 1) / (m - d) * prev / cur);
  }
  return g;
}

struct KurtosisBridge {
  double ci_alpha_mean = 0.0;      // E[CI({alpha})]
  double inverse_ci_mean = 0.0;    // E[1 / CI({alpha})]
  double kappa_estimate = 0.0;     // pooled E[a^4] / E[a^2]^2
  long sets = 0;
};

/// Relates the CI of amplitude sets to the kurtosis of their marginal
/// distribution. Feed unnormalized amplitudes; CI is scale invariant but the
/// pooled kurtosis is not.
class AmplitudeKurtosisBridge {
 public:
  static constexpr long kMinSets = 100;

  void add(const RVector& raw_amplitudes) {
    if (raw_amplitudes.size() == 0) throw std::invalid_argument("kurtosis bridge: empty amplitude set");
    const RVector p = raw_amplitudes.cwiseAbs2();
    const double ci = ci_of_powers(p.data(), static_cast<std::size_t>(p.size()));
    if (std::isnan(ci)) throw std::invalid_argument("kurtosis bridge: all-zero amplitude set");
    ci_sum_ += ci;
    inv_ci_sum_ += 1.0 / ci;
    m2_ += p.sum();
    m4_ += p.squaredNorm();
    count_ += p.size();
    ++sets_;
  }

  void merge(const AmplitudeKurtosisBridge& o) {
    ci_sum_ += o.ci_sum_;
    inv_ci_sum_ += o.inv_ci_sum_;
    m2_ += o.m2_;
    m4_ += o.m4_;
    count_ += o.count_;
    sets_ += o.sets_;
  }

  KurtosisBridge result() const {
    if (sets_ < kMinSets) throw invalid_state_error("kurtosis bridge needs at least 100 amplitude sets");
    const double n = static_cast<double>(count_);
    const double mean2 = m2_ / n;
    return {ci_sum_ / sets_, inv_ci_sum_ / sets_, (m4_ / n) / (mean2 * mean2), sets_};
  }

 private:
  double ci_sum_ = 0, inv_ci_sum_ = 0, m2_ = 0, m4_ = 0;
  long count_ = 0, sets_ = 0;
};

}  // namespace sparsechan
