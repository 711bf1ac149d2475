#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsechan/core.hpp"
#include "sparsechan/linalg.hpp"
#include "sparsechan/multipath.hpp"
#include "sparsechan/ofdm.hpp"
#include "sparsechan/pulse.hpp"

namespace sparsechan {

enum class Method { perfect_csi, ml_m, genie_ls, omp, ompbr, bpdn_direct, bpdn_ls };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::perfect_csi: return "perfect-csi";
    case Method::ml_m: return "ml-m";
    case Method::genie_ls: return "genie-ls";
    case Method::omp: return "omp";
    case Method::ompbr: return "ompbr";
    case Method::bpdn_direct: return "bpdn-direct";
    case Method::bpdn_ls: return "bpdn-ls";
  }
  return "?";
}

struct ChannelEstimate {
  Method method = Method::ml_m;
  CVector h_K_hat;
  CVector h_M_hat;                  // time-domain taps, F_{K,M} h_M_hat = h_K_hat
  std::vector<double> support;      // estimated delays, seconds
  CVector b_hat;                    // gains aligned with support
  int L_hat = 0;
  double residual_power = 0.0;      // ||y - D(x) Phi b||^2 at stop
};

/// The pilot observation mapped back to the M-tap domain.
///
/// With unit-modulus pilots, ||y - D(x) F_{N/K,M} g||^2 = scale ||h_ml - g||^2 + offset
/// for every g, where scale = N/K and offset is the observation energy outside
/// the range of F_{N/K,M}. Every LS fit over pulse-delay atoms can therefore run
/// on M-vectors with real-valued atoms.
struct TapDomainObservation {
  CVector h_ml;
  double scale = 1.0;
  double offset = 0.0;

  double observation_residual(const CVector& r) const { return scale * r.squaredNorm() + offset; }
};

inline TapDomainObservation to_tap_domain(const PilotObservation& obs, const OfdmGrid& g) {
  g.validate();
  if (obs.derotated.size() != g.N) throw std::invalid_argument("observation length differs from N");
  TapDomainObservation t;
  t.h_ml = g.oversampling() * f_nkm_adjoint(obs.derotated, g);
  t.scale = 1.0 / g.oversampling();
  t.offset = std::max(0.0, obs.derotated.squaredNorm() - t.scale * t.h_ml.squaredNorm());
  return t;
}

/// Non-sparse LS of all M taps: (K/N) F_{N/K,M}^H D(x)^H y.
inline ChannelEstimate estimate_ml_m(const PilotObservation& obs, const OfdmGrid& g) {
  const auto t = to_tap_domain(obs, g);
  ChannelEstimate e;
  e.method = Method::ml_m;
  e.h_M_hat = t.h_ml;
  e.h_K_hat = f_km_apply(e.h_M_hat, g.K);
  e.L_hat = g.M;
  e.residual_power = t.offset;
  return e;
}

/// LS over the true delays. Throws numerical_rank_error if P is rank deficient.
inline ChannelEstimate estimate_genie_ls(const PilotObservation& obs, const OfdmGrid& g,
                                         const MpcSet& mpcs, const PulseShape& pulse) {
  if (static_cast<int>(mpcs.size()) > g.N) throw std::invalid_argument("genie: more MPCs than pilots");
  const auto t = to_tap_domain(obs, g);
  const CMatrix p = pulse_delay_matrix(pulse, mpcs.delays);
  auto ls = least_squares(p, t.h_ml);
  if (ls.rank < p.cols())
    throw numerical_rank_error("genie: pulse-delay matrix is rank deficient", ls.rank,
                               static_cast<int>(p.cols()));
  ChannelEstimate e;
  e.method = Method::genie_ls;
  e.support = mpcs.delays;
  e.b_hat = ls.x;
  e.h_M_hat = p * ls.x;
  e.h_K_hat = f_km_apply(e.h_M_hat, g.K);
  e.L_hat = static_cast<int>(mpcs.size());
  e.residual_power = t.observation_residual(t.h_ml - e.h_M_hat);
  return e;
}

/// rho = ||(I - P P^+) h_M||^2 / K for the given support.
inline double residual_of_support(const CVector& h_m, std::span<const double> support,
                                  const PulseShape& pulse, int K) {
  if (support.empty()) return h_m.squaredNorm() / K;
  const CMatrix p = pulse_delay_matrix(pulse, support);
  const auto ls = least_squares(p, h_m);
  return (h_m - p * ls.x).squaredNorm() / K;
}

/// Entry (i, j) of F_{K,M} F_{K,M}^H in closed form: a periodic sinc of i - j.
inline cplx periodic_sinc_kernel(int K, int M, int diff) {
  const int d = ((diff % K) + K) % K;
  if (d == 0) return cplx(static_cast<double>(M) / K, 0.0);
  const double x = kPi * d / K;
  const double mag = std::sin(M * x) / std::sin(x) / K;
  return std::polar(1.0, -(M - 1) * x) * mag;
}

inline CMatrix periodic_sinc_matrix(int K, int M) {
  CMatrix s(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) s(i, j) = periodic_sinc_kernel(K, M, i - j);
  return s;
}

/// Dense F_{K,M}, for small-instance checks and the full equalizer.
inline CMatrix dft_submatrix(int K, int M) {
  CMatrix f(K, M);
  const double s = 1.0 / std::sqrt(static_cast<double>(K));
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) f(k, m) = std::polar(s, -kTwoPi * ((static_cast<long>(k) * m) % K) / K);
  return f;
}

enum class CovKind { ml_m_closed_form, genie_closed_form, cs_empirical };

/// Error covariance Sigma = F_{K,M} inner F_{K,M}^H. inner is the covariance of
/// the tap-domain error, so trace(Sigma)/K = nu2, the per-subcarrier MSE.
struct ErrorCovModel {
  CovKind kind = CovKind::ml_m_closed_form;
  double nu2 = 0.0;
  CMatrix inner;
  long sample_count = 0;

  CMatrix full(int K) const {
    const CMatrix f = dft_submatrix(K, static_cast<int>(inner.rows()));
    return f * inner * f.adjoint();
  }
};

inline ErrorCovModel error_cov_ml_m(const OfdmGrid& g, double sigma2) {
  g.validate();
  ErrorCovModel c;
  c.kind = CovKind::ml_m_closed_form;
  c.nu2 = static_cast<double>(g.M) / g.N * sigma2;
  c.inner = CMatrix::Identity(g.M, g.M) * (g.oversampling() * sigma2);
  return c;
}

/// Closed form via the periodic-sinc kernel; equals ml.full(K).
inline CMatrix ml_m_covariance_closed_form(const OfdmGrid& g, double sigma2) {
  return periodic_sinc_matrix(g.K, g.M) * (g.oversampling() * sigma2);
}

inline ErrorCovModel error_cov_genie(const OfdmGrid& g, const MpcSet& mpcs, const PulseShape& pulse,
                                     double sigma2) {
  g.validate();
  const CMatrix p = pulse_delay_matrix(pulse, mpcs.delays);
  ErrorCovModel c;
  c.kind = CovKind::genie_closed_form;
  c.inner = range_projector(p) * (g.oversampling() * sigma2);
  c.nu2 = c.inner.trace().real() / g.K;
  return c;
}

/// Accumulates the two-term error covariance of a support-then-LS estimator:
/// the noise part P (b_hat - b) and the modelling part (I - P P^+) h_M.
/// Partial accumulators built on disjoint trials can be merged.
class CsCovarianceAccumulator {
 public:
  CsCovarianceAccumulator() = default;
  explicit CsCovarianceAccumulator(int M) : sum_(CMatrix::Zero(M, M)) {}

  void add(const CVector& h_m, const ChannelEstimate& est, const PulseShape& pulse) {
    if (sum_.size() == 0) sum_ = CMatrix::Zero(h_m.size(), h_m.size());
    CVector proj = CVector::Zero(h_m.size());
    if (!est.support.empty()) {
      const CMatrix p = pulse_delay_matrix(pulse, est.support);
      proj = p * least_squares(p, h_m).x;
    }
    const CVector noise_part = est.h_M_hat - proj;
    const CVector model_part = h_m - proj;
    sum_.noalias() += noise_part * noise_part.adjoint();
    sum_.noalias() += model_part * model_part.adjoint();
    ++count_;
  }

  void merge(const CsCovarianceAccumulator& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    sum_ += o.sum_;
    count_ += o.count_;
  }

  long count() const { return count_; }

  ErrorCovModel model(int K) const {
    if (count_ == 0) throw invalid_state_error("cs-empirical covariance: no samples");
    ErrorCovModel c;
    c.kind = CovKind::cs_empirical;
    c.inner = sum_ / static_cast<double>(count_);
    c.nu2 = c.inner.trace().real() / K;
    c.sample_count = count_;
    return c;
  }

 private:
  CMatrix sum_;
  long count_ = 0;
};

struct OmpErrorSplit {
  double mean_L_hat = 0.0;
  double mse = 0.0;
  double noise_term = 0.0;     // E ||P (b_hat - b)||^2 / K
  double residual_term = 0.0;  // E rho(support)
  long trials = 0;
};

/// Splits the MSE of a support-then-LS estimator into its two orthogonal terms.
class OmpErrorProbe {
 public:
  static constexpr long kMinTrials = 100;

  void add(const CVector& h_m, const ChannelEstimate& est, const PulseShape& pulse, int K) {
    CVector proj = CVector::Zero(h_m.size());
    if (!est.support.empty()) {
      const CMatrix p = pulse_delay_matrix(pulse, est.support);
      proj = p * least_squares(p, h_m).x;
    }
    lhat_ += est.L_hat;
    noise_ += (est.h_M_hat - proj).squaredNorm() / K;
    resid_ += (h_m - proj).squaredNorm() / K;
    mse_ += (est.h_M_hat - h_m).squaredNorm() / K;
    ++n_;
  }

  void merge(const OmpErrorProbe& o) {
    lhat_ += o.lhat_;
    noise_ += o.noise_;
    resid_ += o.resid_;
    mse_ += o.mse_;
    n_ += o.n_;
  }

  long count() const { return n_; }

  OmpErrorSplit result() const {
    if (n_ < kMinTrials)
      throw invalid_state_error("OMP error probe needs at least " + std::to_string(kMinTrials) +
                                " trials, have " + std::to_string(n_));
    const double n = static_cast<double>(n_);
    return {lhat_ / n, mse_ / n, noise_ / n, resid_ / n, n_};
  }

 private:
  double lhat_ = 0, noise_ = 0, resid_ = 0, mse_ = 0;
  long n_ = 0;
};

}  // namespace sparsechan
