#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsechan/core.hpp"

namespace sparsechan {

enum class PulseKind { sinc, raised_cosine };

/// Transmit pulse p(t), sample period T and FIR window length M.
/// Both supported kinds are Nyquist: p(0) = 1 and p(kT) = 0 for k != 0.
struct PulseShape {
  PulseKind kind = PulseKind::sinc;
  double rolloff = 0.0;  // raised cosine only, in [0, 1]
  double sample_period = 2.5e-9;
  int fir_length = 128;

  static PulseShape sinc(double period, int fir_len) {
    return {PulseKind::sinc, 0.0, period, fir_len};
  }
  static PulseShape raised_cosine(double period, int fir_len, double beta) {
    return {PulseKind::raised_cosine, beta, period, fir_len};
  }

  void validate() const {
    if (!(sample_period > 0.0)) throw std::invalid_argument("pulse: sample period must be > 0");
    if (fir_length < 1) throw std::invalid_argument("pulse: FIR length must be >= 1");
    if (kind == PulseKind::raised_cosine && !(rolloff >= 0.0 && rolloff <= 1.0))
      throw std::invalid_argument("pulse: raised-cosine roll-off must lie in [0, 1]");
  }

  /// Largest delay whose pulse-delay vector is defined: (M-1) T.
  double max_delay() const { return (fir_length - 1) * sample_period; }

  double operator()(double t) const { return evaluate_normalized(t / sample_period); }

  /// p evaluated at x sample periods.
  double evaluate_normalized(double x) const {
    const double s = normalized_sinc(x);
    if (kind == PulseKind::sinc || rolloff == 0.0) return s;
    const double bx = 2.0 * rolloff * x;
    const double den = 1.0 - bx * bx;
    if (std::abs(den) < 1e-10) return (kPi / 4.0) * normalized_sinc(1.0 / (2.0 * rolloff));
    return s * std::cos(kPi * rolloff * x) / den;
  }

  static double normalized_sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - (kPi * x) * (kPi * x) / 6.0;
    return std::sin(kPi * x) / (kPi * x);
  }
};

namespace detail {

inline void check_delay_in_window(const PulseShape& pulse, double tau) {
  const double slack = 1e-9 * pulse.sample_period;
  if (!(tau >= -slack && tau <= pulse.max_delay() + slack))
    throw std::domain_error("delay " + std::to_string(tau) + " s outside FIR window [0, " +
                            std::to_string(pulse.max_delay()) + "] s");
}

}  // namespace detail

/// Real samples p(nT - tau), n = 0..M-1. No range check; hot path of the
/// refinement search.
inline void sample_pulse(const PulseShape& pulse, double tau, Eigen::Ref<RVector> out) {
  const int m = pulse.fir_length;
  const double x = tau / pulse.sample_period;
  if (pulse.kind == PulseKind::sinc || pulse.rolloff == 0.0) {
    // With x = k + f, sin(pi (n - x)) = -(-1)^(n-k) sin(pi f): one transcendental
    // per vector, and the reduced argument keeps full precision for large x.
    const double k = std::round(x);
    const double sf = std::sin(kPi * (x - k));
    const long kp = static_cast<long>(k);
    for (int n = 0; n < m; ++n) {
      const double d = n - x;
      if (std::abs(d) < 1e-8) {
        out(n) = 1.0 - (kPi * d) * (kPi * d) / 6.0;
      } else {
        const double sign = ((n - kp) % 2 == 0) ? -1.0 : 1.0;
        out(n) = sign * sf / (kPi * d);
      }
    }
    return;
  }
  for (int n = 0; n < m; ++n) out(n) = pulse.evaluate_normalized(n - x);
}

inline RVector pulse_delay_vector_real(const PulseShape& pulse, double tau) {
  RVector v(pulse.fir_length);
  sample_pulse(pulse, tau, v);
  return v;
}

/// p(tau) = (p(-tau), p(T - tau), ..., p((M-1)T - tau)).
inline CVector pulse_delay_vector(const PulseShape& pulse, double tau) {
  detail::check_delay_in_window(pulse, tau);
  return pulse_delay_vector_real(pulse, tau).cast<cplx>();
}

/// Throws std::invalid_argument when two delays are closer than 1e-6 T.
inline void check_distinct_delays(const PulseShape& pulse, std::span<const double> delays) {
  std::vector<double> sorted(delays.begin(), delays.end());
  std::sort(sorted.begin(), sorted.end());
  const double tol = kDuplicateDelayFraction * pulse.sample_period;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] - sorted[i - 1] < tol)
      throw std::invalid_argument("duplicate delay " + std::to_string(sorted[i]) + " s");
}

inline RMatrix pulse_delay_matrix_real(const PulseShape& pulse, std::span<const double> delays) {
  RMatrix p(pulse.fir_length, static_cast<Eigen::Index>(delays.size()));
  for (std::size_t l = 0; l < delays.size(); ++l) sample_pulse(pulse, delays[l], p.col(l));
  return p;
}

/// M x L matrix whose columns are the pulse-delay vectors of `delays`.
inline CMatrix pulse_delay_matrix(const PulseShape& pulse, std::span<const double> delays) {
  for (double tau : delays) detail::check_delay_in_window(pulse, tau);
  check_distinct_delays(pulse, delays);
  return pulse_delay_matrix_real(pulse, delays).cast<cplx>();
}

}  // namespace sparsechan
