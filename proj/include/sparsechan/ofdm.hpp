#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sparsechan/core.hpp"
#include "sparsechan/rng.hpp"

namespace sparsechan {

/// K subcarriers, M-tap channel (= CP length), N comb pilots every K/N subcarriers.
struct OfdmGrid {
  int K = 512;
  int M = 128;
  int N = 128;

  void validate() const {
    if (M < 1) throw std::invalid_argument("grid: M must be >= 1");
    if (!(M <= N && N <= K)) throw std::invalid_argument("grid: need M <= N <= K");
    if (K % N != 0) throw std::invalid_argument("grid: K must be a multiple of N");
  }
  int pilot_stride() const { return K / N; }
  /// K/N, the factor that makes the pilot operator an isometry.
  double oversampling() const { return static_cast<double>(K) / N; }
};

namespace detail {

inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::Unscaled);
    return f;
  }();
  return fft;
}

// Length-n forward DFT of v zero-padded to n (v.size() <= n).
inline CVector dft_padded(const CVector& v, int n) {
  CVector in = CVector::Zero(n);
  in.head(v.size()) = v;
  CVector out(n);
  fft_engine().fwd(out.data(), in.data(), n);
  return out;
}

// Unscaled inverse DFT: out[m] = sum_k v[k] exp(+j 2 pi k m / n).
inline CVector idft_unscaled(const CVector& v) {
  const int n = static_cast<int>(v.size());
  CVector out(n);
  fft_engine().inv(out.data(), v.data(), n);
  return out;
}

}  // namespace detail

/// h_K = F_{K,M} h_M: first M columns of the normalized K-point DFT.
inline CVector f_km_apply(const CVector& h_m, int K) {
  if (h_m.size() > K) throw std::invalid_argument("f_km_apply: vector longer than K");
  return detail::dft_padded(h_m, K) / std::sqrt(static_cast<double>(K));
}

/// F_{K,M}^H v, returning the M leading time taps.
inline CVector f_km_adjoint(const CVector& v, int M) {
  const double k = static_cast<double>(v.size());
  return detail::idft_unscaled(v).head(M) / std::sqrt(k);
}

/// Pilot rows k K/N of F_{K,M}: entry (k, m) = exp(-j 2 pi k m / N) / sqrt(K).
inline CVector f_nkm_apply(const CVector& h_m, const OfdmGrid& g) {
  if (h_m.size() != g.M) throw std::invalid_argument("f_nkm_apply: expected length M");
  return detail::dft_padded(h_m, g.N) / std::sqrt(static_cast<double>(g.K));
}

inline CVector f_nkm_adjoint(const CVector& v, const OfdmGrid& g) {
  if (v.size() != g.N) throw std::invalid_argument("f_nkm_adjoint: expected length N");
  return detail::idft_unscaled(v).head(g.M) / std::sqrt(static_cast<double>(g.K));
}

/// h_K = F_{K,M} F_{N/K,M}^H (K/N) h_{N/K}. Exact whenever h_NK is the
/// pilot image of some M-tap channel.
inline CVector reconstruct_hK_from_pilot_image(const CVector& h_nk, const OfdmGrid& g) {
  return f_km_apply(g.oversampling() * f_nkm_adjoint(h_nk, g), g.K);
}

struct FreqChannel {
  CVector h_K;
  std::optional<CVector> h_NK;
};

inline FreqChannel make_freq_channel(const CVector& h_m, const OfdmGrid& g, bool with_pilots = true) {
  FreqChannel f{f_km_apply(h_m, g.K), std::nullopt};
  if (with_pilots) f.h_NK = f_nkm_apply(h_m, g);
  return f;
}

inline CVector all_ones_pilots(int n) { return CVector::Ones(n); }

inline CVector qpsk_pilots(int n, Rng& rng) {
  std::uniform_int_distribution<int> q(0, 3);
  CVector x(n);
  for (int k = 0; k < n; ++k) x(k) = std::polar(1.0, kPi / 4.0 + kPi / 2.0 * q(rng));
  return x;
}

struct PilotObservation {
  CVector y;          // received pilot subcarriers
  CVector pilots;     // unit-modulus x_N
  double noise_var = 0.0;
  CVector derotated;  // D(x_N)^H y
};

inline void check_unit_modulus(const CVector& x, double tol = 1e-9) {
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (std::abs(std::abs(x(k)) - 1.0) > tol)
      throw std::invalid_argument("pilot " + std::to_string(k) + " is not unit modulus");
}

/// y_N = D(x_N) F_{N/K,M} h_M + z_N, z_N ~ CN(0, sigma2 I).
inline PilotObservation observe_pilots(const CVector& h_m, const OfdmGrid& g, const CVector& pilots,
                                       double sigma2, Rng& rng) {
  g.validate();
  if (pilots.size() != g.N) throw std::invalid_argument("observe_pilots: expected N pilots");
  check_unit_modulus(pilots);
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("observe_pilots: noise variance must be >= 0");
  PilotObservation o;
  o.pilots = pilots;
  o.noise_var = sigma2;
  o.y = pilots.cwiseProduct(f_nkm_apply(h_m, g));
  if (sigma2 > 0.0)
    for (Eigen::Index k = 0; k < g.N; ++k) o.y(k) += complex_normal(rng, sigma2);
  o.derotated = pilots.conjugate().cwiseProduct(o.y);
  return o;
}

/// Debug dump: subcarrier_index,re_y,im_y.
inline void write_observation_csv(std::ostream& os, const PilotObservation& o, const OfdmGrid& g) {
  os << "subcarrier_index,re_y,im_y\n";
  os.precision(17);
  for (Eigen::Index k = 0; k < o.y.size(); ++k)
    os << k * g.pilot_stride() << ',' << o.y(k).real() << ',' << o.y(k).imag() << '\n';
}

}  // namespace sparsechan
