#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/trial.hpp"

namespace sparsechan {

enum class Modulation { qpsk, qam16 };

inline const char* to_string(Modulation m) { return m == Modulation::qpsk ? "qpsk" : "16qam"; }

inline int bits_per_symbol(Modulation m) { return m == Modulation::qpsk ? 2 : 4; }

namespace detail {

// Gray-coded PAM levels on one axis. Index is the bit label, value the level.
inline constexpr std::array<double, 2> kPam2 = {1.0, -1.0};
inline constexpr std::array<double, 4> kPam4 = {-3.0, -1.0, 3.0, 1.0};  // 00 01 10 11

inline unsigned slice_pam4(double v) {
  // Nearest of -3, -1, +1, +3, returned as its Gray label.
  if (v < -2.0) return 0b00;
  if (v < 0.0) return 0b01;
  if (v < 2.0) return 0b11;
  return 0b10;
}

}  // namespace detail

/// Unit-energy Gray-mapped symbol for `label`. The high half of the bits
/// selects the in-phase level, the low half the quadrature level.
inline cplx modulate(Modulation m, unsigned label) {
  if (m == Modulation::qpsk) {
    if (label > 3) throw std::out_of_range("qpsk label must be < 4");
    const double s = 1.0 / std::sqrt(2.0);
    return {s * detail::kPam2[(label >> 1) & 1u], s * detail::kPam2[label & 1u]};
  }
  if (label > 15) throw std::out_of_range("16qam label must be < 16");
  const double s = 1.0 / std::sqrt(10.0);
  return {s * detail::kPam4[(label >> 2) & 3u], s * detail::kPam4[label & 3u]};
}

/// Minimum-Euclidean-distance decision. Square constellations split into
/// independent per-axis slicers, which gives the same decision as a full search.
inline unsigned demodulate(Modulation m, cplx z) {
  if (m == Modulation::qpsk) return (z.real() < 0.0 ? 2u : 0u) | (z.imag() < 0.0 ? 1u : 0u);
  const double s = std::sqrt(10.0);
  return (detail::slice_pam4(z.real() * s) << 2) | detail::slice_pam4(z.imag() * s);
}

inline std::vector<cplx> constellation(Modulation m) {
  std::vector<cplx> c;
  for (unsigned l = 0; l < (1u << bits_per_symbol(m)); ++l) c.push_back(modulate(m, l));
  return c;
}

struct EqualizerInput {
  CVector h_K_hat;
  double nu2 = 0.0;
  double sigma2 = 0.0;
  std::optional<CMatrix> input_cov;  // empty: i.i.d. unit-power inputs

  void validate() const {
    if (!(nu2 >= 0.0)) throw std::invalid_argument("equalizer: nu2 must be >= 0");
    if (!(sigma2 >= 0.0)) throw std::invalid_argument("equalizer: sigma2 must be >= 0");
    if (input_cov) {
      const auto k = h_K_hat.size();
      if (input_cov->rows() != k || input_cov->cols() != k)
        throw std::invalid_argument("equalizer: input covariance must be K x K");
      if (!input_cov->isApprox(input_cov->adjoint(), 1e-10))
        throw std::invalid_argument("equalizer: input covariance must be Hermitian");
    }
  }
};

struct MmseEqualizer {
  CMatrix B;
  bool regularized = false;  // the system matrix was singular and was loaded
};

/// Minimizer of E||B y - x||^2 for y = D(h) x + z with h = h_hat - h_err:
/// B = Sx D(h_hat)^H A^-1, A = Sx .* (h_hat h_hat^H) + Sx .* S_err + sigma2 I.
inline MmseEqualizer mmse_full(const EqualizerInput& eq, const CMatrix& err_cov) {
  eq.validate();
  const auto k = eq.h_K_hat.size();
  if (err_cov.rows() != k || err_cov.cols() != k)
    throw std::invalid_argument("mmse_full: error covariance must be K x K");
  const CMatrix sx = eq.input_cov ? *eq.input_cov : CMatrix(CMatrix::Identity(k, k));
  CMatrix a = sx.cwiseProduct(eq.h_K_hat * eq.h_K_hat.adjoint()) + sx.cwiseProduct(err_cov);
  a.diagonal().array() += eq.sigma2;
  // A B^H = D(h_hat) Sx.
  const CMatrix rhs = eq.h_K_hat.asDiagonal() * sx;

  MmseEqualizer out;
  Eigen::LDLT<CMatrix> ldlt(a);
  const bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-13;
  if (ok) {
    out.B = ldlt.solve(rhs).adjoint();
    return out;
  }
  const double load = 1e-10 * std::max(a.diagonal().real().cwiseAbs().maxCoeff(), 1.0);
  a.diagonal().array() += load;
  out.B = a.ldlt().solve(rhs).adjoint();
  out.regularized = true;
  return out;
}

inline MmseEqualizer mmse_full(const EqualizerInput& eq, const ErrorCovModel& err) {
  return mmse_full(eq, err.full(static_cast<int>(eq.h_K_hat.size())));
}

/// Per-subcarrier coefficient h_hat^* / (|h_hat|^2 + nu2 + sigma2); 0 when the
/// denominator vanishes.
inline cplx mmse_coefficient(cplx h_hat, double nu2, double sigma2) {
  const double den = std::norm(h_hat) + nu2 + sigma2;
  return den > 0.0 ? std::conj(h_hat) / den : cplx(0.0, 0.0);
}

inline cplx mmse_scalar(cplx h_hat, double nu2, double sigma2, cplx y) {
  return mmse_coefficient(h_hat, nu2, sigma2) * y;
}

/// Error variance nu2 the receiver assumes for an estimate.
inline double assumed_error_variance(const EstimatorSpec& spec, const ChannelEstimate& est, const OfdmGrid& g,
                                     double sigma2) {
  switch (spec.method) {
    case Method::perfect_csi: return 0.0;
    case Method::ml_m: return static_cast<double>(g.M) / g.N * sigma2;
    case Method::genie_ls: return static_cast<double>(est.L_hat) / g.N * sigma2;
    case Method::omp:
    case Method::ompbr: return 2.0 * spec.assumed_L_hat.value_or(est.L_hat) * sigma2 / g.N;
    case Method::bpdn_direct:
    case Method::bpdn_ls: break;
  }
  throw std::invalid_argument("receiver: estimator must be perfect-csi, ml-m, genie-ls, omp or ompbr");
}

struct BerCounts {
  long bit_errors = 0;
  long bits = 0;
  long symbols = 0;

  double ber() const { return bits > 0 ? static_cast<double>(bit_errors) / bits : 0.0; }
  void merge(const BerCounts& o) {
    bit_errors += o.bit_errors;
    bits += o.bits;
    symbols += o.symbols;
  }
};

struct BerConfig {
  Modulation modulation = Modulation::qpsk;
  int data_frames = 9;  // per block, after the pilot frame
  PilotKind pilots = PilotKind::ones;

  void validate() const {
    if (data_frames < 1) throw std::invalid_argument("ber: data_frames must be >= 1");
  }
};

/// One block: draw the channel, estimate it from the pilot frame with every
/// estimator, then send `data_frames` frames of i.i.d. symbols on all K
/// subcarriers. All estimators see the same channel, noise and data.
inline std::vector<BerCounts> run_ber_block(const ChannelModel& model, const OfdmGrid& g,
                                            std::span<const EstimatorSpec> estimators, double snr_db,
                                            const BerConfig& cfg, std::uint64_t seed, std::uint64_t trial) {
  cfg.validate();
  const double sigma2 = noise_variance(snr_db, g.K);
  const TrialChannel ch = draw_trial_channel(model, seed, trial);
  const PilotObservation obs = observe_trial(ch.h_m, g, sigma2, seed, trial, cfg.pilots);
  const CVector h_k = f_km_apply(ch.h_m, g.K);

  std::vector<CVector> coef;
  for (const auto& spec : estimators) {
    const ChannelEstimate est = run_estimator(spec, obs, g, model.pulse, ch.mpcs, ch.h_m);
    const double nu2 = assumed_error_variance(spec, est, g, sigma2);
    CVector b(g.K);
    for (int k = 0; k < g.K; ++k) b(k) = mmse_coefficient(est.h_K_hat(k), nu2, sigma2);
    coef.push_back(std::move(b));
  }

  const int bps = bits_per_symbol(cfg.modulation);
  std::vector<BerCounts> out(estimators.size());
  Rng data_rng = make_rng(seed, Stream::data, trial, 0);
  Rng noise_rng = make_rng(seed, Stream::data, trial, 1);
  std::uniform_int_distribution<unsigned> label_dist(0, (1u << bps) - 1);
  std::normal_distribution<double> unit(0.0, std::sqrt(0.5));
  const double sd = std::sqrt(sigma2);
  for (int f = 0; f < cfg.data_frames; ++f) {
    for (int k = 0; k < g.K; ++k) {
      const unsigned label = label_dist(data_rng);
      const double zr = unit(noise_rng), zi = unit(noise_rng);
      const cplx y = h_k(k) * modulate(cfg.modulation, label) + sd * cplx(zr, zi);
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        const unsigned dec = demodulate(cfg.modulation, coef[e](k) * y);
        out[e].bit_errors += std::popcount(dec ^ label);
      }
    }
  }
  for (auto& c : out) {
    c.symbols = static_cast<long>(cfg.data_frames) * g.K;
    c.bits = c.symbols * bps;
  }
  return out;
}

inline BerCounts run_ber_trial(const ChannelModel& model, const OfdmGrid& g, const EstimatorSpec& estimator,
                               double snr_db, const BerConfig& cfg, std::uint64_t seed, std::uint64_t trial) {
  return run_ber_block(model, g, std::span<const EstimatorSpec>(&estimator, 1), snr_db, cfg, seed, trial)[0];
}

}  // namespace sparsechan
