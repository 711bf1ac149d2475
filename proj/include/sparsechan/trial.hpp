#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "sparsechan/bpdn.hpp"
#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/multipath.hpp"
#include "sparsechan/ofdm.hpp"
#include "sparsechan/omp.hpp"
#include "sparsechan/rng.hpp"

namespace sparsechan {

/// Per-subcarrier noise variance for a per-subcarrier SNR with unit channel energy.
inline double noise_variance(double snr_db, int K) { return from_db(-snr_db) / K; }

/// One estimator column of a sweep.
struct EstimatorSpec {
  Method method = Method::ml_m;
  DictionaryConfig dict;
  BpdnConfig bpdn;
  std::string name;                    // CSV label; empty derives one from the method
  std::optional<double> assumed_L_hat; // OMP nu2 for the receiver; empty uses the trial's L_hat

  std::string label(const OfdmGrid& g) const {
    if (!name.empty()) return name;
    std::string s = to_string(method);
    const bool uses_dict = method == Method::omp || method == Method::ompbr || method == Method::bpdn_direct ||
                           method == Method::bpdn_ls;
    if (uses_dict && dict.dictionary_size(g) != g.M) s += "-nt" + std::to_string(dict.dictionary_size(g));
    return s;
  }

  void validate(const OfdmGrid& g) const {
    dict.validate(g);
    bpdn.validate();
    if (method == Method::ompbr && !dict.refine)
      throw std::invalid_argument("estimator ompbr requires dictionary refinement");
    if (method == Method::omp && dict.refine)
      throw std::invalid_argument("estimator omp must not enable refinement; use ompbr");
    if (assumed_L_hat && !(*assumed_L_hat >= 0.0))
      throw std::invalid_argument("estimator assumed_L_hat must be >= 0");
  }
};

inline EstimatorSpec make_estimator(Method m, int dictionary_size = 0) {
  EstimatorSpec e;
  e.method = m;
  e.dict.size = dictionary_size;
  e.dict.refine = m == Method::ompbr;
  return e;
}

/// Runs one estimator on an observation. `mpcs` and `h_m` are used only by the
/// genie and perfect-CSI references.
inline ChannelEstimate run_estimator(const EstimatorSpec& spec, const PilotObservation& obs, const OfdmGrid& g,
                                     const PulseShape& pulse, const MpcSet& mpcs, const CVector& h_m) {
  switch (spec.method) {
    case Method::perfect_csi: {
      ChannelEstimate e;
      e.method = Method::perfect_csi;
      e.h_M_hat = h_m;
      e.h_K_hat = f_km_apply(h_m, g.K);
      e.support = mpcs.delays;
      e.L_hat = static_cast<int>(mpcs.size());
      return e;
    }
    case Method::ml_m: return estimate_ml_m(obs, g);
    case Method::genie_ls: return estimate_genie_ls(obs, g, mpcs, pulse);
    case Method::omp:
    case Method::ompbr: return run_omp(obs, g, pulse, spec.dict);
    case Method::bpdn_direct:
    case Method::bpdn_ls: return run_bpdn(obs, g, pulse, spec.dict, spec.method, spec.bpdn);
  }
  throw std::invalid_argument("run_estimator: unknown method");
}

struct TrialChannel {
  MpcSet mpcs;
  CVector h_m;
};

/// The channel of trial `trial`. Depends only on (seed, trial), so every SNR
/// point and every estimator of a sweep sees the same realization.
inline TrialChannel draw_trial_channel(const ChannelModel& model, std::uint64_t seed, std::uint64_t trial) {
  Rng rng = make_rng(seed, Stream::channel, trial);
  TrialChannel c;
  c.mpcs = draw_mpcs(model, rng);
  c.h_m = build_time_channel(c.mpcs, model.pulse).h;
  return c;
}

enum class PilotKind { ones, qpsk };

/// Pilot observation of trial `trial`. The noise substream does not depend on
/// the SNR, so the same unit-variance draw is rescaled across an SNR grid.
inline PilotObservation observe_trial(const CVector& h_m, const OfdmGrid& g, double sigma2, std::uint64_t seed,
                                      std::uint64_t trial, PilotKind kind = PilotKind::ones) {
  CVector pilots;
  if (kind == PilotKind::qpsk) {
    Rng prng = make_rng(seed, Stream::pilots, trial);
    pilots = qpsk_pilots(g.N, prng);
  } else {
    pilots = all_ones_pilots(g.N);
  }
  Rng nrng = make_rng(seed, Stream::pilot_noise, trial);
  return observe_pilots(h_m, g, pilots, sigma2, nrng);
}

inline double estimate_mse(const ChannelEstimate& e, const CVector& h_m, int K) {
  return (e.h_M_hat - h_m).squaredNorm() / K;
}

}  // namespace sparsechan
