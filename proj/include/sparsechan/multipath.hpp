#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsechan/core.hpp"
#include "sparsechan/pulse.hpp"
#include "sparsechan/rng.hpp"

namespace sparsechan {

enum class AmplitudeKind { lognormal_decay, lognormal_flat, rayleigh_decay, rayleigh_flat };

inline const char* to_string(AmplitudeKind k) {
  switch (k) {
    case AmplitudeKind::lognormal_decay: return "lognormal-decay";
    case AmplitudeKind::lognormal_flat: return "lognormal-flat";
    case AmplitudeKind::rayleigh_decay: return "rayleigh-decay";
    case AmplitudeKind::rayleigh_flat: return "rayleigh-flat";
  }
  return "?";
}

struct AmplitudeModel {
  AmplitudeKind kind = AmplitudeKind::lognormal_decay;
  double decay_gamma = 17.94e-9;                 // seconds
  double shadow_var = 1.163;                     // variance of the log-amplitude
  bool cluster_split = true;
  // Power decay inside a cluster when cluster_split is set; <= 0 means reuse decay_gamma.
  double intra_cluster_gamma = 23.06e-9;

  void validate() const {
    if (!(shadow_var >= 0.0)) throw std::invalid_argument("amplitude: shadow variance must be >= 0");
    if (!(decay_gamma > 0.0)) throw std::invalid_argument("amplitude: decay constant must be > 0");
  }
  double intra_gamma() const { return intra_cluster_gamma > 0.0 ? intra_cluster_gamma : decay_gamma; }
};

enum class DelayKind { uniform_poisson, clustered };

/// Clustered Poisson arrival process. Cluster count ~ max(1, Poisson(mean_cluster_count)),
/// origins at exponential inter-arrivals (cluster_rate), total MPC count
/// ~ 1 + Poisson(mean_mpc_count - 1) split uniformly over clusters (each cluster
/// keeps at least one), and intra-cluster inter-arrivals of min_intra_gap plus an
/// exponential (intra_cluster_rate). Clusters do not overlap: a late cluster starts
/// at least min_cluster_gap after the previous one ends. The gaps keep the
/// pulse-delay matrix full rank; the defaults (about 0.7T and 0.85T at T = 2.5 ns)
/// are calibrated for E[L] near 32 with a 128-tap window.
/// uniform_poisson is the single-cluster special case.
struct DelayProcessConfig {
  DelayKind kind = DelayKind::clustered;
  double mean_cluster_count = 1.488;
  double cluster_rate = 7.65e6;       // arrivals per second
  double intra_cluster_rate = 2.72e9; // arrivals per second
  double min_intra_gap = 1.806e-9;    // seconds
  double min_cluster_gap = 2.09e-9;   // seconds
  double mean_mpc_count = 33.8;
  double max_delay_spread = 317.5e-9; // seconds
  int max_mpc_count = 128;

  void validate() const {
    if (!(mean_cluster_count >= 0.0)) throw std::invalid_argument("delay: mean cluster count must be >= 0");
    if (!(cluster_rate > 0.0)) throw std::invalid_argument("delay: cluster rate must be > 0");
    if (!(intra_cluster_rate > 0.0)) throw std::invalid_argument("delay: intra-cluster rate must be > 0");
    if (!(min_intra_gap >= 0.0)) throw std::invalid_argument("delay: minimum intra-cluster gap must be >= 0");
    if (!(min_cluster_gap >= 0.0)) throw std::invalid_argument("delay: minimum cluster gap must be >= 0");
    if (!(mean_mpc_count >= 1.0)) throw std::invalid_argument("delay: mean MPC count must be >= 1");
    if (!(max_delay_spread >= 0.0)) throw std::invalid_argument("delay: max delay spread must be >= 0");
    if (max_mpc_count < 1) throw std::invalid_argument("delay: MPC cap must be >= 1");
  }
};

/// Sorted delays with the cluster each one belongs to.
struct DelayDraw {
  std::vector<double> delays;
  std::vector<int> cluster;
  std::vector<double> cluster_origin;
};

struct MpcSet {
  std::vector<double> delays;
  std::vector<double> amplitudes;
  std::vector<double> phases;
  double total_power = 1.0;

  std::size_t size() const { return delays.size(); }

  /// a = alpha * exp(j phi)
  CVector gains() const {
    CVector a(static_cast<Eigen::Index>(size()));
    for (std::size_t l = 0; l < size(); ++l) a(l) = std::polar(amplitudes[l], phases[l]);
    return a;
  }

  void validate(int fir_length, double max_delay) const {
    const std::size_t l = delays.size();
    if (l == 0) throw std::invalid_argument("mpc set: empty");
    if (amplitudes.size() != l || phases.size() != l)
      throw std::invalid_argument("mpc set: field lengths differ");
    if (static_cast<int>(l) > fir_length) throw std::invalid_argument("mpc set: more MPCs than taps");
    if (delays.front() != 0.0) throw std::invalid_argument("mpc set: first delay must be 0");
    for (std::size_t i = 1; i < l; ++i)
      if (!(delays[i] > delays[i - 1])) throw std::invalid_argument("mpc set: delays not increasing");
    if (delays.back() > max_delay) throw std::invalid_argument("mpc set: delay beyond spread limit");
    for (double a : amplitudes)
      if (!(a >= 0.0)) throw std::invalid_argument("mpc set: negative amplitude");
  }
};

namespace detail {

inline int poisson(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

inline double rayleigh_unit_power(Rng& rng) { return std::abs(complex_normal(rng, 1.0)); }

}  // namespace detail

inline DelayDraw sample_delays(const DelayProcessConfig& cfg, Rng& rng) {
  cfg.validate();
  const double ds = cfg.max_delay_spread;
  int nc = 1;
  std::vector<double> arrivals_c{0.0};
  if (cfg.kind == DelayKind::clustered) {
    nc = std::max(1, detail::poisson(rng, cfg.mean_cluster_count));
    std::exponential_distribution<double> gap(cfg.cluster_rate);
    double t = 0.0;
    for (int i = 1; i < nc; ++i) arrivals_c.push_back(t += gap(rng));
  }
  int total = std::max(nc, 1 + detail::poisson(rng, cfg.mean_mpc_count - 1.0));
  total = std::min(total, std::max(cfg.max_mpc_count, nc));

  // Multinomial split of the remaining MPCs, one guaranteed per cluster.
  std::vector<int> counts(nc, 1);
  std::uniform_int_distribution<int> pick(0, nc - 1);
  for (int i = nc; i < total; ++i) ++counts[pick(rng)];

  // Clusters are laid out in arrival order; a cluster that would overlap the
  // previous one is pushed back to start min_cluster_gap after its last MPC.
  std::exponential_distribution<double> offset(cfg.intra_cluster_rate);
  DelayDraw d;
  double prev_end = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < nc; ++c) {
    double s = std::max(arrivals_c[c], prev_end + cfg.min_cluster_gap);
    if (s > ds) break;
    d.cluster_origin.push_back(s);
    for (int r = 0; r < counts[c]; ++r) {
      if (r > 0) s += cfg.min_intra_gap + offset(rng);
      if (s > ds) break;
      d.delays.push_back(s);
      d.cluster.push_back(c);
      prev_end = s;
    }
  }
  if (static_cast<int>(d.delays.size()) > cfg.max_mpc_count) {
    d.delays.resize(cfg.max_mpc_count);
    d.cluster.resize(cfg.max_mpc_count);
  }
  return d;
}

/// Unnormalized amplitudes for each delay of `draw`.
inline RVector sample_raw_amplitudes(const AmplitudeModel& model, const DelayDraw& draw, Rng& rng) {
  model.validate();
  const auto l = static_cast<Eigen::Index>(draw.delays.size());
  const double s = std::sqrt(model.shadow_var);
  std::normal_distribution<double> zeta(0.0, 1.0);
  RVector a(l);
  switch (model.kind) {
    case AmplitudeKind::lognormal_decay:
      if (model.cluster_split && !draw.cluster.empty()) {
        const auto nc = static_cast<Eigen::Index>(draw.cluster_origin.size());
        RVector wc(nc);
        for (Eigen::Index c = 0; c < nc; ++c)
          wc(c) = std::exp(2.0 * (-draw.cluster_origin[c] / model.decay_gamma + s * zeta(rng)));
        wc /= wc.sum();
        const double gi = model.intra_gamma();
        RVector pc = RVector::Zero(nc);
        for (Eigen::Index i = 0; i < l; ++i) {
          const int c = draw.cluster[i];
          a(i) = std::exp(-(draw.delays[i] - draw.cluster_origin[c]) / gi + s * zeta(rng));
          pc(c) += a(i) * a(i);
        }
        for (Eigen::Index i = 0; i < l; ++i) {
          const int c = draw.cluster[i];
          a(i) *= std::sqrt(wc(c) / pc(c));
        }
      } else {
        for (Eigen::Index i = 0; i < l; ++i)
          a(i) = std::exp(-draw.delays[i] / model.decay_gamma + s * zeta(rng));
      }
      break;
    case AmplitudeKind::lognormal_flat:
      for (Eigen::Index i = 0; i < l; ++i) a(i) = std::exp(s * zeta(rng));
      break;
    case AmplitudeKind::rayleigh_decay:
      for (Eigen::Index i = 0; i < l; ++i)
        a(i) = std::exp(-draw.delays[i] / model.decay_gamma) * detail::rayleigh_unit_power(rng);
      break;
    case AmplitudeKind::rayleigh_flat:
      for (Eigen::Index i = 0; i < l; ++i) a(i) = detail::rayleigh_unit_power(rng);
      break;
  }
  return a;
}

/// Draws amplitudes and uniform phases, normalized so that sum(alpha^2) = precv.
inline MpcSet sample_amplitudes(const AmplitudeModel& model, const DelayDraw& draw, double precv,
                                Rng& rng) {
  if (draw.delays.empty()) throw std::invalid_argument("sample_amplitudes: empty delay list");
  if (!(precv > 0.0)) throw std::invalid_argument("sample_amplitudes: received power must be > 0");
  RVector a = sample_raw_amplitudes(model, draw, rng);
  a *= std::sqrt(precv / a.squaredNorm());
  MpcSet m;
  m.delays = draw.delays;
  m.amplitudes.assign(a.data(), a.data() + a.size());
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  m.phases.resize(m.delays.size());
  for (auto& p : m.phases) p = phase(rng);
  m.total_power = precv;
  return m;
}

/// Delay list without cluster structure: treated as one cluster starting at 0.
inline MpcSet sample_amplitudes(const AmplitudeModel& model, std::span<const double> delays,
                                double precv, Rng& rng) {
  DelayDraw d;
  d.delays.assign(delays.begin(), delays.end());
  d.cluster.assign(delays.size(), 0);
  d.cluster_origin = {0.0};
  return sample_amplitudes(model, d, precv, rng);
}

/// Merges delays closer than `tol` seconds, power-summing amplitudes and
/// keeping the phase of the stronger component. Total power is unchanged.
inline void merge_close_delays(MpcSet& m, double tol) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (w > 0 && m.delays[i] - m.delays[w - 1] < tol) {
      const double a0 = m.amplitudes[w - 1], a1 = m.amplitudes[i];
      if (a1 > a0) m.phases[w - 1] = m.phases[i];
      m.amplitudes[w - 1] = std::sqrt(a0 * a0 + a1 * a1);
      continue;
    }
    m.delays[w] = m.delays[i];
    m.amplitudes[w] = m.amplitudes[i];
    m.phases[w] = m.phases[i];
    ++w;
  }
  m.delays.resize(w);
  m.amplitudes.resize(w);
  m.phases.resize(w);
}

/// Complete channel-model description.
struct ChannelModel {
  PulseShape pulse;
  DelayProcessConfig delay;
  AmplitudeModel amplitude;
  double total_power = 1.0;

  void validate() const {
    pulse.validate();
    delay.validate();
    amplitude.validate();
    if (!(total_power > 0.0)) throw std::invalid_argument("channel: total power must be > 0");
    if (delay.max_delay_spread > pulse.max_delay() * (1.0 + 1e-12))
      throw std::invalid_argument("channel: delay spread exceeds the FIR window");
    if (delay.max_mpc_count > pulse.fir_length)
      throw std::invalid_argument("channel: MPC cap exceeds FIR length");
  }
};

inline MpcSet draw_mpcs(const ChannelModel& model, Rng& rng) {
  MpcSet m = sample_amplitudes(model.amplitude, sample_delays(model.delay, rng), model.total_power, rng);
  merge_close_delays(m, kDuplicateDelayFraction * model.pulse.sample_period);
  return m;
}

struct TimeChannel {
  CVector h;
};

/// h_M = sum_l p(tau_l) alpha_l exp(j phi_l).
inline TimeChannel build_time_channel(const MpcSet& mpcs, const PulseShape& pulse) {
  const int m = pulse.fir_length;
  TimeChannel tc{CVector::Zero(m)};
  RVector col(m);
  for (std::size_t l = 0; l < mpcs.size(); ++l) {
    detail::check_delay_in_window(pulse, mpcs.delays[l]);
    sample_pulse(pulse, mpcs.delays[l], col);
    tc.h += col.cast<cplx>() * std::polar(mpcs.amplitudes[l], mpcs.phases[l]);
  }
  return tc;
}

}  // namespace sparsechan
