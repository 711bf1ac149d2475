#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/ofdm.hpp"
#include "sparsechan/pulse.hpp"

namespace sparsechan {

/// Delay dictionary and stopping rule shared by the greedy and l1 estimators.
struct DictionaryConfig {
  int size = 0;                    // N_T; 0 selects N_T = M
  bool refine = false;             // binary-search refinement inside the chosen bin
  double delta_mu = 1e-2;          // refinement resolution, in bins
  std::optional<double> xi;        // stop threshold on ||r||^2; default N sigma^2
  std::optional<int> max_iters;    // default N/2

  int dictionary_size(const OfdmGrid& g) const { return size > 0 ? size : g.M; }

  void validate(const OfdmGrid& g) const {
    if (size != 0 && size < g.M) throw std::invalid_argument("dictionary: N_T must be >= M");
    if (refine && !(delta_mu > 0.0 && delta_mu < 1.0))
      throw std::invalid_argument("dictionary: delta_mu must lie in (0, 1)");
    if (xi && !(*xi > 0.0)) throw std::invalid_argument("dictionary: xi must be > 0");
    if (max_iters && *max_iters < 1) throw std::invalid_argument("dictionary: max_iters must be >= 1");
  }
};

/// Grid n M T / N_T, n = 0..N_T-1, keeping only delays inside the FIR window.
struct DelayDictionary {
  double spacing = 0.0;
  std::vector<double> delays;
  RMatrix atoms;  // M x size, column n = p(delays[n])
};

inline DelayDictionary make_dictionary(const PulseShape& pulse, int n_t) {
  DelayDictionary d;
  d.spacing = pulse.fir_length * pulse.sample_period / n_t;
  const double limit = pulse.max_delay() * (1.0 + 1e-12);
  for (int n = 0; n < n_t && n * d.spacing <= limit; ++n) d.delays.push_back(n * d.spacing);
  d.atoms = pulse_delay_matrix_real(pulse, d.delays);
  return d;
}

/// Bisection for the maximizer of f on [lo, hi]. Within delta of the maximizer
/// when f is unimodal and symmetric about it; always returns a point of [lo, hi].
template <class F>
double refine_delay(F&& f, double delta, double lo = -0.5, double hi = 0.5) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("refine_delay: delta must lie in (0, 1)");
  if (!(lo <= hi)) throw std::invalid_argument("refine_delay: empty interval");
  double m0 = lo, m1 = hi;
  double f0 = f(m0), f1 = f(m1);
  while (m1 - m0 > 2.0 * delta) {
    const double mid = 0.5 * (m0 + m1);
    if (f0 < f1) {
      m0 = mid;
      f0 = f(mid);
    } else {
      m1 = mid;
      f1 = f(mid);
    }
  }
  return 0.5 * (m0 + m1);
}

/// Per-iteration record of a greedy run.
struct OmpTrace {
  std::vector<double> residual_power;  // ||r_i||^2 for i = 0..L_hat
  std::vector<int> bins;
  std::vector<double> corr_center;     // correlation at the bin center
  std::vector<double> corr_chosen;     // correlation at the accepted delay
};

namespace detail {

inline cplx real_dot(const RVector& q, const CVector& r) { return {q.dot(r.real()), q.dot(r.imag())}; }

}  // namespace detail

inline ChannelEstimate run_omp(const PilotObservation& obs, const OfdmGrid& g, const PulseShape& pulse,
                               const DictionaryConfig& cfg, OmpTrace* trace = nullptr) {
  cfg.validate(g);
  if (pulse.fir_length != g.M) throw std::invalid_argument("omp: pulse FIR length differs from M");
  const auto t = to_tap_domain(obs, g);
  const DelayDictionary dict = make_dictionary(pulse, cfg.dictionary_size(g));
  const int n_atoms = static_cast<int>(dict.delays.size());
  const double xi = cfg.xi.value_or(g.N * obs.noise_var);
  const int max_it = std::min({cfg.max_iters.value_or(g.N / 2), g.M, n_atoms});
  const double guard = 1e-3 * pulse.sample_period;
  const int m = g.M;

  RMatrix q(m, max_it);
  RMatrix r_tri = RMatrix::Zero(max_it, max_it);
  CVector coef(max_it);
  std::vector<char> used(n_atoms, 0);
  std::vector<double> support;
  CVector resid = t.h_ml;
  double res_pow = t.observation_residual(resid);
  if (trace) trace->residual_power.push_back(res_pow);

  RVector p(m), buf(m);
  int it = 0;
  while (res_pow > xi && it < max_it) {
    const RVector cr = dict.atoms.transpose() * resid.real();
    const RVector ci = dict.atoms.transpose() * resid.imag();
    const RVector corr = (cr.array().square() + ci.array().square()).sqrt().matrix();

    bool accepted = false;
    while (!accepted) {
      int best = -1;
      for (int n = 0; n < n_atoms; ++n)
        if (!used[n] && (best < 0 || corr(n) > corr(best))) best = n;
      if (best < 0) break;
      used[best] = 1;
      double tau = dict.delays[best];
      double chosen_corr = corr(best);
      if (cfg.refine) {
        const double lo = std::max(-0.5, -tau / dict.spacing);
        const double hi = std::min(0.5, (pulse.max_delay() - tau) / dict.spacing);
        auto f = [&](double mu) {
          sample_pulse(pulse, tau + mu * dict.spacing, buf);
          return std::abs(detail::real_dot(buf, resid));
        };
        const double mu = refine_delay(f, cfg.delta_mu, lo, hi);
        const double f_mu = f(mu);
        if (f_mu >= corr(best)) {
          tau = std::clamp(tau + mu * dict.spacing, 0.0, pulse.max_delay());
          chosen_corr = f_mu;
        }
      }
      bool degenerate = false;
      for (double s : support)
        if (std::abs(s - tau) < guard) degenerate = true;
      if (degenerate) continue;

      sample_pulse(pulse, tau, p);
      const double pn = p.norm();
      RVector rc = RVector::Zero(it);
      RVector v = p;
      for (int pass = 0; pass < 2 && it > 0; ++pass) {
        const RVector s = q.leftCols(it).transpose() * v;
        v -= q.leftCols(it) * s;
        rc += s;
      }
      const double vn = v.norm();
      if (!(vn > kRankCutoff * pn)) continue;

      q.col(it) = v / vn;
      r_tri.col(it).head(it) = rc;
      r_tri(it, it) = vn;
      coef(it) = detail::real_dot(q.col(it), t.h_ml);
      resid -= q.col(it).cast<cplx>() * detail::real_dot(q.col(it), resid);
      support.push_back(tau);
      if (trace) {
        trace->bins.push_back(best);
        trace->corr_center.push_back(corr(best));
        trace->corr_chosen.push_back(chosen_corr);
      }
      accepted = true;
    }
    if (!accepted) break;
    ++it;
    res_pow = t.observation_residual(resid);
    if (trace) trace->residual_power.push_back(res_pow);
  }

  ChannelEstimate e;
  e.method = cfg.refine ? Method::ompbr : Method::omp;
  e.support = support;
  e.L_hat = it;
  e.h_M_hat = t.h_ml - resid;
  if (it > 0) {
    const auto tri = r_tri.topLeftCorner(it, it).triangularView<Eigen::Upper>();
    const RVector br = tri.solve(coef.head(it).real());
    const RVector bi = tri.solve(coef.head(it).imag());
    e.b_hat = CVector(it);
    e.b_hat.real() = br;
    e.b_hat.imag() = bi;
  } else {
    e.b_hat = CVector(0);
  }
  e.h_K_hat = f_km_apply(e.h_M_hat, g.K);
  e.residual_power = res_pow;
  return e;
}

}  // namespace sparsechan
