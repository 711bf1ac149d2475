#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/linalg.hpp"
#include "sparsechan/omp.hpp"

namespace sparsechan {

struct BpdnConfig {
  double inner_tol = 1e-8;      // relative objective change
  int max_inner = 10000;
  double threshold_frac = 0.05; // bpdn-ls keeps |b_n| > max(frac max|b|, per-tap noise std)
  double band_low = 0.95;       // accepted residual band [band_low xi, xi]
  int max_penalty_steps = 80;

  void validate() const {
    if (!(inner_tol > 0.0)) throw std::invalid_argument("bpdn: inner_tol must be > 0");
    if (max_inner < 1) throw std::invalid_argument("bpdn: max_inner must be >= 1");
    if (!(threshold_frac >= 0.0 && threshold_frac < 1.0))
      throw std::invalid_argument("bpdn: threshold_frac must lie in [0, 1)");
    if (!(band_low > 0.0 && band_low < 1.0)) throw std::invalid_argument("bpdn: band_low must lie in (0, 1)");
  }
};

struct BpdnSolution {
  ChannelEstimate direct;
  ChannelEstimate debiased;
  double penalty = 0.0;
  int inner_iterations = 0;
};

namespace detail {

// Complex vectors stored as (re, im) column pairs so every product is a real GEMM.
using Pair = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline Pair to_pair(const CVector& v) {
  Pair p(v.size(), 2);
  p.col(0) = v.real();
  p.col(1) = v.imag();
  return p;
}

inline CVector from_pair(const Pair& p) {
  CVector v(p.rows());
  v.real() = p.col(0);
  v.imag() = p.col(1);
  return v;
}

inline double l1_rows(const Pair& b) { return b.rowwise().norm().sum(); }

inline void soft_threshold_rows(Pair& b, double thr) {
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double mag = b.row(i).norm();
    if (mag <= thr) b.row(i).setZero();
    else b.row(i) *= 1.0 - thr / mag;
  }
}

struct FistaOutcome {
  Pair b;
  Pair db;     // D b
  int iterations = 0;
  bool converged = false;
};

// min 0.5 ||h - D b||^2 + lambda ||b||_1 by accelerated proximal gradient.
inline FistaOutcome fista(const RMatrix& d, const Pair& h, double lipschitz, double lambda, const Pair& b0,
                          const BpdnConfig& bc) {
  FistaOutcome out;
  Pair b = b0, db = d * b0;
  Pair z = b, dz = db;
  double t = 1.0;
  double obj_prev = 0.5 * (h - db).squaredNorm() + lambda * l1_rows(b);
  for (int it = 1; it <= bc.max_inner; ++it) {
    Pair bn = z - (d.transpose() * (dz - h)) / lipschitz;
    soft_threshold_rows(bn, lambda / lipschitz);
    const Pair dbn = d * bn;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / tn;
    z = bn + beta * (bn - b);
    dz = dbn + beta * (dbn - db);
    b = std::move(bn);
    db = dbn;
    t = tn;
    const double obj = 0.5 * (h - db).squaredNorm() + lambda * l1_rows(b);
    out.iterations = it;
    if (std::abs(obj - obj_prev) <= bc.inner_tol * std::max(obj, 1e-300)) {
      out.converged = true;
      break;
    }
    obj_prev = obj;
  }
  out.b = std::move(b);
  out.db = std::move(db);
  return out;
}

}  // namespace detail

/// Minimum-l1 fit under ||y - Phi b||^2 <= xi. The penalized problem is solved
/// by FISTA and the penalty is bisected until the residual lands in
/// [band_low xi, xi]. Returns the direct solution and its LS-debiased version.
inline BpdnSolution run_bpdn_both(const PilotObservation& obs, const OfdmGrid& g, const PulseShape& pulse,
                                  const DictionaryConfig& cfg, const BpdnConfig& bc = {}) {
  cfg.validate(g);
  bc.validate();
  if (pulse.fir_length != g.M) throw std::invalid_argument("bpdn: pulse FIR length differs from M");
  const auto t = to_tap_domain(obs, g);
  const DelayDictionary dict = make_dictionary(pulse, cfg.dictionary_size(g));
  const RMatrix& d = dict.atoms;
  const double xi = cfg.xi.value_or(g.N * obs.noise_var);
  // Same constraint expressed on the tap-domain residual.
  const double eps = (xi - t.offset) / t.scale;
  const detail::Pair h = detail::to_pair(t.h_ml);
  const auto n_atoms = d.cols();

  Eigen::SelfAdjointEigenSolver<RMatrix> es(d * d.transpose(), Eigen::EigenvaluesOnly);
  const double lip = es.eigenvalues().maxCoeff();

  BpdnSolution sol;
  detail::Pair b_best = detail::Pair::Zero(n_atoms, 2);
  detail::Pair db_best = detail::Pair::Zero(d.rows(), 2);
  double lambda_best = 0.0;
  int total_iters = 0;

  auto residual_of = [&](const detail::Pair& db) { return (h - db).squaredNorm(); };

  if (h.squaredNorm() > eps) {
    const double lambda_max = (d.transpose() * h).rowwise().norm().maxCoeff();
    double hi = lambda_max, lo = 0.0;
    detail::Pair b_hi = detail::Pair::Zero(n_atoms, 2);
    detail::Pair b_lo, db_lo;
    bool found = false;
    double lambda = 0.5 * lambda_max;
    int steps = 0;
    auto solve = [&](double lam, const detail::Pair& start) {
      auto r = detail::fista(d, h, lip, lam, start, bc);
      total_iters += r.iterations;
      if (!r.converged)
        throw convergence_error("bpdn: FISTA did not converge in " + std::to_string(bc.max_inner) +
                                    " iterations (lambda = " + std::to_string(lam) + ")",
                                detail::from_pair(r.b));
      return r;
    };
    // Continuation: shrink the penalty until the constraint is met.
    while (steps++ < bc.max_penalty_steps) {
      auto r = solve(lambda, b_hi);
      if (residual_of(r.db) <= eps) {
        lo = lambda;
        b_lo = std::move(r.b);
        db_lo = std::move(r.db);
        found = true;
        break;
      }
      hi = lambda;
      b_hi = std::move(r.b);
      lambda *= 0.25;
    }
    if (!found)
      throw convergence_error("bpdn: residual constraint not reached by penalty continuation",
                              detail::from_pair(b_hi));
    // Bisection on log(lambda) between a feasible lo and an infeasible hi.
    while (residual_of(db_lo) < bc.band_low * eps && steps++ < bc.max_penalty_steps &&
           hi / lo - 1.0 > 1e-12) {
      const double mid = std::sqrt(lo * hi);
      auto r = solve(mid, b_lo);
      if (residual_of(r.db) <= eps) {
        lo = mid;
        b_lo = std::move(r.b);
        db_lo = std::move(r.db);
      } else {
        hi = mid;
      }
    }
    b_best = std::move(b_lo);
    db_best = std::move(db_lo);
    lambda_best = lo;
  }
  sol.penalty = lambda_best;
  sol.inner_iterations = total_iters;

  // Direct estimate.
  ChannelEstimate& dir = sol.direct;
  dir.method = Method::bpdn_direct;
  std::vector<Eigen::Index> nz;
  for (Eigen::Index n = 0; n < n_atoms; ++n)
    if (b_best.row(n).squaredNorm() > 0.0) nz.push_back(n);
  dir.b_hat = CVector(static_cast<Eigen::Index>(nz.size()));
  for (std::size_t i = 0; i < nz.size(); ++i) {
    dir.support.push_back(dict.delays[nz[i]]);
    dir.b_hat(i) = cplx(b_best(nz[i], 0), b_best(nz[i], 1));
  }
  dir.L_hat = static_cast<int>(nz.size());
  dir.h_M_hat = detail::from_pair(db_best);
  dir.h_K_hat = f_km_apply(dir.h_M_hat, g.K);
  dir.residual_power = t.observation_residual(t.h_ml - dir.h_M_hat);

  // Threshold the support, then LS on the kept atoms. The noise floor is the
  // standard deviation of one tap of h_ml, sqrt((K/N) sigma^2).
  ChannelEstimate& ls = sol.debiased;
  ls.method = Method::bpdn_ls;
  const double bmax = dir.b_hat.size() ? dir.b_hat.cwiseAbs().maxCoeff() : 0.0;
  const double thr = std::max(bc.threshold_frac * bmax, std::sqrt(g.oversampling() * obs.noise_var));
  for (Eigen::Index i = 0; i < dir.b_hat.size(); ++i)
    if (std::abs(dir.b_hat(i)) > thr) ls.support.push_back(dir.support[i]);
  ls.L_hat = static_cast<int>(ls.support.size());
  if (ls.L_hat > 0) {
    const CMatrix p = pulse_delay_matrix(pulse, ls.support);
    ls.b_hat = least_squares(p, t.h_ml).x;
    ls.h_M_hat = p * ls.b_hat;
  } else {
    ls.b_hat = CVector(0);
    ls.h_M_hat = CVector::Zero(g.M);
  }
  ls.h_K_hat = f_km_apply(ls.h_M_hat, g.K);
  ls.residual_power = t.observation_residual(t.h_ml - ls.h_M_hat);
  return sol;
}

inline ChannelEstimate run_bpdn(const PilotObservation& obs, const OfdmGrid& g, const PulseShape& pulse,
                                const DictionaryConfig& cfg, Method which, const BpdnConfig& bc = {}) {
  if (which != Method::bpdn_direct && which != Method::bpdn_ls)
    throw std::invalid_argument("run_bpdn: method must be bpdn-direct or bpdn-ls");
  auto s = run_bpdn_both(obs, g, pulse, cfg, bc);
  return which == Method::bpdn_direct ? std::move(s.direct) : std::move(s.debiased);
}

}  // namespace sparsechan
