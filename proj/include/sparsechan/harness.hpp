#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparsechan/compressibility.hpp"
#include "sparsechan/config.hpp"
#include "sparsechan/core.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/receiver.hpp"
#include "sparsechan/trial.hpp"

#ifndef SPARSECHAN_GIT_HASH
#define SPARSECHAN_GIT_HASH "unknown"
#endif

namespace sparsechan {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSmokeTrials = 50;

// ---------------------------------------------------------------- presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig-lhat",      "fig-mse",       "fig-rho-bounds",
                                                 "fig-ci-hist",   "fig-ci-cdf",    "fig-model-mse",
                                                 "fig-omp-vs-bpdn", "fig-ber-qpsk", "fig-ber-16qam"};
  return names;
}

namespace detail {

inline std::vector<double> snr_range(double lo, double hi, double step) {
  std::vector<double> v;
  for (double s = lo; s <= hi + 1e-9; s += step) v.push_back(s);
  return v;
}

inline const std::vector<AmplitudeKind>& all_models() {
  static const std::vector<AmplitudeKind> m = {AmplitudeKind::lognormal_decay, AmplitudeKind::lognormal_flat,
                                               AmplitudeKind::rayleigh_decay, AmplitudeKind::rayleigh_flat};
  return m;
}

inline std::vector<EstimatorSpec> omp_family(const OfdmGrid& g) {
  return {make_estimator(Method::omp), make_estimator(Method::omp, 4 * g.M), make_estimator(Method::ompbr)};
}

}  // namespace detail

/// Experiment reproducing one of the evaluation figures: T = 2.5 ns sinc
/// pulse, M = N = 128, K = 512, 1000 trials. Unknown names list the valid ones.
inline ExperimentSpec preset(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.output_dir = "out/" + name;
  const auto& g = s.grid;
  if (name == "fig-lhat") {
    s.kind = ExperimentKind::mse;
    s.snr_db = detail::snr_range(-10, 40, 5);
    s.estimators = detail::omp_family(g);
  } else if (name == "fig-mse") {
    s.kind = ExperimentKind::mse;
    s.snr_db = detail::snr_range(-10, 40, 5);
    s.estimators = {make_estimator(Method::ml_m), make_estimator(Method::genie_ls)};
    for (auto& e : detail::omp_family(g)) s.estimators.push_back(e);
  } else if (name == "fig-rho-bounds") {
    s.kind = ExperimentKind::rho;
    s.snr_db = {0.0, 10.0, 20.0};
    s.models = {AmplitudeKind::lognormal_decay, AmplitudeKind::rayleigh_flat};
  } else if (name == "fig-ci-hist") {
    s.kind = ExperimentKind::growth;
    s.d_max = 20;
  } else if (name == "fig-ci-cdf") {
    s.kind = ExperimentKind::ci;
    s.models = detail::all_models();
  } else if (name == "fig-model-mse") {
    s.kind = ExperimentKind::mse;
    s.snr_db = detail::snr_range(-10, 30, 5);
    s.models = detail::all_models();
    s.estimators = {make_estimator(Method::ompbr)};
  } else if (name == "fig-omp-vs-bpdn") {
    s.kind = ExperimentKind::mse;
    s.snr_db = {-10.0, -5.0, 0.0, 5.0, 10.0};
    s.trials = 200;  // the l1 solver dominates the runtime
    s.models = {AmplitudeKind::lognormal_decay, AmplitudeKind::rayleigh_flat};
    s.estimators = {make_estimator(Method::omp, 4 * g.M), make_estimator(Method::ompbr),
                    make_estimator(Method::bpdn_direct, 4 * g.M), make_estimator(Method::bpdn_ls, 4 * g.M)};
  } else if (name == "fig-ber-qpsk" || name == "fig-ber-16qam") {
    s.kind = ExperimentKind::ber;
    s.receiver.modulation = name == "fig-ber-qpsk" ? Modulation::qpsk : Modulation::qam16;
    s.snr_db = name == "fig-ber-qpsk" ? detail::snr_range(-5, 30, 2.5) : detail::snr_range(0, 35, 2.5);
    s.estimators = {make_estimator(Method::perfect_csi), make_estimator(Method::ml_m),
                    make_estimator(Method::genie_ls)};
    for (auto& e : detail::omp_family(g)) s.estimators.push_back(e);
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw schema_error("preset", "unknown preset '" + name + "' (valid: " + valid + ")");
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------- results

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MseCell {
  std::string model;
  double snr_db = 0.0;
  std::string method;
  long trials = 0;    // successful trials
  long failures = 0;  // numerical failures, never silently dropped
  double mse_mean = kNaN, mse_std = kNaN;
  double lhat_mean = kNaN, lhat_std = kNaN;
  double mse_theory = kNaN;
};

struct TrialRecord {
  std::string model;
  double snr_db = 0.0;
  std::string method;
  long trial = 0;
  double mse = kNaN;
  double lhat = kNaN;
};

struct BerCell {
  std::string model;
  double snr_db = 0.0;
  std::string method;
  std::string modulation;
  BerCounts counts;
  double assumed_lhat = kNaN;
};

struct RhoRow {
  std::string model;
  int d = 0;
  double rho_bar = 0, product_bound = 0, geometric_bound = 0, amplitude_bound = 0, kurtosis_approx = 0;
};

/// Per-trial check of rho(omp) >= rho_bar(L_hat) >= product >= geometric at d = L_hat.
/// geometric_oracle_violations counts rho_bar < geometric directly.
struct ChainRow {
  std::string model;
  double snr_db = 0.0;
  long trials = 0;
  double lhat_mean = 0.0;
  double rho_omp_mean = 0.0;
  long oracle_violations = 0;
  long product_violations = 0;
  long geometric_violations = 0;
  long geometric_oracle_violations = 0;
};

struct GrowthRow {
  std::string model;
  int d = 0;
  long samples = 0;
  long at_most_one = 0;
  double mean_ratio = 0.0;
  std::vector<long> histogram;  // bins over [kGrowthLow, kGrowthHigh], ends absorb outliers

  double fraction_at_most_one() const { return samples ? static_cast<double>(at_most_one) / samples : kNaN; }
};

inline constexpr double kGrowthLow = 0.5;
inline constexpr double kGrowthHigh = 1.5;

struct CiRow {
  std::string model;
  long trials = 0;
  double mean_L = 0.0;
  double mean_adjusted_ci = 0.0;
  double p50 = 0.0, p85 = 0.0;
  KurtosisBridge bridge;
  std::vector<double> quantiles;  // adjusted CI at q = 0, 0.01, ..., 1
};

struct SweepResult {
  ExperimentSpec spec;
  std::vector<MseCell> mse;
  std::vector<TrialRecord> raw;
  std::vector<BerCell> ber;
  std::vector<RhoRow> rho;
  std::vector<ChainRow> chain;
  std::vector<GrowthRow> growth;
  std::vector<CiRow> ci;
  long numeric_failures = 0;
  std::vector<std::string> files;

  const MseCell* find_mse(const std::string& model, double snr, const std::string& method) const {
    for (const auto& c : mse)
      if (c.model == model && c.method == method && std::abs(c.snr_db - snr) < 1e-9) return &c;
    return nullptr;
  }
  const BerCell* find_ber(double snr, const std::string& method) const {
    for (const auto& c : ber)
      if (c.method == method && std::abs(c.snr_db - snr) < 1e-9) return &c;
    return nullptr;
  }
};

// ---------------------------------------------------------------- workers

/// SPARSECHAN_WORKERS overrides the hardware thread count.
inline int worker_count() {
  if (const char* env = std::getenv("SPARSECHAN_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw schema_error("SPARSECHAN_WORKERS", "must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) on `workers` threads. The first exception
/// stops the remaining work and is rethrown.
template <class F>
void parallel_for(long n, int workers, F&& body) {
  std::atomic<long> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr err;
  std::mutex err_mu;
  auto run = [&] {
    for (long i; !stop && (i = next++) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
    }
  };
  const int w = static_cast<int>(std::min<long>(std::max(1, workers), std::max(1L, n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < w; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct SweepOptions {
  int workers = 0;   // 0: worker_count()
  bool write = true;
  std::function<void(long, long)> progress;  // (done, total), called from worker threads
};

namespace detail {

struct MeanStd {
  double mean = kNaN, std = kNaN;
  long n = 0;
};

// Reduction in index order keeps results independent of the thread count.
inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  double s = 0.0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++r.n;
    }
  if (r.n == 0) return r;
  r.mean = s / r.n;
  double ss = 0.0;
  for (double x : v)
    if (!std::isnan(x)) ss += (x - r.mean) * (x - r.mean);
  r.std = r.n > 1 ? std::sqrt(ss / (r.n - 1)) : 0.0;
  return r;
}

/// Linear-interpolation quantile of unsorted data.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

inline bool is_numeric_failure(const std::exception_ptr& p) {
  try {
    std::rethrow_exception(p);
  } catch (const numerical_rank_error&) {
    return true;
  } catch (const convergence_error&) {
    return true;
  } catch (...) {
    return false;
  }
}

class Progress {
 public:
  Progress(const SweepOptions& o, long total) : cb_(o.progress), total_(total) {}
  void tick() {
    const long d = ++done_;
    if (cb_) cb_(d, total_);
  }

 private:
  std::function<void(long, long)> cb_;
  long total_;
  std::atomic<long> done_{0};
};

inline double theory_mse(const EstimatorSpec& e, const OfdmGrid& g, double sigma2, double mean_L,
                         double lhat_mean) {
  switch (e.method) {
    case Method::perfect_csi: return 0.0;
    case Method::ml_m: return static_cast<double>(g.M) / g.N * sigma2;
    case Method::genie_ls: return mean_L / g.N * sigma2;
    case Method::omp:
    case Method::ompbr: return 2.0 * lhat_mean * sigma2 / g.N;
    default: return kNaN;
  }
}

inline void run_mse(const ExperimentSpec& s, SweepResult& r, int workers, Progress& prog) {
  const auto models = s.swept_models();
  const std::size_t ns = s.snr_db.size(), ne = s.estimators.size();
  const std::size_t cells = models.size() * ns * ne;
  std::vector<std::vector<double>> mse(cells, std::vector<double>(s.trials, kNaN));
  std::vector<std::vector<double>> lhat(cells, std::vector<double>(s.trials, kNaN));
  std::vector<std::vector<double>> mpc_count(models.size(), std::vector<double>(s.trials, 0.0));
  std::vector<ChannelModel> chans;
  for (auto m : models) chans.push_back(with_amplitude(s.channel, m));

  parallel_for(s.trials, workers, [&](long t) {
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const TrialChannel ch = draw_trial_channel(chans[mi], s.seed, t);
      mpc_count[mi][t] = static_cast<double>(ch.mpcs.size());
      for (std::size_t si = 0; si < ns; ++si) {
        const double sigma2 = noise_variance(s.snr_db[si], s.grid.K);
        const auto obs = observe_trial(ch.h_m, s.grid, sigma2, s.seed, t, s.pilots);
        for (std::size_t ei = 0; ei < ne; ++ei) {
          const std::size_t c = (mi * ns + si) * ne + ei;
          try {
            const auto est = run_estimator(s.estimators[ei], obs, s.grid, chans[mi].pulse, ch.mpcs, ch.h_m);
            mse[c][t] = estimate_mse(est, ch.h_m, s.grid.K);
            lhat[c][t] = est.L_hat;
          } catch (...) {
            if (!is_numeric_failure(std::current_exception())) throw;
          }
        }
      }
    }
    prog.tick();
  });

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const double mean_L = mean_std(mpc_count[mi]).mean;
    for (std::size_t si = 0; si < ns; ++si)
      for (std::size_t ei = 0; ei < ne; ++ei) {
        const std::size_t c = (mi * ns + si) * ne + ei;
        MseCell cell;
        cell.model = amplitude_name(models[mi]);
        cell.snr_db = s.snr_db[si];
        cell.method = s.estimators[ei].label(s.grid);
        const auto m = mean_std(mse[c]);
        const auto l = mean_std(lhat[c]);
        cell.trials = m.n;
        cell.failures = s.trials - m.n;
        cell.mse_mean = m.mean;
        cell.mse_std = m.std;
        cell.lhat_mean = l.mean;
        cell.lhat_std = l.std;
        cell.mse_theory =
            theory_mse(s.estimators[ei], s.grid, noise_variance(cell.snr_db, s.grid.K), mean_L, l.mean);
        r.numeric_failures += cell.failures;
        if (s.dump_trials)
          for (long t = 0; t < s.trials; ++t)
            r.raw.push_back({cell.model, cell.snr_db, cell.method, t, mse[c][t], lhat[c][t]});
        r.mse.push_back(std::move(cell));
      }
  }
}

inline void run_ber(const ExperimentSpec& s, SweepResult& r, int workers, Progress& prog) {
  const ChannelModel chan = with_amplitude(s.channel, s.swept_models().front());
  const std::size_t ns = s.snr_db.size(), ne = s.estimators.size();

  // Receiver-side nu2 for OMP uses E[L_hat] from a calibration pass on
  // trials disjoint from the BER trials.
  std::vector<std::vector<EstimatorSpec>> per_snr(ns, s.estimators);
  const long cal = s.lhat_calibration_trials;
  const std::uint64_t cal_seed = split_seed(s.seed, Stream::aux, 0);
  for (std::size_t ei = 0; ei < ne; ++ei) {
    const auto& e = s.estimators[ei];
    if ((e.method != Method::omp && e.method != Method::ompbr) || e.assumed_L_hat) continue;
    std::vector<std::vector<double>> lh(ns, std::vector<double>(cal, 0.0));
    parallel_for(cal, workers, [&](long t) {
      const TrialChannel ch = draw_trial_channel(chan, cal_seed, t);
      for (std::size_t si = 0; si < ns; ++si) {
        const auto obs =
            observe_trial(ch.h_m, s.grid, noise_variance(s.snr_db[si], s.grid.K), cal_seed, t, s.pilots);
        lh[si][t] = run_estimator(e, obs, s.grid, chan.pulse, ch.mpcs, ch.h_m).L_hat;
      }
    });
    for (std::size_t si = 0; si < ns; ++si) per_snr[si][ei].assumed_L_hat = mean_std(lh[si]).mean;
  }

  std::vector<std::vector<BerCounts>> counts(ns * ne, std::vector<BerCounts>(s.trials));
  std::vector<std::vector<char>> failed(ns, std::vector<char>(s.trials, 0));
  parallel_for(s.trials, workers, [&](long t) {
    for (std::size_t si = 0; si < ns; ++si) {
      try {
        const auto c = run_ber_block(chan, s.grid, per_snr[si], s.snr_db[si], s.receiver, s.seed, t);
        for (std::size_t ei = 0; ei < ne; ++ei) counts[si * ne + ei][t] = c[ei];
      } catch (...) {
        if (!is_numeric_failure(std::current_exception())) throw;
        failed[si][t] = 1;
      }
    }
    prog.tick();
  });

  for (std::size_t si = 0; si < ns; ++si) {
    long fails = 0;
    for (char f : failed[si]) fails += f;
    r.numeric_failures += fails * static_cast<long>(ne);
    for (std::size_t ei = 0; ei < ne; ++ei) {
      BerCell cell;
      cell.model = amplitude_name(chan.amplitude.kind);
      cell.snr_db = s.snr_db[si];
      cell.method = s.estimators[ei].label(s.grid);
      cell.modulation = to_string(s.receiver.modulation);
      for (const auto& c : counts[si * ne + ei]) cell.counts.merge(c);
      cell.assumed_lhat = per_snr[si][ei].assumed_L_hat.value_or(kNaN);
      r.ber.push_back(std::move(cell));
    }
  }
}

inline void run_rho(const ExperimentSpec& s, SweepResult& r, int workers, Progress& prog) {
  const auto models = s.swept_models();
  const int dm = s.d_max;
  const std::size_t ns = s.snr_db.size();
  EstimatorSpec omp = make_estimator(Method::omp);
  constexpr double kTol = 1e-12;
  for (auto kind : models) {
    const ChannelModel chan = with_amplitude(s.channel, kind);
    // [trial][d] tables of rho_bar, product, geometric, amplitude bounds.
    std::vector<std::vector<double>> tab[4];
    for (auto& t : tab) t.assign(s.trials, std::vector<double>(dm + 1, 0.0));
    std::vector<double> mpc_count(s.trials), amp4(s.trials), amp2(s.trials);
    std::vector<std::vector<double>> lh(ns, std::vector<double>(s.trials)), rho(ns, std::vector<double>(s.trials));
    std::vector<std::vector<std::array<char, 4>>> viol(ns, std::vector<std::array<char, 4>>(s.trials));
    std::vector<RVector> amps(s.trials);

    parallel_for(s.trials, workers, [&](long t) {
      const TrialChannel ch = draw_trial_channel(chan, s.seed, t);
      const auto prof = oracle_residual_profile(ch.h_m, s.grid.K);
      const int l = static_cast<int>(ch.mpcs.size());
      const double ci_h = compressibility_index(ch.h_m).ci;
      const RVector a = Eigen::Map<const RVector>(ch.mpcs.amplitudes.data(), l);
      const double ci_a = compressibility_index(a).ci;
      for (int d = 0; d <= dm; ++d) {
        tab[0][t][d] = prof.normalized_rho(d);
        tab[1][t][d] = rho_lower_bound_product(prof, d).value;
        tab[2][t][d] = rho_lower_bound_geometric(ci_h, s.grid.M, d).value;
        tab[3][t][d] = rho_lower_bound_amplitude(ci_a, l, d).value;
      }
      mpc_count[t] = l;
      amps[t] = a;
      const double norm = s.grid.K / prof.total_power;
      for (std::size_t si = 0; si < ns; ++si) {
        const auto obs =
            observe_trial(ch.h_m, s.grid, noise_variance(s.snr_db[si], s.grid.K), s.seed, t, s.pilots);
        const auto est = run_estimator(omp, obs, s.grid, chan.pulse, ch.mpcs, ch.h_m);
        const int d = est.L_hat;
        const double r_omp = residual_of_support(ch.h_m, est.support, chan.pulse, s.grid.K) * norm;
        const double r_bar = prof.normalized_rho(d);
        const double prod = rho_lower_bound_product(prof, d).value;
        const double geo = rho_lower_bound_geometric(ci_h, s.grid.M, d).value;
        lh[si][t] = d;
        rho[si][t] = r_omp;
        viol[si][t] = {static_cast<char>(r_omp < r_bar - kTol), static_cast<char>(r_bar < prod - kTol),
                       static_cast<char>(prod < geo - kTol), static_cast<char>(r_bar < geo - kTol)};
      }
      prog.tick();
    });

    AmplitudeKurtosisBridge bridge;
    for (const auto& a : amps) bridge.add(a);
    const double kappa = s.trials >= AmplitudeKurtosisBridge::kMinSets ? bridge.result().kappa_estimate : kNaN;
    const double mean_L = mean_std(mpc_count).mean;
    for (int d = 0; d <= dm; ++d) {
      RhoRow row;
      row.model = amplitude_name(kind);
      row.d = d;
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < 4; ++k)
        for (long t = 0; t < s.trials; ++t) acc[k] += tab[k][t][d];
      row.rho_bar = acc[0] / s.trials;
      row.product_bound = acc[1] / s.trials;
      row.geometric_bound = acc[2] / s.trials;
      row.amplitude_bound = acc[3] / s.trials;
      row.kurtosis_approx = std::isnan(kappa) ? kNaN : rho_kurtosis_approximation(kappa, static_cast<int>(std::lround(mean_L)), d);
      r.rho.push_back(row);
    }
    for (std::size_t si = 0; si < ns; ++si) {
      ChainRow c;
      c.model = amplitude_name(kind);
      c.snr_db = s.snr_db[si];
      c.trials = s.trials;
      c.lhat_mean = mean_std(lh[si]).mean;
      c.rho_omp_mean = mean_std(rho[si]).mean;
      for (const auto& v : viol[si]) {
        c.oracle_violations += v[0];
        c.product_violations += v[1];
        c.geometric_violations += v[2];
        c.geometric_oracle_violations += v[3];
      }
      r.chain.push_back(c);
    }
  }
}

inline void run_growth(const ExperimentSpec& s, SweepResult& r, int workers, Progress& prog) {
  const int dm = std::min(s.d_max, s.grid.M / 2);
  const int bins = s.histogram_bins;
  for (auto kind : s.swept_models()) {
    const ChannelModel chan = with_amplitude(s.channel, kind);
    std::vector<std::vector<double>> ratios(s.trials);
    parallel_for(s.trials, workers, [&](long t) {
      ratios[t] = ci_growth_check(draw_trial_channel(chan, s.seed, t).h_m).ratios;
      prog.tick();
    });
    for (int d = 1; d <= dm; ++d) {
      GrowthRow g;
      g.model = amplitude_name(kind);
      g.d = d;
      g.histogram.assign(bins, 0);
      double sum = 0.0;
      for (const auto& rt : ratios) {
        if (static_cast<int>(rt.size()) < d) continue;
        const double x = rt[d - 1];
        ++g.samples;
        g.at_most_one += x <= 1.0;
        sum += x;
        const double pos = (x - kGrowthLow) / (kGrowthHigh - kGrowthLow) * bins;
        g.histogram[std::clamp(static_cast<int>(std::floor(pos)), 0, bins - 1)]++;
      }
      g.mean_ratio = g.samples ? sum / g.samples : kNaN;
      r.growth.push_back(std::move(g));
    }
  }
}

inline void run_ci(const ExperimentSpec& s, SweepResult& r, int workers, Progress& prog) {
  for (auto kind : s.swept_models()) {
    const ChannelModel chan = with_amplitude(s.channel, kind);
    std::vector<double> adj(s.trials), lcount(s.trials);
    std::vector<RVector> amps(s.trials);
    parallel_for(s.trials, workers, [&](long t) {
      const TrialChannel ch = draw_trial_channel(chan, s.seed, t);
      const int l = static_cast<int>(ch.mpcs.size());
      adj[t] = compressibility_index(ch.h_m, l).adjusted_ci;
      lcount[t] = l;
      amps[t] = Eigen::Map<const RVector>(ch.mpcs.amplitudes.data(), l);
      prog.tick();
    });
    CiRow row;
    row.model = amplitude_name(kind);
    row.trials = s.trials;
    row.mean_L = mean_std(lcount).mean;
    row.mean_adjusted_ci = mean_std(adj).mean;
    row.p50 = quantile(adj, 0.50);
    row.p85 = quantile(adj, 0.85);
    AmplitudeKurtosisBridge bridge;
    for (const auto& a : amps) bridge.add(a);
    if (s.trials >= AmplitudeKurtosisBridge::kMinSets) row.bridge = bridge.result();
    for (int q = 0; q <= 100; ++q) row.quantiles.push_back(quantile(adj, q / 100.0));
    r.ci.push_back(std::move(row));
  }
}

// ---------------------------------------------------------------- output

inline std::string fmt(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace detail

/// CSV headers per output file; stable across releases.
inline const std::vector<std::pair<std::string, std::string>>& csv_schemas() {
  static const std::vector<std::pair<std::string, std::string>> s = {
      {"mse.csv", "model,snr_db,method,trials,failures,mse_mean,mse_std,lhat_mean,lhat_std,mse_theory"},
      {"trials.csv", "model,snr_db,method,trial,mse,lhat"},
      {"ber.csv", "snr_db,method,modulation,ber,symbols"},
      {"rho_bounds.csv", "model,d,rho_bar,product_bound,geometric_bound,amplitude_bound,kurtosis_approx"},
      {"rho_chain.csv",
       "model,snr_db,trials,lhat_mean,rho_omp_mean,oracle_violations,product_violations,geometric_violations,"
       "geometric_oracle_violations"},
      {"ci_growth.csv", "model,d,samples,fraction_at_most_one,mean_ratio"},
      {"ci_growth_hist.csv", "model,d,bin_low,bin_high,count"},
      {"ci_summary.csv",
       "model,trials,mean_L,mean_adjusted_ci,p50_adjusted_ci,p85_adjusted_ci,kurtosis_estimate,inverse_ci_mean"},
      {"ci_cdf.csv", "model,quantile,adjusted_ci"}};
  return s;
}

inline const std::string& csv_header(const std::string& file) {
  for (const auto& [f, h] : csv_schemas())
    if (f == file) return h;
  throw std::out_of_range("no CSV schema for " + file);
}

/// CSV files of a result, as (file name, content) pairs.
inline std::vector<std::pair<std::string, std::string>> render_csv(const SweepResult& r) {
  using detail::fmt;
  std::vector<std::pair<std::string, std::string>> out;
  std::ostringstream os, os2;
  auto table = [](std::ostringstream& o, const std::string& file) -> std::ostringstream& {
    o << csv_header(file) << '\n';
    return o;
  };
  switch (r.spec.kind) {
    case ExperimentKind::mse: {
      table(os, "mse.csv");
      for (const auto& c : r.mse)
        os << c.model << ',' << fmt(c.snr_db) << ',' << c.method << ',' << c.trials << ',' << c.failures << ','
           << fmt(c.mse_mean) << ',' << fmt(c.mse_std) << ',' << fmt(c.lhat_mean) << ',' << fmt(c.lhat_std) << ','
           << fmt(c.mse_theory) << '\n';
      out.emplace_back("mse.csv", os.str());
      if (r.spec.dump_trials) {
        auto& ts = table(os2, "trials.csv");
        for (const auto& t : r.raw)
          ts << t.model << ',' << fmt(t.snr_db) << ',' << t.method << ',' << t.trial << ',' << fmt(t.mse) << ','
             << fmt(t.lhat) << '\n';
        out.emplace_back("trials.csv", ts.str());
      }
      break;
    }
    case ExperimentKind::ber: {
      table(os, "ber.csv");
      for (const auto& c : r.ber)
        os << fmt(c.snr_db) << ',' << c.method << ',' << c.modulation << ',' << fmt(c.counts.ber()) << ','
           << c.counts.symbols << '\n';
      out.emplace_back("ber.csv", os.str());
      break;
    }
    case ExperimentKind::rho: {
      table(os, "rho_bounds.csv");
      for (const auto& c : r.rho)
        os << c.model << ',' << c.d << ',' << fmt(c.rho_bar) << ',' << fmt(c.product_bound) << ','
           << fmt(c.geometric_bound) << ',' << fmt(c.amplitude_bound) << ',' << fmt(c.kurtosis_approx) << '\n';
      out.emplace_back("rho_bounds.csv", os.str());
      auto& cs = table(os2, "rho_chain.csv");
      for (const auto& c : r.chain)
        cs << c.model << ',' << fmt(c.snr_db) << ',' << c.trials << ',' << fmt(c.lhat_mean) << ','
           << fmt(c.rho_omp_mean) << ',' << c.oracle_violations << ',' << c.product_violations << ','
           << c.geometric_violations << ',' << c.geometric_oracle_violations << '\n';
      out.emplace_back("rho_chain.csv", cs.str());
      break;
    }
    case ExperimentKind::growth: {
      table(os, "ci_growth.csv");
      for (const auto& g : r.growth)
        os << g.model << ',' << g.d << ',' << g.samples << ',' << fmt(g.fraction_at_most_one()) << ','
           << fmt(g.mean_ratio) << '\n';
      out.emplace_back("ci_growth.csv", os.str());
      auto& hs = table(os2, "ci_growth_hist.csv");
      for (const auto& g : r.growth) {
        const int bins = static_cast<int>(g.histogram.size());
        const double w = (kGrowthHigh - kGrowthLow) / bins;
        for (int b = 0; b < bins; ++b)
          hs << g.model << ',' << g.d << ',' << fmt(kGrowthLow + b * w) << ',' << fmt(kGrowthLow + (b + 1) * w)
             << ',' << g.histogram[b] << '\n';
      }
      out.emplace_back("ci_growth_hist.csv", hs.str());
      break;
    }
    case ExperimentKind::ci: {
      table(os, "ci_summary.csv");
      for (const auto& c : r.ci)
        os << c.model << ',' << c.trials << ',' << fmt(c.mean_L) << ',' << fmt(c.mean_adjusted_ci) << ','
           << fmt(c.p50) << ',' << fmt(c.p85) << ','
           << (c.bridge.sets ? fmt(c.bridge.kappa_estimate) : std::string()) << ','
           << (c.bridge.sets ? fmt(c.bridge.inverse_ci_mean) : std::string()) << '\n';
      out.emplace_back("ci_summary.csv", os.str());
      auto& qs = table(os2, "ci_cdf.csv");
      for (const auto& c : r.ci)
        for (std::size_t q = 0; q < c.quantiles.size(); ++q)
          qs << c.model << ',' << fmt(q / 100.0) << ',' << fmt(c.quantiles[q]) << '\n';
      out.emplace_back("ci_cdf.csv", qs.str());
      break;
    }
  }
  return out;
}

/// Writes every CSV of `r` plus one metadata sidecar per CSV (spec echo,
/// seed, version and git revision). Returns the written paths.
inline std::vector<std::string> write_result(const SweepResult& r) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  const fs::path dir(r.spec.output_dir);
  for (const auto& [file, content] : render_csv(r)) {
    const fs::path csv = dir / file;
    detail::atomic_write(csv, content);
    json meta = {{"file", file},
                 {"experiment", r.spec.name},
                 {"seed", r.spec.seed},
                 {"trials", r.spec.trials},
                 {"numeric_failures", r.numeric_failures},
                 {"version", kVersion},
                 {"git", SPARSECHAN_GIT_HASH},
                 {"spec", spec_to_json(r.spec)}};
    fs::path side = csv;
    side.replace_extension(".meta.json");
    detail::atomic_write(side, meta.dump(2) + "\n");
    written.push_back(csv.string());
    written.push_back(side.string());
  }
  return written;
}

/// Runs the experiment. Deterministic for a fixed seed whatever the worker
/// count. Numerical failures (rank-deficient genie LS, non-converged l1) are
/// counted per cell in `failures` / `numeric_failures`, never dropped silently.
inline SweepResult run_sweep(const ExperimentSpec& spec, const SweepOptions& opt = {}) {
  spec.validate();
  SweepResult r;
  r.spec = spec;
  const int workers = opt.workers > 0 ? opt.workers : worker_count();
  const long per_model = spec.trials;
  const auto n_models = static_cast<long>(spec.swept_models().size());
  detail::Progress prog(opt, spec.kind == ExperimentKind::mse || spec.kind == ExperimentKind::ber
                                 ? per_model
                                 : per_model * n_models);
  switch (spec.kind) {
    case ExperimentKind::mse: detail::run_mse(spec, r, workers, prog); break;
    case ExperimentKind::ber: detail::run_ber(spec, r, workers, prog); break;
    case ExperimentKind::rho: detail::run_rho(spec, r, workers, prog); break;
    case ExperimentKind::growth: detail::run_growth(spec, r, workers, prog); break;
    case ExperimentKind::ci: detail::run_ci(spec, r, workers, prog); break;
  }
  if (opt.write) r.files = write_result(r);
  return r;
}

}  // namespace sparsechan
