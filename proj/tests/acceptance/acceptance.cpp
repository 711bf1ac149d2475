// Acceptance gate at desk scale (M = N = 128, K = 512, 1000 trials unless a
// preset says otherwise). One PASS/FAIL line per criterion; exit status 1 if
// any criterion fails. `acceptance 3 7` runs a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "sparsechan/sparsechan.hpp"

using namespace sparsechan;

namespace {

// Pinned tolerances.
constexpr double kMlRatioLo = 0.95, kMlRatioHi = 1.05;
constexpr double kGenieRatioLo = 0.95, kGenieRatioHi = 1.05;
constexpr double kGenieGainTol = 0.5;  // dB around 10 log10(M / E[L])
constexpr double kOmpRatioLo = 1.0, kOmpRatioHi = 1.6;
constexpr double kOmpAsymptoteSnr = 20.0;
constexpr double kLhatNyquistAt0 = 8.0, kLhatSuperresAt0 = 5.0, kLhatTol = 2.0;
constexpr double kLhatOvershootAt30 = 1.4;
constexpr int kL0Instances = 200;
constexpr double kL0ResidualRel = 1e-9, kL0ResidualAbs = 1e-12;
constexpr double kGeometricViolationFrac = 0.01;
constexpr int kGrowthDmax = 20;
constexpr double kGrowthFraction = 0.90;
constexpr double kGapLnd = 3.0, kGapLndTol = 1.0;
constexpr double kGapLnf = 1.25, kGapRd = 2.0, kGapMidTol = 0.75;
constexpr double kCiRf = 0.5, kCiMid = 0.2, kCiLnd = 0.1, kCiTol = 0.05;
constexpr double kBpdnGapLnd = 0.86, kBpdnGapRf = 1.46, kBpdnGapTol = 0.5;
constexpr double kBerMlGap = 3.0, kBerMlTol = 0.5;
constexpr double kBerGenieGap = 0.9, kBerGenieTol = 0.3;
constexpr double kBerBrLowGain = 2.0, kBerBrHighGain = 1.4, kBerBrTol = 0.5;
constexpr double kBerLowTarget = 1e-1, kBerHighTarget = 1e-3;  // BER levels where gaps are read
constexpr double kBerSlope = -1.0, kBerSlopeTol = 0.25;        // decades per 10 dB
constexpr double kBerSlopeFrom = 20.0, kBerSlopeTo = 30.0;
constexpr double kOperatorTol = 1e-10, kCovTol = 1e-10, kOrthoTol = 1e-8;
constexpr double kRefineDelta = 1e-2;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string f3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

double db(double x) { return 10.0 * std::log10(x); }

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

SweepResult sweep(const ExperimentSpec& s) {
  SweepOptions o;
  o.write = false;
  return run_sweep(s, o);
}

const MseCell& cell(const SweepResult& r, const std::string& model, double snr, const std::string& method) {
  const MseCell* c = r.find_mse(model, snr, method);
  if (!c) throw std::logic_error("missing cell " + model + "/" + method);
  return *c;
}

// Criteria 1-4 share the estimator sweep.
const SweepResult& mse_sweep() {
  static const SweepResult r = sweep(preset("fig-mse"));
  return r;
}

const std::string kModel = "lognormal-decay";

Verdict c1_ml_closed_form() {
  const auto& r = mse_sweep();
  double lo = 1e9, hi = -1e9;
  for (double snr : r.spec.snr_db) {
    const auto& c = cell(r, kModel, snr, "ml-m");
    lo = std::min(lo, c.mse_mean / c.mse_theory);
    hi = std::max(hi, c.mse_mean / c.mse_theory);
  }
  return {lo >= kMlRatioLo && hi <= kMlRatioHi, "ratio range [" + f3(lo) + ", " + f3(hi) + "]"};
}

Verdict c2_genie_closed_form() {
  const auto& r = mse_sweep();
  double lo = 1e9, hi = -1e9, gain = 0.0, mean_l = 0.0;
  long failures = 0;
  for (double snr : r.spec.snr_db) {
    const auto& g = cell(r, kModel, snr, "genie-ls");
    const auto& m = cell(r, kModel, snr, "ml-m");
    lo = std::min(lo, g.mse_mean / g.mse_theory);
    hi = std::max(hi, g.mse_mean / g.mse_theory);
    gain += db(m.mse_mean / g.mse_mean);
    mean_l += g.lhat_mean;
    failures += g.failures;
  }
  const double n = static_cast<double>(r.spec.snr_db.size());
  gain /= n;
  mean_l /= n;
  const double target = db(r.spec.grid.M / mean_l);
  const bool ok = lo >= kGenieRatioLo && hi <= kGenieRatioHi && within(gain, target, kGenieGainTol);
  return {ok, "ratio range [" + f3(lo) + ", " + f3(hi) + "], gain " + f3(gain) + " dB vs " + f3(target) +
                  " dB (E[L] " + f3(mean_l) + "), rank failures " + std::to_string(failures)};
}

Verdict c3_omp_asymptote() {
  const auto& r = mse_sweep();
  std::ostringstream os;
  bool ok = true;
  double prev = 1e9;
  for (double snr : r.spec.snr_db) {
    if (snr < kOmpAsymptoteSnr) continue;
    const auto& c = cell(r, kModel, snr, "omp");
    const double ratio = c.mse_mean / c.mse_theory;
    ok = ok && ratio >= kOmpRatioLo && ratio <= kOmpRatioHi && ratio < prev;
    prev = ratio;
    os << snr << "dB:" << f3(ratio) << " ";
  }
  // Superresolution variant for reference only; the closed form targets N_T = M.
  const std::string fine = make_estimator(Method::omp, 4 * r.spec.grid.M).label(r.spec.grid);
  os << "| " << fine << ":";
  for (double snr : r.spec.snr_db) {
    if (snr < kOmpAsymptoteSnr) continue;
    const auto& c = cell(r, kModel, snr, fine);
    os << " " << f3(c.mse_mean / c.mse_theory);
  }
  return {ok, "N_T = M ratios " + os.str()};
}

Verdict c4_lhat() {
  const auto& r = mse_sweep();
  const std::string nyq = "omp";
  const std::string fine = make_estimator(Method::omp, 4 * r.spec.grid.M).label(r.spec.grid);
  const std::string br = "ompbr";
  bool ok = true;
  for (const auto& m : {nyq, fine, br}) {
    double prev = -1.0;
    for (double snr : r.spec.snr_db) {
      const double l = cell(r, kModel, snr, m).lhat_mean;
      ok = ok && l > prev;
      prev = l;
    }
  }
  const double n0 = cell(r, kModel, 0.0, nyq).lhat_mean;
  const double f0 = cell(r, kModel, 0.0, fine).lhat_mean;
  const double b0 = cell(r, kModel, 0.0, br).lhat_mean;
  const double n30 = cell(r, kModel, 30.0, nyq).lhat_mean;
  const double f30 = cell(r, kModel, 30.0, fine).lhat_mean;
  const double b30 = cell(r, kModel, 30.0, br).lhat_mean;
  ok = ok && within(n0, kLhatNyquistAt0, kLhatTol) && within(f0, kLhatSuperresAt0, kLhatTol) &&
       within(b0, kLhatSuperresAt0, kLhatTol) && n30 >= kLhatOvershootAt30 * f30 &&
       n30 >= kLhatOvershootAt30 * b30;
  return {ok, "0dB " + f3(n0) + "/" + f3(f0) + "/" + f3(b0) + ", 30dB " + f3(n30) + "/" + f3(f30) + "/" +
                  f3(b30) + " (nyquist/" + fine + "/ompbr), monotone " + (ok ? "yes" : "see values")};
}

// Exhaustive search over dense Phi = D(x) Fp atoms; shares no code with the greedy solver.
Verdict c5_l0_oracle() {
  Rng rng = make_rng(20250, Stream::aux, 0);
  std::uniform_int_distribution<int> msize(2, 8), sparsity(1, 8);
  std::uniform_real_distribution<double> logp(-2.0, 0.0), logn(-4.0, -1.0);
  int mismatches = 0;
  for (int inst = 0; inst < kL0Instances; ++inst) {
    const int m = msize(rng);
    const OfdmGrid g{4 * m, m, m};
    const auto pulse = PulseShape::sinc(1.0, m);
    CVector h = CVector::Zero(m);
    std::uniform_int_distribution<int> tap(0, m - 1);
    const int s = std::min(sparsity(rng), m);
    for (int i = 0; i < s; ++i) h(tap(rng)) = std::polar(std::pow(10.0, logp(rng)), 6.0 * logp(rng));
    const double sigma2 = std::pow(10.0, logn(rng));
    const PilotObservation o = observe_pilots(h, g, qpsk_pilots(g.N, rng), sigma2, rng);

    DictionaryConfig dc;
    dc.max_iters = m;
    const auto e = run_omp(o, g, pulse, dc);

    const CMatrix f = dft_submatrix(g.K, g.M);
    CMatrix fp(g.N, g.M);
    for (int k = 0; k < g.N; ++k) fp.row(k) = f.row(k * g.pilot_stride());
    const CMatrix phi = o.pilots.asDiagonal() * fp * make_dictionary(pulse, m).atoms.cast<cplx>();
    const double xi = g.N * sigma2;
    int best_size = -1;
    unsigned best_mask = 0;
    double best_res = 0.0;
    for (int size = 0; size <= m && best_size < 0; ++size) {
      double res_min = 1e300;
      unsigned arg = 0;
      for (unsigned mask = 0; mask < (1u << m); ++mask) {
        if (std::popcount(mask) != size) continue;
        CMatrix sub(g.N, size);
        for (int j = 0, c = 0; j < m; ++j)
          if (mask >> j & 1u) sub.col(c++) = phi.col(j);
        const double res =
            size ? (o.y - sub * sub.completeOrthogonalDecomposition().solve(o.y)).squaredNorm() : o.y.squaredNorm();
        if (res < res_min) res_min = res, arg = mask;
      }
      if (res_min <= xi) best_size = size, best_mask = arg, best_res = res_min;
    }
    unsigned mask = 0;
    for (double tau : e.support) mask |= 1u << static_cast<int>(std::lround(tau));
    const double tol = kL0ResidualRel * best_res + kL0ResidualAbs * o.y.squaredNorm();
    if (e.L_hat != best_size || mask != best_mask || std::abs(e.residual_power - best_res) > tol) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + "/" + std::to_string(kL0Instances) + " mismatches"};
}

Verdict c6_residual_chain() {
  const SweepResult r = sweep(preset("fig-rho-bounds"));
  long oracle = 0, product = 0, geo = 0, geo_oracle = 0, trials = 0;
  for (const auto& c : r.chain) {
    geo_oracle += c.geometric_oracle_violations;
    oracle += c.oracle_violations;
    product += c.product_violations;
    geo += c.geometric_violations;
    trials += c.trials;
  }
  const double geo_frac = static_cast<double>(geo) / trials;
  return {oracle == 0 && geo_frac <= kGeometricViolationFrac,
          "oracle violations " + std::to_string(oracle) + ", product " + std::to_string(product) +
              ", geometric " + std::to_string(geo) + "/" + std::to_string(trials) +
              " trial-SNR pairs (geometric above rho_bar directly: " + std::to_string(geo_oracle) + ")"};
}

Verdict c7_ci_growth() {
  ExperimentSpec s = preset("fig-ci-hist");
  s.d_max = kGrowthDmax;
  const SweepResult r = sweep(s);
  long ok = 0, total = 0;
  double worst = 1.0;
  for (const auto& g : r.growth) {
    if (g.d > kGrowthDmax) continue;
    ok += g.at_most_one;
    total += g.samples;
    worst = std::min(worst, g.fraction_at_most_one());
  }
  const double frac = static_cast<double>(ok) / total;
  return {frac > kGrowthFraction, "fraction r_d <= 1: " + f3(frac) + " (worst single d " + f3(worst) + ")"};
}

Verdict c8_model_gap() {
  ExperimentSpec s = preset("fig-model-mse");
  s.snr_db = {0.0};
  const SweepResult r = sweep(s);
  const double rf = cell(r, "rayleigh-flat", 0.0, "ompbr").mse_mean;
  const double lnd = db(rf / cell(r, "lognormal-decay", 0.0, "ompbr").mse_mean);
  const double lnf = db(rf / cell(r, "lognormal-flat", 0.0, "ompbr").mse_mean);
  const double rd = db(rf / cell(r, "rayleigh-decay", 0.0, "ompbr").mse_mean);
  return {within(lnd, kGapLnd, kGapLndTol) && within(lnf, kGapLnf, kGapMidTol) && within(rd, kGapRd, kGapMidTol),
          "dB below rayleigh-flat: lognormal-decay " + f3(lnd) + ", lognormal-flat " + f3(lnf) +
              ", rayleigh-decay " + f3(rd)};
}

Verdict c9_ci_cdf() {
  const SweepResult r = sweep(preset("fig-ci-cdf"));
  std::map<std::string, double> p85;
  for (const auto& c : r.ci) p85[c.model] = c.p85;
  const bool ok = within(p85["rayleigh-flat"], kCiRf, kCiTol) && within(p85["lognormal-flat"], kCiMid, kCiTol) &&
                  within(p85["rayleigh-decay"], kCiMid, kCiTol) && within(p85["lognormal-decay"], kCiLnd, kCiTol);
  return {ok, "p85 rf " + f3(p85["rayleigh-flat"]) + ", lnf " + f3(p85["lognormal-flat"]) + ", rd " +
                  f3(p85["rayleigh-decay"]) + ", lnd " + f3(p85["lognormal-decay"])};
}

Verdict c10_bpdn_gap() {
  const SweepResult r = sweep(preset("fig-omp-vs-bpdn"));
  const std::string l1 = make_estimator(Method::bpdn_ls, 4 * r.spec.grid.M).label(r.spec.grid);
  const std::string direct = make_estimator(Method::bpdn_direct, 4 * r.spec.grid.M).label(r.spec.grid);
  auto gap = [&](const std::string& model, const std::string& method) {
    double sum = 0.0;
    for (double snr : r.spec.snr_db)
      sum += db(cell(r, model, snr, "ompbr").mse_mean / cell(r, model, snr, method).mse_mean);
    return sum / static_cast<double>(r.spec.snr_db.size());
  };
  const double lnd = gap("lognormal-decay", l1), rf = gap("rayleigh-flat", l1);
  long failures = 0;
  for (const auto& c : r.mse) failures += c.failures;
  const bool ok = lnd >= 0.0 && rf >= 0.0 && lnd < rf && within(lnd, kBpdnGapLnd, kBpdnGapTol) &&
                  within(rf, kBpdnGapRf, kBpdnGapTol);
  return {ok, "OMPBR minus " + l1 + ": lognormal-decay " + f3(lnd) + " dB, rayleigh-flat " + f3(rf) +
                  " dB (" + direct + ": " + f3(gap("lognormal-decay", direct)) + " / " +
                  f3(gap("rayleigh-flat", direct)) + "), solver failures " + std::to_string(failures)};
}

// SNR at which a BER curve crosses `target`, interpolating log10(BER) linearly.
double snr_at_ber(const SweepResult& r, const std::string& method, double target) {
  const auto& snr = r.spec.snr_db;
  for (std::size_t i = 1; i < snr.size(); ++i) {
    const double a = r.find_ber(snr[i - 1], method)->counts.ber(), b = r.find_ber(snr[i], method)->counts.ber();
    if (a >= target && b < target) {
      if (b <= 0.0) return snr[i];
      const double t = (std::log10(a) - std::log10(target)) / (std::log10(a) - std::log10(b));
      return snr[i - 1] + t * (snr[i] - snr[i - 1]);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Verdict c11_ber() {
  const SweepResult r = sweep(preset("fig-ber-qpsk"));
  auto gap = [&](const std::string& a, const std::string& b, double target) {
    return snr_at_ber(r, a, target) - snr_at_ber(r, b, target);
  };
  const double ml_lo = gap("ml-m", "perfect-csi", kBerLowTarget), ml_hi = gap("ml-m", "perfect-csi", kBerHighTarget);
  const double ge_lo = gap("genie-ls", "perfect-csi", kBerLowTarget),
               ge_hi = gap("genie-ls", "perfect-csi", kBerHighTarget);
  const double br_lo = gap("ml-m", "ompbr", kBerLowTarget), br_hi = gap("ml-m", "ompbr", kBerHighTarget);
  const double slope = std::log10(r.find_ber(kBerSlopeTo, "perfect-csi")->counts.ber() /
                                  r.find_ber(kBerSlopeFrom, "perfect-csi")->counts.ber()) /
                       ((kBerSlopeTo - kBerSlopeFrom) / 10.0);
  const bool ok = within(ml_lo, kBerMlGap, kBerMlTol) && within(ml_hi, kBerMlGap, kBerMlTol) &&
                  within(ge_lo, kBerGenieGap, kBerGenieTol) && within(ge_hi, kBerGenieGap, kBerGenieTol) &&
                  within(br_lo, kBerBrLowGain, kBerBrTol) && within(br_hi, kBerBrHighGain, kBerBrTol) &&
                  br_hi < br_lo && within(slope, kBerSlope, kBerSlopeTol);
  return {ok, "gaps at BER 1e-1/1e-3: ml-m " + f3(ml_lo) + "/" + f3(ml_hi) + ", genie " + f3(ge_lo) + "/" +
                  f3(ge_hi) + ", OMPBR gain " + f3(br_lo) + "/" + f3(br_hi) + " dB, slope " + f3(slope) +
                  " dec/10dB"};
}

Verdict c12_bedrock() {
  Rng rng = make_rng(12, Stream::aux, 0);
  auto rand_vec = [&](int n) {
    CVector v(n);
    for (int i = 0; i < n; ++i) v(i) = complex_normal(rng, 1.0);
    return v;
  };
  double op_err = 0.0, cov_err = 0.0, ortho = 0.0;
  for (const OfdmGrid g : {OfdmGrid{512, 128, 128}, OfdmGrid{64, 8, 16}, OfdmGrid{48, 12, 12}}) {
    const CMatrix f = dft_submatrix(g.K, g.M);
    CMatrix fp(g.N, g.M);
    for (int k = 0; k < g.N; ++k) fp.row(k) = f.row(k * g.pilot_stride());
    const CVector h = rand_vec(g.M), vk = rand_vec(g.K), vn = rand_vec(g.N);
    op_err = std::max({op_err, (f_km_apply(h, g.K) - f * h).norm(), (f_km_adjoint(vk, g.M) - f.adjoint() * vk).norm(),
                       (f_nkm_apply(h, g) - fp * h).norm(), (f_nkm_adjoint(vn, g) - fp.adjoint() * vn).norm()});
    const double sigma2 = 0.3;
    const CMatrix product = (static_cast<double>(g.K) / g.N * sigma2) * (f * f.adjoint());
    cov_err = std::max(cov_err, (ml_m_covariance_closed_form(g, sigma2) - product).cwiseAbs().maxCoeff());
  }

  const OfdmGrid g;
  ChannelModel model;
  DictionaryConfig dc;
  for (int t = 0; t < 50; ++t) {
    const TrialChannel ch = draw_trial_channel(model, 12, t);
    const auto e = run_omp(observe_trial(ch.h_m, g, noise_variance(10.0, g.K), 12, t), g, model.pulse, dc);
    const CMatrix p = pulse_delay_matrix(model.pulse, e.support);
    const CVector proj = p * least_squares(p, ch.h_m).x;
    const CVector noise_part = e.h_M_hat - proj, model_part = ch.h_m - proj;
    ortho = std::max(ortho, std::abs(noise_part.dot(model_part)) / (noise_part.norm() * model_part.norm()));
  }

  int refine_misses = 0;
  std::uniform_real_distribution<double> u(-0.5, 0.5), w(0.05, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double peak = u(rng), width = w(rng);
    const int shape = i % 3;
    auto fn = [&](double mu) {
      const double d = std::abs(mu - peak) / width;
      if (shape == 0) return std::exp(-d * d);
      if (shape == 1) return 1.0 / (1.0 + d);
      return PulseShape::normalized_sinc(std::abs(mu - peak) / 1.01);
    };
    refine_misses += std::abs(refine_delay(fn, kRefineDelta) - peak) >= kRefineDelta;
  }
  const bool ok = op_err <= kOperatorTol && cov_err <= kCovTol && ortho <= kOrthoTol && refine_misses == 0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "operators %.1e, covariance %.1e, orthogonality %.1e, refine misses %d", op_err,
                cov_err, ortho, refine_misses);
  return {ok, buf};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "non-sparse ML closed-form MSE", c1_ml_closed_form},
      {2, "genie LS closed-form MSE and gain", c2_genie_closed_form},
      {3, "OMP high-SNR asymptote", c3_omp_asymptote},
      {4, "estimated sparsity behaviour", c4_lhat},
      {5, "small-instance l0 oracle", c5_l0_oracle},
      {6, "residual bound chain", c6_residual_chain},
      {7, "CI growth ratios", c7_ci_growth},
      {8, "model-dependent MSE gap", c8_model_gap},
      {9, "adjusted CI 85th percentiles", c9_ci_cdf},
      {10, "BPDN vs OMPBR gap", c10_bpdn_gap},
      {11, "BER gaps and slope", c11_ber},
      {12, "numerical bedrock", c12_bedrock},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s  %2d  %-36s %s (%.0fs)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
