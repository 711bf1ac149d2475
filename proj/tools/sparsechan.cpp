// Command-line front end: run presets or spec files, list presets, validate specs.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sparsechan/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitSchema = 2;
constexpr int kExitNumeric = 3;

const char* preset_summary(const std::string& name) {
  if (name == "fig-lhat") return "mean L_hat and MSE of OMP (N_T = M, 4M) and OMPBR vs SNR";
  if (name == "fig-mse") return "MSE vs SNR for ml-m, genie-ls, OMP variants, with closed-form theory";
  if (name == "fig-rho-bounds") return "oracle residual, CI lower bounds and the OMP residual chain";
  if (name == "fig-ci-hist") return "histogram of the CI-growth ratios r_d";
  if (name == "fig-ci-cdf") return "CDF of the adjusted CI for the four amplitude models";
  if (name == "fig-model-mse") return "OMPBR MSE vs SNR for the four amplitude models";
  if (name == "fig-omp-vs-bpdn") return "OMP, OMPBR and BPDN (direct, LS) MSE for two amplitude models";
  if (name == "fig-ber-qpsk") return "BER vs SNR with QPSK data and MMSE equalization";
  if (name == "fig-ber-16qam") return "BER vs SNR with 16QAM data and MMSE equalization";
  return "";
}

void print_summary(const sparsechan::SweepResult& r) {
  using sparsechan::to_db;
  switch (r.spec.kind) {
    case sparsechan::ExperimentKind::mse:
      std::printf("%-16s %7s %-14s %10s %10s %8s\n", "model", "snr_db", "method", "mse_db", "theory_db", "L_hat");
      for (const auto& c : r.mse)
        std::printf("%-16s %7.2f %-14s %10.3f %10.3f %8.2f\n", c.model.c_str(), c.snr_db, c.method.c_str(),
                    to_db(c.mse_mean), to_db(c.mse_theory), c.lhat_mean);
      break;
    case sparsechan::ExperimentKind::ber:
      std::printf("%7s %-14s %12s\n", "snr_db", "method", "ber");
      for (const auto& c : r.ber) std::printf("%7.2f %-14s %12.4e\n", c.snr_db, c.method.c_str(), c.counts.ber());
      break;
    case sparsechan::ExperimentKind::rho:
      for (const auto& c : r.chain)
        std::printf("%-16s snr %6.2f  L_hat %6.2f  violations oracle %ld product %ld geometric %ld (vs oracle %ld)\n",
                    c.model.c_str(), c.snr_db, c.lhat_mean, c.oracle_violations, c.product_violations,
                    c.geometric_violations, c.geometric_oracle_violations);
      break;
    case sparsechan::ExperimentKind::growth:
      for (const auto& g : r.growth)
        std::printf("%-16s d %3d  P(r_d <= 1) %.3f\n", g.model.c_str(), g.d, g.fraction_at_most_one());
      break;
    case sparsechan::ExperimentKind::ci:
      for (const auto& c : r.ci)
        std::printf("%-16s E[L] %6.2f  adjusted CI p50 %.3f p85 %.3f\n", c.model.c_str(), c.mean_L, c.p50, c.p85);
      break;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse OFDM channel estimation experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a preset or a spec file");
  std::string preset_name, spec_file, out_dir;
  int trials = 0, workers = 0;
  std::uint64_t seed = 0;
  bool smoke = false, quiet = false, dump = false;
  auto* src = run->add_option_group("source");
  src->add_option("--preset", preset_name, "Preset name (see `presets`)");
  src->add_option("--spec", spec_file, "JSON experiment spec");
  src->require_option(1);
  run->add_option("--trials", trials, "Override the trial count")->check(CLI::PositiveNumber);
  auto* seed_opt = run->add_option("--seed", seed, "Override the seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--workers", workers, "Worker threads (default: SPARSECHAN_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);
  run->add_flag("--smoke", smoke, "Use the smoke-test trial count (50)");
  run->add_flag("--dump-trials", dump, "Also write per-trial values (mse kind)");
  run->add_flag("-q,--quiet", quiet, "No progress or summary output");

  auto* presets = app.add_subcommand("presets", "List presets, or print one as a JSON spec");
  std::string show;
  presets->add_option("--show", show, "Preset to print as JSON");

  auto* validate = app.add_subcommand("validate", "Check a spec file against the schema");
  std::string validate_file;
  validate->add_option("--spec", validate_file, "JSON experiment spec")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*presets) {
      if (!show.empty()) {
        std::cout << sparsechan::spec_to_json(sparsechan::preset(show)).dump(2) << '\n';
        return kExitOk;
      }
      for (const auto& n : sparsechan::preset_names()) std::printf("%-16s %s\n", n.c_str(), preset_summary(n));
      return kExitOk;
    }
    if (*validate) {
      const auto s = sparsechan::load_spec_file(validate_file);
      std::printf("ok: %s (%s, %d trials, %zu SNR points)\n", s.name.c_str(), sparsechan::to_string(s.kind),
                  s.trials, s.snr_db.size());
      return kExitOk;
    }

    sparsechan::ExperimentSpec spec =
        preset_name.empty() ? sparsechan::load_spec_file(spec_file) : sparsechan::preset(preset_name);
    if (smoke) spec.trials = sparsechan::kSmokeTrials;
    if (trials > 0) spec.trials = trials;
    if (*seed_opt) spec.seed = seed;
    if (!out_dir.empty()) spec.output_dir = out_dir;
    if (dump) spec.dump_trials = true;
    spec.validate();

    sparsechan::SweepOptions opt;
    opt.workers = workers;
    if (!quiet)
      opt.progress = [](long done, long total) {
        if (done == total || done % 50 == 0) std::fprintf(stderr, "\r%ld/%ld trials", done, total);
        if (done == total) std::fprintf(stderr, "\n");
      };
    const auto result = sparsechan::run_sweep(spec, opt);
    if (!quiet) {
      print_summary(result);
      for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
    }
    if (result.numeric_failures > 0) {
      std::fprintf(stderr, "%ld numerical failures (see the failures column)\n", result.numeric_failures);
      return kExitNumeric;
    }
    return kExitOk;
  } catch (const sparsechan::schema_error& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitSchema;
  } catch (const sparsechan::numerical_rank_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const sparsechan::convergence_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
}
