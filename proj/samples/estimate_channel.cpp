// Draws one clustered mmWave-like channel, observes it on 128 comb pilots and
// compares the estimators, then equalizes one QPSK frame with each estimate.

#include <cstdio>

#include "sparsechan/sparsechan.hpp"

using namespace sparsechan;

int main(int argc, char** argv) {
  const double snr_db = argc > 1 ? std::atof(argv[1]) : 10.0;
  const std::uint64_t seed = 2024;

  OfdmGrid grid;  // K = 512, M = N = 128
  ChannelModel model;
  model.pulse = PulseShape::sinc(2.5e-9, grid.M);

  const TrialChannel ch = draw_trial_channel(model, seed, 0);
  const double sigma2 = noise_variance(snr_db, grid.K);
  const PilotObservation obs = observe_trial(ch.h_m, grid, sigma2, seed, 0);
  std::printf("channel: %zu MPCs, ||h||^2 = %.3f, CI = %.3f, SNR = %.1f dB\n", ch.mpcs.size(),
              ch.h_m.squaredNorm(), compressibility_index(ch.h_m).ci, snr_db);

  const EstimatorSpec estimators[] = {make_estimator(Method::ml_m), make_estimator(Method::genie_ls),
                                      make_estimator(Method::omp), make_estimator(Method::omp, 4 * grid.M),
                                      make_estimator(Method::ompbr)};
  std::printf("%-10s %6s %10s\n", "method", "L_hat", "mse_db");
  for (const auto& e : estimators) {
    const ChannelEstimate est = run_estimator(e, obs, grid, model.pulse, ch.mpcs, ch.h_m);
    std::printf("%-10s %6d %10.2f\n", e.label(grid).c_str(), est.L_hat, to_db(estimate_mse(est, ch.h_m, grid.K)));
  }

  BerConfig ber;
  ber.data_frames = 1;
  const auto counts = run_ber_block(model, grid, estimators, snr_db, ber, seed, 0);
  std::printf("\nQPSK frame, %ld bits per method\n", counts[0].bits);
  for (std::size_t i = 0; i < counts.size(); ++i)
    std::printf("%-10s bit errors %ld\n", estimators[i].label(grid).c_str(), counts[i].bit_errors);
  return 0;
}
