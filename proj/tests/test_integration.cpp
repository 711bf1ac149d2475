#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "sparsechan/sparsechan.hpp"

using namespace sparsechan;

// Full chain on the default grid: channel, pilots, every estimator, receiver.
TEST(EndToEnd, EstimatorsRankAsExpectedAtModerateSnr) {
  const OfdmGrid g;
  ChannelModel model;
  const double sigma2 = noise_variance(20.0, g.K);
  const EstimatorSpec specs[] = {make_estimator(Method::ml_m), make_estimator(Method::genie_ls),
                                 make_estimator(Method::omp), make_estimator(Method::ompbr),
                                 make_estimator(Method::bpdn_ls)};
  double mse[5] = {};
  const int n = 40;
  for (int t = 0; t < n; ++t) {
    const TrialChannel ch = draw_trial_channel(model, 101, t);
    const PilotObservation obs = observe_trial(ch.h_m, g, sigma2, 101, t);
    for (int i = 0; i < 5; ++i)
      mse[i] += estimate_mse(run_estimator(specs[i], obs, g, model.pulse, ch.mpcs, ch.h_m), ch.h_m, g.K);
  }
  EXPECT_LT(mse[1], mse[3]);  // genie beats OMPBR
  EXPECT_LT(mse[3], mse[0]);  // OMPBR beats non-sparse LS
  EXPECT_LT(mse[2], mse[0]);
  EXPECT_LT(mse[4], mse[0]);
}

TEST(EndToEnd, BetterEstimatesGiveFewerBitErrors) {
  const OfdmGrid g;
  ChannelModel model;
  BerConfig cfg;
  cfg.data_frames = 4;
  const std::vector<EstimatorSpec> specs = {make_estimator(Method::perfect_csi), make_estimator(Method::ml_m),
                                            make_estimator(Method::ompbr)};
  std::vector<BerCounts> total(specs.size());
  for (int t = 0; t < 30; ++t) {
    const auto c = run_ber_block(model, g, specs, 10.0, cfg, 55, t);
    for (std::size_t i = 0; i < c.size(); ++i) total[i].merge(c[i]);
  }
  EXPECT_LT(total[0].bit_errors, total[2].bit_errors);
  EXPECT_LT(total[2].bit_errors, total[1].bit_errors);
}

TEST(EndToEnd, SpecFileToCsv) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sparsechan_integration";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "spec.json") << R"({
      "name": "integration", "kind": "mse", "seed": 5, "trials": 30, "snr_db": [0, 20],
      "models": ["lognormal-decay", "rayleigh-flat"],
      "estimators": [{"method": "ml-m"}, {"method": "ompbr", "name": "br"}],
      "output_dir": ")" + (dir / "out").string() + R"("
    })";
  }
  const ExperimentSpec s = load_spec_file((dir / "spec.json").string());
  SweepOptions opt;
  opt.workers = 2;
  const SweepResult r = run_sweep(s, opt);
  EXPECT_EQ(r.mse.size(), 2u * 2u * 2u);
  ASSERT_NE(r.find_mse("rayleigh-flat", 20.0, "br"), nullptr);
  EXPECT_LT(r.find_mse("rayleigh-flat", 20.0, "br")->mse_mean, r.find_mse("rayleigh-flat", 20.0, "ml-m")->mse_mean);
  std::ifstream csv(dir / "out" / "mse.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, csv_header("mse.csv"));
  fs::remove_all(dir);
}
