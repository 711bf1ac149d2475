#include <bit>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "sparsechan/compressibility.hpp"
#include "sparsechan/estimators.hpp"
#include "sparsechan/trial.hpp"

using namespace sparsechan;

namespace {

CVector random_channel(int m, Rng& rng) {
  CVector v(m);
  std::normal_distribution<double> z(0.0, 1.5);
  for (int i = 0; i < m; ++i) v(i) = std::polar(std::exp(z(rng)), 1.0 * i);
  return v;
}

}  // namespace

TEST(CompressibilityIndex, ExtremesAndAdjustment) {
  EXPECT_DOUBLE_EQ(compressibility_index(CVector(CVector::Ones(8))).ci, 1.0);
  CVector spike = CVector::Zero(8);
  spike(3) = cplx(0.0, 2.0);
  const CiStats s = compressibility_index(spike);
  EXPECT_DOUBLE_EQ(s.ci, 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(s.kurtosis_estimate, 8.0);
  RVector half(4);
  half << 1.0, -1.0, 0.0, 0.0;
  const CiStats h = compressibility_index(half, 2);
  EXPECT_DOUBLE_EQ(h.ci, 0.5);
  EXPECT_DOUBLE_EQ(h.adjusted_ci, 1.0);
}

TEST(CompressibilityIndex, ScaleInvariantAndBounded) {
  Rng rng = make_rng(1, Stream::aux, 0);
  for (int t = 0; t < 50; ++t) {
    const CVector v = random_channel(32, rng);
    const double ci = compressibility_index(v).ci;
    EXPECT_GE(ci, 1.0 / 32.0 - 1e-15);
    EXPECT_LE(ci, 1.0 + 1e-15);
    EXPECT_NEAR(compressibility_index(CVector(v * cplx(0.0, 7.0))).ci, ci, 1e-14);
  }
}

TEST(CompressibilityIndex, ZeroVectorThrows) {
  EXPECT_THROW(compressibility_index(CVector(CVector::Zero(4))), std::invalid_argument);
  EXPECT_TRUE(std::isnan(ci_of_powers(nullptr, 0)));
}

TEST(OracleResidual, MatchesExhaustiveSearchOnCanonicalAtoms) {
  // With on-grid Nyquist atoms the best d-atom support can be found by brute force.
  Rng rng = make_rng(2, Stream::aux, 0);
  const int m = 7, k = 28;
  const auto pulse = PulseShape::sinc(1.0, m);
  for (int t = 0; t < 20; ++t) {
    const CVector h = random_channel(m, rng);
    const ResidualProfile prof = oracle_residual_profile(h, k);
    for (int d = 0; d <= m; ++d) {
      double best = 1e300;
      for (unsigned mask = 0; mask < (1u << m); ++mask) {
        if (std::popcount(mask) != d) continue;
        std::vector<double> sup;
        for (int j = 0; j < m; ++j)
          if (mask >> j & 1u) sup.push_back(j);
        best = std::min(best, residual_of_support(h, sup, pulse, k));
      }
      EXPECT_NEAR(prof.rho_bar(d), best, 1e-12 * h.squaredNorm()) << d;
    }
    EXPECT_EQ(prof.rho_bar(m), 0.0);
    EXPECT_NEAR(prof.normalized_rho(0), 1.0, 1e-15);
  }
}

TEST(OracleResidual, ProductBoundIsALowerBound) {
  Rng rng = make_rng(3, Stream::aux, 0);
  for (int t = 0; t < 200; ++t) {
    const CVector h = random_channel(64, rng);
    const ResidualProfile prof = oracle_residual_profile(h, 256);
    for (int d = 0; d <= 40; ++d) {
      const BoundValue b = rho_lower_bound_product(prof, d);
      EXPECT_LE(b.value, prof.normalized_rho(d) * (1 + 1e-12) + 1e-15) << d;
    }
  }
}

TEST(OracleResidual, ProductBoundFlagsDegenerateTail) {
  CVector h = CVector::Zero(8);
  h(0) = 1.0;
  h(5) = 0.5;
  const ResidualProfile prof = oracle_residual_profile(h, 1);
  EXPECT_TRUE(std::isnan(prof.ci_rd(2)));
  const BoundValue b = rho_lower_bound_product(prof, 4);
  EXPECT_TRUE(b.degenerate);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_THROW(rho_lower_bound_product(prof, 9), std::out_of_range);
  EXPECT_THROW(oracle_residual_profile(CVector(CVector::Zero(4)), 1), std::invalid_argument);
  EXPECT_THROW(oracle_residual_profile(h, 0), std::invalid_argument);
}

TEST(GeometricBound, ClosedFormAndEdgeCases) {
  EXPECT_NEAR(rho_lower_bound_geometric(0.5, 32, 3).value, std::pow(1.0 - 1.0 / 4.0, 3), 1e-15);
  EXPECT_EQ(rho_lower_bound_geometric(0.5, 32, 0).value, 1.0);
  const BoundValue v = rho_lower_bound_amplitude(0.1, 5, 2);
  EXPECT_TRUE(v.degenerate);
  EXPECT_EQ(v.value, 0.0);
  EXPECT_THROW(rho_lower_bound_geometric(0.0, 32, 1), std::invalid_argument);
  EXPECT_THROW(rho_lower_bound_geometric(1.5, 32, 1), std::invalid_argument);
  EXPECT_THROW(rho_lower_bound_geometric(0.5, 0, 1), std::invalid_argument);
}

TEST(KurtosisApproximation, ClampsAtZero) {
  EXPECT_NEAR(rho_kurtosis_approximation(4.0, 16, 2), 0.25, 1e-15);
  EXPECT_EQ(rho_kurtosis_approximation(20.0, 16, 3), 0.0);
  EXPECT_EQ(rho_kurtosis_approximation(2.0, 32, 0), 1.0);
}

TEST(CiGrowth, RatiosMatchDefinition) {
  Rng rng = make_rng(4, Stream::aux, 0);
  const CVector h = random_channel(128, rng);
  const CiGrowth g = ci_growth_check(h);
  EXPECT_EQ(g.d_max, 40);
  ASSERT_EQ(g.ratios.size(), 40u);
  const ResidualProfile prof = oracle_residual_profile(h, 1);
  for (int d = 1; d <= 40; ++d)
    EXPECT_NEAR(g.ratios[d - 1], (128.0 - d + 1) / (128.0 - d) * prof.ci_rd(d - 1) / prof.ci_rd(d), 1e-12);
  EXPECT_FALSE(g.degenerate);
}

TEST(CiGrowth, FlatChannelGrowsAndSparseChannelIsDegenerate) {
  const CiGrowth flat = ci_growth_check(CVector(CVector::Ones(16)));
  EXPECT_EQ(flat.d_max, 8);
  for (double r : flat.ratios) EXPECT_GT(r, 1.0);
  CVector sparse = CVector::Zero(16);
  sparse(2) = 1.0;
  sparse(9) = 0.3;
  const CiGrowth s = ci_growth_check(sparse);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.ratios.size(), 1u);
}

TEST(KurtosisBridge, RayleighPowersHaveKurtosisTwo) {
  AmplitudeModel model;
  model.kind = AmplitudeKind::rayleigh_flat;
  AmplitudeKurtosisBridge a, b;
  DelayDraw d;
  for (int i = 0; i < 200; ++i) d.delays.push_back(i * 1e-9);
  d.cluster.assign(200, 0);
  d.cluster_origin = {0.0};
  for (int s = 0; s < 400; ++s) {
    Rng rng = make_rng(5, Stream::aux, s);
    (s % 2 ? a : b).add(sample_raw_amplitudes(model, d, rng));
  }
  EXPECT_THROW(AmplitudeKurtosisBridge{}.result(), invalid_state_error);
  a.merge(b);
  const KurtosisBridge r = a.result();
  EXPECT_EQ(r.sets, 400);
  EXPECT_NEAR(r.kappa_estimate, 2.0, 0.1);
  EXPECT_NEAR(r.inverse_ci_mean, 2.0, 0.1);
  EXPECT_NEAR(r.ci_alpha_mean, 0.5, 0.03);
  EXPECT_THROW(a.add(RVector()), std::invalid_argument);
}
