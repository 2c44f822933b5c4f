// Estimators and intervals.

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "shevar/inference.hpp"
#include "shevar/simulate.hpp"
#include "shevar/stats.hpp"

using namespace shevar;

namespace {

SamplingDesign grid(std::size_t n, double T = 1.0) {
  SamplingDesign d;
  d.delta_n = T / static_cast<double>(n);
  d.horizon = T;
  return d;
}

std::vector<double> fgn_path(double alpha, std::size_t n, std::uint64_t seed, std::uint64_t id, double scale = 1.0) {
  const double dn = 1.0 / static_cast<double>(n);
  const auto z = simulate_stationary_increments(alpha, n, RngStream{seed, id});
  return panel_from_increments(z, dn, scale * tau_n(NoiseParams(alpha, 1), dn)).column(0);
}

}  // namespace

TEST(ConfidenceInterval, Basics) {
  const auto i = confidence_interval(1.0, 0.0, 0.95);
  EXPECT_EQ(i.low, 1.0);
  EXPECT_EQ(i.high, 1.0);
  const auto n90 = confidence_interval(2.0, 0.3, 0.90);
  const auto n99 = confidence_interval(2.0, 0.3, 0.99);
  EXPECT_LT(n99.low, n90.low);
  EXPECT_GT(n99.high, n90.high);
  EXPECT_NEAR(confidence_interval(0.0, 1.0, 0.95).high, 1.959963984540054, 1e-12);
  EXPECT_THROW(confidence_interval(0.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(confidence_interval(0.0, NAN, 0.5), DomainError);
}

TEST(EstimateSigma0, ScaleEquivariant) {
  const std::size_t n = 1024;
  auto s = fgn_path(0.5, n, 1, 0);
  for (auto& v : s) v += 2.0;  // keep the denominator away from zero
  const auto base = estimate_sigma0(2.0, s, grid(n), 0.5);
  for (double c : {0.1, 3.0, 250.0}) {
    auto cs = s;
    for (auto& v : cs) v *= c;
    const auto e = estimate_sigma0(2.0, cs, grid(n), 0.5);
    EXPECT_NEAR(e.diagnostics.at("power_estimate") / base.diagnostics.at("power_estimate"), 1.0, 1e-12);
  }
}

TEST(EstimateSigma0, UnitLevelReducesToPowerVariation) {
  // u = 1 + eps * path keeps the denominator at m_p T (1 + O(eps)), so the
  // estimate is (V_p / (m_p T))^{1/p}
  const std::size_t n = 4096;
  const auto d = grid(n);
  const auto path = fgn_path(0.5, n, 2, 0);
  const double eps = 1e-7;
  std::vector<double> u(path.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = 1.0 + eps * path[i];
  const std::vector<double> t{1.0};
  for (double p : {1.0, 2.0, 3.0}) {
    const double vp = power_variation(p, u, d, 0.5, t)[0];
    const double want = std::pow(vp / (abs_moment(p) * d.horizon), 1.0 / p);
    EXPECT_NEAR(estimate_sigma0(p, u, d, 0.5).estimate / want, 1.0, 1e-5) << "p " << p;
  }
}

TEST(EstimateSigma0, ReportInvariants) {
  const std::size_t n = 2048;
  auto s = fgn_path(0.5, n, 3, 0);
  for (auto& v : s) v += 1.0;
  const auto e = estimate_sigma0(2.0, s, grid(n), 0.5, 0.9);
  EXPECT_GE(e.se, 0.0);
  EXPECT_LE(e.ci_low, e.estimate);
  EXPECT_GE(e.ci_high, e.estimate);
  EXPECT_EQ(e.n, n);
  EXPECT_EQ(e.level, 0.9);
  EXPECT_NE(std::find(e.flags.begin(), e.flags.end(), "heuristic_interval"), e.flags.end());
  const auto j = to_json(e);
  for (const char* key : {"estimate", "se", "ci_low", "ci_high", "level", "n", "delta_n", "diagnostics"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(EstimateSigma0, DegeneratePaths) {
  const std::size_t n = 64;
  std::vector<double> zero(n + 1, 0.0);
  EXPECT_THROW(estimate_sigma0(2.0, zero, grid(n), 0.5), DegeneratePath);
  std::vector<double> flat(n + 1, 1.0);
  EXPECT_THROW(estimate_sigma0(2.0, flat, grid(n), 0.5), DegeneratePath);
  std::vector<double> shortp(n, 1.0);
  EXPECT_THROW(estimate_sigma0(2.0, shortp, grid(n), 0.5), GridMismatch);
}

TEST(EstimateIntegratedPower, CalibratedCoverage) {
  const std::size_t n = 4096;
  const double dn = 1.0 / n;
  StationarySampler sampler(0.5, n);
  int covered = 0;
  const int R = 300;
  for (int r = 0; r < R; ++r) {
    NormalSource normal(RngStream{4, static_cast<std::uint64_t>(r)});
    const auto e = estimate_integrated_power(2.0, increments_from_normalized(sampler.sample(normal), 0.5, dn));
    covered += e.ci_low <= 1.0 && 1.0 <= e.ci_high;
  }
  const double rate = static_cast<double>(covered) / R;
  EXPECT_GE(rate, 0.91);
  EXPECT_LE(rate, 0.99);
}

TEST(EstimateAlpha, RecoversHalf) {
  std::vector<double> est;
  for (std::uint64_t r = 0; r < 200; ++r) est.push_back(estimate_alpha(fgn_path(0.5, 16384, 5, r), grid(16384)).estimate);
  EXPECT_NEAR(summarize(est).mean, 0.5, 0.05);
}

TEST(EstimateAlpha, WhiteNoiseTimeScaling) {
  std::vector<double> est;
  for (std::uint64_t r = 0; r < 50; ++r) est.push_back(estimate_alpha(fgn_path(1.0, 16384, 6, r), grid(16384)).estimate);
  EXPECT_NEAR(summarize(est).mean, 1.0, 0.05);
}

TEST(EstimateAlpha, ScaleInvariantAndLinearPathRejected) {
  const auto s = fgn_path(0.75, 4096, 7, 0);
  auto c = s;
  for (auto& v : c) v *= 17.0;
  EXPECT_NEAR(estimate_alpha(s, grid(4096)).estimate, estimate_alpha(c, grid(4096)).estimate, 1e-12);
  std::vector<double> line(100);
  for (std::size_t i = 0; i < line.size(); ++i) line[i] = 0.1 * static_cast<double>(i);
  EXPECT_THROW(estimate_alpha(line, grid(99)), InconsistentScaling);
  std::vector<double> tiny{0.0, 1.0, 2.0};
  EXPECT_THROW(estimate_alpha(tiny, grid(2)), DomainError);
}

TEST(EstimateSigma0, BiasAndSpreadShrinkAlongLadder) {
  // parabolic Anderson model on a coarse torus, four doublings of n
  ModelSpec m;
  m.noise = NoiseParams(0.5, 1);
  m.sigma = Coefficient::linear(0.5);
  m.u0 = InitialCondition::constant(1.0);
  std::vector<SampleSummary> s;
  for (std::size_t n : {64u, 128u, 256u, 512u}) {
    SamplingDesign d = grid(n, 0.25);
    d.spatial_modes = 256;
    d.oversampling = 4;
    d.burn_in = 0;
    SpdeSimulator sim(m, d);
    std::vector<double> e;
    for (std::uint64_t r = 0; r < 100; ++r) {
      e.push_back(estimate_sigma0(2.0, sim.run(RngStream{9, r}).column(0), d, 0.5).estimate);
    }
    s.push_back(summarize(e));
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    EXPECT_LT(std::sqrt(s[i].variance), std::sqrt(s[i - 1].variance)) << "level " << i;
    EXPECT_LE(std::abs(s[i].mean - 0.5), std::abs(s[i - 1].mean - 0.5) + 2.0 * s[i].se_mean) << "level " << i;
  }
}
