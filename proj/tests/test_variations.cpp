// Increments, variation functionals and the rescaled statistic.

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "shevar/kernels.hpp"
#include "shevar/simulate.hpp"
#include "shevar/stats.hpp"
#include "shevar/variations.hpp"

using namespace shevar;

namespace {

SamplingDesign grid(double dn, double T, std::vector<double> points = {0.5}, std::size_t lags = 1) {
  SamplingDesign d;
  d.delta_n = dn;
  d.horizon = T;
  d.points = std::move(points);
  d.lags = lags;
  return d;
}

IncrementPanel random_panel(std::size_t n, std::size_t K, std::uint64_t seed, double dn = 0.01) {
  IncrementPanel p;
  p.points = K;
  p.delta_n = dn;
  p.alpha = 0.5;
  NormalSource normal(seed);
  p.values.resize(n * K);
  for (auto& v : p.values) v = normal();
  return p;
}

}  // namespace

TEST(ExtractIncrements, ConstantPathGivesZeros) {
  std::vector<double> s(11, 3.0);
  const auto d = grid(0.1, 1.0);
  const auto incr = extract_increments(panel_from_series(s, 0.1), d, 0.5);
  EXPECT_EQ(incr.rows(), 10u);
  for (double v : incr.values) EXPECT_EQ(v, 0.0);
}

TEST(ExtractIncrements, LinearPathUnitStep) {
  std::vector<double> s{0.0, 1.0, 2.0, 3.0};
  const auto d = grid(1.0, 3.0);
  const auto incr = extract_increments(panel_from_series(s, 1.0), d, 1.0);
  for (double v : incr.values) EXPECT_NEAR(v, 1.0 / std::sqrt(std::sqrt(2.0 / std::numbers::pi)), 1e-15);
}

TEST(ExtractIncrements, InvertsCumulativeSum) {
  const double dn = 1.0 / 512;
  const auto z = simulate_stationary_increments(0.5, 512, RngStream{1, 1});
  const double tau = tau_n(NoiseParams(0.5, 1), dn);
  const auto incr = extract_increments(panel_from_increments(z, dn, tau), grid(dn, 1.0), 0.5);
  ASSERT_EQ(incr.values.size(), z.size());
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(incr.values[i], z[i], 1e-11);
}

TEST(ExtractIncrements, GridMismatch) {
  std::vector<double> s(11, 0.0);
  EXPECT_THROW(extract_increments(panel_from_series(s, 0.1), grid(0.05, 1.0), 0.5), GridMismatch);
  EXPECT_THROW(extract_increments(panel_from_series(s, 0.1), grid(0.1, 1.0, {0.1, 0.2}), 0.5), GridMismatch);
  auto p = panel_from_series(s, 0.1);
  p.times[5] += 0.01;
  EXPECT_THROW(extract_increments(p, grid(0.1, 1.0), 0.5), GridMismatch);
}

TEST(VariationFunctional, RiemannSumOfOnes) {
  IncrementPanel p;
  p.values.assign(100, 1.0);
  p.delta_n = 0.01;
  EvaluationFunction f(1, 1);
  f.abs_power(2.0);
  const std::vector<double> t{1.0};
  EXPECT_NEAR(variation_functional(f, p, grid(0.01, 1.0), t)[0][0], 1.0, 1e-15);
}

TEST(VariationFunctional, SummandCountConvention) {
  EXPECT_EQ(summand_count(1.0, 0.01, 1), 100);
  EXPECT_EQ(summand_count(1.0, 0.01, 3), 98);
  EXPECT_EQ(summand_count(0.015, 0.01, 2), 0);
  IncrementPanel p;
  p.values.assign(100, 1.0);
  p.delta_n = 0.01;
  EvaluationFunction f(1, 2);
  f.signed_monomial({1, 1});
  const std::vector<double> t{0.005, 0.015, 1.0};
  const auto v = variation_functional(f, p, grid(0.01, 1.0, {0.5}, 2), t);
  EXPECT_EQ(v[0][0], 0.0);
  EXPECT_EQ(v[1][0], 0.0);
  EXPECT_NEAR(v[2][0], 0.99, 1e-15);
  const std::vector<double> beyond{1.5};
  EXPECT_THROW(variation_functional(f, p, grid(0.01, 1.0, {0.5}, 2), beyond), DomainError);
}

TEST(VariationFunctional, SignedBipowerToyPanel) {
  // two points, five increments, f_k = z_{k1} z_{k2}
  IncrementPanel p;
  p.points = 2;
  p.delta_n = 0.2;
  p.values = {1.0, 2.0, -1.0, 0.5, 3.0, -2.0, 0.5, 1.0, 2.0, 4.0};
  EvaluationFunction f(2, 2);
  f.signed_monomial({1, 1}, 0).signed_monomial({1, 1}, 1);
  const std::vector<double> t{1.0};
  const auto v = variation_functional(f, p, grid(0.2, 1.0, {0.25, 0.75}, 2), t)[0];
  const double row0 = 1.0 * -1.0 + -1.0 * 3.0 + 3.0 * 0.5 + 0.5 * 2.0;
  const double row1 = 2.0 * 0.5 + 0.5 * -2.0 + -2.0 * 1.0 + 1.0 * 4.0;
  EXPECT_NEAR(v[0], 0.2 * row0, 1e-15);
  EXPECT_NEAR(v[1], 0.2 * row1, 1e-15);
}

TEST(VariationFunctional, EqualsPowerVariation) {
  const double dn = 1.0 / 1000;
  const auto d = grid(dn, 1.0);
  NormalSource normal(5);
  std::vector<double> s(1001, 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) s[i] = s[i - 1] + 0.03 * normal();
  const std::vector<double> t{0.25, 0.5, 1.0};
  for (double p : {1.0, 2.0, 3.5}) {
    const auto pv = power_variation(p, s, d, 0.5, t);
    EvaluationFunction f(1, 1);
    f.abs_power(p);
    const auto incr = extract_increments(panel_from_series(s, dn), d, 0.5);
    const auto vf = variation_functional(f, incr, d, t);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(pv[i], vf[i][0]);
  }
  std::vector<double> zero(1001, 0.0);
  EXPECT_EQ(power_variation(2.0, zero, d, 0.5, t)[2], 0.0);
}

TEST(VariationFunctional, EvenFunctionsIgnoreSign) {
  auto p = random_panel(400, 2, 3);
  auto q = p;
  for (auto& v : q.values) v = -v;
  EvaluationFunction f(2, 3);
  f.abs_power(1.5, 0, 2).signed_monomial({2, 1, 1}, 1).abs_multipower({1.0, 0.5, 2.0}, 0);
  const std::vector<double> t{1.0, 2.0, 4.0};
  const auto d = grid(0.01, 4.0, {0.1, 0.2}, 3);
  EXPECT_EQ(variation_functional(f, p, d, t), variation_functional(f, q, d, t));
}

TEST(VariationFunctional, MonotoneAndAdditive) {
  const auto p = random_panel(300, 1, 4);
  EvaluationFunction f(1, 2);
  f.abs_multipower({1.0, 1.0});
  std::vector<double> t;
  for (int i = 1; i <= 30; ++i) t.push_back(0.1 * i);
  const auto d = grid(0.01, 3.0, {0.5}, 2);
  const auto v = variation_functional(f, p, d, t);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GE(v[i][0], v[i - 1][0]);
  // one pass equals the telescoped per-window sum
  CompensatedSum s;
  for (std::size_t i = 1; i + 1 <= 300; ++i) s.add(std::abs(p(i, 0)) * std::abs(p(i + 1, 0)));
  EXPECT_NEAR(v.back()[0], 0.01 * s.value(), 1e-14);
}

TEST(PowerVariation, ConcentratesOnMoments) {
  const double dn = 1.0 / 16384;
  const auto d = grid(dn, 1.0);
  const double tau = tau_n(NoiseParams(0.5, 1), dn);
  std::vector<double> v2, v4;
  for (std::uint64_t r = 0; r < 40; ++r) {
    const auto z = simulate_stationary_increments(0.5, 16384, RngStream{6, r});
    const auto s = panel_from_increments(z, dn, tau).column(0);
    const std::vector<double> t{1.0};
    v2.push_back(power_variation(2.0, s, d, 0.5, t)[0]);
    v4.push_back(power_variation(4.0, s, d, 0.5, t)[0]);
  }
  EXPECT_NEAR(summarize(v2).mean, 1.0, 0.01);
  EXPECT_NEAR(summarize(v4).mean, 3.0, 0.05);
}

TEST(PowerVariation, AbsoluteErrorShrinksWithN) {
  std::vector<double> err;
  for (int j : {10, 12, 14}) {
    const std::size_t n = std::size_t{1} << j;
    std::vector<double> e;
    for (std::uint64_t r = 0; r < 100; ++r) {
      const auto z = simulate_stationary_increments(0.5, n, RngStream{7, r});
      CompensatedSum s;
      for (double v : z) s.add(v * v);
      e.push_back(std::abs(s.value() / static_cast<double>(n) - 1.0));
    }
    err.push_back(summarize(e).mean);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}

TEST(CltStatistic, ZeroWhenEqualAndGridChecked) {
  const VariationPath a{{1.0, 2.0}, {3.0, 4.0}};
  const auto s = clt_statistic(a, a, 0.01);
  for (const auto& row : s)
    for (double v : row) EXPECT_EQ(v, 0.0);
  const VariationPath b{{1.0, 2.0}};
  EXPECT_THROW(clt_statistic(a, b, 0.01), GridMismatch);
  const VariationPath c{{1.5, 2.0}, {3.0, 4.0}};
  EXPECT_NEAR(clt_statistic(c, a, 0.01)[0][0], 5.0, 1e-14);
}

TEST(CltStatistic, AdditiveVarianceAndIndependentHalves) {
  const double a = 0.5;
  const std::size_t n = 16384;
  const double dn = 1.0 / n;
  EvaluationFunction f(1, 1);
  f.signed_monomial({2});
  const auto d = grid(dn, 1.0);
  StationarySampler sampler(a, n);
  std::vector<double> full, h1, h2;
  const std::vector<double> t{0.5, 1.0};
  const VariationPath limit{{0.5}, {1.0}};
  for (std::uint64_t r = 0; r < 1000; ++r) {
    NormalSource normal(RngStream{8, r});
    const auto incr = increments_from_normalized(sampler.sample(normal), a, dn);
    const auto s = clt_statistic(variation_functional(f, incr, d, t), limit, dn);
    full.push_back(s[1][0]);
    h1.push_back(s[0][0]);
    h2.push_back(s[1][0] - s[0][0]);
  }
  const double C = 2.0 * (1.0 + 2.0 * 0.02857466028468994);
  EXPECT_NEAR(summarize(full).variance / C, 1.0, 0.15);
  EXPECT_LE(std::abs(correlation(h1, h2).r), 4.0 / std::sqrt(1000.0));
}

TEST(VariancePathFromPanel, SquaresSigma) {
  std::vector<double> s{1.0, 2.0, -3.0};
  const auto p = variance_path(panel_from_series(s, 0.5), Coefficient::linear(0.5));
  EXPECT_EQ(p.w, (std::vector<double>{0.25, 1.0, 2.25}));
  EXPECT_EQ(p.s, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(VariationCsv, Columns) {
  const VariationPath v{{1.0, 2.0}};
  const std::vector<double> t{0.5};
  std::ostringstream os;
  write_variation_csv(v, t, os);
  EXPECT_EQ(os.str(), "t,m,value\n0.5,0,1\n0.5,1,2\n");
}
