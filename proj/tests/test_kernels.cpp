// Constants, autocovariances and correlation masses.
// Reference values in Oracle* come from a 30-digit mpmath evaluation made
// before these tests were written; the rest are exact identities.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "shevar/kernels.hpp"
#include "shevar/numeric.hpp"
#include "shevar/rng.hpp"

using namespace shevar;

namespace {
const std::vector<double> kAlphaGrid{0.1, 0.25, 0.5, 0.75, 0.9};
}

TEST(NoiseParams, ValidatesRange) {
  EXPECT_THROW(NoiseParams(0.0, 1), DomainError);
  EXPECT_THROW(NoiseParams(1.2, 2), DomainError);
  EXPECT_THROW(NoiseParams(0.5, 0), DomainError);
  EXPECT_NO_THROW(NoiseParams(1.0, 2));
  const NoiseParams white(1.0, 1);
  EXPECT_TRUE(white.white_noise());
  EXPECT_FALSE(white.clt_in_scope());
  EXPECT_TRUE(NoiseParams(0.99, 1).clt_in_scope());
}

TEST(RieszConstant, HalfInOneDimensionIsOne) {
  EXPECT_NEAR(riesz_constant(NoiseParams(0.5, 1)), 1.0, 1e-14);
}

TEST(RieszConstant, OracleHalfInTwoDimensions) {
  EXPECT_NEAR(riesz_constant(NoiseParams(0.5, 2)), 5.24411510858423962, 1e-12);
}

TEST(RieszConstant, WhiteNoiseIsRejected) {
  EXPECT_THROW(riesz_constant(NoiseParams(1.0, 1)), WhiteNoiseCase);
}

TEST(CltConstant, OracleValues) {
  EXPECT_NEAR(clt_constant(NoiseParams(1.0, 1)), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_NEAR(clt_constant(NoiseParams(0.5, 1)), 2.29343996619871876, 1e-12);
}

TEST(CltConstant, FiniteOnGrid) {
  for (int i = 1; i <= 9; ++i) {
    const double c = clt_constant(NoiseParams(0.1 * i, 1));
    EXPECT_TRUE(std::isfinite(c));
    EXPECT_GT(c, 0.0);
  }
}

TEST(TauN, UnitStep) {
  for (double a : kAlphaGrid) {
    const NoiseParams p(a, 1);
    EXPECT_DOUBLE_EQ(tau_n(p, 1.0), std::sqrt(clt_constant(p)));
  }
}

TEST(TauN, OracleWhiteNoise) {
  EXPECT_NEAR(tau_n(NoiseParams(1.0, 1), 1e-4), 0.0893243841738002331, 1e-15);
}

TEST(TauN, ScalingLaw) {
  for (double a : kAlphaGrid) {
    const NoiseParams p(a, 1);
    for (double d : {1e-2, 1e-4, 1.0 / 4096.0}) {
      EXPECT_NEAR(tau_n(p, 4 * d) / tau_n(p, d), std::pow(4.0, 0.5 - a / 4.0), 1e-14);
    }
  }
  EXPECT_THROW(tau_n(NoiseParams(0.5, 1), 0.0), DomainError);
}

TEST(GammaR, ZeroLagIsOne) {
  for (double a : kAlphaGrid) EXPECT_EQ(gamma_r(a, 0), 1.0);
}

TEST(GammaR, OracleValues) {
  EXPECT_NEAR(gamma_r(1.0, 1), (std::sqrt(2.0) - 2.0) / 2.0, 1e-15);
  EXPECT_NEAR(gamma_r(0.5, 1), -0.159103584746285457, 1e-15);
  EXPECT_NEAR(gamma_r(0.9, 5), -0.0121410983081861213, 1e-15);
}

TEST(GammaR, IntegralFormContinuousAtSwitch) {
  // r = 1000 uses the three-power form, r = 1001 the integral form
  for (double a : kAlphaGrid) {
    const double b = 1.0 - a / 2.0;
    const double lead = [&](double r) { return 0.5 * b * (b - 1.0) * std::pow(r, b - 2.0); }(1000.5);
    const double g0 = gamma_r(a, 1000), g1 = gamma_r(a, 1001);
    EXPECT_LT(g0, 0.0);
    EXPECT_LT(g1, 0.0);
    EXPECT_NEAR(0.5 * (g0 + g1) / lead, 1.0, 1e-5);
  }
}

TEST(GammaR, NegativeAndDecreasingInModulus) {
  for (double a : kAlphaGrid) {
    double prev = INFINITY;
    for (std::size_t r = 1; r <= 20000; ++r) {
      const double g = gamma_r(a, r);
      ASSERT_LT(g, 0.0) << "alpha " << a << " r " << r;
      ASSERT_LT(std::abs(g), prev) << "alpha " << a << " r " << r;
      prev = std::abs(g);
    }
  }
}

TEST(GammaR, PowerLawDecaySlope) {
  for (double a : kAlphaGrid) {
    std::vector<double> x, y;
    for (double r = 100; r <= 100000; r *= 1.5) {
      x.push_back(std::log(r));
      y.push_back(std::log(std::abs(gamma_r(a, static_cast<std::size_t>(r)))));
    }
    EXPECT_NEAR(fit_line(x, y).slope, -(1.0 + a / 2.0), 0.05) << "alpha " << a;
  }
}

TEST(GammaPartialSum, ClosedFormMatches) {
  for (double a : kAlphaGrid) {
    for (std::size_t R : {1u, 7u, 1000u, 1001u, 100000u, 1000000u}) {
      const double s = gamma_partial_sum(a, R);
      const double c = gamma_partial_sum_closed_form(a, R);
      EXPECT_LE(std::abs(s - c) / std::abs(c), 1e-12) << "alpha " << a << " R " << R;
    }
  }
}

TEST(GammaPartialSum, WhiteNoiseClosedForm) {
  EXPECT_NEAR(gamma_partial_sum(1.0, 1000), gamma_partial_sum_closed_form(1.0, 1000), 1e-12);
}

TEST(GammaSeries, TotalIsHalf) {
  for (double a : kAlphaGrid) EXPECT_NEAR(gamma_series_total(a), 0.5, 1e-5) << "alpha " << a;
}

TEST(GammaSeries, OracleSquaredSums) {
  // sum_{r>=1} Gamma_r^2 from a direct 30-digit sum to 20000 plus the tail
  const std::vector<std::pair<double, double>> oracle{{0.1, 0.001493567165767337},
                                                      {0.25, 0.008355170547013576},
                                                      {0.5, 0.02857466028468994},
                                                      {0.75, 0.05635790136344872},
                                                      {0.9, 0.07564505138116784},
                                                      {1.0, 0.08937186207836125}};
  for (const auto& [a, v] : oracle) EXPECT_NEAR(gamma_squared_series(a), v, 1e-11) << "alpha " << a;
}

TEST(GammaSeries, TailBoundDominatesTail) {
  for (double a : kAlphaGrid) {
    const double total = gamma_squared_series(a);
    for (std::size_t R : {10u, 100u, 1000u}) {
      CompensatedSum head;
      for (std::size_t r = 1; r <= R; ++r) head.add(gamma_r(a, r) * gamma_r(a, r));
      EXPECT_GE(gamma_squared_tail_bound(a, R), total - head.value()) << "alpha " << a << " R " << R;
    }
  }
}

TEST(AutocovarianceTable, ToeplitzIsPositiveSemidefinite) {
  for (double a : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
    const auto t = make_autocovariance_table(a, 255);
    EXPECT_EQ(t.truncation(), 255u);
    Eigen::MatrixXd m(256, 256);
    for (int i = 0; i < 256; ++i)
      for (int j = 0; j < 256; ++j) m(i, j) = t[static_cast<std::size_t>(std::abs(i - j))];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << "alpha " << a;
  }
}

TEST(AbsMoment, KnownValues) {
  EXPECT_NEAR(abs_moment(2), 1.0, 1e-15);
  EXPECT_NEAR(abs_moment(4), 3.0, 1e-14);
  EXPECT_NEAR(abs_moment(1), std::sqrt(2.0 / std::numbers::pi), 1e-15);
  EXPECT_NEAR(abs_moment(3), 1.59576912160573071, 1e-14);
  EXPECT_THROW(abs_moment(0.0), DomainError);
}

TEST(AbsMoment, MatchesMonteCarlo) {
  NormalSource normal(99);
  const std::size_t n = 1000000;
  std::vector<double> z(n);
  for (auto& v : z) v = normal();
  for (double p : {1.0, 2.0, 3.0, 4.0, 6.0}) {
    CompensatedSum s, s2;
    for (double v : z) {
      const double x = std::pow(std::abs(v), p);
      s.add(x);
      s2.add(x * x);
    }
    const double mean = s.value() / n;
    const double se = std::sqrt((s2.value() / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - abs_moment(p)), 3.0 * se) << "p " << p;
  }
}

TEST(HeatKernel, Basics) {
  EXPECT_EQ(heat_kernel(0.0, 0.3), 0.0);
  EXPECT_EQ(heat_kernel(-1.0, 0.0), 0.0);
  EXPECT_NEAR(heat_kernel(1.0, 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-16);
  const std::vector<double> x2{0.0, 0.0};
  EXPECT_NEAR(heat_kernel(1.0, x2), 1.0 / (2.0 * std::numbers::pi), 1e-16);
}

TEST(HeatKernel, IntegratesToOne) {
  for (double t : {0.1, 1.0}) {
    auto g = [t](double x) { return heat_kernel(t, x); };
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        g, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-8) << "t " << t;
  }
}

TEST(PiMass, ZeroShiftIsOne) {
  for (double a : kAlphaGrid) EXPECT_NEAR(pi_mass(a, 0).value, 1.0, 1e-6);
}

TEST(PiMass, SpotValues) {
  EXPECT_NEAR(pi_mass(0.5, 1).value, -0.159103584746285457, 1e-6);
  EXPECT_NEAR(pi_mass(0.9, 5).value, -0.0121410983081861213, 1e-6);
}

TEST(PiMass, EqualsGammaOnGrid) {
  for (double a : kAlphaGrid) {
    for (std::size_t r = 0; r <= 50; ++r) {
      const auto m = pi_mass(a, r);
      ASSERT_TRUE(std::isfinite(m.value));
      EXPECT_LE(std::abs(m.value - gamma_r(a, r)), 1e-6) << "alpha " << a << " r " << r;
    }
  }
}

TEST(PiMass, IndependentOfStepAndDimension) {
  for (double dn : {1.0, 1e-3}) {
    EXPECT_NEAR(pi_mass(0.5, 3, 2, dn).value, gamma_r(0.5, 3), 1e-6) << "delta " << dn;
  }
  EXPECT_NEAR(pi_mass(0.5, 0, 1).prefactor, 0.75, 1e-12);
}

TEST(PiMass, RejectsOutOfScope) {
  EXPECT_THROW(pi_mass(1.0, 1), DomainError);
  EXPECT_THROW(pi_mass(0.0, 1), DomainError);
}

TEST(PiMassShifted, ZeroShiftAgreesAndShiftShrinks) {
  for (std::size_t r : {0u, 1u, 4u}) {
    EXPECT_NEAR(pi_mass_shifted(0.5, r, 0.0).value, gamma_r(0.5, r), 1e-6);
  }
  // a spatial offset decorrelates: |mass| does not grow with the offset
  const double m0 = std::abs(pi_mass_shifted(0.5, 0, 0.0).value);
  const double m1 = std::abs(pi_mass_shifted(0.5, 0, 1.0).value);
  const double m2 = std::abs(pi_mass_shifted(0.5, 0, 4.0).value);
  EXPECT_LE(m1, m0 + 1e-9);
  EXPECT_LE(m2, m1 + 1e-9);
}
