#ifndef SHEVAR_STATS_HPP_
#define SHEVAR_STATS_HPP_

// Small sample summaries and the one-sample Kolmogorov-Smirnov test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "shevar/error.hpp"
#include "shevar/numeric.hpp"

namespace shevar {

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double se_mean = 0.0;
  double se_variance = 0.0;  // normal-theory sqrt(2/(n-1)) * variance
};

inline SampleSummary summarize(std::span<const double> x) {
  SampleSummary s;
  s.n = x.size();
  if (s.n == 0) return s;
  s.mean = compensated_total(x) / static_cast<double>(s.n);
  if (s.n < 2) return s;
  CompensatedSum ss;
  for (double v : x) ss.add((v - s.mean) * (v - s.mean));
  s.variance = ss.value() / static_cast<double>(s.n - 1);
  s.se_mean = std::sqrt(s.variance / static_cast<double>(s.n));
  s.se_variance = s.variance * std::sqrt(2.0 / static_cast<double>(s.n - 1));
  return s;
}

/// Pearson correlation and its large-sample standard error (1 - r^2)/sqrt(n).
struct Correlation {
  double r = 0.0;
  double se = 0.0;
};

inline Correlation correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw DomainError("correlation needs matching samples, n >= 3");
  const auto sx = summarize(x), sy = summarize(y);
  CompensatedSum c;
  for (std::size_t i = 0; i < x.size(); ++i) c.add((x[i] - sx.mean) * (y[i] - sy.mean));
  const double cov = c.value() / static_cast<double>(x.size() - 1);
  Correlation out;
  out.r = cov / std::sqrt(sx.variance * sy.variance);
  out.se = (1.0 - out.r * out.r) / std::sqrt(static_cast<double>(x.size()));
  return out;
}

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// D_n = sup |F_n - F| against a continuous cdf; asymptotic p-value with
/// the (sqrt(n) + 0.12 + 0.11/sqrt(n)) finite-sample scaling.
inline KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw DomainError("KS test needs a nonempty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)};
}

inline KsResult ks_test_normal(std::span<const double> sample) {
  const boost::math::normal_distribution<double> nd;
  return ks_test(sample, [&](double v) { return boost::math::cdf(nd, v); });
}

}  // namespace shevar

#endif  // SHEVAR_STATS_HPP_
