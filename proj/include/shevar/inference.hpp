#ifndef SHEVAR_INFERENCE_HPP_
#define SHEVAR_INFERENCE_HPP_

// Feasible estimators: sigma_0 of the parabolic Anderson model, integrated
// powers of sigma, a two-scale estimator of alpha, and plug-in confidence
// intervals. The intervals rest on the CLT for V^n_p with a plug-in limit
// covariance; the error of the Riemann sum in the sigma_0 denominator is not
// accounted for, so those intervals are heuristic.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "shevar/error.hpp"
#include "shevar/gaussian_limits.hpp"
#include "shevar/kernels.hpp"
#include "shevar/model.hpp"
#include "shevar/numeric.hpp"
#include "shevar/variations.hpp"

namespace shevar {

struct EstimateReport {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::size_t n = 0;
  double delta_n = 0.0;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> flags;
};

inline nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json j;
  j["estimate"] = r.estimate;
  j["se"] = r.se;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["level"] = r.level;
  j["n"] = r.n;
  j["delta_n"] = r.delta_n;
  j["diagnostics"] = r.diagnostics;
  j["flags"] = r.flags;
  return j;
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// point -/+ z_{(1+level)/2} se.
inline Interval confidence_interval(double point, double se, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  if (!std::isfinite(se) || se < 0.0) throw DomainError("standard error must be finite and >= 0");
  const boost::math::normal_distribution<double> nd;
  const double z = boost::math::quantile(nd, 0.5 * (1.0 + level));
  return {point - z * se, point + z * se};
}

namespace detail {

inline void fill_interval(EstimateReport& r) {
  const auto ci = confidence_interval(r.estimate, r.se, r.level);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
}

/// Local realized variance of normalized increments: mean of z^2 over a
/// centered window of ceil(delta_n^{-1/2}) increments, one value per
/// increment (left endpoint of its cell).
inline VariancePath local_variance(const IncrementPanel& incr) {
  const std::size_t n = incr.rows();
  const std::size_t K = incr.points;
  const auto win = static_cast<std::size_t>(std::ceil(1.0 / std::sqrt(incr.delta_n)));
  const std::size_t w = std::max<std::size_t>(1, std::min(win, n));
  VariancePath p;
  p.points = K;
  p.s.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) p.s[i] = static_cast<double>(i) * incr.delta_n;
  p.w.assign((n + 1) * K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 1; i <= n; ++i) cum[i] = cum[i - 1] + incr(i, k) * incr(i, k);
    for (std::size_t i = 0; i < n; ++i) {
      // window [lo, lo + w) of increment indices (0-based), centered on i
      std::size_t lo = i >= w / 2 ? i - w / 2 : 0;
      if (lo + w > n) lo = n - w;
      p.w[i * K + k] = (cum[lo + w] - cum[lo]) / static_cast<double>(w);
    }
    p.w[n * K + k] = p.w[(n - 1) * K + k];
  }
  return p;
}

struct PluginCovariance {
  double value = 0.0;
  std::size_t r_max = 0;
  double tail_bound = 0.0;
};

/// C(T) of f = |z|^p with w replaced by the local realized variance.
inline PluginCovariance plugin_covariance(double p, const IncrementPanel& incr) {
  EvaluationFunction f(1, 1);
  f.abs_power(p);
  GaussianLimits gl(incr.alpha, f);
  const auto path = local_variance(incr);
  const std::vector<double> t{path.s.back()};
  const auto law = gl.limit_covariance(path, t);
  return {law.covariance[0](0, 0), law.r_max, law.tail_bound};
}

}  // namespace detail

/// Estimate of int_0^T sigma^p(u(s, x)) ds as V^n_p(u, T) / m_p, with a
/// plug-in CLT interval. For the additive case sigma = 1 the target is T.
inline EstimateReport estimate_integrated_power(double p, const IncrementPanel& incr, double level = 0.95) {
  if (incr.points != 1) throw DomainError("integrated power uses a single point");
  const std::size_t n = incr.rows();
  if (n < 2) throw DomainError("need at least two increments");
  CompensatedSum v;
  for (std::size_t i = 1; i <= n; ++i) v.add(std::pow(std::abs(incr(i, 0)), p));
  const double mp = abs_moment(p);
  EstimateReport r;
  r.level = level;
  r.n = n;
  r.delta_n = incr.delta_n;
  r.estimate = incr.delta_n * v.value() / mp;
  const auto pc = detail::plugin_covariance(p, incr);
  if (!std::isfinite(pc.value)) throw DomainError("plug-in covariance is not finite");
  r.se = std::sqrt(incr.delta_n * std::max(pc.value, 0.0)) / mp;
  r.diagnostics["plugin_C"] = pc.value;
  r.diagnostics["series_r_max"] = static_cast<double>(pc.r_max);
  r.diagnostics["series_tail_bound"] = pc.tail_bound;
  detail::fill_interval(r);
  return r;
}

/// (sigma_0^n)^p = V^n_p(u, T) / (m_p delta_n sum_{i=1}^{[T/delta_n]} |u(i delta_n, x)|^p)
/// for the parabolic Anderson model; the report carries sigma_0 itself, the
/// raw p-th power estimate sits in diagnostics["power_estimate"].
inline EstimateReport estimate_sigma0(double p, std::span<const double> series, const SamplingDesign& design,
                                      double alpha, double level = 0.95) {
  if (!(p > 0.0)) throw DomainError("power must be positive");
  const std::size_t n = design.steps();
  if (series.size() != n + 1) throw GridMismatch("series length does not match the design");
  CompensatedSum den;
  for (std::size_t i = 1; i <= n; ++i) den.add(std::pow(std::abs(series[i]), p));
  const double denominator = abs_moment(p) * design.delta_n * den.value();
  if (!(denominator > 0.0) || !std::isfinite(denominator)) {
    throw DegeneratePath("estimator denominator vanishes");
  }
  const auto panel = panel_from_series(series, design.delta_n);
  SamplingDesign d = design;
  d.points = panel.points;
  const auto incr = extract_increments(panel, d, alpha);
  CompensatedSum num;
  for (std::size_t i = 1; i <= n; ++i) num.add(std::pow(std::abs(incr(i, 0)), p));
  if (!(num.value() > 0.0)) throw DegeneratePath("path has no variation");
  const double vnp = design.delta_n * num.value();
  const double power_est = vnp / denominator;

  EstimateReport r;
  r.level = level;
  r.n = n;
  r.delta_n = design.delta_n;
  r.estimate = std::pow(power_est, 1.0 / p);
  r.diagnostics["power_estimate"] = power_est;
  r.diagnostics["denominator"] = denominator;
  const auto pc = detail::plugin_covariance(p, incr);
  if (!std::isfinite(pc.value)) throw DomainError("plug-in covariance is not finite");
  const double se_power = std::sqrt(design.delta_n * std::max(pc.value, 0.0)) / denominator;
  r.diagnostics["se_power"] = se_power;
  r.diagnostics["plugin_C"] = pc.value;
  r.diagnostics["series_r_max"] = static_cast<double>(pc.r_max);
  r.diagnostics["series_tail_bound"] = pc.tail_bound;
  // delta method for the p-th root, guarded near zero
  const double deriv = p * std::pow(std::max(r.estimate, 1e-12), p - 1.0);
  r.se = se_power / deriv;
  r.flags.push_back("heuristic_interval");
  detail::fill_interval(r);
  return r;
}

/// alpha from mean squared raw increments at lags 1 and 2: their ratio is
/// close to 2^{1 - alpha/2}, so alpha = 2 (1 - log2 ratio). Values outside
/// (0, 1] are clamped and flagged; a ratio outside (0.9, 2.1) means the path
/// does not scale like a rough field at all. The standard error comes from
/// 16 contiguous blocks.
inline EstimateReport estimate_alpha(std::span<const double> series, const SamplingDesign& design,
                                     double level = 0.95) {
  if (series.size() < 4) throw DomainError("alpha estimation needs at least 4 observations");
  auto ratio_of = [&](std::size_t lo, std::size_t hi) {
    CompensatedSum q1, q2;
    std::size_t n1 = 0, n2 = 0;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = series[i] - series[i - 1];
      q1.add(d * d);
      ++n1;
      if (i >= lo + 2) {
        const double e = series[i] - series[i - 2];
        q2.add(e * e);
        ++n2;
      }
    }
    const double m1 = q1.value() / static_cast<double>(n1);
    const double m2 = q2.value() / static_cast<double>(n2);
    if (!(m1 > 0.0)) throw DegeneratePath("path has no variation");
    return m2 / m1;
  };
  const double ratio = ratio_of(0, series.size());
  if (!(ratio > 0.9 && ratio < 2.1)) {
    throw InconsistentScaling("two-scale variation ratio " + std::to_string(ratio) + " outside (1, 2)");
  }
  auto to_alpha = [](double q) { return 2.0 * (1.0 - std::log2(q)); };
  EstimateReport r;
  r.level = level;
  r.n = series.size() - 1;
  r.delta_n = design.delta_n;
  const double raw = to_alpha(ratio);
  r.diagnostics["ratio"] = ratio;
  r.diagnostics["raw_estimate"] = raw;
  r.estimate = raw;
  if (raw > 1.0) {
    r.estimate = 1.0;
    r.flags.push_back("clamped_high");
  } else if (!(raw > 0.0)) {
    r.estimate = 1e-6;
    r.flags.push_back("clamped_low");
  }
  const std::size_t blocks = 16;
  const std::size_t len = series.size() / blocks;
  if (len >= 4) {
    std::vector<double> a;
    for (std::size_t b = 0; b < blocks; ++b) {
      const double q = ratio_of(b * len, (b + 1) * len);
      if (q > 0.0) a.push_back(to_alpha(q));
    }
    double mean = 0.0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    double ss = 0.0;
    for (double x : a) ss += (x - mean) * (x - mean);
    r.se = std::sqrt(ss / static_cast<double>(a.size() - 1) / static_cast<double>(a.size()));
  }
  detail::fill_interval(r);
  return r;
}

}  // namespace shevar

#endif  // SHEVAR_INFERENCE_HPP_
