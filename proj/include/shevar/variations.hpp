#ifndef SHEVAR_VARIATIONS_HPP_
#define SHEVAR_VARIATIONS_HPP_

// Normalized increments, variation functionals V^n_f and V^n_p, and the
// rescaled CLT statistic.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "shevar/error.hpp"
#include "shevar/gaussian_limits.hpp"
#include "shevar/kernels.hpp"
#include "shevar/model.hpp"
#include "shevar/numeric.hpp"
#include "shevar/simulate.hpp"

namespace shevar {

/// (u(i delta, x_k) - u((i-1) delta, x_k)) / tau_n, i = 1..n, row-major.
struct IncrementPanel {
  std::vector<double> values;
  std::size_t points = 1;
  double tau = 1.0;
  double alpha = 1.0;
  double delta_n = 1.0;

  std::size_t rows() const noexcept { return points == 0 ? 0 : values.size() / points; }
  /// i is 1-based, as in the sums.
  double operator()(std::size_t i, std::size_t k) const { return values[(i - 1) * points + k]; }
};

using VariationPath = std::vector<std::vector<double>>;  // [t index][m]

inline IncrementPanel extract_increments(const PathPanel& panel, const SamplingDesign& design,
                                         double alpha) {
  const std::size_t n = design.steps();
  if (panel.rows() != n + 1) throw GridMismatch("panel row count does not match the design");
  if (panel.cols() != design.points.size()) throw GridMismatch("panel points do not match the design");
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * design.delta_n;
    if (std::abs(panel.times[i] - t) > 1e-9 * design.delta_n * (1.0 + static_cast<double>(i))) {
      throw GridMismatch("panel times are not on the design grid");
    }
  }
  IncrementPanel out;
  out.points = panel.cols();
  out.alpha = alpha;
  out.delta_n = design.delta_n;
  out.tau = tau_n(NoiseParams(alpha, 1), design.delta_n);
  out.values.resize(n * out.points);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t k = 0; k < out.points; ++k) {
      out.values[(i - 1) * out.points + k] = (panel(i, k) - panel(i - 1, k)) / out.tau;
    }
  }
  return out;
}

/// Increment panel from an already normalized single-point sequence.
inline IncrementPanel increments_from_normalized(std::span<const double> z, double alpha, double delta_n) {
  IncrementPanel p;
  p.values.assign(z.begin(), z.end());
  p.points = 1;
  p.alpha = alpha;
  p.delta_n = delta_n;
  p.tau = tau_n(NoiseParams(alpha, 1), delta_n);
  return p;
}

/// t(n) = [t / delta_n] - L + 1 (may be <= 0).
inline long long summand_count(double t, double delta_n, std::size_t lags) {
  return static_cast<long long>(std::floor(t / delta_n + 1e-9)) - static_cast<long long>(lags) + 1;
}

/// V^n_f(u, t)_m = delta_n sum_{i=1}^{t(n)} f_m(window_i) for every t in the
/// increasing t_grid; window_i holds increments i..i+L-1 of every point. The
/// sum runs left to right with compensation and is 0 when t(n) < 1.
inline VariationPath variation_functional(const EvaluationFunction& f, const IncrementPanel& incr,
                                          const SamplingDesign& design, std::span<const double> t_grid) {
  if (f.points() != incr.points) throw GridMismatch("evaluation function and panel disagree on K");
  const std::size_t L = f.lags();
  const std::size_t M = f.outputs();
  const double horizon = static_cast<double>(incr.rows()) * incr.delta_n;
  std::vector<CompensatedSum> acc(M);
  VariationPath out(t_grid.size(), std::vector<double>(M, 0.0));
  std::vector<double> window(incr.points * L);
  long long done = 0;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    const double t = t_grid[ti];
    if (ti > 0 && t < t_grid[ti - 1]) throw GridMismatch("t grid must be increasing");
    if (t > horizon * (1.0 + 1e-12) || t > design.horizon * (1.0 + 1e-12)) {
      throw DomainError("t beyond the observed horizon");
    }
    const long long tn = summand_count(t, incr.delta_n, L);
    for (long long i = done + 1; i <= tn; ++i) {
      for (std::size_t k = 0; k < incr.points; ++k) {
        for (std::size_t l = 0; l < L; ++l) window[k * L + l] = incr(static_cast<std::size_t>(i) + l, k);
      }
      for (std::size_t m = 0; m < M; ++m) acc[m].add(f.evaluate(m, window));
    }
    if (tn > done) done = tn;
    for (std::size_t m = 0; m < M; ++m) out[ti][m] = incr.delta_n * acc[m].value();
  }
  return out;
}

/// V^n_p of a scalar series u(i delta_n), i = 0..n: f = |z|^p with K = L = 1.
inline std::vector<double> power_variation(double p, std::span<const double> series,
                                           const SamplingDesign& design, double alpha,
                                           std::span<const double> t_grid) {
  if (series.size() != design.steps() + 1) throw GridMismatch("series length does not match the design");
  const auto panel = panel_from_series(series, design.delta_n);
  SamplingDesign d = design;
  d.points = panel.points;
  d.lags = 1;
  const auto incr = extract_increments(panel, d, alpha);
  EvaluationFunction f(1, 1);
  f.abs_power(p);
  const auto v = variation_functional(f, incr, d, t_grid);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i][0];
  return out;
}

/// delta_n^{-1/2} (V^n_f - V_f), componentwise.
inline VariationPath clt_statistic(const VariationPath& vn, const VariationPath& vlimit, double delta_n) {
  if (vn.size() != vlimit.size()) throw GridMismatch("paths live on different grids");
  const double s = 1.0 / std::sqrt(delta_n);
  VariationPath out(vn.size());
  for (std::size_t i = 0; i < vn.size(); ++i) {
    if (vn[i].size() != vlimit[i].size()) throw GridMismatch("paths have different widths");
    out[i].resize(vn[i].size());
    for (std::size_t m = 0; m < vn[i].size(); ++m) out[i][m] = s * (vn[i][m] - vlimit[i][m]);
  }
  return out;
}

/// w(s) = sigma^2(u(s, x_k)) read off a simulated panel.
inline VariancePath variance_path(const PathPanel& panel, const Coefficient& sigma) {
  VariancePath p;
  p.points = panel.cols();
  p.s = panel.times;
  p.w.resize(panel.values.size());
  for (std::size_t i = 0; i < panel.values.size(); ++i) {
    const double s = sigma(panel.values[i]);
    p.w[i] = s * s;
  }
  return p;
}

inline void write_variation_csv(const VariationPath& v, std::span<const double> t_grid, std::ostream& os) {
  os.precision(17);
  os << "t,m,value\n";
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t m = 0; m < v[i].size(); ++m) os << t_grid[i] << ',' << m << ',' << v[i][m] << '\n';
  }
}

}  // namespace shevar

#endif  // SHEVAR_VARIATIONS_HPP_
