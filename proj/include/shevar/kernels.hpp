#ifndef SHEVAR_KERNELS_HPP_
#define SHEVAR_KERNELS_HPP_

// Closed-form constants of the Riesz-noise heat equation: Riesz and CLT
// normalizing constants, the increment autocovariances Gamma_r, Gaussian
// absolute moments, the heat kernel, and quadrature evaluations of the
// heat-kernel-increment correlation mass.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include "shevar/error.hpp"
#include "shevar/numeric.hpp"

namespace shevar {

/// Riesz exponent and spatial dimension of the noise. The constructor
/// enforces 0 < alpha <= 1 and alpha < dim, except alpha = dim = 1, which is
/// accepted as space-time white noise.
class NoiseParams {
 public:
  NoiseParams(double alpha, int dim) : alpha_(alpha), dim_(dim) {
    if (!(dim >= 1)) throw DomainError("noise dimension must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw DomainError("Riesz exponent alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
    if (!(alpha < dim) && !(alpha == 1.0 && dim == 1)) {
      throw DomainError("Riesz exponent must be smaller than the dimension");
    }
  }

  double alpha() const noexcept { return alpha_; }
  int dim() const noexcept { return dim_; }
  bool white_noise() const noexcept { return alpha_ == 1.0 && dim_ == 1; }
  /// The central limit theorem is only established for 0 < alpha < 1.
  bool clt_in_scope() const noexcept { return alpha_ < 1.0; }

 private:
  double alpha_;
  int dim_;
};

/// c_alpha = pi^{d/2-alpha} Gamma(alpha/2) / Gamma((d-alpha)/2).
inline double riesz_constant(const NoiseParams& params) {
  const double a = params.alpha();
  const double d = params.dim();
  if (a == d) throw WhiteNoiseCase("Riesz constant undefined for alpha == dim; use delta correlation");
  return std::pow(std::numbers::pi, d / 2.0 - a) * std::tgamma(a / 2.0) / std::tgamma((d - a) / 2.0);
}

/// C_alpha = pi^{d/2-alpha} Gamma(alpha/2) / (2^{alpha/2} (1-alpha/2) Gamma(d/2)).
inline double clt_constant(const NoiseParams& params) {
  const double a = params.alpha();
  const double d = params.dim();
  return std::pow(std::numbers::pi, d / 2.0 - a) * std::tgamma(a / 2.0) /
         (std::pow(2.0, a / 2.0) * (1.0 - a / 2.0) * std::tgamma(d / 2.0));
}

/// tau_n = sqrt(C_alpha) * delta_n^{1/2 - alpha/4}.
inline double tau_n(const NoiseParams& params, double delta_n) {
  if (!(delta_n > 0.0)) throw DomainError("delta_n must be positive");
  return std::sqrt(clt_constant(params)) * std::pow(delta_n, 0.5 - params.alpha() / 4.0);
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

// 2-point Gauss-Legendre on [0, 1].
inline constexpr std::array<double, 2> kGauss2Nodes{0.21132486540518711775, 0.78867513459481288225};
// 3-point Gauss-Legendre on [0, 1].
inline constexpr std::array<double, 3> kGauss3Nodes{0.11270166537925831148, 0.5,
                                                    0.88729833462074168852};
inline constexpr std::array<double, 3> kGauss3Weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

/// y^{-a}(x) second difference with unit step starting at x:
/// (x+2)^{-a} - 2(x+1)^{-a} + x^{-a}, evaluated without cancellation for large x.
inline double decay_second_difference(double x, double a) {
  if (x < 64.0) return std::pow(x + 2.0, -a) - 2.0 * std::pow(x + 1.0, -a) + std::pow(x, -a);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      acc += kGauss3Weights[i] * kGauss3Weights[j] *
             std::pow(x + kGauss3Nodes[i] + kGauss3Nodes[j], -a - 2.0);
    }
  }
  return a * (a + 1.0) * acc;
}

}  // namespace detail

/// Autocovariance of consecutive normalized increments:
/// Gamma_0 = 1, Gamma_r = ((r+1)^b - 2 r^b + (r-1)^b)/2 with b = 1 - alpha/2.
/// For r > 1000 the second difference is evaluated as
/// b(b-1)/2 * int_0^1 int_0^1 (r-1+u+v)^{b-2} du dv with a 2x2 Gauss rule.
inline double gamma_r(double alpha, std::size_t r) {
  detail::check_alpha(alpha);
  if (r == 0) return 1.0;
  const double b = 1.0 - alpha / 2.0;
  if (r <= 1000) {
    const long double bl = b;
    const long double rl = static_cast<long double>(r);
    const long double v =
        std::pow(rl + 1.0L, bl) - 2.0L * std::pow(rl, bl) + std::pow(rl - 1.0L, bl);
    return static_cast<double>(v / 2.0L);
  }
  const double base = static_cast<double>(r) - 1.0;
  double acc = 0.0;
  for (double u : detail::kGauss2Nodes) {
    for (double v : detail::kGauss2Nodes) acc += 0.25 * std::pow(base + u + v, b - 2.0);
  }
  return 0.5 * b * (b - 1.0) * acc;
}

/// Table Gamma_0..Gamma_R for one alpha.
struct AutocovarianceTable {
  double alpha = 1.0;
  std::vector<double> values;

  std::size_t truncation() const noexcept { return values.empty() ? 0 : values.size() - 1; }
  double operator[](std::size_t r) const { return values[r]; }
};

inline AutocovarianceTable make_autocovariance_table(double alpha, std::size_t max_lag) {
  AutocovarianceTable table;
  table.alpha = alpha;
  table.values.resize(max_lag + 1);
  for (std::size_t r = 0; r <= max_lag; ++r) table.values[r] = gamma_r(alpha, r);
  return table;
}

/// Sum_{r=0}^{R} Gamma_r, accumulated term by term with compensation.
inline double gamma_partial_sum(double alpha, std::size_t max_lag) {
  CompensatedSum s;
  for (std::size_t r = 0; r <= max_lag; ++r) s.add(gamma_r(alpha, r));
  return s.value();
}

/// Telescoped value of the partial sum: (1 + (R+1)^b - R^b) / 2.
inline double gamma_partial_sum_closed_form(double alpha, std::size_t max_lag) {
  detail::check_alpha(alpha);
  if (max_lag == 0) return 1.0;
  const double b = 1.0 - alpha / 2.0;
  const double rr = static_cast<double>(max_lag);
  return 0.5 * (1.0 + std::pow(rr, b) * std::expm1(b * std::log1p(1.0 / rr)));
}

/// Sum_{r>=0} Gamma_r: explicit sum to R plus the midpoint-integral tail
/// int_{R+1/2}^inf b(b-1)/2 x^{b-2} dx of the leading asymptotic term.
inline double gamma_series_total(double alpha, std::size_t max_lag = 1000000) {
  const double b = 1.0 - alpha / 2.0;
  const double tail = -0.5 * b * std::pow(static_cast<double>(max_lag) + 0.5, b - 1.0);
  return gamma_partial_sum(alpha, max_lag) + tail;
}

/// Upper bound for Sum_{r>R} Gamma_r^2 by integral comparison of the
/// monotone envelope (b(b-1)/2)^2 (x-1)^{2b-4}.
inline double gamma_squared_tail_bound(double alpha, std::size_t max_lag) {
  const double b = 1.0 - alpha / 2.0;
  const double c = 0.5 * b * (1.0 - b);
  const double x0 = static_cast<double>(max_lag) - 1.0;
  if (x0 <= 0.0) return INFINITY;
  return c * c * std::pow(x0, 2.0 * b - 3.0) / (3.0 - 2.0 * b);
}

/// Sum_{r>=1} Gamma_r^2, explicit to R plus midpoint-integral tail.
inline double gamma_squared_series(double alpha, std::size_t max_lag = 100000) {
  CompensatedSum s;
  for (std::size_t r = 1; r <= max_lag; ++r) {
    const double g = gamma_r(alpha, r);
    s.add(g * g);
  }
  const double b = 1.0 - alpha / 2.0;
  const double c = 0.5 * b * (1.0 - b);
  s.add(c * c * std::pow(static_cast<double>(max_lag) + 0.5, 2.0 * b - 3.0) / (3.0 - 2.0 * b));
  return s.value();
}

/// p-th absolute moment of the standard normal: 2^{p/2} Gamma((p+1)/2) / sqrt(pi).
inline double abs_moment(double p) {
  if (!(p > 0.0)) throw DomainError("abs_moment requires p > 0");
  return std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
}

/// Heat kernel of (1/2) Laplacian in dimension x.size(); zero for t <= 0.
inline double heat_kernel(double t, std::span<const double> x) {
  if (t <= 0.0) return 0.0;
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  const double d = static_cast<double>(x.size());
  return std::pow(2.0 * std::numbers::pi * t, -d / 2.0) * std::exp(-r2 / (2.0 * t));
}

inline double heat_kernel(double t, double x) { return heat_kernel(t, std::span<const double>(&x, 1)); }

/// Diagnostics of one correlation-mass evaluation.
struct PiMassResult {
  double value = 0.0;
  double error_estimate = 0.0;
  double prefactor = 0.0;  // equals 1 - alpha/2 for every dim and delta_n
};

namespace detail {

struct Integral {
  double value;
  double error;
};

template <class F>
Integral kronrod(F&& f, double lo, double hi, double rel_tol) {
  double err = 0.0;
  const double v =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 3, rel_tol, &err);
  return {v, err};
}

/// int_0^1 f over the dyadic pieces [2^{-j-1}, 2^{-j}], j < 64. Power-law
/// behaviour at 0 is smooth on every piece, so each Kronrod call converges
/// fast; the neglected [0, 2^{-64}] is charged to the error via the last piece.
template <class F>
Integral dyadic_unit_interval(F&& f, double rel_tol) {
  CompensatedSum value;
  double err = 0.0;
  double hi = 1.0;
  double last = 0.0;
  for (int j = 0; j < 64; ++j) {
    const double lo = hi / 2.0;
    const auto piece = kronrod(f, lo, hi, rel_tol);
    value.add(piece.value);
    err += piece.error;
    last = piece.value;
    hi = lo;
    if (j > 8 && std::abs(last) < 1e-18) break;
  }
  return {value.value(), err + std::abs(last)};
}

/// int_0^1 g(t) dt after t = v^{1/(1-a)}, which regularizes an endpoint
/// singularity of type t^{-a}.
template <class G>
Integral unit_interval_regularized(G&& g, double a, double rel_tol) {
  const double k = 1.0 / (1.0 - a);
  auto h = [&](double v) {
    if (v <= 0.0) v = 1e-300;
    const double t = std::pow(v, k);
    return g(t) * k * std::pow(v, k - 1.0);
  };
  return dyadic_unit_interval(h, rel_tol);
}

/// int_1^inf g(t) dt after t = 1/s.
template <class G>
Integral half_line_tail(G&& g, double rel_tol) {
  auto h = [&](double s) {
    if (s <= 0.0) return 0.0;
    return g(1.0 / s) / (s * s);
  };
  return dyadic_unit_interval(h, rel_tol);
}

inline double pi_prefactor(const NoiseParams& params, double delta_n) {
  const double a = params.alpha();
  const double d = params.dim();
  const double tau = tau_n(params, delta_n);
  return std::pow(std::numbers::pi, d / 2.0 - a) * std::tgamma(a / 2.0) /
         (std::pow(2.0, a / 2.0) * std::tgamma(d / 2.0)) * std::pow(delta_n, 1.0 - a / 2.0) /
         (tau * tau);
}

}  // namespace detail

/// Total mass of the heat-kernel-increment correlation measure at lag r and
/// zero spatial shift. The spatial integrals are carried out in the frequency
/// domain, leaving a time integral over [0, inf) that is split at t = 1,
/// mapped to the unit interval, and integrated by adaptive Gauss-Kronrod.
/// The result does not depend on delta_n; it is exposed to make that visible.
inline PiMassResult pi_mass(double alpha, std::size_t r, int dim = 1, double delta_n = 1.0,
                            double abs_tol = 1e-9) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("pi_mass requires alpha in (0, 1)");
  const NoiseParams params(alpha, dim);
  const double a = alpha / 2.0;
  const double rr = static_cast<double>(r);
  const double rel_tol = 1e-12;

  // Contribution of the second kernel increment while the first one is
  // still a single kernel (time window of length one step).
  detail::Integral near{};
  if (r == 0) {
    near = detail::unit_interval_regularized([&](double t) { return std::pow(2.0 * t, -a); }, a,
                                             rel_tol);
  } else {
    near = detail::unit_interval_regularized(
        [&](double t) { return std::pow(2.0 * t + rr, -a) - std::pow(2.0 * t + (rr - 1.0), -a); },
        a, rel_tol);
  }
  // Both factors are increments.
  auto both = [&](double t) { return detail::decay_second_difference(2.0 * t + rr, a); };
  const auto head = detail::unit_interval_regularized(both, a, rel_tol);
  const auto tail = detail::half_line_tail(both, rel_tol);

  const double err = near.error + head.error + tail.error;
  const double pref = detail::pi_prefactor(params, delta_n);
  if (!(err <= abs_tol)) throw QuadratureError("pi_mass quadrature did not converge", err);

  PiMassResult out;
  out.prefactor = pref;
  out.value = pref * (near.value + head.value + tail.value);
  out.error_estimate = pref * err;
  return out;
}

/// Signed mass of the correlation measure for a spatial shift h in d = 1,
/// expressed through the scaled shift h / sqrt(delta_n). Each Gaussian
/// frequency integral becomes a Kummer function; only the time integral is
/// numerical. No closed form is claimed for h != 0; Cauchy-Schwarz gives
/// |value| <= 1.
inline PiMassResult pi_mass_shifted(double alpha, std::size_t r, double scaled_shift) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("pi_mass_shifted requires alpha in (0, 1)");
  if (scaled_shift == 0.0) return pi_mass(alpha, r);
  const double a = alpha / 2.0;
  const double rr = static_cast<double>(r);
  const double h2 = scaled_shift * scaled_shift;
  const double rel_tol = 1e-10;
  auto kernel = [&](double x) {
    if (x <= 0.0) x = 1e-300;
    return std::pow(x, -a) * boost::math::hypergeometric_1F1(a, 0.5, -h2 / (2.0 * x));
  };
  detail::Integral near{};
  if (r == 0) {
    near = detail::unit_interval_regularized([&](double t) { return kernel(2.0 * t); }, a, rel_tol);
  } else {
    near = detail::unit_interval_regularized(
        [&](double t) { return kernel(2.0 * t + rr) - kernel(2.0 * t + (rr - 1.0)); }, a, rel_tol);
  }
  auto both = [&](double t) {
    const double x = 2.0 * t + rr;
    return kernel(x + 2.0) - 2.0 * kernel(x + 1.0) + kernel(x);
  };
  const auto head = detail::unit_interval_regularized(both, a, rel_tol);
  const auto tail = detail::half_line_tail(both, rel_tol);
  PiMassResult out;
  out.prefactor = 1.0 - a;
  out.value = out.prefactor * (near.value + head.value + tail.value);
  out.error_estimate = out.prefactor * (near.error + head.error + tail.error);
  return out;
}

}  // namespace shevar

#endif  // SHEVAR_KERNELS_HPP_
