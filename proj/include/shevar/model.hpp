#ifndef SHEVAR_MODEL_HPP_
#define SHEVAR_MODEL_HPP_

// The equation and the observation scheme: noise, diffusion coefficient
// sigma, initial condition u0, and the high-frequency sampling design.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "shevar/error.hpp"
#include "shevar/kernels.hpp"

namespace shevar {

/// Diffusion coefficient sigma(u). Built-in families are globally Lipschitz
/// and smooth; Custom takes any callable and trusts the caller on that.
class Coefficient {
 public:
  enum class Kind { Constant, Linear, AffineTanh, Custom };

  static Coefficient constant(double c) { return Coefficient(Kind::Constant, c, 0.0); }
  /// Parabolic Anderson: sigma(u) = s0 * u.
  static Coefficient linear(double s0) { return Coefficient(Kind::Linear, s0, 0.0); }
  /// sigma(u) = a + b tanh(u).
  static Coefficient affine_tanh(double a, double b) { return Coefficient(Kind::AffineTanh, a, b); }
  static Coefficient custom(std::function<double(double)> fn, std::string name = "custom") {
    Coefficient c(Kind::Custom, 0.0, 0.0);
    c.fn_ = std::move(fn);
    c.name_ = std::move(name);
    return c;
  }

  double operator()(double u) const {
    switch (kind_) {
      case Kind::Constant:
        return a_;
      case Kind::Linear:
        return a_ * u;
      case Kind::AffineTanh:
        return a_ + b_ * std::tanh(u);
      case Kind::Custom:
        return fn_(u);
    }
    return 0.0;
  }

  Kind kind() const noexcept { return kind_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  const std::string& name() const noexcept { return name_; }
  bool is_constant() const noexcept { return kind_ == Kind::Constant; }
  bool is_zero() const noexcept { return kind_ == Kind::Constant && a_ == 0.0; }

 private:
  Coefficient(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {
    switch (k) {
      case Kind::Constant: name_ = "constant"; break;
      case Kind::Linear: name_ = "linear"; break;
      case Kind::AffineTanh: name_ = "affine_tanh"; break;
      case Kind::Custom: name_ = "custom"; break;
    }
  }

  Kind kind_;
  double a_;
  double b_;
  std::function<double(double)> fn_;
  std::string name_;
};

/// u0(x) = mean + sum_k cos_k cos(2 pi k x) + sin_k sin(2 pi k x), k = 1, 2, ...
/// A constant initial condition has no Fourier coefficients.
struct InitialCondition {
  double mean = 0.0;
  std::vector<double> cos_coef;
  std::vector<double> sin_coef;

  static InitialCondition constant(double c) { return {c, {}, {}}; }

  bool is_constant() const noexcept { return cos_coef.empty() && sin_coef.empty(); }

  double operator()(double x) const {
    double v = mean;
    for (std::size_t i = 0; i < cos_coef.size(); ++i) {
      v += cos_coef[i] * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) * x);
    }
    for (std::size_t i = 0; i < sin_coef.size(); ++i) {
      v += sin_coef[i] * std::sin(2.0 * std::numbers::pi * static_cast<double>(i + 1) * x);
    }
    return v;
  }
};

struct ModelSpec {
  NoiseParams noise{0.5, 1};
  Coefficient sigma = Coefficient::constant(1.0);
  InitialCondition u0 = InitialCondition::constant(0.0);
};

/// Observation grid i * delta_n, i = 0..steps(), at the points x_1..x_K of
/// the unit torus, plus the scheme knobs of the SPDE simulator.
struct SamplingDesign {
  double delta_n = 1.0 / 4096.0;
  double horizon = 1.0;
  std::vector<double> points{0.5};
  std::size_t lags = 1;
  std::size_t spatial_modes = 2048;
  std::size_t oversampling = 16;
  std::size_t burn_in = 64;  // observation steps simulated and dropped

  /// [T / delta_n], robust to the representation error of T / delta_n.
  std::size_t steps() const noexcept {
    return static_cast<std::size_t>(std::floor(horizon / delta_n + 1e-9));
  }

  void validate() const {
    if (!(delta_n > 0.0)) throw DomainError("delta_n must be positive");
    if (lags < 1) throw DomainError("lag count L must be >= 1");
    if (points.empty()) throw DomainError("at least one observation point is required");
    if (!(horizon >= delta_n * static_cast<double>(lags + 1))) {
      throw DomainError("horizon must cover at least L + 1 steps");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t j = i + 1; j < points.size(); ++j) {
        if (points[i] == points[j]) throw DomainError("observation points must be distinct");
      }
    }
    if (oversampling < 1) throw DomainError("oversampling must be >= 1");
  }
};

}  // namespace shevar

#endif  // SHEVAR_MODEL_HPP_
