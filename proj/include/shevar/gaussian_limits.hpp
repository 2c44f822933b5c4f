#ifndef SHEVAR_GAUSSIAN_LIMITS_HPP_
#define SHEVAR_GAUSSIAN_LIMITS_HPP_

// Gaussian structures behind the law of large numbers and the CLT for
// variation functionals: evaluation functions f, the covariance of one
// window of normalized increments (and of two windows r apart), mu_f, the
// covariances rho, and the limits V_f(t) and C(t).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "shevar/error.hpp"
#include "shevar/kernels.hpp"
#include "shevar/numeric.hpp"
#include "shevar/rng.hpp"

namespace shevar {

// ---------------------------------------------------------------------------
// evaluation functions

/// One output f_m of an evaluation function. It reads the L lagged
/// increments of a single row (observation point) k.
struct Component {
  enum class Kind { AbsPower, SignedMonomial, AbsMultipower, Custom };

  Kind kind = Kind::AbsPower;
  std::size_t row = 0;
  std::vector<double> exponents;  // per lag; unused for Custom
  std::function<double(std::span<const double>)> fn;
  bool even = true;
  double growth_degree = 0.0;

  double operator()(std::span<const double> z) const {
    switch (kind) {
      case Kind::SignedMonomial: {
        double v = 1.0;
        for (std::size_t l = 0; l < exponents.size(); ++l) {
          const int e = static_cast<int>(exponents[l]);
          for (int i = 0; i < e; ++i) v *= z[l];
        }
        return v;
      }
      case Kind::AbsPower:
      case Kind::AbsMultipower: {
        double v = 1.0;
        for (std::size_t l = 0; l < exponents.size(); ++l) {
          if (exponents[l] != 0.0) v *= std::pow(std::abs(z[l]), exponents[l]);
        }
        return v;
      }
      case Kind::Custom:
        return fn(z);
    }
    return 0.0;
  }

  /// Degree of positive homogeneity f(c z) = c^P f(z), c > 0.
  std::optional<double> homogeneity() const {
    if (kind == Kind::Custom) return std::nullopt;
    double p = 0.0;
    for (double e : exponents) p += e;
    return p;
  }

  /// True when f is a polynomial, so Gaussian moments follow from Wick's theorem.
  bool polynomial() const {
    if (kind == Kind::Custom) return false;
    if (kind == Kind::SignedMonomial) return true;
    return std::all_of(exponents.begin(), exponents.end(),
                       [](double e) { return e == std::floor(e) && std::fmod(e, 2.0) == 0.0; });
  }

  /// Lag of the only nonzero exponent, if there is exactly one.
  std::optional<std::size_t> single_lag() const {
    if (kind == Kind::Custom) return std::nullopt;
    std::optional<std::size_t> lag;
    for (std::size_t l = 0; l < exponents.size(); ++l) {
      if (exponents[l] != 0.0) {
        if (lag) return std::nullopt;
        lag = l;
      }
    }
    return lag;
  }
};

/// f : R^{K x L} -> R^M, every output reading one row. Windows are passed
/// row-major: z[k * L + l].
class EvaluationFunction {
 public:
  EvaluationFunction(std::size_t points, std::size_t lags) : k_(points), l_(lags) {
    if (points < 1 || lags < 1) throw DomainError("evaluation function needs K >= 1 and L >= 1");
  }

  /// |z_{k l}|^p.
  EvaluationFunction& abs_power(double p, std::size_t row = 0, std::size_t lag = 0) {
    if (!(p > 0.0)) throw DomainError("power must be positive");
    check_row_lag(row, lag);
    Component c;
    c.kind = Component::Kind::AbsPower;
    c.row = row;
    c.exponents.assign(l_, 0.0);
    c.exponents[lag] = p;
    c.even = true;
    c.growth_degree = p;
    comps_.push_back(std::move(c));
    return *this;
  }

  /// prod_l z_{k l}^{n_l}, integer n_l >= 0.
  EvaluationFunction& signed_monomial(std::vector<int> exponents, std::size_t row = 0) {
    check_row_lag(row, 0);
    if (exponents.size() != l_) throw DomainError("monomial needs one exponent per lag");
    Component c;
    c.kind = Component::Kind::SignedMonomial;
    c.row = row;
    int total = 0;
    for (int e : exponents) {
      if (e < 0) throw DomainError("monomial exponents must be nonnegative");
      c.exponents.push_back(static_cast<double>(e));
      total += e;
    }
    if (total == 0) throw DomainError("monomial must have positive degree");
    c.even = total % 2 == 0;
    c.growth_degree = total;
    comps_.push_back(std::move(c));
    return *this;
  }

  /// prod_l |z_{k l}|^{p_l}, p_l >= 0.
  EvaluationFunction& abs_multipower(std::vector<double> exponents, std::size_t row = 0) {
    check_row_lag(row, 0);
    if (exponents.size() != l_) throw DomainError("multipower needs one exponent per lag");
    double total = 0.0;
    for (double e : exponents) {
      if (!(e >= 0.0)) throw DomainError("multipower exponents must be nonnegative");
      total += e;
    }
    if (!(total > 0.0)) throw DomainError("multipower must have positive degree");
    Component c;
    c.kind = Component::Kind::AbsMultipower;
    c.row = row;
    c.exponents = std::move(exponents);
    c.even = true;
    c.growth_degree = total;
    comps_.push_back(std::move(c));
    return *this;
  }

  /// Arbitrary callable of the L increments of one row. `even` is a claim
  /// that check_even() verifies by sampling.
  EvaluationFunction& custom(std::function<double(std::span<const double>)> fn, std::size_t row,
                             bool even, double growth_degree) {
    check_row_lag(row, 0);
    Component c;
    c.kind = Component::Kind::Custom;
    c.row = row;
    c.fn = std::move(fn);
    c.even = even;
    c.growth_degree = growth_degree;
    comps_.push_back(std::move(c));
    return *this;
  }

  std::size_t points() const noexcept { return k_; }
  std::size_t lags() const noexcept { return l_; }
  std::size_t outputs() const noexcept { return comps_.size(); }
  const Component& component(std::size_t m) const { return comps_.at(m); }
  std::size_t row_of(std::size_t m) const { return comps_.at(m).row; }

  /// f_m evaluated on a full K x L window.
  double evaluate(std::size_t m, std::span<const double> window) const {
    const auto& c = comps_.at(m);
    return c(window.subspan(c.row * l_, l_));
  }

  /// Samples 128 standard normal windows and checks f_m(z) = f_m(-z) for
  /// every component; returns the index of the first odd component, if any.
  std::optional<std::size_t> check_even(std::uint64_t seed = 17) const {
    NormalSource normal(seed);
    std::vector<double> z(l_), mz(l_);
    for (std::size_t m = 0; m < comps_.size(); ++m) {
      const auto& c = comps_[m];
      if (!c.even) return m;
      if (c.kind != Component::Kind::Custom) continue;
      for (int s = 0; s < 128; ++s) {
        for (std::size_t l = 0; l < l_; ++l) {
          z[l] = normal();
          mz[l] = -z[l];
        }
        const double a = c(z);
        const double b = c(mz);
        if (!(std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)))) return m;
      }
    }
    return std::nullopt;
  }

 private:
  void check_row_lag(std::size_t row, std::size_t lag) const {
    if (row >= k_) throw DomainError("component row out of range");
    if (lag >= l_) throw DomainError("component lag out of range");
  }

  std::size_t k_;
  std::size_t l_;
  std::vector<Component> comps_;
};

// ---------------------------------------------------------------------------
// covariance blocks

struct GaussianBlock {
  std::vector<double> w;
  std::optional<std::size_t> shift;
  Eigen::MatrixXd cov;
};

namespace detail {

inline void check_variances(std::span<const double> w, std::size_t k) {
  if (w.size() != k) throw DomainError("variance vector must have one entry per point");
  for (double x : w) {
    if (!(x >= 0.0)) throw DomainError("conditional variances must be nonnegative");
  }
}

/// Unit-variance covariance of one window (L x L) or of two windows r apart
/// (2L x 2L, second window shifted by r in the convention of the cross term).
inline Eigen::MatrixXd unit_window_cov(const AutocovarianceTable& g, std::size_t lags,
                                       std::optional<std::size_t> shift) {
  const std::size_t n = shift ? 2 * lags : lags;
  Eigen::MatrixXd c(n, n);
  auto gam = [&](long long lag) {
    const auto a = static_cast<std::size_t>(lag < 0 ? -lag : lag);
    return a < g.values.size() ? g[a] : gamma_r(g.alpha, a);
  };
  for (std::size_t i = 0; i < lags; ++i) {
    for (std::size_t j = 0; j < lags; ++j) {
      const long long d = static_cast<long long>(i) - static_cast<long long>(j);
      c(i, j) = gam(d);
      if (shift) {
        const long long s = static_cast<long long>(*shift);
        c(lags + i, lags + j) = gam(d);
        c(i, lags + j) = gam(d + s);
        c(lags + j, i) = c(i, lags + j);
      }
    }
  }
  return c;
}

/// Lower Cholesky factor after 1e-12 * trace / n diagonal jitter.
inline std::optional<Eigen::MatrixXd> jittered_cholesky(const Eigen::MatrixXd& cov) {
  const auto n = cov.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);
  const double jitter = 1e-12 * std::max(cov.trace(), 1e-300) / static_cast<double>(n);
  Eigen::MatrixXd a = cov;
  a.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return Eigen::MatrixXd(llt.matrixL());
}

/// E[prod_i X_i^{n_i}] for centered Gaussian X by recursive pairing
/// (Isserlis / Wick), memoized over the remaining exponent vector.
class WickMoment {
 public:
  explicit WickMoment(const Eigen::MatrixXd& cov) : cov_(cov) {}

  double operator()(std::vector<int> counts) {
    int total = 0;
    for (int c : counts) total += c;
    if (total % 2 != 0) return 0.0;
    return rec(counts);
  }

 private:
  double rec(std::vector<int>& counts) {
    std::size_t i = 0;
    while (i < counts.size() && counts[i] == 0) ++i;
    if (i == counts.size()) return 1.0;
    if (auto it = memo_.find(counts); it != memo_.end()) return it->second;
    const std::vector<int> key = counts;
    --counts[i];
    double acc = 0.0;
    for (std::size_t j = i; j < counts.size(); ++j) {
      if (counts[j] == 0) continue;
      const double c = counts[j];
      --counts[j];
      acc += c * cov_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * rec(counts);
      ++counts[j];
    }
    ++counts[i];
    memo_.emplace(key, acc);
    return acc;
  }

  const Eigen::MatrixXd& cov_;
  std::map<std::vector<int>, double> memo_;
};

/// E|X|^p |Y|^q for standard normals with correlation c:
/// m_p m_q 2F1(-p/2, -q/2; 1/2; c^2).
inline double bivariate_abs_moment(double p, double q, double c) {
  const double c2 = c * c;
  if (c2 >= 1.0) return abs_moment(p + q);
  const double a = -p / 2.0, b = -q / 2.0;
  double term = 1.0;
  CompensatedSum s;
  s.add(1.0);
  for (int n = 0; n < 200000; ++n) {
    term *= (a + n) * (b + n) / ((0.5 + n) * (n + 1.0)) * c2;
    s.add(term);
    if (std::abs(term) < 1e-17 * std::abs(s.value())) break;
  }
  return abs_moment(p) * abs_moment(q) * s.value();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// moments

/// Value of a Gaussian functional with its Monte Carlo standard error
/// (zero when a closed form was used).
struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;
  bool exact = true;
};

struct LimitOptions {
  enum class Backend { Auto, MonteCarlo };
  Backend backend = Backend::Auto;
  std::size_t mc_pairs = 200000;  // antithetic pairs
  std::uint64_t seed = 0x5EEDULL;
  std::size_t r_max = 10000;     // series truncation for closed forms
  std::size_t r_max_mc = 30;     // series truncation when rho needs Monte Carlo
  double tail_rel_tol = 1e-8;    // tail bound relative to the r = 0 term
  double mc_tolerance = INFINITY;  // largest acceptable Monte Carlo SE
};

/// Conditional variances w(s) = sigma^2(u(s, x_k)) sampled on a grid of s.
struct VariancePath {
  std::vector<double> s;  // increasing, s[0] = 0
  std::vector<double> w;  // s.size() x K, row-major
  std::size_t points = 1;

  double at(std::size_t j, std::size_t k) const { return w[j * points + k]; }

  static VariancePath constant(std::size_t k, double value, double horizon, std::size_t cells) {
    VariancePath p;
    p.points = k;
    p.s.resize(cells + 1);
    for (std::size_t j = 0; j <= cells; ++j) {
      p.s[j] = horizon * static_cast<double>(j) / static_cast<double>(cells);
    }
    p.w.assign((cells + 1) * k, value);
    return p;
  }
};

struct LimitLaw {
  std::vector<double> t_grid;
  std::vector<Eigen::MatrixXd> covariance;  // C(t) per grid time
  std::vector<std::vector<double>> lln;     // V_f(t) per grid time
  std::size_t r_max = 0;
  double tail_bound = 0.0;
  bool tail_ok = true;
  double max_mc_se = 0.0;
};

/// Evaluator of mu_f, rho and the limit objects for one alpha and one f.
/// Closed forms: Wick's theorem for polynomial components, the bivariate
/// absolute-moment series for single-lag absolute powers. Everything else
/// falls back to antithetic Monte Carlo whose seed depends on the master seed
/// and the component indices only, so all shifts r and variances w share
/// random numbers.
class GaussianLimits {
 public:
  GaussianLimits(double alpha, EvaluationFunction f, LimitOptions options = {})
      : alpha_(alpha), f_(std::move(f)), opt_(options) {
    detail::check_alpha(alpha);
    gamma_ = make_autocovariance_table(alpha, std::max<std::size_t>(opt_.r_max + 2 * f_.lags() + 2, 64));
  }

  double alpha() const noexcept { return alpha_; }
  const EvaluationFunction& function() const noexcept { return f_; }
  const LimitOptions& options() const noexcept { return opt_; }
  const AutocovarianceTable& autocovariance() const noexcept { return gamma_; }

  GaussianBlock build_within_cov(std::span<const double> w) const {
    detail::check_variances(w, f_.points());
    const std::size_t L = f_.lags();
    const auto unit = detail::unit_window_cov(gamma_, L, std::nullopt);
    GaussianBlock b;
    b.w.assign(w.begin(), w.end());
    b.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(f_.points() * L),
                                  static_cast<Eigen::Index>(f_.points() * L));
    for (std::size_t k = 0; k < f_.points(); ++k) {
      const auto o = static_cast<Eigen::Index>(k * L);
      b.cov.block(o, o, unit.rows(), unit.cols()) = w[k] * unit;
    }
    return b;
  }

  /// Joint covariance of (Z1, Z2), ordered [Z1 rows..., Z2 rows...].
  GaussianBlock build_joint_cov(std::span<const double> w, std::size_t r) const {
    if (r < 1) throw DomainError("joint covariance needs r >= 1");
    detail::check_variances(w, f_.points());
    const std::size_t L = f_.lags();
    const std::size_t KL = f_.points() * L;
    const auto unit = detail::unit_window_cov(gamma_, L, r);
    GaussianBlock b;
    b.w.assign(w.begin(), w.end());
    b.shift = r;
    b.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * KL), static_cast<Eigen::Index>(2 * KL));
    const auto Li = static_cast<Eigen::Index>(L);
    const auto KLi = static_cast<Eigen::Index>(KL);
    for (std::size_t k = 0; k < f_.points(); ++k) {
      const auto o = static_cast<Eigen::Index>(k * L);
      b.cov.block(o, o, Li, Li) = w[k] * unit.block(0, 0, Li, Li);
      b.cov.block(KLi + o, KLi + o, Li, Li) = w[k] * unit.block(Li, Li, Li, Li);
      b.cov.block(o, KLi + o, Li, Li) = w[k] * unit.block(0, Li, Li, Li);
      b.cov.block(KLi + o, o, Li, Li) = w[k] * unit.block(Li, 0, Li, Li);
    }
    if (!detail::jittered_cholesky(b.cov)) {
      throw InvalidShift("joint covariance is not positive semidefinite at r = " + std::to_string(r));
    }
    return b;
  }

  /// E f_m(Z) for Z with within-window covariance scaled by w.
  MomentEstimate mu(std::size_t m, std::span<const double> w) const {
    detail::check_variances(w, f_.points());
    const auto& c = f_.component(m);
    const double wk = w[c.row];
    if (opt_.backend == LimitOptions::Backend::Auto) {
      if (auto deg = c.homogeneity()) {
        const double scale = std::pow(wk, *deg / 2.0);
        if (auto lag = c.single_lag(); lag && c.kind != Component::Kind::SignedMonomial) {
          return {abs_moment(c.exponents[*lag]) * scale, 0.0, true};
        }
        if (c.kind == Component::Kind::AbsMultipower) {
          // two active lags: bivariate absolute moment at correlation Gamma_{|l1 - l2|}
          std::vector<std::size_t> active;
          for (std::size_t l = 0; l < c.exponents.size(); ++l) {
            if (c.exponents[l] != 0.0) active.push_back(l);
          }
          if (active.size() == 2) {
            const double corr = gamma_at(active[1] - active[0]);
            return {detail::bivariate_abs_moment(c.exponents[active[0]], c.exponents[active[1]], corr) * scale,
                    0.0, true};
          }
        }
        if (c.polynomial()) {
          const auto unit = detail::unit_window_cov(gamma_, f_.lags(), std::nullopt);
          detail::WickMoment wick(unit);
          return {wick(int_counts(c.exponents)) * scale, 0.0, true};
        }
      }
    }
    return checked(mc_mu(m, wk));
  }

  std::vector<MomentEstimate> mu(std::span<const double> w) const {
    std::vector<MomentEstimate> out;
    for (std::size_t m = 0; m < f_.outputs(); ++m) out.push_back(mu(m, w));
    return out;
  }

  /// Cov(f_m1(Z1), f_m2(Z2)) for windows r apart; r = 0 is the same window.
  MomentEstimate rho(std::size_t m1, std::size_t m2, std::size_t r, std::span<const double> w) const {
    detail::check_variances(w, f_.points());
    const auto& c1 = f_.component(m1);
    const auto& c2 = f_.component(m2);
    if (c1.row != c2.row) return {0.0, 0.0, true};
    const double wk = w[c1.row];
    if (opt_.backend == LimitOptions::Backend::Auto) {
      auto d1 = c1.homogeneity();
      auto d2 = c2.homogeneity();
      if (d1 && d2) {
        const double scale = std::pow(wk, (*d1 + *d2) / 2.0);
        if (auto v = closed_rho_unit(c1, c2, r)) return {*v * scale, 0.0, true};
      }
    }
    return checked(mc_rho(m1, m2, r, wk));
  }

  /// V_f(t) = int_0^t mu_f(w(s)) ds, left Riemann sum on the path grid.
  std::vector<std::vector<double>> limit_lln(const VariancePath& path, std::span<const double> t_grid) const {
    check_path(path);
    const std::size_t M = f_.outputs();
    std::vector<std::vector<double>> out(t_grid.size(), std::vector<double>(M, 0.0));
    std::vector<std::optional<double>> unit(M);
    for (std::size_t m = 0; m < M; ++m) {
      if (f_.component(m).homogeneity()) {
        std::vector<double> ones(f_.points(), 1.0);
        unit[m] = mu(m, ones).value;
      }
    }
    for (std::size_t m = 0; m < M; ++m) {
      const auto& c = f_.component(m);
      auto integrand = [&](std::size_t j) {
        const double wk = path.at(j, c.row);
        if (unit[m]) return *unit[m] * std::pow(wk, *c.homogeneity() / 2.0);
        std::vector<double> wj(path.w.begin() + static_cast<std::ptrdiff_t>(j * path.points),
                               path.w.begin() + static_cast<std::ptrdiff_t>((j + 1) * path.points));
        return mu(m, wj).value;
      };
      riemann(path, t_grid, integrand, [&](std::size_t ti, double v) { out[ti][m] = v; });
    }
    return out;
  }

  /// Unit-variance CLT kernel rho(0) + sum_{r>=1} (rho_12(r) + rho_21(r))
  /// for homogeneous components, with its truncation data.
  struct Kernel {
    double value = 0.0;
    double se = 0.0;
    std::size_t r_max = 0;
    double tail_bound = 0.0;
  };

  Kernel clt_kernel(std::size_t m1, std::size_t m2) const {
    const auto& c1 = f_.component(m1);
    const auto& c2 = f_.component(m2);
    Kernel k;
    if (c1.row != c2.row) return k;
    std::vector<double> ones(f_.points(), 1.0);
    const bool closed = opt_.backend == LimitOptions::Backend::Auto && c1.homogeneity() &&
                        c2.homogeneity() && closed_rho_unit(c1, c2, 1).has_value();
    const auto r0 = rho(m1, m2, 0, ones);
    // Even functions have Hermite rank >= 2, so |rho(r)| is bounded by the
    // product of standard deviations times L^2 Gamma^2 at the smallest cross
    // lag r - L + 1.
    const double sd1 = std::sqrt(std::abs(rho(m1, m1, 0, ones).value));
    const double sd2 = std::sqrt(std::abs(rho(m2, m2, 0, ones).value));
    const double L = static_cast<double>(f_.lags());
    auto bound = [&](std::size_t rmax) {
      const std::size_t first = rmax + 1 >= f_.lags() ? rmax + 1 - (f_.lags() - 1) : 1;
      return 2.0 * sd1 * sd2 * L * L *
             gamma_squared_tail_bound(alpha_, std::max<std::size_t>(first, 2));
    };
    k.r_max = closed ? opt_.r_max : opt_.r_max_mc;
    if (closed) {
      // extend the closed-form series until the tail meets the tolerance
      const double target = opt_.tail_rel_tol * std::abs(r0.value);
      while (bound(k.r_max) > target && k.r_max < kMaxSeries) k.r_max *= 2;
    }
    CompensatedSum s;
    double var_se = r0.se * r0.se;
    s.add(r0.value);
    for (std::size_t r = 1; r <= k.r_max; ++r) {
      const auto a = rho(m1, m2, r, ones);
      const auto b = rho(m2, m1, r, ones);
      s.add(a.value);
      s.add(b.value);
      var_se += (a.se + b.se) * (a.se + b.se);
    }
    k.value = s.value();
    k.se = std::sqrt(var_se);
    k.tail_bound = bound(k.r_max);
    return k;
  }

  /// C(t) = int_0^t [rho(0) + sum_r (rho_12(r) + rho_21(r))](w(s)) ds and
  /// V_f(t) on t_grid.
  LimitLaw limit_covariance(const VariancePath& path, std::span<const double> t_grid) const {
    check_path(path);
    const std::size_t M = f_.outputs();
    LimitLaw law;
    law.t_grid.assign(t_grid.begin(), t_grid.end());
    law.covariance.assign(t_grid.size(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M),
                                                               static_cast<Eigen::Index>(M)));
    double worst_rel_tail = 0.0;
    for (std::size_t m1 = 0; m1 < M; ++m1) {
      for (std::size_t m2 = m1; m2 < M; ++m2) {
        const auto& c1 = f_.component(m1);
        const auto& c2 = f_.component(m2);
        if (c1.row != c2.row) continue;
        std::function<double(std::size_t)> integrand;
        Kernel kern;
        if (c1.homogeneity() && c2.homogeneity()) {
          kern = clt_kernel(m1, m2);
          const double deg = (*c1.homogeneity() + *c2.homogeneity()) / 2.0;
          integrand = [&, deg, v = kern.value](std::size_t j) {
            return v * std::pow(path.at(j, c1.row), deg);
          };
        } else {
          // no homogeneity: evaluate the series at every grid variance
          kern.r_max = opt_.r_max_mc;
          integrand = [&, m1, m2](std::size_t j) {
            std::vector<double> wj(path.w.begin() + static_cast<std::ptrdiff_t>(j * path.points),
                                   path.w.begin() + static_cast<std::ptrdiff_t>((j + 1) * path.points));
            CompensatedSum s;
            s.add(rho(m1, m2, 0, wj).value);
            for (std::size_t r = 1; r <= opt_.r_max_mc; ++r) {
              s.add(rho(m1, m2, r, wj).value);
              s.add(rho(m2, m1, r, wj).value);
            }
            return s.value();
          };
        }
        law.r_max = std::max(law.r_max, kern.r_max);
        law.tail_bound = std::max(law.tail_bound, kern.tail_bound);
        law.max_mc_se = std::max(law.max_mc_se, kern.se);
        if (kern.value != 0.0) worst_rel_tail = std::max(worst_rel_tail, kern.tail_bound / std::abs(kern.value));
        riemann(path, t_grid, integrand, [&](std::size_t ti, double v) {
          law.covariance[ti](static_cast<Eigen::Index>(m1), static_cast<Eigen::Index>(m2)) = v;
          law.covariance[ti](static_cast<Eigen::Index>(m2), static_cast<Eigen::Index>(m1)) = v;
        });
      }
    }
    law.tail_ok = worst_rel_tail <= opt_.tail_rel_tol;
    law.lln = limit_lln(path, t_grid);
    return law;
  }

 private:
  static std::vector<int> int_counts(const std::vector<double>& e) {
    std::vector<int> c;
    for (double x : e) c.push_back(static_cast<int>(std::lround(x)));
    return c;
  }

  std::optional<double> closed_rho_unit(const Component& c1, const Component& c2, std::size_t r) const {
    const std::size_t L = f_.lags();
    const auto l1 = c1.single_lag();
    const auto l2 = c2.single_lag();
    const bool abs1 = c1.kind != Component::Kind::SignedMonomial;
    const bool abs2 = c2.kind != Component::Kind::SignedMonomial;
    if (l1 && l2 && abs1 && abs2) {
      const long long lag = static_cast<long long>(*l1) - static_cast<long long>(*l2) +
                            static_cast<long long>(r);
      const double c = gamma_at(lag < 0 ? -lag : lag);
      const double p = c1.exponents[*l1], q = c2.exponents[*l2];
      return detail::bivariate_abs_moment(p, q, c) - abs_moment(p) * abs_moment(q);
    }
    if (c1.polynomial() && c2.polynomial()) {
      const auto within = detail::unit_window_cov(gamma_, L, std::nullopt);
      detail::WickMoment w1(within);
      const double mu1 = w1(int_counts(c1.exponents));
      const double mu2 = w1(int_counts(c2.exponents));
      double joint;
      if (r == 0) {
        std::vector<int> counts = int_counts(c1.exponents);
        const auto b = int_counts(c2.exponents);
        for (std::size_t l = 0; l < L; ++l) counts[l] += b[l];
        joint = w1(counts);
      } else {
        const auto cov = detail::unit_window_cov(gamma_, L, r);
        detail::WickMoment w2(cov);
        std::vector<int> counts = int_counts(c1.exponents);
        const auto b = int_counts(c2.exponents);
        counts.insert(counts.end(), b.begin(), b.end());
        joint = w2(counts);
      }
      return joint - mu1 * mu2;
    }
    return std::nullopt;
  }

  double gamma_at(std::size_t lag) const {
    return lag < gamma_.values.size() ? gamma_[lag] : gamma_r(alpha_, lag);
  }

  MomentEstimate checked(MomentEstimate e) const {
    if (e.se > opt_.mc_tolerance) {
      throw QuadratureError("Monte Carlo standard error above the requested tolerance", e.se);
    }
    return e;
  }

  static constexpr std::size_t kMaxSeries = 1u << 22;

  // Batches of antithetic pairs with their own derived streams; batch sums
  // are reduced in batch order.
  static constexpr std::size_t kBatch = 4096;

  MomentEstimate mc_mu(std::size_t m, double wk) const {
    const auto& c = f_.component(m);
    const std::size_t L = f_.lags();
    const auto chol = *detail::jittered_cholesky(detail::unit_window_cov(gamma_, L, std::nullopt));
    const double sw = std::sqrt(wk);
    const std::uint64_t seed = mix_seed({opt_.seed, 1, m});
    Eigen::VectorXd xi(static_cast<Eigen::Index>(L)), y;
    std::vector<double> z(L), mz(L);
    CompensatedSum s1, s2;
    const std::size_t pairs = opt_.mc_pairs;
    for (std::size_t b0 = 0; b0 < pairs; b0 += kBatch) {
      NormalSource normal(mix_seed({seed, b0 / kBatch}));
      const std::size_t end = std::min(pairs, b0 + kBatch);
      for (std::size_t i = b0; i < end; ++i) {
        for (auto& x : xi) x = normal();
        y = chol * xi;
        for (std::size_t l = 0; l < L; ++l) {
          z[l] = sw * y[static_cast<Eigen::Index>(l)];
          mz[l] = -z[l];
        }
        const double v = 0.5 * (c(z) + c(mz));
        s1.add(v);
        s2.add(v * v);
      }
    }
    const double n = static_cast<double>(pairs);
    const double mean = s1.value() / n;
    const double var = std::max(s2.value() / n - mean * mean, 0.0) * n / (n - 1.0);
    return {mean, std::sqrt(var / n), false};
  }

  MomentEstimate mc_rho(std::size_t m1, std::size_t m2, std::size_t r, double wk) const {
    const auto& c1 = f_.component(m1);
    const auto& c2 = f_.component(m2);
    const std::size_t L = f_.lags();
    const auto cov = detail::unit_window_cov(gamma_, L, r == 0 ? std::nullopt : std::optional<std::size_t>(r));
    const auto chol = detail::jittered_cholesky(cov);
    if (!chol) throw InvalidShift("window covariance not factorizable at r = " + std::to_string(r));
    const auto dim = cov.rows();
    const double sw = std::sqrt(wk);
    const std::uint64_t seed = mix_seed({opt_.seed, 2, std::min(m1, m2), std::max(m1, m2)});
    Eigen::VectorXd xi(dim), y;
    std::vector<double> z1(L), z2(L), n1(L), n2(L);
    // sums over pairs of A = f1, B = f2, P = f1 f2 (pair averages)
    CompensatedSum sa, sb, sp;
    double saa = 0, sbb = 0, spp = 0, sab = 0, sap = 0, sbp = 0;
    const std::size_t pairs = opt_.mc_pairs;
    for (std::size_t b0 = 0; b0 < pairs; b0 += kBatch) {
      NormalSource normal(mix_seed({seed, b0 / kBatch}));
      const std::size_t end = std::min(pairs, b0 + kBatch);
      for (std::size_t i = b0; i < end; ++i) {
        for (auto& x : xi) x = normal();
        y = (*chol) * xi;
        for (std::size_t l = 0; l < L; ++l) {
          z1[l] = sw * y[static_cast<Eigen::Index>(l)];
          z2[l] = r == 0 ? z1[l] : sw * y[static_cast<Eigen::Index>(L + l)];
          n1[l] = -z1[l];
          n2[l] = -z2[l];
        }
        const double a1 = c1(z1), b1 = c2(z2), a2 = c1(n1), b2 = c2(n2);
        const double A = 0.5 * (a1 + a2), B = 0.5 * (b1 + b2), P = 0.5 * (a1 * b1 + a2 * b2);
        sa.add(A);
        sb.add(B);
        sp.add(P);
        saa += A * A;
        sbb += B * B;
        spp += P * P;
        sab += A * B;
        sap += A * P;
        sbp += B * P;
      }
    }
    const double n = static_cast<double>(pairs);
    const double ma = sa.value() / n, mb = sb.value() / n, mp = sp.value() / n;
    const double est = mp - ma * mb;
    // influence function psi = P - mb A - ma B
    const double vpp = spp / n - mp * mp, vaa = saa / n - ma * ma, vbb = sbb / n - mb * mb;
    const double cab = sab / n - ma * mb, cap = sap / n - ma * mp, cbp = sbp / n - mb * mp;
    const double vpsi = vpp + mb * mb * vaa + ma * ma * vbb - 2.0 * mb * cap - 2.0 * ma * cbp +
                        2.0 * ma * mb * cab;
    return {est, std::sqrt(std::max(vpsi, 0.0) / n), false};
  }

  void check_path(const VariancePath& path) const {
    if (path.points != f_.points()) throw GridMismatch("variance path has the wrong number of points");
    if (path.s.size() < 2 || path.w.size() != path.s.size() * path.points) {
      throw GridMismatch("variance path is malformed");
    }
    for (double x : path.w) {
      if (!(x >= 0.0)) throw DomainError("conditional variances must be nonnegative");
    }
  }

  template <class G, class Out>
  static void riemann(const VariancePath& path, std::span<const double> t_grid, G&& g, Out&& out) {
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
      if (ti > 0 && t_grid[ti] < t_grid[ti - 1]) throw GridMismatch("t grid must be increasing");
    }
    CompensatedSum acc;
    std::size_t j = 0;
    double covered = path.s[0];
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
      const double t = t_grid[ti];
      if (t > path.s.back() * (1.0 + 1e-12)) throw GridMismatch("t beyond the variance path");
      while (j + 1 < path.s.size() && path.s[j + 1] <= t) {
        acc.add(g(j) * (path.s[j + 1] - covered));
        covered = path.s[j + 1];
        ++j;
      }
      double v = acc.value();
      if (t > covered && j + 1 < path.s.size()) v += g(j) * (t - covered);
      out(ti, v);
    }
  }

  double alpha_;
  EvaluationFunction f_;
  LimitOptions opt_;
  AutocovarianceTable gamma_;
};

}  // namespace shevar

#endif  // SHEVAR_GAUSSIAN_LIMITS_HPP_
