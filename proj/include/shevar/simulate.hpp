#ifndef SHEVAR_SIMULATE_HPP_
#define SHEVAR_SIMULATE_HPP_

// Sample paths. StationarySampler draws the normalized increments of the
// additive solution at one point exactly (circulant embedding of Gamma_r).
// SpdeSimulator integrates the equation on the unit torus in Fourier space.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shevar/error.hpp"
#include "shevar/fft.hpp"
#include "shevar/kernels.hpp"
#include "shevar/model.hpp"
#include "shevar/numeric.hpp"
#include "shevar/rng.hpp"

namespace shevar {

// ---------------------------------------------------------------------------
// exact stationary increments

/// Davies-Harte embedding of the Toeplitz matrix [Gamma_{|i-j|}] into a
/// circulant of size m = 2^k >= 2n. Eigenvalues are computed once; sampling
/// reuses per-instance FFT buffers, so use one instance per thread.
class StationarySampler {
 public:
  StationarySampler(double alpha, std::size_t n_steps) : alpha_(alpha), n_(n_steps) {
    detail::check_alpha(alpha);
    if (n_steps < 1) throw DomainError("n_steps must be >= 1");
    std::size_t m = next_power_of_two(std::max<std::size_t>(2 * n_steps, 2));
    if (!embed(m)) {
      m *= 2;
      if (!embed(m)) {
        throw EmbeddingFailure("circulant embedding has a negative eigenvalue " +
                               std::to_string(min_eigenvalue_));
      }
    }
    fft_ = std::make_unique<ComplexFft>(m_);
    in_ = FftBuffer<Complex>(m_);
    out_ = FftBuffer<Complex>(m_);
  }

  double alpha() const noexcept { return alpha_; }
  std::size_t size() const noexcept { return n_; }
  std::size_t embedding_size() const noexcept { return m_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

  /// Autocovariance actually produced by the sampler, recovered from the
  /// eigenvalues by an inverse transform (no Monte Carlo involved).
  std::vector<double> implied_autocovariance(std::size_t max_lag) const {
    FftBuffer<Complex> a(m_), b(m_);
    for (std::size_t k = 0; k < m_; ++k) a[k] = Complex(sqrt_eig_[k] * sqrt_eig_[k], 0.0);
    ComplexFft f(m_);
    f.forward(a, b);
    std::vector<double> out(std::min(max_lag + 1, m_));
    // eigenvalues are real and symmetric, so forward == inverse transform
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = b[j].real() / static_cast<double>(m_);
    return out;
  }

  /// One exact draw of n_steps increments.
  void sample(NormalSource& normal, std::span<double> out) {
    if (out.size() != n_) throw DomainError("output length must equal n_steps");
    const double scale = 1.0 / std::sqrt(static_cast<double>(m_));
    for (std::size_t k = 0; k < m_; ++k) {
      const double re = normal();
      const double im = normal();
      in_[k] = Complex(re, im) * (sqrt_eig_[k] * scale);
    }
    fft_->forward(in_, out_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = out_[i].real();
  }

  std::vector<double> sample(NormalSource& normal) {
    std::vector<double> out(n_);
    sample(normal, out);
    return out;
  }

 private:
  bool embed(std::size_t m) {
    FftBuffer<Complex> row(m), eig(m);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t lag = j <= m / 2 ? j : m - j;
      row[j] = Complex(gamma_r(alpha_, lag), 0.0);
    }
    ComplexFft f(m);
    f.forward(row, eig);
    min_eigenvalue_ = INFINITY;
    for (std::size_t k = 0; k < m; ++k) min_eigenvalue_ = std::min(min_eigenvalue_, eig[k].real());
    if (min_eigenvalue_ < -1e-10) return false;
    m_ = m;
    sqrt_eig_.resize(m);
    for (std::size_t k = 0; k < m; ++k) sqrt_eig_[k] = std::sqrt(std::max(eig[k].real(), 0.0));
    return true;
  }

  double alpha_;
  std::size_t n_;
  std::size_t m_ = 0;
  double min_eigenvalue_ = 0.0;
  std::vector<double> sqrt_eig_;
  std::unique_ptr<ComplexFft> fft_;
  FftBuffer<Complex> in_;
  FftBuffer<Complex> out_;
};

inline std::vector<double> simulate_stationary_increments(double alpha, std::size_t n_steps,
                                                          const RngStream& rng) {
  StationarySampler sampler(alpha, n_steps);
  NormalSource normal(rng);
  return sampler.sample(normal);
}

// ---------------------------------------------------------------------------
// path panel

struct PanelMeta {
  std::string scheme;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
  std::size_t oversampling = 1;
  std::size_t spatial_modes = 0;
  std::size_t burn_in = 0;
  double alpha = 0.0;
};

/// u(t_i, x_k) on the observation grid, row-major (time by point).
struct PathPanel {
  std::vector<double> times;
  std::vector<double> points;
  std::vector<double> values;
  PanelMeta meta;
  std::vector<double> final_field;  // optional grid snapshot at the last time

  std::size_t rows() const noexcept { return times.size(); }
  std::size_t cols() const noexcept { return points.size(); }
  double operator()(std::size_t i, std::size_t k) const { return values[i * points.size() + k]; }
  double& operator()(std::size_t i, std::size_t k) { return values[i * points.size() + k]; }

  std::vector<double> column(std::size_t k) const {
    std::vector<double> c(rows());
    for (std::size_t i = 0; i < rows(); ++i) c[i] = (*this)(i, k);
    return c;
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Single-point panel from a scalar series observed at i * delta_n.
inline PathPanel panel_from_series(std::span<const double> series, double delta_n, double x = 0.5) {
  PathPanel p;
  p.points = {x};
  p.times.resize(series.size());
  p.values.assign(series.begin(), series.end());
  for (std::size_t i = 0; i < series.size(); ++i) p.times[i] = static_cast<double>(i) * delta_n;
  p.meta.scheme = "series";
  return p;
}

/// Path with u(0) = 0 whose increments are `increments` times `scale`.
inline PathPanel panel_from_increments(std::span<const double> increments, double delta_n,
                                       double scale = 1.0) {
  std::vector<double> path(increments.size() + 1, 0.0);
  for (std::size_t i = 0; i < increments.size(); ++i) path[i + 1] = path[i] + scale * increments[i];
  auto p = panel_from_series(path, delta_n);
  p.meta.scheme = "stationary";
  return p;
}

/// CSV with header `time,x_1,...`; the point coordinates go into a leading
/// comment line so the panel round-trips.
inline void write_panel_csv(const PathPanel& panel, std::ostream& os) {
  os.precision(17);
  os << "# points";
  for (double x : panel.points) os << ' ' << x;
  os << '\n' << "time";
  for (std::size_t k = 0; k < panel.cols(); ++k) os << ",x_" << (k + 1);
  os << '\n';
  for (std::size_t i = 0; i < panel.rows(); ++i) {
    os << panel.times[i];
    for (std::size_t k = 0; k < panel.cols(); ++k) os << ',' << panel(i, k);
    os << '\n';
  }
}

inline PathPanel read_panel_csv(std::istream& is) {
  PathPanel p;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# points", 0) != 0) {
    throw GridMismatch("panel csv: missing '# points' line");
  }
  {
    std::istringstream ss(line.substr(8));
    double x;
    while (ss >> x) p.points.push_back(x);
  }
  if (!std::getline(is, line)) throw GridMismatch("panel csv: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (col == 0) {
        p.times.push_back(v);
      } else {
        p.values.push_back(v);
      }
      ++col;
    }
    if (col != p.points.size() + 1) throw GridMismatch("panel csv: ragged row");
  }
  p.meta.scheme = "csv";
  return p;
}

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw GridMismatch("panel binary: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline constexpr char kPanelMagic[8] = {'S', 'H', 'V', 'P', 'N', 'L', '0', '1'};

}  // namespace detail

/// Columnar little-endian layout: magic "SHVPNL01", u64 rows, u64 cols,
/// cols f64 point coordinates, then the time column and one column per point,
/// each `rows` f64 values.
inline void write_panel_binary(const PathPanel& panel, std::ostream& os) {
  os.write(detail::kPanelMagic, 8);
  detail::put_u64(os, panel.rows());
  detail::put_u64(os, panel.cols());
  for (double x : panel.points) detail::put_f64(os, x);
  for (double t : panel.times) detail::put_f64(os, t);
  for (std::size_t k = 0; k < panel.cols(); ++k) {
    for (std::size_t i = 0; i < panel.rows(); ++i) detail::put_f64(os, panel(i, k));
  }
}

inline PathPanel read_panel_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kPanelMagic, 8) != 0) {
    throw GridMismatch("panel binary: bad magic");
  }
  const auto rows = detail::get_u64(is);
  const auto cols = detail::get_u64(is);
  PathPanel p;
  p.points.resize(cols);
  for (auto& x : p.points) x = detail::get_f64(is);
  p.times.resize(rows);
  for (auto& t : p.times) t = detail::get_f64(is);
  p.values.resize(rows * cols);
  for (std::size_t k = 0; k < cols; ++k) {
    for (std::size_t i = 0; i < rows; ++i) p(i, k) = detail::get_f64(is);
  }
  p.meta.scheme = "binary";
  return p;
}

// ---------------------------------------------------------------------------
// noise on the torus

/// Spectral-cell mass of |xi|^{alpha-1} d xi over |xi - k| < 1/2 (flat for
/// white noise).
inline double spectral_cell_mass(const NoiseParams& params, std::size_t k) {
  if (params.white_noise()) return 1.0;
  const double a = params.alpha();
  if (k == 0) return 2.0 * std::pow(0.5, a) / a;
  const double kk = static_cast<double>(k);
  return (std::pow(kk + 0.5, a) - std::pow(kk - 0.5, a)) / a;
}

/// Increment over time dt of the spatially correlated noise on a grid of N
/// points of the unit torus, drawn mode by mode in Fourier space. Modes
/// |k| < N/2 are kept; the Nyquist mode is dropped.
class NoiseField {
 public:
  NoiseField(const NoiseParams& params, std::size_t n_grid) : n_(n_grid), fft_(n_grid) {
    if (params.dim() != 1) throw DomainError("torus noise is implemented for d = 1 only");
    if (!is_power_of_two(n_grid) || n_grid < 4) {
      throw DomainError("spatial_modes must be a power of two >= 4");
    }
    mass_.resize(n_ / 2);
    for (std::size_t k = 0; k < n_ / 2; ++k) mass_[k] = spectral_cell_mass(params, k);
    spec_ = FftBuffer<Complex>(n_ / 2 + 1);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t modes() const noexcept { return n_ / 2; }
  double cell_mass(std::size_t k) const { return mass_[k]; }

  /// Fourier coefficients (c2r scale) of one increment.
  void draw_spectrum(NormalSource& normal, double dt, FftBuffer<Complex>& spec) const {
    spec[0] = Complex(std::sqrt(mass_[0] * dt) * normal(), 0.0);
    const double h = std::sqrt(0.5 * dt);
    for (std::size_t k = 1; k < n_ / 2; ++k) {
      const double s = h * std::sqrt(mass_[k]);
      const double re = normal();
      const double im = normal();
      spec[k] = Complex(s * re, s * im);
    }
    spec[n_ / 2] = Complex(0.0, 0.0);
  }

  /// Physical-space values at x_j = j / N.
  void sample(NormalSource& normal, double dt, FftBuffer<double>& out) {
    draw_spectrum(normal, dt, spec_);
    fft_.inverse(spec_, out);
  }

  const RealFft& fft() const noexcept { return fft_; }

 private:
  std::size_t n_;
  RealFft fft_;
  std::vector<double> mass_;
  FftBuffer<Complex> spec_;
};

// ---------------------------------------------------------------------------
// SPDE on the torus

struct SpdeOptions {
  double blowup_cap = 1e8;
  bool keep_final_field = false;
  /// Noise of one micro-step drawn as the sum of this many finer Brownian
  /// increments. Oversampling m with s substeps consumes the same normals as
  /// oversampling m*s, which couples the two resolutions path by path.
  /// Used by the general scheme only.
  std::size_t noise_substeps = 1;
};

/// Exponential Euler in Fourier space on the unit torus with N grid points.
/// Per micro-step delta = delta_n / oversampling:
///   u_hat_k <- e^{-lambda_k delta} u_hat_k + phi_k FFT[sigma(u) dW]_k,
/// lambda_k = 2 pi^2 k^2, phi_k^2 = (1 - e^{-2 lambda_k delta}) / (2 lambda_k delta),
/// so a frozen sigma gives the exact Ornstein-Uhlenbeck transition per mode.
/// Constant sigma skips the transforms: every mode is then an independent
/// Ornstein-Uhlenbeck process stepped exactly once per observation.
class SpdeSimulator {
 public:
  SpdeSimulator(ModelSpec model, SamplingDesign design, SpdeOptions options = {})
      : model_(std::move(model)),
        design_(std::move(design)),
        options_(options),
        noise_(model_.noise, design_.spatial_modes) {
    design_.validate();
    if (options_.noise_substeps < 1) throw DomainError("noise_substeps must be >= 1");
    n_ = design_.spatial_modes;
    const std::size_t half = n_ / 2;
    if (model_.u0.cos_coef.size() >= half || model_.u0.sin_coef.size() >= half) {
      throw DomainError("initial condition has modes beyond the grid");
    }
    lambda_.resize(half);
    for (std::size_t k = 0; k < half; ++k) {
      const double kk = static_cast<double>(k);
      lambda_[k] = 2.0 * std::numbers::pi * std::numbers::pi * kk * kk;
    }
    for (double x : design_.points) {
      double xm = x - std::floor(x);
      const double pos = xm * static_cast<double>(n_);
      const double nearest = std::round(pos);
      Probe probe;
      if (std::abs(pos - nearest) < 1e-9) {
        probe.grid_index = static_cast<std::size_t>(nearest) % n_;
      } else {
        probe.phase.resize(half);
        for (std::size_t k = 0; k < half; ++k) {
          const double th = 2.0 * std::numbers::pi * static_cast<double>(k) * xm;
          probe.phase[k] = Complex(std::cos(th), std::sin(th));
        }
      }
      probes_.push_back(std::move(probe));
    }
  }

  const ModelSpec& model() const noexcept { return model_; }
  const SamplingDesign& design() const noexcept { return design_; }

  PathPanel run(const RngStream& rng) {
    NormalSource normal(rng);
    PathPanel panel;
    const std::size_t steps = design_.steps();
    panel.points = design_.points;
    panel.times.resize(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) panel.times[i] = static_cast<double>(i) * design_.delta_n;
    panel.values.assign((steps + 1) * panel.cols(), 0.0);
    panel.meta.master_seed = rng.master_seed;
    panel.meta.stream_id = rng.stream_id;
    panel.meta.spatial_modes = n_;
    panel.meta.burn_in = design_.burn_in;
    panel.meta.alpha = model_.noise.alpha();

    if (model_.sigma.is_constant()) {
      panel.meta.scheme = "spectral-ou-exact";
      panel.meta.oversampling = 1;
      run_constant(normal, panel);
    } else {
      panel.meta.scheme = "spectral-exponential-euler";
      panel.meta.oversampling = design_.oversampling;
      run_general(normal, panel);
    }
    return panel;
  }

 private:
  struct Probe {
    std::size_t grid_index = 0;
    std::vector<Complex> phase;  // empty when on-grid
  };

  void init_spectrum(FftBuffer<Complex>& uh) const {
    for (std::size_t k = 0; k < uh.size(); ++k) uh[k] = Complex(0.0, 0.0);
    uh[0] = Complex(model_.u0.mean, 0.0);
    for (std::size_t i = 0; i < model_.u0.cos_coef.size(); ++i) uh[i + 1] += 0.5 * model_.u0.cos_coef[i];
    for (std::size_t i = 0; i < model_.u0.sin_coef.size(); ++i) {
      uh[i + 1] += Complex(0.0, -0.5 * model_.u0.sin_coef[i]);
    }
  }

  double spectral_value(const FftBuffer<Complex>& uh, const std::vector<Complex>& phase) const {
    CompensatedSum s;
    s.add(uh[0].real());
    for (std::size_t k = 1; k < n_ / 2; ++k) s.add(2.0 * (uh[k] * phase[k]).real());
    return s.value();
  }

  void record(std::size_t row, const FftBuffer<Complex>& uh, const FftBuffer<double>* grid,
              PathPanel& panel) const {
    for (std::size_t j = 0; j < probes_.size(); ++j) {
      const auto& p = probes_[j];
      double v;
      if (p.phase.empty()) {
        v = grid ? (*grid)[p.grid_index] : spectral_value(uh, grid_phase(p.grid_index));
      } else {
        v = spectral_value(uh, p.phase);
      }
      panel(row, j) = v;
    }
  }

  std::vector<Complex> grid_phase(std::size_t idx) const {
    std::vector<Complex> ph(n_ / 2);
    for (std::size_t k = 0; k < n_ / 2; ++k) {
      const double th = 2.0 * std::numbers::pi * static_cast<double>((k * idx) % n_) /
                        static_cast<double>(n_);
      ph[k] = Complex(std::cos(th), std::sin(th));
    }
    return ph;
  }

  void check_finite(const PathPanel& panel, std::size_t row, std::size_t micro) const {
    for (std::size_t j = 0; j < panel.cols(); ++j) {
      const double v = panel(row, j);
      if (!std::isfinite(v) || std::abs(v) > options_.blowup_cap) {
        throw NumericalBlowup("solution exceeded the blow-up cap", micro);
      }
    }
  }

  void snapshot(FftBuffer<Complex>& uh, PathPanel& panel) {
    if (!options_.keep_final_field) return;
    FftBuffer<Complex> tmp(uh.size());
    std::copy(uh.data(), uh.data() + uh.size(), tmp.data());
    FftBuffer<double> grid(n_);
    noise_.fft().inverse(tmp, grid);
    panel.final_field.assign(grid.data(), grid.data() + n_);
  }

  // Exact transition over one observation step for every mode.
  void run_constant(NormalSource& normal, PathPanel& panel) {
    const std::size_t half = n_ / 2;
    const double dt = design_.delta_n;
    const double c = model_.sigma.a();
    FftBuffer<Complex> uh(half + 1);
    init_spectrum(uh);
    std::vector<double> decay(half), sd(half);
    for (std::size_t k = 0; k < half; ++k) {
      decay[k] = std::exp(-lambda_[k] * dt);
      const double var = k == 0 ? dt : -std::expm1(-2.0 * lambda_[k] * dt) / (2.0 * lambda_[k]);
      sd[k] = std::abs(c) * std::sqrt(noise_.cell_mass(k) * var);
    }
    const bool has_noise = c != 0.0;
    // precomputed phases for on-grid probes
    std::vector<std::vector<Complex>> phases;
    for (const auto& p : probes_) phases.push_back(p.phase.empty() ? grid_phase(p.grid_index) : p.phase);

    const std::size_t total = design_.burn_in + design_.steps();
    auto observe = [&](std::size_t row) {
      for (std::size_t j = 0; j < probes_.size(); ++j) panel(row, j) = spectral_value(uh, phases[j]);
    };
    if (design_.burn_in == 0) observe(0);
    const double rt = std::sqrt(0.5);
    for (std::size_t s = 1; s <= total; ++s) {
      if (has_noise) {
        uh[0] = uh[0] + Complex(sd[0] * normal(), 0.0);
        for (std::size_t k = 1; k < half; ++k) {
          const double re = normal();
          const double im = normal();
          uh[k] = decay[k] * uh[k] + Complex(re, im) * (sd[k] * rt);
        }
      } else {
        for (std::size_t k = 1; k < half; ++k) uh[k] *= decay[k];
      }
      if (s >= design_.burn_in) {
        const std::size_t row = s - design_.burn_in;
        observe(row);
        check_finite(panel, row, s);
      }
    }
    snapshot(uh, panel);
  }

  void run_general(NormalSource& normal, PathPanel& panel) {
    const std::size_t half = n_ / 2;
    const std::size_t os = design_.oversampling;
    const double dt = design_.delta_n / static_cast<double>(os);
    const RealFft& fft = noise_.fft();
    std::vector<double> decay(half), phi(half);
    for (std::size_t k = 0; k < half; ++k) {
      decay[k] = std::exp(-lambda_[k] * dt);
      const double x = 2.0 * lambda_[k] * dt;
      phi[k] = k == 0 ? 1.0 : std::sqrt(-std::expm1(-x) / x);
    }
    const double inv_n = 1.0 / static_cast<double>(n_);

    FftBuffer<Complex> uh(half + 1), work(half + 1), noise_spec(half + 1), extra_spec(half + 1), prod_spec(half + 1);
    FftBuffer<double> u(n_), dw(n_), prod(n_);
    init_spectrum(uh);
    auto to_grid = [&] {
      std::copy(uh.data(), uh.data() + uh.size(), work.data());
      fft.inverse(work, u);
    };
    to_grid();
    if (design_.burn_in == 0) record(0, uh, &u, panel);

    const std::size_t total = (design_.burn_in + design_.steps()) * os;
    const std::size_t sub = options_.noise_substeps;
    for (std::size_t s = 1; s <= total; ++s) {
      noise_.draw_spectrum(normal, dt / static_cast<double>(sub), noise_spec);
      for (std::size_t q = 1; q < sub; ++q) {
        noise_.draw_spectrum(normal, dt / static_cast<double>(sub), extra_spec);
        for (std::size_t k = 0; k <= half; ++k) noise_spec[k] += extra_spec[k];
      }
      fft.inverse(noise_spec, dw);
      for (std::size_t j = 0; j < n_; ++j) {
        const double v = u[j];
        if (!(std::abs(v) <= options_.blowup_cap)) {
          throw NumericalBlowup("solution exceeded the blow-up cap", s);
        }
        prod[j] = model_.sigma(v) * dw[j];
      }
      fft.forward(prod, prod_spec);
      for (std::size_t k = 0; k < half; ++k) {
        uh[k] = decay[k] * uh[k] + (phi[k] * inv_n) * prod_spec[k];
      }
      uh[half] = Complex(0.0, 0.0);
      to_grid();
      if (s % os == 0 && s / os >= design_.burn_in) {
        const std::size_t row = s / os - design_.burn_in;
        record(row, uh, &u, panel);
        check_finite(panel, row, s);
      }
    }
    snapshot(uh, panel);
  }

  ModelSpec model_;
  SamplingDesign design_;
  SpdeOptions options_;
  NoiseField noise_;
  std::size_t n_ = 0;
  std::vector<double> lambda_;
  std::vector<Probe> probes_;
};

inline PathPanel simulate_spde(const ModelSpec& model, const SamplingDesign& design,
                               const RngStream& rng, SpdeOptions options = {}) {
  SpdeSimulator sim(model, design, options);
  return sim.run(rng);
}

// ---------------------------------------------------------------------------
// Hoelder scaling

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<double> scales;
  std::vector<double> rms;  // root mean square increment per scale
};

namespace detail {

inline ScalingFit fit_rms(std::vector<double> scales, std::vector<double> rms) {
  std::vector<double> lx(scales.size()), ly(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    lx[i] = std::log(scales[i]);
    ly[i] = std::log(rms[i]);
  }
  const auto fit = fit_line(lx, ly);
  return {fit.slope, fit.intercept, fit.r_squared, std::move(scales), std::move(rms)};
}

}  // namespace detail

/// Slope of log E[|u(t + tau) - u(t)|^2]^{1/2} against log tau, pooled over
/// all panels, times and points. Lags are in observation steps.
inline ScalingFit moment_scaling_check(std::span<const PathPanel> panels,
                                       std::span<const std::size_t> lags) {
  if (lags.size() < 3) throw DomainError("moment scaling needs at least 3 lags");
  if (panels.empty()) throw DomainError("no panels");
  std::vector<double> scales, rms;
  for (std::size_t lag : lags) {
    if (lag == 0) throw DomainError("lags must be positive");
    CompensatedSum acc;
    std::size_t count = 0;
    double dt = 0.0;
    for (const auto& p : panels) {
      if (p.rows() <= lag) throw DomainError("panel shorter than the largest lag");
      dt = p.times[1] - p.times[0];
      for (std::size_t i = lag; i < p.rows(); ++i) {
        for (std::size_t k = 0; k < p.cols(); ++k) {
          const double d = p(i, k) - p(i - lag, k);
          acc.add(d * d);
          ++count;
        }
      }
    }
    scales.push_back(static_cast<double>(lag) * dt);
    rms.push_back(std::sqrt(acc.value() / static_cast<double>(count)));
  }
  return detail::fit_rms(std::move(scales), std::move(rms));
}

inline ScalingFit moment_scaling_check(const PathPanel& panel, std::span<const std::size_t> lags) {
  return moment_scaling_check(std::span<const PathPanel>(&panel, 1), lags);
}

/// Same regression in space on periodic grid snapshots of the unit torus;
/// lags are in grid cells.
inline ScalingFit spatial_scaling_check(std::span<const std::vector<double>> fields,
                                        std::span<const std::size_t> lags) {
  if (lags.size() < 3) throw DomainError("spatial scaling needs at least 3 lags");
  if (fields.empty()) throw DomainError("no fields");
  std::vector<double> scales, rms;
  const std::size_t n = fields.front().size();
  for (std::size_t lag : lags) {
    if (lag == 0 || lag >= n) throw DomainError("spatial lag out of range");
    CompensatedSum acc;
    std::size_t count = 0;
    for (const auto& f : fields) {
      if (f.size() != n) throw GridMismatch("snapshots differ in size");
      for (std::size_t j = 0; j < n; ++j) {
        const double d = f[(j + lag) % n] - f[j];
        acc.add(d * d);
        ++count;
      }
    }
    scales.push_back(static_cast<double>(lag) / static_cast<double>(n));
    rms.push_back(std::sqrt(acc.value() / static_cast<double>(count)));
  }
  return detail::fit_rms(std::move(scales), std::move(rms));
}

}  // namespace shevar

#endif  // SHEVAR_SIMULATE_HPP_
