#ifndef SHEVAR_FFT_HPP_
#define SHEVAR_FFT_HPP_

// Thin RAII layer over FFTW3 (double precision). Plans are made with
// FFTW_ESTIMATE so the chosen algorithm, and hence every output bit, does not
// depend on timing. Planning is not thread safe in FFTW and is serialized here;
// execution with the new-array interface is.

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <new>
#include <span>

#include <fftw3.h>

namespace shevar {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDeleter {
  void operator()(fftw_plan p) const noexcept {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using PlanHandle = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

}  // namespace detail

/// SIMD-aligned buffer owned through fftw_malloc. All FFT inputs and outputs
/// must live in one of these so new-array execution keeps the plan's alignment.
template <class T>
class FftBuffer {
 public:
  FftBuffer() = default;
  explicit FftBuffer(std::size_t n) : size_(n) {
    data_.reset(static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n))));
    if (!data_) throw std::bad_alloc();
    for (std::size_t i = 0; i < n; ++i) data_.get()[i] = T{};
  }

  T* data() noexcept { return data_.get(); }
  const T* data() const noexcept { return data_.get(); }
  std::size_t size() const noexcept { return size_; }
  T& operator[](std::size_t i) noexcept { return data_.get()[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_.get()[i]; }
  std::span<T> span() noexcept { return {data_.get(), size_}; }
  std::span<const T> span() const noexcept { return {data_.get(), size_}; }

 private:
  std::unique_ptr<T, detail::FftwFree> data_;
  std::size_t size_ = 0;
};

using Complex = std::complex<double>;

inline fftw_complex* as_fftw(Complex* p) noexcept { return reinterpret_cast<fftw_complex*>(p); }

/// Real <-> half-complex transforms of length n (n/2 + 1 coefficients).
/// Unnormalized both ways: inverse(forward(x)) = n x.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    FftBuffer<double> r(n);
    FftBuffer<Complex> c(n / 2 + 1);
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), r.data(), as_fftw(c.data()),
                                        FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), as_fftw(c.data()), r.data(),
                                        FFTW_ESTIMATE | FFTW_DESTROY_INPUT));
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t spectrum_size() const noexcept { return n_ / 2 + 1; }

  void forward(FftBuffer<double>& in, FftBuffer<Complex>& out) const {
    fftw_execute_dft_r2c(forward_.get(), in.data(), as_fftw(out.data()));
  }
  /// Overwrites `in`.
  void inverse(FftBuffer<Complex>& in, FftBuffer<double>& out) const {
    fftw_execute_dft_c2r(inverse_.get(), as_fftw(in.data()), out.data());
  }

 private:
  std::size_t n_;
  detail::PlanHandle forward_;
  detail::PlanHandle inverse_;
};

/// Complex forward transform of length n, unnormalized.
class ComplexFft {
 public:
  explicit ComplexFft(std::size_t n) : n_(n) {
    FftBuffer<Complex> a(n), b(n);
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    plan_.reset(fftw_plan_dft_1d(static_cast<int>(n), as_fftw(a.data()), as_fftw(b.data()),
                                 FFTW_FORWARD, FFTW_ESTIMATE));
  }

  std::size_t size() const noexcept { return n_; }

  void forward(FftBuffer<Complex>& in, FftBuffer<Complex>& out) const {
    fftw_execute_dft(plan_.get(), as_fftw(in.data()), as_fftw(out.data()));
  }

 private:
  std::size_t n_;
  detail::PlanHandle plan_;
};

}  // namespace shevar

#endif  // SHEVAR_FFT_HPP_
