#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/parallel.hpp"

namespace imooe {

namespace detail {

template <class Real>
struct Fftw;

template <>
struct Fftw<double> {
  using plan = fftw_plan;
  using complex = fftw_complex;
  static plan r2c(int h, int w, double* in, complex* out, unsigned flags) {
    return fftw_plan_dft_r2c_2d(h, w, in, out, flags);
  }
  static plan c2r(int h, int w, complex* in, double* out, unsigned flags) {
    return fftw_plan_dft_c2r_2d(h, w, in, out, flags);
  }
  static void exec_r2c(plan p, double* in, complex* out) { fftw_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, complex* in, double* out) { fftw_execute_dft_c2r(p, in, out); }
};

template <>
struct Fftw<float> {
  using plan = fftwf_plan;
  using complex = fftwf_complex;
  static plan r2c(int h, int w, float* in, complex* out, unsigned flags) {
    return fftwf_plan_dft_r2c_2d(h, w, in, out, flags);
  }
  static plan c2r(int h, int w, complex* in, float* out, unsigned flags) {
    return fftwf_plan_dft_c2r_2d(h, w, in, out, flags);
  }
  static void exec_r2c(plan p, float* in, complex* out) { fftwf_execute_dft_r2c(p, in, out); }
  static void exec_c2r(plan p, complex* in, float* out) { fftwf_execute_dft_c2r(p, in, out); }
};

// FFTW's planner is not thread-safe; execution with the new-array API is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Unnormalized 2D real<->half-complex transforms on an H x W grid
/// (row index = y, column index = x). Half spectrum shape is H x (W/2+1).
template <class Real>
class Fft2 {
 public:
  using Complex = std::complex<Real>;

  Fft2(std::size_t h, std::size_t w) : h_(h), w_(w) {
    if (h < 2 || w < 2) throw ShapeError("FFT grid must be at least 2x2");
    auto& cache = plans();
    std::lock_guard lock(detail::planner_mutex());
    auto it = cache.find({h, w});
    if (it == cache.end()) {
      unsigned flags = FFTW_UNALIGNED | (deterministic_mode() ? FFTW_ESTIMATE : FFTW_MEASURE);
      std::vector<Real> real(h * w);
      std::vector<Complex> cplx(h * (w / 2 + 1));
      auto* c = reinterpret_cast<typename detail::Fftw<Real>::complex*>(cplx.data());
      Plans p{detail::Fftw<Real>::r2c(int(h), int(w), real.data(), c, flags),
              detail::Fftw<Real>::c2r(int(h), int(w), c, real.data(), flags)};
      it = cache.emplace(std::pair{h, w}, p).first;
    }
    plans_ = it->second;
  }

  std::size_t rows() const { return h_; }
  std::size_t cols() const { return w_; }
  std::size_t half_cols() const { return w_ / 2 + 1; }
  std::size_t spectrum_size() const { return h_ * half_cols(); }
  std::size_t grid_size() const { return h_ * w_; }

  void forward(std::span<const Real> in, std::span<Complex> out) const {
    check(in.size() == grid_size() && out.size() == spectrum_size());
    detail::Fftw<Real>::exec_r2c(plans_.r2c, const_cast<Real*>(in.data()),
                                 reinterpret_cast<typename detail::Fftw<Real>::complex*>(out.data()));
  }

  /// Unnormalized inverse; `in` is copied because c2r destroys its input.
  void inverse(std::span<const Complex> in, std::span<Real> out) const {
    check(in.size() == spectrum_size() && out.size() == grid_size());
    thread_local std::vector<Complex> scratch;
    scratch.assign(in.begin(), in.end());
    detail::Fftw<Real>::exec_c2r(plans_.c2r,
                                 reinterpret_cast<typename detail::Fftw<Real>::complex*>(scratch.data()),
                                 out.data());
  }

  std::vector<Complex> forward(std::span<const Real> in) const {
    std::vector<Complex> out(spectrum_size());
    forward(in, out);
    return out;
  }

 private:
  struct Plans {
    typename detail::Fftw<Real>::plan r2c;
    typename detail::Fftw<Real>::plan c2r;
  };

  static std::map<std::pair<std::size_t, std::size_t>, Plans>& plans() {
    static std::map<std::pair<std::size_t, std::size_t>, Plans> cache;
    return cache;
  }

  static void check(bool ok) {
    if (!ok) throw ShapeError("FFT buffer size does not match plan");
  }

  std::size_t h_, w_;
  Plans plans_{};
};

}  // namespace imooe
