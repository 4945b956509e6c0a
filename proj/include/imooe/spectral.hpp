#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/fft.hpp"
#include "imooe/tensor.hpp"

namespace imooe::spectral {

/// Wavenumber bookkeeping for the half spectrum of an H x W periodic grid.
/// Rows carry the y wavenumber, columns the x wavenumber.
struct SpectralGrid {
  std::size_t rows = 0;  // H
  std::size_t cols = 0;  // W
  double length_x = 1.0;
  double length_y = 1.0;

  SpectralGrid() = default;
  SpectralGrid(std::size_t h, std::size_t w, double lx = 1.0, double ly = 1.0)
      : rows(h), cols(w), length_x(lx), length_y(ly) {
    if (h < 4 || w < 4) throw ShapeError("spectral grid needs H, W >= 4");
    if (!(lx > 0.0) || !(ly > 0.0)) throw ConfigError("domain lengths must be positive");
  }

  std::size_t half_cols() const { return cols / 2 + 1; }
  std::size_t spectrum_size() const { return rows * half_cols(); }

  int kx(std::size_t q) const { return static_cast<int>(q); }
  int ky(std::size_t r) const {
    return r <= rows / 2 ? static_cast<int>(r) : static_cast<int>(r) - static_cast<int>(rows);
  }
  double scale_x() const { return 2.0 * std::numbers::pi / length_x; }
  double scale_y() const { return 2.0 * std::numbers::pi / length_y; }
  bool nyquist_x(std::size_t q) const { return cols % 2 == 0 && q == cols / 2; }
  bool nyquist_y(std::size_t r) const { return rows % 2 == 0 && r == rows / 2; }

  /// |xi|^2 in integer wavenumbers; zero only at the DC bin.
  int ksq(std::size_t r, std::size_t q) const { return kx(q) * kx(q) + ky(r) * ky(r); }

  /// Multiplicity of a half-spectrum bin in the full spectrum.
  int conj_weight(std::size_t q) const { return (q == 0 || nyquist_x(q)) ? 1 : 2; }

  /// Largest radial shell used by band metrics.
  int max_shell() const { return static_cast<int>(std::min(rows, cols) / 2); }
};

enum class Axis { x, y };

/// Derivative kinds in stack order. The stack is derivative-major:
/// channel index = kind * C + state_channel.
enum class DerivativeKind : std::size_t { dx = 0, dy = 1, dxx = 2, dyy = 3, dxy = 4 };
inline constexpr std::size_t kDerivativeKinds = 5;
inline constexpr int kDerivativeOrderingVersion = 1;
inline constexpr std::array<const char*, kDerivativeKinds> kDerivativeNames = {"dx", "dy", "dxx", "dyy",
                                                                              "dxy"};

constexpr std::size_t derivative_channel(DerivativeKind kind, std::size_t state_channel,
                                         std::size_t state_channels) {
  return static_cast<std::size_t>(kind) * state_channels + state_channel;
}

/// Fourier symbol of a derivative kind at half-spectrum bin (r, q), with
/// physical scaling 2*pi/L. Odd-order symbols vanish on Nyquist bins so the
/// operator stays real.
inline std::complex<double> derivative_symbol(const SpectralGrid& g, DerivativeKind kind, std::size_t r,
                                              std::size_t q) {
  const double ax = g.nyquist_x(q) ? 0.0 : g.scale_x() * g.kx(q);
  const double ay = g.nyquist_y(r) ? 0.0 : g.scale_y() * g.ky(r);
  switch (kind) {
    case DerivativeKind::dx:
      return {0.0, ax};
    case DerivativeKind::dy:
      return {0.0, ay};
    case DerivativeKind::dxx: {
      const double k = g.scale_x() * g.kx(q);
      return {-k * k, 0.0};
    }
    case DerivativeKind::dyy: {
      const double k = g.scale_y() * g.ky(r);
      return {-k * k, 0.0};
    }
    case DerivativeKind::dxy:
      return {-ax * ay, 0.0};
  }
  return {};
}

namespace detail {

template <class Real>
void check_field(const Tensor<Real>& f, const SpectralGrid& g, const char* what) {
  if (f.rank() != 3 || f.dim(1) != g.rows || f.dim(2) != g.cols)
    throw ShapeError(std::string(what) + ": expected [C," + std::to_string(g.rows) + "," +
                     std::to_string(g.cols) + "], got " + shape_string(f.shape()));
}

}  // namespace detail

/// Applies the derivative of `kind` (or its transpose) to every channel.
template <class Real>
Tensor<Real> apply_derivative(const Tensor<Real>& field, DerivativeKind kind, const SpectralGrid& grid,
                              bool transpose = false) {
  detail::check_field(field, grid, "apply_derivative");
  const Fft2<Real> fft(grid.rows, grid.cols);
  const std::size_t channels = field.dim(0);
  const std::size_t n = grid.rows * grid.cols;
  const Real inv_n = Real(1) / Real(n);
  Tensor<Real> out(field.shape());
  std::vector<std::complex<Real>> spec(grid.spectrum_size());
  for (std::size_t c = 0; c < channels; ++c) {
    fft.forward(field.slab(c), spec);
    for (std::size_t r = 0; r < grid.rows; ++r)
      for (std::size_t q = 0; q < grid.half_cols(); ++q) {
        auto s = derivative_symbol(grid, kind, r, q);
        if (transpose) s = std::conj(s);
        spec[r * grid.half_cols() + q] *= std::complex<Real>(Real(s.real() * inv_n), Real(s.imag() * inv_n));
      }
    fft.inverse(spec, out.slab(c));
  }
  return out;
}

/// d/dx or d/dy of order 1 or 2, per channel, for a periodic [C,H,W] field.
template <class Real>
Tensor<Real> spectral_derivative(const Tensor<Real>& field, Axis axis, int order, const SpectralGrid& grid) {
  if (order != 1 && order != 2) throw ConfigError("derivative order must be 1 or 2");
  DerivativeKind kind = axis == Axis::x ? (order == 1 ? DerivativeKind::dx : DerivativeKind::dxx)
                                        : (order == 1 ? DerivativeKind::dy : DerivativeKind::dyy);
  return apply_derivative(field, kind, grid);
}

/// [C,H,W] -> [5C,H,W] stack ordered [dx, dy, dxx, dyy, dxy] x channels.
template <class Real>
Tensor<Real> derivative_stack(const Tensor<Real>& field, const SpectralGrid& grid) {
  detail::check_field(field, grid, "derivative_stack");
  const Fft2<Real> fft(grid.rows, grid.cols);
  const std::size_t channels = field.dim(0);
  const std::size_t hc = grid.half_cols();
  const Real inv_n = Real(1) / Real(grid.rows * grid.cols);
  Tensor<Real> out({kDerivativeKinds * channels, grid.rows, grid.cols});
  std::vector<std::complex<Real>> spec(grid.spectrum_size()), tmp(grid.spectrum_size());
  for (std::size_t c = 0; c < channels; ++c) {
    fft.forward(field.slab(c), spec);
    for (std::size_t k = 0; k < kDerivativeKinds; ++k) {
      const auto kind = static_cast<DerivativeKind>(k);
      for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t q = 0; q < hc; ++q) {
          const auto s = derivative_symbol(grid, kind, r, q);
          tmp[r * hc + q] = spec[r * hc + q] * std::complex<Real>(Real(s.real() * inv_n), Real(s.imag() * inv_n));
        }
      fft.inverse(tmp, out.slab(derivative_channel(kind, c, channels)));
    }
  }
  return out;
}

/// Transpose of derivative_stack: [5C,H,W] -> [C,H,W].
template <class Real>
Tensor<Real> derivative_stack_transpose(const Tensor<Real>& grad, const SpectralGrid& grid) {
  if (grad.rank() != 3 || grad.dim(0) % kDerivativeKinds != 0)
    throw ShapeError("derivative_stack_transpose: channel count must be a multiple of 5");
  const std::size_t channels = grad.dim(0) / kDerivativeKinds;
  const Fft2<Real> fft(grid.rows, grid.cols);
  const std::size_t hc = grid.half_cols();
  const Real inv_n = Real(1) / Real(grid.rows * grid.cols);
  Tensor<Real> out({channels, grid.rows, grid.cols});
  std::vector<std::complex<Real>> spec(grid.spectrum_size()), acc(grid.spectrum_size());
  for (std::size_t c = 0; c < channels; ++c) {
    std::fill(acc.begin(), acc.end(), std::complex<Real>{});
    for (std::size_t k = 0; k < kDerivativeKinds; ++k) {
      const auto kind = static_cast<DerivativeKind>(k);
      fft.forward(grad.slab(derivative_channel(kind, c, channels)), spec);
      for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t q = 0; q < hc; ++q) {
          const auto s = std::conj(derivative_symbol(grid, kind, r, q));
          acc[r * hc + q] += spec[r * hc + q] * std::complex<Real>(Real(s.real() * inv_n), Real(s.imag() * inv_n));
        }
    }
    fft.inverse(acc, out.slab(c));
  }
  return out;
}

/// Sum over channels and wavenumbers of |xi|^2 |F(u)-F(v)|^2, F scaled by 1/(H W),
/// xi in integer wavenumbers. When `grad_u` is non-null it receives d/du.
template <class Real>
double freq_weighted_sq_error(const Tensor<Real>& u, const Tensor<Real>& v, Tensor<Real>* grad_u = nullptr) {
  require_same_shape(u, v, "freq_weighted_sq_error");
  if (u.rank() != 3) throw ShapeError("freq_weighted_sq_error expects [C,H,W]");
  const SpectralGrid grid(u.dim(1), u.dim(2));
  const Fft2<Real> fft(grid.rows, grid.cols);
  const std::size_t n = grid.rows * grid.cols;
  const std::size_t hc = grid.half_cols();
  std::vector<Real> diff(n);
  std::vector<std::complex<Real>> spec(grid.spectrum_size());
  if (grad_u) *grad_u = Tensor<Real>(u.shape());
  double total = 0.0;
  const double inv_n2 = 1.0 / (double(n) * double(n));
  for (std::size_t c = 0; c < u.dim(0); ++c) {
    auto us = u.slab(c);
    auto vs = v.slab(c);
    for (std::size_t i = 0; i < n; ++i) diff[i] = us[i] - vs[i];
    fft.forward(diff, spec);
    double acc = 0.0;
    for (std::size_t r = 0; r < grid.rows; ++r)
      for (std::size_t q = 0; q < hc; ++q) {
        const double w = grid.ksq(r, q);
        acc += grid.conj_weight(q) * w * std::norm(std::complex<double>(spec[r * hc + q]));
        spec[r * hc + q] *= Real(2.0 * w * inv_n2);
      }
    total += acc * inv_n2;
    if (grad_u) fft.inverse(spec, grad_u->slab(c));
  }
  return total;
}

struct Band {
  int lo = 0;
  int hi = 0;
};

/// Low [0,4], mid [5,12], high [13, max_shell], clipped to the grid.
inline std::vector<Band> default_bands(const SpectralGrid& grid) {
  const int top = grid.max_shell();
  std::vector<Band> out;
  for (Band b : {Band{0, 4}, Band{5, 12}, Band{13, top}}) {
    if (b.lo > top) continue;
    b.hi = std::min(b.hi, top);
    out.push_back(b);
  }
  return out;
}

inline void validate_bands(const std::vector<Band>& bands, const SpectralGrid& grid) {
  for (std::size_t i = 0; i < bands.size(); ++i) {
    if (bands[i].lo < 0 || bands[i].lo > bands[i].hi || bands[i].lo > grid.max_shell())
      throw ConfigError("empty frequency band [" + std::to_string(bands[i].lo) + "," +
                        std::to_string(bands[i].hi) + "]");
    if (i > 0 && bands[i].lo <= bands[i - 1].hi) throw ConfigError("frequency bands must be sorted and disjoint");
  }
}

/// Energy of F(delta) (1/(HW) scaling) in each integer radial shell round(|xi|),
/// shells 0..max_shell; bins beyond max_shell are dropped.
template <class Real>
std::vector<double> shell_energy(std::span<const Real> delta, const SpectralGrid& grid) {
  const Fft2<Real> fft(grid.rows, grid.cols);
  std::vector<std::complex<Real>> spec(grid.spectrum_size());
  fft.forward(delta, spec);
  const double inv_n2 = 1.0 / double(grid.rows * grid.cols) / double(grid.rows * grid.cols);
  std::vector<double> shells(static_cast<std::size_t>(grid.max_shell()) + 1, 0.0);
  const std::size_t hc = grid.half_cols();
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t q = 0; q < hc; ++q) {
      const auto shell = static_cast<std::size_t>(std::lround(std::sqrt(double(grid.ksq(r, q)))));
      if (shell >= shells.size()) continue;
      shells[shell] += grid.conj_weight(q) * std::norm(std::complex<double>(spec[r * hc + q])) * inv_n2;
    }
  return shells;
}

/// Banded spectral RMSE of [T,C,H,W] sequences: per band
/// sqrt(sum_{shell in band} |dF|^2) / (hi - lo + 1), averaged over T and C.
template <class Real>
std::vector<double> radial_band_rmse(const Tensor<Real>& pred, const Tensor<Real>& truth,
                                     const std::vector<Band>& bands) {
  require_same_shape(pred, truth, "radial_band_rmse");
  if (pred.rank() != 4) throw ShapeError("radial_band_rmse expects [T,C,H,W]");
  const SpectralGrid grid(pred.dim(2), pred.dim(3));
  validate_bands(bands, grid);
  const std::size_t n = grid.rows * grid.cols;
  const std::size_t planes = pred.dim(0) * pred.dim(1);
  std::vector<double> out(bands.size(), 0.0);
  std::vector<Real> delta(n);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < n; ++i) delta[i] = pred[p * n + i] - truth[p * n + i];
    const auto shells = shell_energy<Real>(delta, grid);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      double e = 0.0;
      for (int s = bands[b].lo; s <= std::min(bands[b].hi, grid.max_shell()); ++s) e += shells[std::size_t(s)];
      out[b] += std::sqrt(e) / double(bands[b].hi - bands[b].lo + 1);
    }
  }
  for (double& v : out) v /= double(planes);
  return out;
}

}  // namespace imooe::spectral
