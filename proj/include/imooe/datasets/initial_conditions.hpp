#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "imooe/datasets/systems.hpp"
#include "imooe/fft.hpp"
#include "imooe/random.hpp"
#include "imooe/tensor.hpp"

namespace imooe::datasets {

/// Exponent and offset of the GRF spectral density (|k|^2 + tau^2)^(-alpha),
/// k the angular wavenumber.
struct GrfParams {
  double alpha = 2.5;
  double tau = 7.0;
};

/// Periodic zero-mean, unit-std Gaussian random field on an n x n grid of side `length`.
inline std::vector<double> gaussian_random_field(std::size_t n, double length, Rng& rng, GrfParams p = {}) {
  const Fft2<double> fft(n, n);
  std::vector<double> field(n * n);
  for (double& v : field) v = standard_normal(rng);
  std::vector<std::complex<double>> spec(fft.spectrum_size());
  fft.forward(field, spec);
  const std::size_t hc = n / 2 + 1;
  const double scale = 2.0 * std::numbers::pi / length;
  for (std::size_t r = 0; r < n; ++r) {
    const double ky = scale * (r <= n / 2 ? double(r) : double(r) - double(n));
    for (std::size_t q = 0; q < hc; ++q) {
      const double kx = scale * double(q);
      const double amp = std::pow(kx * kx + ky * ky + p.tau * p.tau, -p.alpha / 2.0);
      spec[r * hc + q] *= (r == 0 && q == 0) ? 0.0 : amp;
    }
  }
  fft.inverse(spec, field);
  double sq = 0.0;
  for (double v : field) sq += v * v;
  const double std = std::sqrt(sq / double(field.size()));
  if (std > 0.0)
    for (double& v : field) v /= std;
  return field;
}

inline constexpr std::size_t kDrSquares = 6;
inline constexpr double kDrSquareSide = 0.2;

/// Smoothed radial dam profile: 1 + 0.5 (1 - tanh((r - radius) / (2 dx))).
inline double dam_break_depth(double r, double radius, double dx) {
  return 1.0 + 0.5 * (1.0 - std::tanh((r - radius) / (2.0 * dx)));
}

/// Node coordinate used by the finite-difference and spectral solvers.
inline double node_coord(std::size_t j, std::size_t n, double length) { return double(j) * length / double(n); }
/// Cell-centre coordinate used by the finite-volume solver.
inline double cell_centre(std::size_t j, std::size_t n, double length) {
  return (double(j) + 0.5) * length / double(n);
}

/// Initial state [C, n, n] of a trajectory; deterministic in (env, traj_seed).
inline Tensor<double> initial_condition(const Environment& env, std::uint64_t traj_seed, std::size_t n) {
  const SystemSpec& spec = system_spec(env.system);
  const double lx = spec.extent[0];
  const double ly = spec.extent[1];
  Tensor<double> u({spec.channels, n, n});
  Rng rng(derive_seed(traj_seed, {0x69636f6eULL}));
  switch (env.system) {
    case SystemId::DR: {
      // Squares may overlap; later squares overwrite earlier ones.
      for (std::size_t s = 0; s < kDrSquares; ++s) {
        const double x0 = uniform(rng, 0.0, lx);
        const double y0 = uniform(rng, 0.0, ly);
        double vals[2];
        for (double& v : vals) v = uniform(rng, -1.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
          double dy = node_coord(i, n, ly) - y0;
          if (dy < 0) dy += ly;
          if (dy >= kDrSquareSide) continue;
          for (std::size_t j = 0; j < n; ++j) {
            double dx = node_coord(j, n, lx) - x0;
            if (dx < 0) dx += lx;
            if (dx >= kDrSquareSide) continue;
            u(0, i, j) = vals[0];
            u(1, i, j) = vals[1];
          }
        }
      }
      break;
    }
    case SystemId::NS: {
      const auto field = gaussian_random_field(n, lx, rng);
      std::copy(field.begin(), field.end(), u.ptr());
      break;
    }
    case SystemId::BG: {
      for (std::size_t c = 0; c < 2; ++c) {
        for (int j = 0; j < 4; ++j) {
          const double a = uniform(rng, -0.5, 0.5);
          const double kx = double(std::uniform_int_distribution<int>(1, 3)(rng));
          const double ky = double(std::uniform_int_distribution<int>(1, 3)(rng));
          const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t jj = 0; jj < n; ++jj) {
              const double arg = 2.0 * std::numbers::pi *
                                     (kx * node_coord(jj, n, lx) / lx + ky * node_coord(i, n, ly) / ly) +
                                 phase;
              u(c, i, jj) += a * std::sin(arg);
            }
        }
      }
      break;
    }
    case SystemId::SW: {
      const double radius = env.value("radius");
      const double dx = lx / double(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double x = cell_centre(j, n, lx) - 0.5 * lx;
          const double y = cell_centre(i, n, ly) - 0.5 * ly;
          u(0, i, j) = dam_break_depth(std::hypot(x, y), radius, dx);
        }
      break;
    }
    case SystemId::HC:
      break;  // u0 = 0; the trajectory is driven by the heat source
  }
  return u;
}

inline constexpr double kHcCoefficientScale = 0.1;
inline constexpr double kHcLogStd = 0.5;

/// Conductivity a(x) = 0.1 exp(0.5 g(x)) with g a unit-std GRF.
inline std::vector<double> hc_coefficient(std::uint64_t traj_seed, std::size_t n, double length) {
  Rng rng(derive_seed(traj_seed, {0x68636f65ULL}));
  auto g = gaussian_random_field(n, length, rng);
  for (double& v : g) v = kHcCoefficientScale * std::exp(kHcLogStd * v);
  return g;
}

}  // namespace imooe::datasets
