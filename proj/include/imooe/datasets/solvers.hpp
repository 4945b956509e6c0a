#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "imooe/datasets/initial_conditions.hpp"
#include "imooe/datasets/systems.hpp"
#include "imooe/errors.hpp"
#include "imooe/fft.hpp"
#include "imooe/tensor.hpp"

namespace imooe::datasets {

/// Non-finite state during time integration.
class SimulationError : public NonFiniteError {
 public:
  SimulationError(std::string msg, std::size_t interval, std::size_t substep)
      : NonFiniteError(std::move(msg)), interval_(interval), substep_(substep) {}
  std::size_t interval() const { return interval_; }
  std::size_t substep() const { return substep_; }

 private:
  std::size_t interval_;
  std::size_t substep_;
};

struct SolveOptions {
  std::size_t resolution = 64;
  /// Multiplies the substep count (oracle refinement).
  std::size_t refinement = 1;
  /// Substeps per saved interval before refinement; 0 picks a stable count.
  std::size_t substeps = 0;
};

struct TimeAxis {
  double horizon = 1.0;
  std::size_t saved_steps = 21;
  double dt_saved() const { return horizon / double(saved_steps - 1); }
};

namespace detail {

inline std::size_t substep_count(double dt_saved, double dt_stable, const SolveOptions& opt) {
  std::size_t n = opt.substeps;
  if (n == 0) n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt_saved / dt_stable)));
  return n * std::max<std::size_t>(1, opt.refinement);
}

template <class V>
bool finite(const V& v) {
  for (const auto& x : v)
    if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::complex<double>>) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    } else {
      if (!std::isfinite(x)) return false;
    }
  return true;
}

inline void check_finite_state(bool ok, std::size_t interval, std::size_t substep) {
  if (!ok) {
    std::ostringstream os;
    os << "non-finite state in saved interval " << interval << ", substep " << substep;
    throw SimulationError(os.str(), interval, substep);
  }
}

inline void check_init(const Tensor<double>& init, std::size_t channels) {
  if (init.rank() != 3 || init.dim(0) != channels || init.dim(1) != init.dim(2))
    throw ShapeError("initial state must be [" + std::to_string(channels) + ",n,n], got " +
                     shape_string(init.shape()));
}

/// Classic RK4 on a flat real state; rhs(t, state, out).
template <class Rhs>
void rk4_step(std::vector<double>& y, double t, double dt, Rhs&& rhs, std::vector<double> (&k)[4],
              std::vector<double>& tmp) {
  const std::size_t n = y.size();
  rhs(t, y, k[0]);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k[0][i];
  rhs(t + 0.5 * dt, tmp, k[1]);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k[1][i];
  rhs(t + 0.5 * dt, tmp, k[2]);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * k[2][i];
  rhs(t + dt, tmp, k[3]);
  for (std::size_t i = 0; i < n; ++i) y[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
}

/// Periodic 5-point Laplacian on an n x n grid with spacing h.
inline void laplacian(const double* u, double* out, std::size_t n, double h) {
  const double inv = 1.0 / (h * h);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ip = (i + 1) % n, im = (i + n - 1) % n;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t jp = (j + 1) % n, jm = (j + n - 1) % n;
      out[i * n + j] =
          (u[i * n + jp] + u[i * n + jm] + u[ip * n + j] + u[im * n + j] - 4.0 * u[i * n + j]) * inv;
    }
  }
}

// Stability limit of classic RK4 along the negative real axis.
inline constexpr double kRk4RealBound = 2.78;

}  // namespace detail

// ---------------------------------------------------------------------------
// Diffusion-reaction: FD Laplacian + RK4.

struct DrProblem {
  double du = 1e-3;
  double dv = 5e-3;
  double k = 5e-3;
  Tensor<double> init;  // [2,n,n]
  double length = 2.0;
  TimeAxis time{20.0, 21};
};

inline Tensor<double> solve_dr(const DrProblem& p, const SolveOptions& opt = {}) {
  detail::check_init(p.init, 2);
  const std::size_t n = p.init.dim(1), m = n * n;
  const double h = p.length / double(n);
  const double dmax = std::max(p.du, p.dv);
  const double dt_stable = 0.5 * detail::kRk4RealBound * h * h / (8.0 * dmax);
  const std::size_t nsub = detail::substep_count(p.time.dt_saved(), std::min(dt_stable, 0.05), opt);
  const double dt = p.time.dt_saved() / double(nsub);

  std::vector<double> lap(m);
  auto rhs = [&](double, const std::vector<double>& y, std::vector<double>& out) {
    const double* u = y.data();
    const double* v = y.data() + m;
    detail::laplacian(u, lap.data(), n, h);
    for (std::size_t i = 0; i < m; ++i) out[i] = p.du * lap[i] + u[i] - u[i] * u[i] * u[i] - p.k - v[i];
    detail::laplacian(v, lap.data(), n, h);
    for (std::size_t i = 0; i < m; ++i) out[m + i] = p.dv * lap[i] + u[i] - v[i];
  };

  Tensor<double> out({p.time.saved_steps, 2, n, n});
  std::vector<double> y(p.init.data().begin(), p.init.data().end());
  std::vector<double> k[4] = {std::vector<double>(2 * m), std::vector<double>(2 * m), std::vector<double>(2 * m),
                              std::vector<double>(2 * m)};
  std::vector<double> tmp(2 * m);
  std::copy(y.begin(), y.end(), out.slab(0).begin());
  double t = 0.0;
  for (std::size_t s = 1; s < p.time.saved_steps; ++s) {
    for (std::size_t sub = 0; sub < nsub; ++sub) {
      detail::rk4_step(y, t, dt, rhs, k, tmp);
      t += dt;
      detail::check_finite_state(detail::finite(y), s, sub);
    }
    std::copy(y.begin(), y.end(), out.slab(s).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heat conduction: conservative FD div(a grad u) + sinusoidal source, RK4.

struct HcProblem {
  std::vector<double> conductivity;  // a(x), n*n
  Tensor<double> init;               // [1,n,n]
  double amplitude = 200.0;
  double m1 = 1.0, m2 = 5.0, m3 = 1.0;
  double length = 1.0;
  TimeAxis time{5.0, 21};
};

inline Tensor<double> solve_hc(const HcProblem& p, const SolveOptions& opt = {}) {
  detail::check_init(p.init, 1);
  const std::size_t n = p.init.dim(1), m = n * n;
  if (p.conductivity.size() != m) throw ShapeError("conductivity field size mismatch");
  const double h = p.length / double(n);
  const double inv_h2 = 1.0 / (h * h);
  // Face conductivities: ax between (i,j) and (i,j+1), ay between (i,j) and (i+1,j).
  std::vector<double> ax(m), ay(m), src(m);
  double amax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = p.conductivity[i * n + j];
      amax = std::max(amax, a);
      ax[i * n + j] = 0.5 * (a + p.conductivity[i * n + (j + 1) % n]);
      ay[i * n + j] = 0.5 * (a + p.conductivity[((i + 1) % n) * n + j]);
      src[i * n + j] = p.amplitude * std::sin(p.m1 * std::numbers::pi * node_coord(j, n, p.length)) *
                       std::sin(p.m2 * std::numbers::pi * node_coord(i, n, p.length));
    }
  const double dt_stable = 0.5 * detail::kRk4RealBound * h * h / (8.0 * std::max(amax, 1e-12));
  const std::size_t nsub = detail::substep_count(p.time.dt_saved(), dt_stable, opt);
  const double dt = p.time.dt_saved() / double(nsub);

  auto rhs = [&](double t, const std::vector<double>& u, std::vector<double>& out) {
    const double st = std::sin(p.m3 * std::numbers::pi * t);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ip = (i + 1) % n, im = (i + n - 1) % n;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t jp = (j + 1) % n, jm = (j + n - 1) % n;
        const std::size_t c = i * n + j;
        const double fx = ax[c] * (u[i * n + jp] - u[c]) - ax[i * n + jm] * (u[c] - u[i * n + jm]);
        const double fy = ay[c] * (u[ip * n + j] - u[c]) - ay[im * n + j] * (u[c] - u[im * n + j]);
        out[c] = (fx + fy) * inv_h2 + src[c] * st;
      }
    }
  };

  Tensor<double> out({p.time.saved_steps, 1, n, n});
  std::vector<double> y(p.init.data().begin(), p.init.data().end());
  std::vector<double> k[4] = {std::vector<double>(m), std::vector<double>(m), std::vector<double>(m),
                              std::vector<double>(m)};
  std::vector<double> tmp(m);
  std::copy(y.begin(), y.end(), out.slab(0).begin());
  for (std::size_t s = 1; s < p.time.saved_steps; ++s) {
    const double t0 = double(s - 1) * p.time.dt_saved();
    for (std::size_t sub = 0; sub < nsub; ++sub) {
      detail::rk4_step(y, t0 + double(sub) * dt, dt, rhs, k, tmp);
      detail::check_finite_state(detail::finite(y), s, sub);
    }
    std::copy(y.begin(), y.end(), out.slab(s).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared pseudo-spectral helpers (half spectrum, n x n grid).

namespace detail {

struct SpectralOps {
  std::size_t n;
  double length;
  Fft2<double> fft;
  std::size_t hc;
  std::vector<double> kx, ky, ksq;  // physical wavenumbers per half-spectrum bin
  std::vector<double> ikx, iky;     // first-derivative multipliers (Nyquist zeroed)
  std::vector<double> dealias;      // 2/3 rule

  SpectralOps(std::size_t n_, double length_) : n(n_), length(length_), fft(n_, n_), hc(n_ / 2 + 1) {
    const std::size_t s = n * hc;
    kx.resize(s), ky.resize(s), ksq.resize(s), ikx.resize(s), iky.resize(s), dealias.resize(s);
    const double scale = 2.0 * std::numbers::pi / length;
    for (std::size_t r = 0; r < n; ++r) {
      const long ky_int = r <= n / 2 ? long(r) : long(r) - long(n);
      for (std::size_t q = 0; q < hc; ++q) {
        const std::size_t b = r * hc + q;
        const long kx_int = long(q);
        kx[b] = scale * double(kx_int);
        ky[b] = scale * double(ky_int);
        ksq[b] = kx[b] * kx[b] + ky[b] * ky[b];
        ikx[b] = (n % 2 == 0 && q == n / 2) ? 0.0 : kx[b];
        iky[b] = (n % 2 == 0 && r == n / 2) ? 0.0 : ky[b];
        dealias[b] = (3 * std::labs(kx_int) < long(n) && 3 * std::labs(ky_int) < long(n)) ? 1.0 : 0.0;
      }
    }
  }

  std::size_t size() const { return n * hc; }

  void to_physical(const std::complex<double>* spec, double* out) const {
    fft.inverse(std::span<const std::complex<double>>(spec, size()), std::span<double>(out, n * n));
    const double inv = 1.0 / double(n * n);
    for (std::size_t i = 0; i < n * n; ++i) out[i] *= inv;
  }
  void to_spectral(const double* in, std::complex<double>* out) const {
    fft.forward(std::span<const double>(in, n * n), std::span<std::complex<double>>(out, size()));
  }
  void derivative_x(const std::complex<double>* in, std::complex<double>* out) const {
    for (std::size_t b = 0; b < size(); ++b) out[b] = in[b] * std::complex<double>(0.0, ikx[b]);
  }
  void derivative_y(const std::complex<double>* in, std::complex<double>* out) const {
    for (std::size_t b = 0; b < size(); ++b) out[b] = in[b] * std::complex<double>(0.0, iky[b]);
  }
  double max_wavenumber() const { return std::numbers::pi * double(n) / length; }
};

using CVec = std::vector<std::complex<double>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Burgers: pseudo-spectral, 2/3 dealiasing, RK4 in spectral space.

struct BgProblem {
  double nu = 1e-2;
  Tensor<double> init;  // [2,n,n]
  double length = 64.0;
  TimeAxis time{1.0, 21};
};

inline Tensor<double> solve_bg(const BgProblem& p, const SolveOptions& opt = {}) {
  detail::check_init(p.init, 2);
  const std::size_t n = p.init.dim(1), m = n * n;
  const detail::SpectralOps ops(n, p.length);
  const std::size_t S = ops.size();
  detail::CVec state(2 * S);
  ops.to_spectral(p.init.slab(0).data(), state.data());
  ops.to_spectral(p.init.slab(1).data(), state.data() + S);

  std::vector<double> u(m), v(m), ax(m), ay(m), nl(m);
  detail::CVec d(S), nlh(S);
  auto rhs = [&](const detail::CVec& y, detail::CVec& out) {
    ops.to_physical(y.data(), u.data());
    ops.to_physical(y.data() + S, v.data());
    for (std::size_t c = 0; c < 2; ++c) {
      const std::complex<double>* comp = y.data() + c * S;
      ops.derivative_x(comp, d.data());
      ops.to_physical(d.data(), ax.data());
      ops.derivative_y(comp, d.data());
      ops.to_physical(d.data(), ay.data());
      for (std::size_t i = 0; i < m; ++i) nl[i] = u[i] * ax[i] + v[i] * ay[i];
      ops.to_spectral(nl.data(), nlh.data());
      for (std::size_t b = 0; b < S; ++b) out[c * S + b] = -ops.dealias[b] * nlh[b] - p.nu * ops.ksq[b] * comp[b];
    }
  };

  Tensor<double> out({p.time.saved_steps, 2, n, n});
  auto emit = [&](std::size_t s) {
    ops.to_physical(state.data(), out.slab(s).data());
    ops.to_physical(state.data() + S, out.slab(s).data() + m);
  };
  emit(0);
  detail::CVec k[4] = {detail::CVec(2 * S), detail::CVec(2 * S), detail::CVec(2 * S), detail::CVec(2 * S)};
  detail::CVec tmp(2 * S);
  const double kmax = ops.max_wavenumber();
  const double h = p.length / double(n);
  for (std::size_t s = 1; s < p.time.saved_steps; ++s) {
    const auto frame = out.slab(s - 1);
    double umax = 1e-12;
    for (double x : frame) umax = std::max(umax, std::abs(x));
    const double dt_stable = std::min(0.5 * h / umax, 0.5 * detail::kRk4RealBound / (p.nu * kmax * kmax + 1e-300));
    const std::size_t nsub = detail::substep_count(p.time.dt_saved(), dt_stable, opt);
    const double dt = p.time.dt_saved() / double(nsub);
    for (std::size_t sub = 0; sub < nsub; ++sub) {
      rhs(state, k[0]);
      for (std::size_t i = 0; i < 2 * S; ++i) tmp[i] = state[i] + 0.5 * dt * k[0][i];
      rhs(tmp, k[1]);
      for (std::size_t i = 0; i < 2 * S; ++i) tmp[i] = state[i] + 0.5 * dt * k[1][i];
      rhs(tmp, k[2]);
      for (std::size_t i = 0; i < 2 * S; ++i) tmp[i] = state[i] + dt * k[2][i];
      rhs(tmp, k[3]);
      for (std::size_t i = 0; i < 2 * S; ++i)
        state[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
      detail::check_finite_state(detail::finite(state), s, sub);
    }
    emit(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Navier-Stokes (vorticity): pseudo-spectral, 2/3 dealiasing,
// Crank-Nicolson viscosity with Heun advection.

struct NsProblem {
  double nu = 1e-3;
  double w = 2.0;
  double forcing_amplitude = 0.1;
  Tensor<double> init;  // [1,n,n]
  double length = 1.0;
  TimeAxis time{50.0, 31};
};

/// Velocity (u, v) = (d psi/dy, -d psi/dx) with laplacian(psi) = -omega, in spectral space.
inline void ns_velocity_spectral(const detail::SpectralOps& ops, const std::complex<double>* omega,
                                 std::complex<double>* u, std::complex<double>* v) {
  for (std::size_t b = 0; b < ops.size(); ++b) {
    const std::complex<double> psi = ops.ksq[b] > 0.0 ? omega[b] / ops.ksq[b] : 0.0;
    u[b] = psi * std::complex<double>(0.0, ops.iky[b]);
    v[b] = -psi * std::complex<double>(0.0, ops.ikx[b]);
  }
}

inline Tensor<double> solve_ns(const NsProblem& p, const SolveOptions& opt = {}) {
  detail::check_init(p.init, 1);
  const std::size_t n = p.init.dim(1), m = n * n;
  const detail::SpectralOps ops(n, p.length);
  const std::size_t S = ops.size();
  detail::CVec w(S), forcing(S);
  ops.to_spectral(p.init.data().data(), w.data());
  {
    std::vector<double> f(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double arg = p.w * std::numbers::pi * (node_coord(j, n, p.length) + node_coord(i, n, p.length));
        f[i * n + j] = p.forcing_amplitude * (std::sin(arg) + std::cos(arg));
      }
    ops.to_spectral(f.data(), forcing.data());
  }

  std::vector<double> u(m), v(m), wx(m), wy(m), nl(m);
  detail::CVec uh(S), vh(S), d(S);
  auto advection = [&](const detail::CVec& om, detail::CVec& out) {
    ns_velocity_spectral(ops, om.data(), uh.data(), vh.data());
    ops.to_physical(uh.data(), u.data());
    ops.to_physical(vh.data(), v.data());
    ops.derivative_x(om.data(), d.data());
    ops.to_physical(d.data(), wx.data());
    ops.derivative_y(om.data(), d.data());
    ops.to_physical(d.data(), wy.data());
    for (std::size_t i = 0; i < m; ++i) nl[i] = u[i] * wx[i] + v[i] * wy[i];
    ops.to_spectral(nl.data(), out.data());
    for (std::size_t b = 0; b < S; ++b) out[b] *= ops.dealias[b];
  };

  Tensor<double> out({p.time.saved_steps, 1, n, n});
  ops.to_physical(w.data(), out.slab(0).data());
  detail::CVec n0(S), n1(S), wstar(S);
  const double h = p.length / double(n);
  for (std::size_t s = 1; s < p.time.saved_steps; ++s) {
    ns_velocity_spectral(ops, w.data(), uh.data(), vh.data());
    ops.to_physical(uh.data(), u.data());
    ops.to_physical(vh.data(), v.data());
    double umax = 1e-12;
    for (std::size_t i = 0; i < m; ++i) umax = std::max({umax, std::abs(u[i]), std::abs(v[i])});
    const double dt_stable = std::min(0.25 * h / umax, 0.02);
    const std::size_t nsub = detail::substep_count(p.time.dt_saved(), dt_stable, opt);
    const double dt = p.time.dt_saved() / double(nsub);
    for (std::size_t sub = 0; sub < nsub; ++sub) {
      advection(w, n0);
      for (std::size_t b = 0; b < S; ++b) {
        const double visc = 0.5 * dt * p.nu * ops.ksq[b];
        wstar[b] = ((1.0 - visc) * w[b] + dt * (forcing[b] - n0[b])) / (1.0 + visc);
      }
      advection(wstar, n1);
      for (std::size_t b = 0; b < S; ++b) {
        const double visc = 0.5 * dt * p.nu * ops.ksq[b];
        w[b] = ((1.0 - visc) * w[b] + dt * (forcing[b] - 0.5 * (n0[b] + n1[b]))) / (1.0 + visc);
      }
      detail::check_finite_state(detail::finite(w), s, sub);
    }
    ops.to_physical(w.data(), out.slab(s).data());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shallow water: first-order finite volume, Rusanov flux, SSP-RK2, b = 0.

struct SwProblem {
  Tensor<double> init;  // [3,n,n]: h, hu, hv at cell centres
  double gravity = 1.0;
  double length = 5.0;
  TimeAxis time{1.0, 21};
};

namespace detail {

inline void sw_rhs(const std::vector<double>& q, std::vector<double>& dq, std::size_t n, double dx, double g) {
  const std::size_t m = n * n;
  const double* h = q.data();
  const double* hu = q.data() + m;
  const double* hv = q.data() + 2 * m;
  std::fill(dq.begin(), dq.end(), 0.0);
  const double inv = 1.0 / dx;
  auto face = [&](std::size_t a, std::size_t b, bool xdir) {
    const double uA = hu[a] / h[a], vA = hv[a] / h[a], cA = std::sqrt(g * h[a]);
    const double uB = hu[b] / h[b], vB = hv[b] / h[b], cB = std::sqrt(g * h[b]);
    double fa[3], fb[3], speed;
    if (xdir) {
      fa[0] = hu[a], fa[1] = hu[a] * uA + 0.5 * g * h[a] * h[a], fa[2] = hu[a] * vA;
      fb[0] = hu[b], fb[1] = hu[b] * uB + 0.5 * g * h[b] * h[b], fb[2] = hu[b] * vB;
      speed = std::max(std::abs(uA) + cA, std::abs(uB) + cB);
    } else {
      fa[0] = hv[a], fa[1] = hv[a] * uA, fa[2] = hv[a] * vA + 0.5 * g * h[a] * h[a];
      fb[0] = hv[b], fb[1] = hv[b] * uB, fb[2] = hv[b] * vB + 0.5 * g * h[b] * h[b];
      speed = std::max(std::abs(vA) + cA, std::abs(vB) + cB);
    }
    const double qa[3] = {h[a], hu[a], hv[a]}, qb[3] = {h[b], hu[b], hv[b]};
    for (std::size_t c = 0; c < 3; ++c) {
      const double flux = 0.5 * (fa[c] + fb[c]) - 0.5 * speed * (qb[c] - qa[c]);
      dq[c * m + a] -= flux * inv;
      dq[c * m + b] += flux * inv;
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      face(i * n + j, i * n + (j + 1) % n, true);
      face(i * n + j, ((i + 1) % n) * n + j, false);
    }
}

}  // namespace detail

inline Tensor<double> solve_sw(const SwProblem& p, const SolveOptions& opt = {}) {
  detail::check_init(p.init, 3);
  const std::size_t n = p.init.dim(1), m = n * n;
  const double dx = p.length / double(n);
  std::vector<double> q(p.init.data().begin(), p.init.data().end()), q1(3 * m), dq(3 * m);
  Tensor<double> out({p.time.saved_steps, 1, n, n});
  std::copy(q.begin(), q.begin() + std::ptrdiff_t(m), out.slab(0).begin());
  for (std::size_t s = 1; s < p.time.saved_steps; ++s) {
    double smax = 1e-12;
    for (std::size_t i = 0; i < m; ++i) {
      const double c = std::sqrt(p.gravity * q[i]);
      smax = std::max({smax, std::abs(q[m + i] / q[i]) + c, std::abs(q[2 * m + i] / q[i]) + c});
    }
    const std::size_t nsub = detail::substep_count(p.time.dt_saved(), 0.4 * dx / smax, opt);
    const double dt = p.time.dt_saved() / double(nsub);
    for (std::size_t sub = 0; sub < nsub; ++sub) {
      detail::sw_rhs(q, dq, n, dx, p.gravity);
      for (std::size_t i = 0; i < 3 * m; ++i) q1[i] = q[i] + dt * dq[i];
      detail::sw_rhs(q1, dq, n, dx, p.gravity);
      for (std::size_t i = 0; i < 3 * m; ++i) q[i] = 0.5 * q[i] + 0.5 * (q1[i] + dt * dq[i]);
      detail::check_finite_state(detail::finite(q), s, sub);
    }
    std::copy(q.begin(), q.begin() + std::ptrdiff_t(m), out.slab(s).begin());
  }
  return out;
}

}  // namespace imooe::datasets
