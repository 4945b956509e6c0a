#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/fft.hpp"
#include "imooe/spectral.hpp"
#include "imooe/tensor.hpp"

namespace imooe::ad {

/// Named trainable tensors, stored in registration order.
template <std::floating_point Real>
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor<Real> init) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  Tensor<Real>& value(std::size_t i) { return values_.at(i); }
  const Tensor<Real>& value(std::size_t i) const { return values_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  std::vector<Tensor<Real>> zeros_like() const {
    std::vector<Tensor<Real>> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.emplace_back(v.shape());
    return out;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& v : values_) out.insert(out.end(), v.data().begin(), v.data().end());
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != scalar_count()) throw ShapeError("parameter vector length mismatch");
    std::size_t o = 0;
    for (auto& v : values_)
      for (auto& x : v.data()) x = static_cast<Real>(flat[o++]);
  }

  template <std::floating_point Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].template cast<Other>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> values_;
};

template <std::floating_point Real>
using Gradients = std::vector<Tensor<Real>>;

template <std::floating_point Real>
std::vector<double> flatten(const Gradients<Real>& g) {
  std::vector<double> out;
  for (const auto& t : g) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Reverse-mode tape. With a null gradient sink it only evaluates values.
template <std::floating_point Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<Real>&)>;

  Tape(const ParameterSet<Real>& params, Gradients<Real>* grads) : params_(&params), grads_(grads) {
    if (grads_ && grads_->size() != params.size()) throw ShapeError("gradient buffer does not match parameters");
  }

  bool recording() const { return grads_ != nullptr; }
  const ParameterSet<Real>& params() const { return *params_; }
  const Tensor<Real>& param(std::size_t pid) const { return params_->value(pid); }
  Tensor<Real>& param_grad(std::size_t pid) { return (*grads_)[pid]; }

  Var constant(Tensor<Real> v) { return push(std::move(v), false, nullptr); }

  Var push(Tensor<Real> value, bool needs_grad, Backward fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && recording();
    if (n.needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  const Tensor<Real>& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  bool needs_grad(std::initializer_list<Var> vs) const {
    if (!recording()) return false;
    for (Var v : vs)
      if (needs_grad(v)) return true;
    return false;
  }

  /// Gradient buffer of `v`, allocated on first use; null if `v` is not differentiable.
  Tensor<Real>* grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.needs_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<Real>(n.value.shape());
    return &n.grad;
  }

  void backward(Var root, Real seed = Real(1)) {
    if (!recording()) throw Error("backward called on a non-recording tape");
    if (!needs_grad(root)) return;
    Tensor<Real>* g = grad(root);
    for (auto& x : g->data()) x += seed;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad);
      n.grad = Tensor<Real>();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    bool needs_grad = false;
    Backward backward;
  };

  const ParameterSet<Real>* params_;
  Gradients<Real>* grads_;
  std::deque<Node> nodes_;  // stable references across push
};

namespace detail {

/// y[0..n) += a * x[0..n)
template <class Real>
inline void axpy(Real a, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

/// Dot product with eight interleaved partial sums combined in a fixed order,
/// so the result does not depend on buffer alignment.
template <class Real>
inline Real dot(const Real* a, const Real* b, std::size_t n) {
  Real acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

inline void add_into(auto& dst, const auto& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops on [channels, ...] tensors.

template <class Real>
Var add(Tape<Real>& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor<Real> out = t.value(a);
  detail::add_into(out, t.value(b));
  return t.push(std::move(out), t.needs_grad({a, b}), [a, b](Tape<Real>& tp, const Tensor<Real>& g) {
    if (auto* ga = tp.grad(a)) detail::add_into(*ga, g);
    if (auto* gb = tp.grad(b)) detail::add_into(*gb, g);
  });
}

template <class Real>
Var gelu(Tape<Real>& t, Var x) {
  const auto& xv = t.value(x);
  Tensor<Real> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i)
    out[i] = Real(0.5) * xv[i] * (Real(1) + std::erf(xv[i] * Real(std::numbers::sqrt2 / 2)));
  return t.push(std::move(out), t.needs_grad({x}), [x](Tape<Real>& tp, const Tensor<Real>& g) {
    auto* gx = tp.grad(x);
    const auto& xv = tp.value(x);
    const Real c = Real(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real v = xv[i];
      const Real d = Real(0.5) * (Real(1) + std::erf(v * Real(std::numbers::sqrt2 / 2))) + v * c * std::exp(-v * v / 2);
      (*gx)[i] += g[i] * d;
    }
  });
}

/// Concatenation along the leading axis; trailing shapes must agree.
template <class Real>
Var concat(Tape<Real>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape tail(t.value(parts[0]).shape().begin() + 1, t.value(parts[0]).shape().end());
  std::size_t lead = 0;
  bool ng = false;
  for (Var p : parts) {
    const auto& s = t.value(p).shape();
    if (Shape(s.begin() + 1, s.end()) != tail) throw ShapeError("concat: trailing shapes differ");
    lead += s[0];
    ng = ng || t.needs_grad(p);
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Tensor<Real> out(shape);
  std::size_t o = 0;
  for (Var p : parts) {
    const auto& v = t.value(p);
    std::copy(v.data().begin(), v.data().end(), out.ptr() + o);
    o += v.size();
  }
  return t.push(std::move(out), ng, [parts](Tape<Real>& tp, const Tensor<Real>& g) {
    std::size_t o = 0;
    for (Var p : parts) {
      const std::size_t n = tp.value(p).size();
      if (auto* gp = tp.grad(p))
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[o + i];
      o += n;
    }
  });
}

/// Elementwise product with a constant tensor of the same shape.
template <class Real>
Var mul_const(Tape<Real>& t, Var x, const Tensor<Real>& c) {
  require_same_shape(t.value(x), c, "mul_const");
  Tensor<Real> out = t.value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return t.push(std::move(out), t.needs_grad({x}), [x, c](Tape<Real>& tp, const Tensor<Real>& g) {
    auto* gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * c[i];
  });
}

/// x [Ch, ...] scaled per leading index by s [Ch].
template <class Real>
Var scale_channels(Tape<Real>& t, Var x, Var s) {
  const auto& xv = t.value(x);
  const auto& sv = t.value(s);
  if (sv.size() != xv.dim(0)) throw ShapeError("scale_channels: " + std::to_string(sv.size()) +
                                               " scales for " + std::to_string(xv.dim(0)) + " channels");
  const std::size_t plane = xv.size() / xv.dim(0);
  Tensor<Real> out(xv.shape());
  for (std::size_t c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = xv[c * plane + i] * sv[c];
  return t.push(std::move(out), t.needs_grad({x, s}), [x, s, plane](Tape<Real>& tp, const Tensor<Real>& g) {
    const auto& xv = tp.value(x);
    const auto& sv = tp.value(s);
    auto* gx = tp.grad(x);
    auto* gs = tp.grad(s);
    for (std::size_t c = 0; c < sv.size(); ++c) {
      Real acc = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        if (gx) (*gx)[c * plane + i] += g[c * plane + i] * sv[c];
        acc += g[c * plane + i] * xv[c * plane + i];
      }
      if (gs) (*gs)[c] += acc;
    }
  });
}

/// Row `k` of a [K, S] tensor as an [S] tensor.
template <class Real>
Var row(Tape<Real>& t, Var m, std::size_t k) {
  const auto& mv = t.value(m);
  const std::size_t s = mv.dim(1);
  Tensor<Real> out({s});
  std::copy_n(mv.ptr() + k * s, s, out.ptr());
  return t.push(std::move(out), t.needs_grad({m}), [m, k, s](Tape<Real>& tp, const Tensor<Real>& g) {
    auto* gm = tp.grad(m);
    for (std::size_t j = 0; j < s; ++j) (*gm)[k * s + j] += g[j];
  });
}

/// sigmoid(logits / temperature) of a parameter. With `straight_through` the
/// forward value is the 0.5-thresholded mask and the backward pass uses the
/// soft gradient.
template <class Real>
Var soft_mask(Tape<Real>& t, std::size_t pid, Real temperature, bool straight_through) {
  const auto& lv = t.param(pid);
  Tensor<Real> soft(lv.shape()), out(lv.shape());
  for (std::size_t i = 0; i < lv.size(); ++i) {
    soft[i] = Real(1) / (Real(1) + std::exp(-lv[i] / temperature));
    out[i] = straight_through ? (soft[i] >= Real(0.5) ? Real(1) : Real(0)) : soft[i];
  }
  return t.push(std::move(out), true, [pid, temperature, soft](Tape<Real>& tp, const Tensor<Real>& g) {
    auto& gl = tp.param_grad(pid);
    for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i] * soft[i] * (Real(1) - soft[i]) / temperature;
  });
}

// ---------------------------------------------------------------------------
// Layers.

/// Pointwise affine map over the leading axis: x [Cin, N...] -> [Cout, N...],
/// weight [Cout, Cin], bias [Cout].
template <class Real>
Var linear(Tape<Real>& t, Var x, std::size_t w_pid, std::size_t b_pid) {
  const auto& xv = t.value(x);
  const auto& w = t.param(w_pid);
  const auto& b = t.param(b_pid);
  const std::size_t cin = xv.dim(0), n = xv.size() / cin, cout = w.dim(0);
  if (w.dim(1) != cin)
    throw ShapeError("linear: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  Shape shape = xv.shape();
  shape[0] = cout;
  Tensor<Real> out(shape);
  for (std::size_t o = 0; o < cout; ++o) {
    Real* y = out.ptr() + o * n;
    std::fill_n(y, n, b[o]);
    for (std::size_t i = 0; i < cin; ++i) detail::axpy(w[o * cin + i], xv.ptr() + i * n, y, n);
  }
  return t.push(std::move(out), true, [x, w_pid, b_pid, cin, cout, n](Tape<Real>& tp, const Tensor<Real>& g) {
    const Real* xp = tp.value(x).ptr();
    const Real* wp = tp.param(w_pid).ptr();
    Real* gw = tp.param_grad(w_pid).ptr();
    auto& gb = tp.param_grad(b_pid);
    auto* gx = tp.grad(x);
    for (std::size_t o = 0; o < cout; ++o) {
      const Real* gy = g.ptr() + o * n;
      Real s = 0;
      for (std::size_t k = 0; k < n; ++k) s += gy[k];
      gb[o] += s;
      for (std::size_t i = 0; i < cin; ++i) {
        gw[o * cin + i] += detail::dot(gy, xp + i * n, n);
        if (gx) detail::axpy(wp[o * cin + i], gy, gx->ptr() + i * n, n);
      }
    }
  });
}

/// Retained Fourier modes of an H x W half spectrum: rows {0..m-1} and
/// {H-m..H-1}, columns [0, m).
struct ModeSet {
  std::size_t rows = 0, cols = 0, modes = 0;
  std::vector<std::size_t> index;  // flat half-spectrum offsets, row-major over (row, col)

  ModeSet() = default;
  ModeSet(std::size_t h, std::size_t w, std::size_t m) : rows(h), cols(w), modes(m) {
    if (m == 0 || 2 * m > h || m > w / 2)
      throw ConfigError("retained modes " + std::to_string(m) + " exceed grid " + std::to_string(h) + "x" +
                        std::to_string(w));
    const std::size_t hc = w / 2 + 1;
    for (std::size_t i = 0; i < 2 * m; ++i) {
      const std::size_t r = i < m ? i : h - 2 * m + i;
      for (std::size_t q = 0; q < m; ++q) index.push_back(r * hc + q);
    }
  }
  std::size_t count() const { return index.size(); }
};

namespace detail {

// Real-linear synthesis of a half spectrum whose column 0 may be non-Hermitian:
// returns c2r of the Hermitian part of column 0 and the other columns scaled
// by col_scale (unnormalized).
template <class Real>
void synth_real(const Fft2<Real>& fft, std::vector<std::complex<Real>>& spec, Real col_scale, std::span<Real> out) {
  const std::size_t h = fft.rows(), hc = fft.half_cols();
  std::vector<std::complex<Real>> col(h);
  for (std::size_t r = 0; r < h; ++r) col[r] = spec[r * hc];
  for (std::size_t r = 0; r < h; ++r) spec[r * hc] = Real(0.5) * (col[r] + std::conj(col[(h - r) % h]));
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t q = 1; q < hc; ++q) spec[r * hc + q] *= col_scale;
  fft.inverse(spec, out);
}

}  // namespace detail

/// Fourier layer: y = Re(IDFT(W . DFT(x))) on retained modes. x [Cin,H,W];
/// weight [Cin, Cout, M, 2] holds complex multipliers per mode.
template <class Real>
Var spectral_conv(Tape<Real>& t, Var x, std::size_t w_pid, const ModeSet& modes) {
  using C = std::complex<Real>;
  const auto& xv = t.value(x);
  const auto& w = t.param(w_pid);
  const std::size_t cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
  const std::size_t cout = w.dim(1), m = modes.count();
  if (w.dim(0) != cin || w.dim(2) != m || modes.rows != h || modes.cols != wd)
    throw ShapeError("spectral_conv: weight " + shape_string(w.shape()) + " does not fit input " +
                     shape_string(xv.shape()));
  const Fft2<Real> fft(h, wd);
  const std::size_t n = h * wd;
  std::vector<C> spec(fft.spectrum_size());
  std::vector<C> xm(cin * m);
  for (std::size_t i = 0; i < cin; ++i) {
    fft.forward(xv.slab(i), spec);
    for (std::size_t k = 0; k < m; ++k) xm[i * m + k] = spec[modes.index[k]];
  }
  const C* wc = reinterpret_cast<const C*>(w.ptr());
  Tensor<Real> out({cout, h, wd});
  std::vector<C> ym(m);
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(ym.begin(), ym.end(), C{});
    for (std::size_t i = 0; i < cin; ++i) {
      const C* wr = wc + (i * cout + o) * m;
      const C* xr = xm.data() + i * m;
      for (std::size_t k = 0; k < m; ++k) ym[k] += xr[k] * wr[k];
    }
    std::fill(spec.begin(), spec.end(), C{});
    for (std::size_t k = 0; k < m; ++k) spec[modes.index[k]] = ym[k];
    detail::synth_real(fft, spec, Real(1), out.slab(o));
    for (auto& v : out.slab(o)) v /= Real(n);
  }
  return t.push(std::move(out), true,
                [x, w_pid, modes, xm = std::move(xm), cin, cout, h, wd](Tape<Real>& tp, const Tensor<Real>& g) {
                  const Fft2<Real> fft(h, wd);
                  const std::size_t n = h * wd, m = modes.count(), hc = wd / 2 + 1;
                  std::vector<C> spec(fft.spectrum_size());
                  std::vector<C> gy(cout * m);
                  for (std::size_t o = 0; o < cout; ++o) {
                    fft.forward(g.slab(o), spec);
                    for (std::size_t k = 0; k < m; ++k) {
                      const Real scale = (modes.index[k] % hc == 0 ? Real(1) : Real(2)) / Real(n);
                      gy[o * m + k] = spec[modes.index[k]] * scale;
                    }
                  }
                  C* gw = reinterpret_cast<C*>(tp.param_grad(w_pid).ptr());
                  const C* wc = reinterpret_cast<const C*>(tp.param(w_pid).ptr());
                  auto* gx = tp.grad(x);
                  std::vector<C> gxm(m);
                  for (std::size_t i = 0; i < cin; ++i) {
                    std::fill(gxm.begin(), gxm.end(), C{});
                    for (std::size_t o = 0; o < cout; ++o) {
                      const std::size_t base = (i * cout + o) * m;
                      for (std::size_t k = 0; k < m; ++k) {
                        gw[base + k] += gy[o * m + k] * std::conj(xm[i * m + k]);
                        gxm[k] += gy[o * m + k] * std::conj(wc[base + k]);
                      }
                    }
                    if (!gx) continue;
                    std::fill(spec.begin(), spec.end(), C{});
                    for (std::size_t k = 0; k < m; ++k) spec[modes.index[k]] = gxm[k];
                    std::vector<Real> buf(n);
                    detail::synth_real(fft, spec, Real(0.5), std::span<Real>(buf));
                    auto dst = gx->slab(i);
                    for (std::size_t j = 0; j < n; ++j) dst[j] += buf[j];
                  }
                });
}

/// Differentiable derivative stack [C,H,W] -> [5C,H,W].
template <class Real>
Var derivative_stack(Tape<Real>& t, Var u, const spectral::SpectralGrid& grid) {
  return t.push(spectral::derivative_stack(t.value(u), grid), t.needs_grad({u}),
                [u, grid](Tape<Real>& tp, const Tensor<Real>& g) {
                  detail::add_into(*tp.grad(u), spectral::derivative_stack_transpose(g, grid));
                });
}

// ---------------------------------------------------------------------------
// Scalar losses; results have shape {1}.

template <class Real>
Var mse(Tape<Real>& t, Var a, const Tensor<Real>& target) {
  const auto& av = t.value(a);
  require_same_shape(av, target, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = double(av[i]) - double(target[i]);
    acc += d * d;
  }
  Tensor<Real> out({1}, Real(acc / double(av.size())));
  return t.push(std::move(out), t.needs_grad({a}), [a, target](Tape<Real>& tp, const Tensor<Real>& g) {
    auto* ga = tp.grad(a);
    const auto& av = tp.value(a);
    const Real c = Real(2) * g[0] / Real(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += c * (av[i] - target[i]);
  });
}

/// Frequency-weighted squared spectral error against a fixed target.
template <class Real>
Var freq_error(Tape<Real>& t, Var a, const Tensor<Real>& target) {
  Tensor<Real> grad;
  const double v = spectral::freq_weighted_sq_error(t.value(a), target, t.needs_grad({a}) ? &grad : nullptr);
  return t.push(Tensor<Real>({1}, Real(v)), t.needs_grad({a}),
                [a, grad = std::move(grad)](Tape<Real>& tp, const Tensor<Real>& g) {
                  auto* ga = tp.grad(a);
                  for (std::size_t i = 0; i < grad.size(); ++i) (*ga)[i] += g[0] * grad[i];
                });
}

/// sum_i coeff_i * s_i over scalar nodes.
template <class Real>
Var weighted_sum(Tape<Real>& t, const std::vector<Var>& terms, const std::vector<Real>& coeff) {
  if (terms.size() != coeff.size()) throw ShapeError("weighted_sum: term/coefficient count mismatch");
  double acc = 0.0;
  bool ng = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    acc += double(coeff[i]) * double(t.value(terms[i])[0]);
    ng = ng || t.needs_grad(terms[i]);
  }
  return t.push(Tensor<Real>({1}, Real(acc)), ng, [terms, coeff](Tape<Real>& tp, const Tensor<Real>& g) {
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (auto* gt = tp.grad(terms[i])) (*gt)[0] += g[0] * coeff[i];
  });
}

/// (1/K^2) sum_{i,j} exp(-|m_i - m_j|^2) over the rows of a [K, S] mask.
template <class Real>
Var mask_diversity(Tape<Real>& t, Var masks) {
  const auto& mv = t.value(masks);
  const std::size_t k = mv.dim(0), s = mv.dim(1);
  std::vector<double> e(k * k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < s; ++c) {
        const double d = double(mv[i * s + c]) - double(mv[j * s + c]);
        d2 += d * d;
      }
      e[i * k + j] = std::exp(-d2);
      acc += e[i * k + j];
    }
  const double kk = double(k * k);
  return t.push(Tensor<Real>({1}, Real(acc / kk)), t.needs_grad({masks}),
                [masks, e, k, s, kk](Tape<Real>& tp, const Tensor<Real>& g) {
                  const auto& mv = tp.value(masks);
                  auto* gm = tp.grad(masks);
                  // d/dm_i of sum_{a,b} exp(-|m_a-m_b|^2): pairs (i,j) and (j,i) both contribute.
                  for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                      if (i == j) continue;
                      const double c = -4.0 * e[i * k + j] / kk * double(g[0]);
                      for (std::size_t q = 0; q < s; ++q)
                        (*gm)[i * s + q] += Real(c * (double(mv[i * s + q]) - double(mv[j * s + q])));
                    }
                });
}

}  // namespace imooe::ad
