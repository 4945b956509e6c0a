#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "imooe/autodiff.hpp"
#include "imooe/errors.hpp"
#include "imooe/model/config.hpp"
#include "imooe/random.hpp"
#include "imooe/spectral.hpp"
#include "imooe/tensor.hpp"

namespace imooe::model {

/// Output of a taped rollout: one [C,H,W] node per predicted frame.
struct Rollout {
  std::vector<ad::Var> frames;
  ad::Var masks;
};

/// K masked FNO experts, per-expert conditioning heads and a fusion rule,
/// advanced by Euler increments u_{t+1} = u_t + h(window, derivatives, p, f).
template <std::floating_point Real>
class MooeModel {
 public:
  using Tape = ad::Tape<Real>;
  using Var = ad::Var;

  explicit MooeModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    modes_ = ad::ModeSet(cfg_.rows, cfg_.cols, cfg_.modes);
    grid_ = spectral::SpectralGrid(cfg_.rows, cfg_.cols, double(cfg_.cols), double(cfg_.rows));
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterSet<Real>& params() { return params_; }
  const ad::ParameterSet<Real>& params() const { return params_; }
  /// Grid used for the model's derivative inputs (grid-unit spacing).
  const spectral::SpectralGrid& derivative_grid() const { return grid_; }

  /// [2,H,W] normalized coordinates: channel 0 is x = j/W, channel 1 is y = i/H.
  Tensor<Real> coordinates() const {
    Tensor<Real> c({2, cfg_.rows, cfg_.cols});
    for (std::size_t i = 0; i < cfg_.rows; ++i)
      for (std::size_t j = 0; j < cfg_.cols; ++j) {
        c(0, i, j) = Real(double(j) / double(cfg_.cols));
        c(1, i, j) = Real(double(i) / double(cfg_.rows));
      }
    return c;
  }

  /// Condition vector broadcast to [cond_dim, H, W].
  Tensor<Real> condition_field(const std::vector<double>& cond) const {
    if (cond.size() != cfg_.cond_dim)
      throw ShapeError("condition vector has " + std::to_string(cond.size()) + " entries, model expects " +
                       std::to_string(cfg_.cond_dim));
    Tensor<Real> f({cfg_.cond_dim, cfg_.rows, cfg_.cols});
    const std::size_t plane = cfg_.rows * cfg_.cols;
    for (std::size_t k = 0; k < cfg_.cond_dim; ++k) std::fill_n(f.ptr() + k * plane, plane, Real(cond[k]));
    return f;
  }

  /// Mask values [K, 5C] for the given use; kinds disabled in the config are zero.
  Var masks(Tape& t, MaskUse use) const {
    const auto gate = cfg_.kind_gate();
    Tensor<Real> g({1, gate.size()});
    for (std::size_t j = 0; j < gate.size(); ++j) g[j] = Real(gate[j]);
    const std::size_t k = cfg_.experts, s = cfg_.stack_channels();
    if (cfg_.mask == MaskMode::none) {
      Tensor<Real> m({k, s});
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < s; ++j) m[i * s + j] = g[j];
      return t.constant(std::move(m));
    }
    Var m;
    if (use == MaskUse::hard) {
      Tensor<Real> hard({k, s});
      for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = hard_value(params_.value(mask_pid_)[i]);
      m = t.constant(std::move(hard));
    } else {
      m = ad::soft_mask(t, mask_pid_, Real(cfg_.mask_temperature), use == MaskUse::straight_through);
    }
    Tensor<Real> gates({k, s});
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < s; ++j) gates[i * s + j] = g[j];
    return ad::mul_const(t, m, gates);
  }

  /// Thresholded masks at 0.5 after the kind gate, [K, 5C].
  Tensor<Real> hard_masks() const {
    ad::Gradients<Real>* none = nullptr;
    Tape t(params_, none);
    return t.value(masks(t, MaskUse::hard));
  }

  /// sigma_i applied to [coords; window; mask_row * derivs].
  Var expert_forward(Tape& t, std::size_t i, Var coords, Var window, Var derivs, Var mask_row) const {
    const auto& e = experts_.at(i);
    if (t.value(derivs).dim(0) != cfg_.stack_channels())
      throw ShapeError("derivative stack has " + std::to_string(t.value(derivs).dim(0)) + " channels, expected " +
                       std::to_string(cfg_.stack_channels()));
    const Var gated = ad::scale_channels(t, derivs, mask_row);
    Var x = ad::concat(t, {coords, window, gated});
    x = ad::linear(t, x, e.lift_w, e.lift_b);
    for (const auto& layer : e.layers) {
      const Var s = ad::spectral_conv(t, x, layer.spec_w, modes_);
      const Var b = ad::linear(t, x, layer.bypass_w, layer.bypass_b);
      x = ad::gelu(t, ad::add(t, s, b));
    }
    x = ad::gelu(t, ad::linear(t, x, e.proj1_w, e.proj1_b));
    return ad::linear(t, x, e.proj2_w, e.proj2_b);
  }

  /// MLP_i over [sigma_i; cond] -> [C,H,W].
  Var head(Tape& t, std::size_t i, Var sigma, Var cond_field) const {
    const auto& h = heads_.at(i);
    Var x = ad::concat(t, {sigma, cond_field});
    x = ad::gelu(t, ad::linear(t, x, h.w1, h.b1));
    return ad::linear(t, x, h.w2, h.b2);
  }

  /// Additive: sum of head outputs. Nonlinear: pointwise MLP over their concatenation.
  Var fuse(Tape& t, const std::vector<Var>& expert_outs, Var cond_field) const {
    if (expert_outs.size() != cfg_.experts) throw ShapeError("fuse: expected one output per expert");
    if (t.value(cond_field).dim(0) != cfg_.cond_dim)
      throw ShapeError("condition has " + std::to_string(t.value(cond_field).dim(0)) + " channels, cond_dim is " +
                       std::to_string(cfg_.cond_dim));
    std::vector<Var> heads;
    for (std::size_t i = 0; i < expert_outs.size(); ++i) heads.push_back(head(t, i, expert_outs[i], cond_field));
    if (cfg_.fusion == FusionMode::additive) {
      Var acc = heads[0];
      for (std::size_t i = 1; i < heads.size(); ++i) acc = ad::add(t, acc, heads[i]);
      return acc;
    }
    Var x = ad::concat(t, heads);
    for (const auto& l : fusion_hidden_) x = ad::gelu(t, ad::linear(t, x, l.w, l.b));
    return ad::linear(t, x, fusion_out_.w, fusion_out_.b);
  }

  /// Increment h for the newest frame of `window` (W frames of [C,H,W], oldest first).
  Var increment(Tape& t, const std::vector<Var>& window, Var coords, Var cond_field, Var masks) const {
    if (window.size() != cfg_.window) throw ShapeError("window must hold " + std::to_string(cfg_.window) + " frames");
    const Var stacked = ad::concat(t, window);
    const Var derivs = ad::derivative_stack(t, window.back(), grid_);
    std::vector<Var> outs;
    for (std::size_t i = 0; i < cfg_.experts; ++i)
      outs.push_back(expert_forward(t, i, coords, stacked, derivs, ad::row(t, masks, i)));
    return fuse(t, outs, cond_field);
  }

  /// Autoregressive rollout from a [W, C, H, W] history of normalized frames.
  Rollout rollout(Tape& t, const Tensor<Real>& history, std::size_t steps, const std::vector<double>& cond,
                  MaskUse use) const {
    check_history(history);
    if (steps < 1) throw ConfigError("rollout needs steps >= 1");
    const Var coords = t.constant(coordinates());
    const Var cf = t.constant(condition_field(cond));
    Rollout out;
    out.masks = masks(t, use);
    std::vector<Var> window;
    const Shape frame{cfg_.channels, cfg_.rows, cfg_.cols};
    for (std::size_t w = 0; w < cfg_.window; ++w) {
      auto s = history.slab(w);
      window.push_back(t.constant(Tensor<Real>(frame, std::vector<Real>(s.begin(), s.end()))));
    }
    for (std::size_t k = 0; k < steps; ++k) {
      const Var h = increment(t, window, coords, cf, out.masks);
      const Var next = ad::add(t, window.back(), h);
      if (!t.value(next).all_finite())
        throw NonFiniteError("rollout produced a non-finite frame at step " + std::to_string(k));
      out.frames.push_back(next);
      window.erase(window.begin());
      window.push_back(next);
    }
    return out;
  }

  /// Gradient-free rollout: [steps, C, H, W].
  Tensor<Real> predict(const Tensor<Real>& history, std::size_t steps, const std::vector<double>& cond,
                       MaskUse use) const {
    Tape t(params_, nullptr);
    const Rollout r = rollout(t, history, steps, cond, use);
    Tensor<Real> out({steps, cfg_.channels, cfg_.rows, cfg_.cols});
    for (std::size_t k = 0; k < steps; ++k) {
      const auto& v = t.value(r.frames[k]);
      std::copy(v.data().begin(), v.data().end(), out.slab(k).begin());
    }
    return out;
  }

  std::size_t mask_param() const { return mask_pid_; }
  bool has_mask_param() const { return cfg_.mask == MaskMode::learned; }

  /// Thresholds a logit at soft value 0.5, i.e. logit >= 0.
  static Real hard_value(Real logit) { return logit >= Real(0) ? Real(1) : Real(0); }

 private:
  struct Layer {
    std::size_t spec_w, bypass_w, bypass_b;
  };
  struct Expert {
    std::size_t lift_w, lift_b;
    std::vector<Layer> layers;
    std::size_t proj1_w, proj1_b, proj2_w, proj2_b;
  };
  struct Head {
    std::size_t w1, b1, w2, b2;
  };
  struct Dense {
    std::size_t w, b;
  };

  void check_history(const Tensor<Real>& h) const {
    const Shape want{cfg_.window, cfg_.channels, cfg_.rows, cfg_.cols};
    if (h.shape() != want)
      throw ShapeError("history has shape " + shape_string(h.shape()) + ", expected " + shape_string(want));
  }

  Dense dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(in));
    Tensor<Real> w({out, in}), b({out});
    for (auto& v : w.data()) v = Real(uniform(rng, -bound, bound));
    for (auto& v : b.data()) v = Real(uniform(rng, -bound, bound));
    return {params_.add(name + ".w", std::move(w)), params_.add(name + ".b", std::move(b))};
  }

  std::size_t spectral_weight(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double scale = 1.0 / double(in * out);
    Tensor<Real> w({in, out, modes_.count(), 2});
    for (auto& v : w.data()) v = Real(scale * uniform(rng, 0.0, 1.0));
    return params_.add(name, std::move(w));
  }

  void build() {
    Rng rng(cfg_.init_seed);
    const std::size_t c = cfg_.channels, wd = cfg_.width;
    for (std::size_t i = 0; i < cfg_.experts; ++i) {
      const std::string p = "expert" + std::to_string(i);
      Expert e;
      auto lift = dense(p + ".lift", cfg_.expert_inputs(), wd, rng);
      e.lift_w = lift.w;
      e.lift_b = lift.b;
      for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string lp = p + ".layer" + std::to_string(l);
        Layer layer;
        layer.spec_w = spectral_weight(lp + ".spectral", wd, wd, rng);
        auto by = dense(lp + ".bypass", wd, wd, rng);
        layer.bypass_w = by.w;
        layer.bypass_b = by.b;
        e.layers.push_back(layer);
      }
      auto p1 = dense(p + ".proj1", wd, cfg_.proj_width(), rng);
      auto p2 = dense(p + ".proj2", cfg_.proj_width(), c, rng);
      e.proj1_w = p1.w;
      e.proj1_b = p1.b;
      e.proj2_w = p2.w;
      e.proj2_b = p2.b;
      experts_.push_back(std::move(e));
    }
    for (std::size_t i = 0; i < cfg_.experts; ++i) {
      const std::string p = "head" + std::to_string(i);
      auto a = dense(p + ".hidden", c + cfg_.cond_dim, cfg_.head_width, rng);
      auto b = dense(p + ".out", cfg_.head_width, c, rng);
      heads_.push_back({a.w, a.b, b.w, b.b});
    }
    if (cfg_.fusion == FusionMode::nonlinear) {
      std::size_t in = cfg_.experts * c;
      for (std::size_t l = 0; l < cfg_.fusion_depth; ++l) {
        fusion_hidden_.push_back(dense("fusion.hidden" + std::to_string(l), in, cfg_.fusion_width, rng));
        in = cfg_.fusion_width;
      }
      fusion_out_ = dense("fusion.out", in, c, rng);
    }
    if (cfg_.mask == MaskMode::learned) {
      Tensor<Real> logits({cfg_.experts, cfg_.stack_channels()});
      for (auto& v : logits.data()) v = Real(standard_normal(rng));
      mask_pid_ = params_.add("mask.logits", std::move(logits));
    }
  }

  ModelConfig cfg_;
  ad::ModeSet modes_;
  spectral::SpectralGrid grid_;
  ad::ParameterSet<Real> params_;
  std::vector<Expert> experts_;
  std::vector<Head> heads_;
  std::vector<Dense> fusion_hidden_;
  Dense fusion_out_{};
  std::size_t mask_pid_ = 0;
};

}  // namespace imooe::model
