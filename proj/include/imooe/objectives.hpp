#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/spectral.hpp"
#include "imooe/tensor.hpp"
#include "json.hpp"

namespace imooe::objectives {

enum class ScheduleMode { linear, fixed };

/// lambda_inv is 0 before warmup_end, ramps linearly to its maximum on
/// [warmup_end, ramp_end) and stays there until total.
struct Schedule {
  ScheduleMode mode = ScheduleMode::linear;
  std::size_t warmup_end = 175;
  std::size_t ramp_end = 325;
  std::size_t total = 500;

  /// The default 175/325/500 shape stretched to `epochs`.
  static Schedule proportional(std::size_t epochs) {
    Schedule s;
    s.total = epochs;
    s.warmup_end = static_cast<std::size_t>(std::llround(double(epochs) * 175.0 / 500.0));
    s.ramp_end = static_cast<std::size_t>(std::llround(double(epochs) * 325.0 / 500.0));
    if (s.ramp_end <= s.warmup_end) s.ramp_end = s.warmup_end + 1;
    return s;
  }
};

struct LossWeights {
  double pred = 1.0;
  double freq = 0.1;
  double mask = 0.001;
  double inv_max = 0.001;
  Schedule schedule;

  void validate() const {
    for (double v : {pred, freq, mask, inv_max})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
    if (schedule.mode == ScheduleMode::linear &&
        !(schedule.warmup_end < schedule.ramp_end && schedule.ramp_end <= schedule.total))
      throw ConfigError("schedule needs warmup_end < ramp_end <= total");
  }
};

inline double lambda_inv(std::size_t epoch, const LossWeights& w) {
  const Schedule& s = w.schedule;
  if (epoch >= s.total)
    throw ConfigError("epoch " + std::to_string(epoch) + " outside schedule [0," + std::to_string(s.total) + ")");
  if (s.mode == ScheduleMode::fixed) return w.inv_max;
  if (epoch < s.warmup_end) return 0.0;
  if (epoch >= s.ramp_end) return w.inv_max;
  return double(epoch - s.warmup_end) / double(s.ramp_end - s.warmup_end) * w.inv_max;
}

/// Mean squared error over every entry of two equally shaped sequences.
template <class Real>
double prediction_risk(const Tensor<Real>& pred, const Tensor<Real>& truth) {
  require_same_shape(pred, truth, "prediction_risk");
  if (pred.empty()) throw ShapeError("prediction_risk of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(truth[i]);
    acc += d * d;
  }
  return acc / double(pred.size());
}

/// Mean over steps of the frequency-weighted error of [S,C,H,W] sequences.
template <class Real>
double frequency_risk(const Tensor<Real>& pred, const Tensor<Real>& truth) {
  require_same_shape(pred, truth, "frequency_risk");
  if (pred.rank() != 4) throw ShapeError("frequency_risk expects [steps,C,H,W]");
  const Shape frame{pred.dim(1), pred.dim(2), pred.dim(3)};
  double acc = 0.0;
  for (std::size_t s = 0; s < pred.dim(0); ++s) {
    auto a = pred.slab(s), b = truth.slab(s);
    acc += spectral::freq_weighted_sq_error(Tensor<Real>(frame, std::vector<Real>(a.begin(), a.end())),
                                            Tensor<Real>(frame, std::vector<Real>(b.begin(), b.end())));
  }
  return acc / double(pred.dim(0));
}

/// (1/K^2) sum_{i,j} exp(-|m_i - m_j|^2) over the rows of a [K,S] mask.
inline double mask_diversity_loss(const Tensor<double>& masks) {
  if (masks.rank() != 2) throw ShapeError("mask_diversity_loss expects [K,S]");
  const std::size_t k = masks.dim(0), s = masks.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < s; ++c) {
        const double d = masks(i, c) - masks(j, c);
        d2 += d * d;
      }
      acc += std::exp(-d2);
    }
  return acc / double(k * k);
}

enum class PartitionMode { by_env, by_env_and_step };

inline std::string to_string(PartitionMode m) { return m == PartitionMode::by_env ? "by_env" : "by_env_and_step"; }
inline PartitionMode parse_partition(const std::string& s) {
  if (s == "by_env") return PartitionMode::by_env;
  if (s == "by_env_and_step") return PartitionMode::by_env_and_step;
  throw ConfigError("unknown partition mode '" + s + "' (by_env|by_env_and_step)");
}

/// Environment key: physical env id, and the step bucket (-1 when unused).
struct RiskKey {
  std::int64_t env = 0;
  std::int64_t step = -1;
  auto operator<=>(const RiskKey&) const = default;
};

/// Key of rollout step `step` of an element from `env`. Steps are grouped
/// into buckets of `bucket` consecutive steps.
inline RiskKey partition_key(std::int64_t env, std::size_t step, PartitionMode mode, std::size_t bucket = 1) {
  if (mode == PartitionMode::by_env) return {env, -1};
  return {env, static_cast<std::int64_t>(step / std::max<std::size_t>(1, bucket))};
}

/// One key per (element, step), element-major.
inline std::vector<RiskKey> partition_keys(const std::vector<std::int64_t>& env_ids, std::size_t steps,
                                           PartitionMode mode, std::size_t bucket = 1) {
  std::vector<RiskKey> out;
  out.reserve(env_ids.size() * steps);
  for (auto e : env_ids)
    for (std::size_t s = 0; s < steps; ++s) out.push_back(partition_key(e, s, mode, bucket));
  return out;
}

/// Mean risk per key; iteration order is the key order.
using RiskTable = std::map<RiskKey, double>;

/// Population variance of the keyed risks.
inline double risk_variance(const RiskTable& risks) {
  if (risks.empty()) throw ConfigError("risk_variance of an empty table");
  double mean = 0.0;
  for (const auto& [k, r] : risks) mean += r;
  mean /= double(risks.size());
  double var = 0.0;
  for (const auto& [k, r] : risks) var += (r - mean) * (r - mean);
  return var / double(risks.size());
}

/// d Var / d R_k for every key, in table order.
inline std::vector<double> risk_variance_gradient(const RiskTable& risks) {
  double mean = 0.0;
  for (const auto& [k, r] : risks) mean += r;
  mean /= double(risks.size());
  std::vector<double> g;
  for (const auto& [k, r] : risks) g.push_back(2.0 * (r - mean) / double(risks.size()));
  return g;
}

struct LossBreakdown {
  double pred = 0.0;
  double inv = 0.0;
  double freq = 0.0;
  double mask = 0.0;
  double lambda_inv = 0.0;
  double total = 0.0;
};

inline LossBreakdown total_loss(double pred, double inv, double freq, double mask, double lambda_inv_now,
                                const LossWeights& w) {
  LossBreakdown b{pred, inv, freq, mask, lambda_inv_now, 0.0};
  b.total = w.pred * pred + lambda_inv_now * inv + w.freq * freq + w.mask * mask;
  return b;
}

inline LossBreakdown total_loss(double pred, double inv, double freq, double mask, std::size_t epoch,
                                const LossWeights& w) {
  return total_loss(pred, inv, freq, mask, lambda_inv(epoch, w), w);
}

inline nlohmann::json to_json(const LossBreakdown& b, std::size_t epoch, std::size_t step) {
  return {{"epoch", epoch}, {"step", step},           {"pred", b.pred},   {"inv", b.inv},
          {"freq", b.freq}, {"mask", b.mask},         {"lambda_inv", b.lambda_inv}, {"total", b.total}};
}

/// Per-step losses of one batch element.
struct ElementLosses {
  std::int64_t env = 0;
  std::vector<double> mse;   // prediction risk per rollout step
  std::vector<double> freq;  // frequency risk per rollout step (may be empty)
};

/// Batch objective and the derivative of the total with respect to every
/// per-step loss, used to seed backpropagation.
struct BatchObjective {
  LossBreakdown breakdown;
  RiskTable risks;
  std::vector<std::vector<double>> mse_coeff;
  std::vector<std::vector<double>> freq_coeff;
  double mask_coeff = 0.0;
};

/// L_pred = mean over envs of R^e (batch mean of the per-element step-mean
/// risk); L_inv = population variance over partition keys; L_freq = mean over
/// envs of the analogous frequency risk.
inline BatchObjective batch_objective(const std::vector<ElementLosses>& elems, PartitionMode mode,
                                      std::size_t bucket, const LossWeights& w, double lambda_inv_now,
                                      double mask_value) {
  if (elems.empty()) throw ConfigError("batch_objective of an empty batch");
  const std::size_t steps = elems[0].mse.size();
  for (const auto& e : elems)
    if (e.mse.size() != steps || (!e.freq.empty() && e.freq.size() != steps))
      throw ShapeError("batch elements have differing rollout lengths");
  std::map<std::int64_t, std::size_t> per_env;
  for (const auto& e : elems) ++per_env[e.env];
  const double n_env = double(per_env.size());

  std::map<RiskKey, std::pair<double, std::size_t>> sums;
  double pred = 0.0, freq = 0.0;
  for (const auto& e : elems) {
    const double share = 1.0 / (n_env * double(per_env[e.env]) * double(steps));
    for (std::size_t s = 0; s < steps; ++s) {
      auto& acc = sums[partition_key(e.env, s, mode, bucket)];
      acc.first += e.mse[s];
      acc.second += 1;
      pred += share * e.mse[s];
      if (!e.freq.empty()) freq += share * e.freq[s];
    }
  }
  BatchObjective out;
  for (const auto& [k, v] : sums) out.risks[k] = v.first / double(v.second);
  const double inv = risk_variance(out.risks);
  out.breakdown = total_loss(pred, inv, freq, mask_value, lambda_inv_now, w);

  std::map<RiskKey, double> key_coeff;
  const auto vg = risk_variance_gradient(out.risks);
  std::size_t i = 0;
  for (const auto& [k, v] : sums) key_coeff[k] = lambda_inv_now * vg[i++] / double(v.second);
  for (const auto& e : elems) {
    const double share = 1.0 / (n_env * double(per_env[e.env]) * double(steps));
    std::vector<double> cm(steps), cf(e.freq.empty() ? 0 : steps);
    for (std::size_t s = 0; s < steps; ++s) {
      cm[s] = w.pred * share + key_coeff[partition_key(e.env, s, mode, bucket)];
      if (!cf.empty()) cf[s] = w.freq * share;
    }
    out.mse_coeff.push_back(std::move(cm));
    out.freq_coeff.push_back(std::move(cf));
  }
  out.mask_coeff = w.mask;
  return out;
}

}  // namespace imooe::objectives
