#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "imooe/autodiff.hpp"
#include "imooe/datasets/io.hpp"
#include "imooe/evaluation/report.hpp"
#include "imooe/model/checkpoint.hpp"
#include "imooe/model/mooe.hpp"
#include "imooe/objectives.hpp"
#include "imooe/parallel.hpp"
#include "imooe/random.hpp"
#include "imooe/training/adam.hpp"
#include "imooe/training/config.hpp"
#include "json.hpp"

namespace imooe::training {

/// Normalized training samples with their environment bookkeeping.
template <std::floating_point Real>
struct TrainingSet {
  std::vector<Tensor<Real>> samples;        // [N_t, C, H, W]
  std::vector<std::size_t> sample_env;      // index into envs
  std::vector<datasets::Environment> envs;
  std::vector<std::vector<double>> cond;    // per env
  model::Normalization normalization;
  model::ConditionStats condition;
  std::size_t saved_steps = 0;
};

template <std::floating_point Real>
TrainingSet<Real> prepare_training_set(const datasets::Dataset& data, const model::ModelConfig& mc) {
  const auto& m = data.manifest;
  for (double s : m.normalization.std)
    if (!(s > 0.0)) throw ConfigError("training data has a channel with zero std");
  TrainingSet<Real> ts;
  ts.normalization = {m.normalization.mean, m.normalization.std};
  ts.envs = m.environments;
  ts.condition = evaluation::condition_stats(m.environments);
  ts.saved_steps = m.saved_steps;
  for (const auto& e : ts.envs)
    ts.cond.push_back(evaluation::condition_vector(e, ts.condition, mc.known_parameters, mc.cond_dim));
  const std::size_t plane = m.resolution * m.resolution;
  const std::size_t traj_len = m.saved_steps * m.channels * plane;
  for (std::size_t e = 0; e < m.environments.size(); ++e)
    for (std::size_t t = 0; t < m.trajectories_per_env; ++t) {
      Tensor<Real> s({m.saved_steps, m.channels, m.resolution, m.resolution});
      const float* src = data.arrays[e].ptr() + t * traj_len;
      for (std::size_t f = 0; f < m.saved_steps; ++f)
        for (std::size_t c = 0; c < m.channels; ++c)
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t o = (f * m.channels + c) * plane + i;
            s[o] = Real((double(src[o]) - m.normalization.mean[c]) / m.normalization.std[c]);
          }
      ts.samples.push_back(std::move(s));
      ts.sample_env.push_back(e);
    }
  return ts;
}

/// Fills data-dependent model fields (channels, grid, condition length).
inline model::ModelConfig bind_model_config(model::ModelConfig mc, const datasets::DatasetManifest& m) {
  mc.channels = m.channels;
  mc.rows = mc.cols = m.resolution;
  mc.cond_dim = m.environments.empty() ? 1 : std::max<std::size_t>(1, m.environments[0].condition_vector().size());
  return mc;
}

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  objectives::LossBreakdown loss;
};

template <std::floating_point Real>
class Trainer {
 public:
  Trainer(TrainConfig cfg, const datasets::Dataset& train, std::filesystem::path out_dir = {},
          const model::Checkpoint<Real>* resume = nullptr)
      : cfg_(std::move(cfg)),
        out_(std::move(out_dir)),
        model_(init_model(cfg_, train.manifest, resume)),
        data_(prepare_training_set<Real>(train, model_.config())),
        system_(datasets::to_string(train.manifest.system)) {
    if (data_.saved_steps <= model_.config().window)
      throw ConfigError("trajectories have " + std::to_string(data_.saved_steps) + " frames; window " +
                        std::to_string(model_.config().window) + " leaves nothing to predict");
    const std::size_t full = data_.saved_steps - model_.config().window;
    steps_ = cfg_.rollout_steps ? std::min(cfg_.rollout_steps, full) : full;
    adam_.beta1 = cfg_.beta1;
    adam_.beta2 = cfg_.beta2;
    adam_.eps = cfg_.eps;
    adam_.init(model_.params());
    if (resume) restore_state(*resume);
    if (!out_.empty()) std::filesystem::create_directories(out_);
  }

  const TrainConfig& config() const { return cfg_; }
  const model::MooeModel<Real>& model() const { return model_; }
  model::MooeModel<Real>& model() { return model_; }
  const TrainingSet<Real>& data() const { return data_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t global_step() const { return step_; }
  bool done() const { return epoch_ >= cfg_.epochs; }
  std::size_t rollout_steps() const { return steps_; }
  const std::vector<StepRecord>& history() const { return history_; }

  /// Sample indices of each batch of `epoch`: per-environment shuffles
  /// interleaved round-robin, then cut into batch_size chunks.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const {
    Rng rng(derive_seed(cfg_.seed, {0x62617463ULL, epoch}));
    std::vector<std::vector<std::size_t>> per_env(data_.envs.size());
    for (std::size_t i = 0; i < data_.samples.size(); ++i) per_env[data_.sample_env[i]].push_back(i);
    std::size_t longest = 0;
    for (auto& v : per_env) {
      std::shuffle(v.begin(), v.end(), rng);
      longest = std::max(longest, v.size());
    }
    std::vector<std::size_t> order;
    for (std::size_t r = 0; r < longest; ++r)
      for (auto& v : per_env)
        if (r < v.size()) order.push_back(v[r]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += cfg_.batch_size)
      batches.emplace_back(order.begin() + long(s), order.begin() + long(std::min(order.size(), s + cfg_.batch_size)));
    return batches;
  }

  double learning_rate(std::size_t epoch) const {
    if (cfg_.lr_schedule == "cosine" && cfg_.epochs > 0)
      return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(cfg_.epochs)));
    return cfg_.lr;
  }

  /// Loss breakdown and gradient of one batch without updating weights.
  objectives::LossBreakdown batch_gradient(const std::vector<std::size_t>& batch, std::size_t epoch,
                                           ad::Gradients<Real>& grads) const {
    const double lam = objectives::lambda_inv(epoch, cfg_.loss);
    const std::size_t workers = worker_count(cfg_.workers);
    const double mask_value = mask_term(&grads);

    std::vector<objectives::ElementLosses> elems(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      elems[b].env = data_.envs[data_.sample_env[batch[b]]].env_id;
      elems[b].mse.assign(steps_, 0.0);
      elems[b].freq.assign(steps_, 0.0);
    }
    const bool two_pass = lam > 0.0;
    if (two_pass)
      parallel_for(batch.size(), workers, [&](std::size_t b) { elems[b] = sample_losses(batch[b], nullptr, {}, {}); });
    const auto coeffs =
        objectives::batch_objective(elems, cfg_.partition, cfg_.step_bucket, cfg_.loss, lam, mask_value);

    // Chunks of `workers` samples; per-sample buffers are summed in sample order.
    std::vector<ad::Gradients<Real>> per(std::min(workers, batch.size()));
    for (std::size_t start = 0; start < batch.size(); start += per.size()) {
      const std::size_t n = std::min(per.size(), batch.size() - start);
      parallel_for(n, workers, [&](std::size_t j) {
        const std::size_t b = start + j;
        per[j] = model_.params().zeros_like();
        elems[b] = sample_losses(batch[b], &per[j], coeffs.mse_coeff[b], coeffs.freq_coeff[b]);
      });
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < grads.size(); ++i) ad::detail::add_into(grads[i], per[j][i]);
    }
    return objectives::batch_objective(elems, cfg_.partition, cfg_.step_bucket, cfg_.loss, lam, mask_value).breakdown;
  }

  /// Loss breakdown of one batch from a value-only pass.
  objectives::LossBreakdown batch_loss(const std::vector<std::size_t>& batch, std::size_t epoch) const {
    const double lam = objectives::lambda_inv(epoch, cfg_.loss);
    std::vector<objectives::ElementLosses> elems(batch.size());
    parallel_for(batch.size(), worker_count(cfg_.workers),
                 [&](std::size_t b) { elems[b] = sample_losses(batch[b], nullptr, {}, {}); });
    return objectives::batch_objective(elems, cfg_.partition, cfg_.step_bucket, cfg_.loss, lam, mask_term(nullptr))
        .breakdown;
  }

  /// Runs one epoch; returns its step records.
  std::vector<StepRecord> run_epoch() {
    if (done()) return {};
    std::vector<StepRecord> out;
    for (const auto& batch : epoch_batches(epoch_)) {
      auto grads = model_.params().zeros_like();
      const std::string where = "epoch " + std::to_string(epoch_) + " step " + std::to_string(step_) +
                                "; last good checkpoint: " + (last_good_.empty() ? "none" : last_good_.string());
      objectives::LossBreakdown loss;
      try {
        loss = batch_gradient(batch, epoch_, grads);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " at " + where);
      }
      if (!std::isfinite(loss.total)) throw NonFiniteError("non-finite loss at " + where);
      adam_.step(model_.params(), grads, learning_rate(epoch_));
      out.push_back({epoch_, step_, loss});
      ++step_;
    }
    ++epoch_;
    history_.insert(history_.end(), out.begin(), out.end());
    append_history(out);
    if (!out_.empty() && cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0) {
      model::save_checkpoint(checkpoint(), out_ / "last.ckpt");
      last_good_ = out_ / "last.ckpt";
    }
    if (cfg_.validate_every > 0 && !cfg_.validation_data.empty() && epoch_ % cfg_.validate_every == 0) validate_now();
    return out;
  }

  void run() {
    while (!done()) run_epoch();
    if (!out_.empty()) model::save_checkpoint(checkpoint(), out_ / "model.ckpt");
  }

  model::Checkpoint<Real> checkpoint() const {
    model::Checkpoint<Real> ck;
    ck.model = model_.config();
    ck.system = system_;
    ck.normalization = data_.normalization;
    ck.condition = data_.condition;
    ck.params = model_.params();
    ck.adam_m = adam_.m;
    ck.adam_v = adam_.v;
    ck.meta = {{"train_config", to_json(cfg_)},
               {"train_state",
                {{"epoch", epoch_},
                 {"step", step_},
                 {"adam_t", adam_.t},
                 {"seed", cfg_.seed},
                 {"best_validation_nmse", best_val_ ? nlohmann::json(*best_val_) : nlohmann::json(nullptr)}}}};
    return ck;
  }

 private:
  static model::MooeModel<Real> init_model(const TrainConfig& cfg, const datasets::DatasetManifest& m,
                                           const model::Checkpoint<Real>* resume) {
    if (resume) {
      const auto bound = bind_model_config(resume->model, m);
      if (bound.channels != resume->model.channels || bound.rows != resume->model.rows ||
          bound.cond_dim != resume->model.cond_dim)
        throw ConfigError("resume checkpoint does not match the training data layout");
      return model::restore_model(*resume);
    }
    auto mc = bind_model_config(cfg.model, m);
    if (mc.init_seed == 0) mc.init_seed = derive_seed(cfg.seed, {0x696e6974ULL});
    return model::MooeModel<Real>(mc);
  }

  void restore_state(const model::Checkpoint<Real>& ck) {
    const auto& st = ck.meta.at("train_state");
    epoch_ = st.at("epoch").template get<std::size_t>();
    step_ = st.at("step").template get<std::size_t>();
    adam_.t = st.at("adam_t").template get<std::size_t>();
    if (!st.at("best_validation_nmse").is_null()) best_val_ = st.at("best_validation_nmse").template get<double>();
    if (ck.adam_m.size() == model_.params().size() && ck.adam_v.size() == model_.params().size()) {
      adam_.m = ck.adam_m;
      adam_.v = ck.adam_v;
    } else if (adam_.t > 0) {
      throw FormatError("resume checkpoint lacks optimizer moments");
    }
  }

  /// L_mask on the soft masks; adds lambda_mask * dL_mask into `grads` when given.
  double mask_term(ad::Gradients<Real>* grads) const {
    const bool backprop = grads && model_.has_mask_param() && cfg_.loss.mask > 0.0;
    ad::Tape<Real> t(model_.params(), backprop ? grads : nullptr);
    const auto loss = ad::mask_diversity(t, model_.masks(t, model::MaskUse::soft));
    if (backprop) t.backward(loss, Real(cfg_.loss.mask));
    return double(t.value(loss)[0]);
  }

  /// Per-step losses of one sample; with `grads` also backpropagates the
  /// weighted sum of those losses.
  objectives::ElementLosses sample_losses(std::size_t idx, ad::Gradients<Real>* grads,
                                          const std::vector<double>& mse_coeff,
                                          const std::vector<double>& freq_coeff) const {
    const auto& cfg = model_.config();
    const auto& s = data_.samples[idx];
    const std::size_t frame = cfg.channels * cfg.rows * cfg.cols;
    const Shape fshape{cfg.channels, cfg.rows, cfg.cols};
    Tensor<Real> hist({cfg.window, cfg.channels, cfg.rows, cfg.cols},
                      std::vector<Real>(s.ptr(), s.ptr() + cfg.window * frame));
    ad::Tape<Real> t(model_.params(), grads);
    const auto use = cfg.train_mask;
    const auto r = model_.rollout(t, hist, steps_, data_.cond[data_.sample_env[idx]], use);
    objectives::ElementLosses out;
    out.env = data_.envs[data_.sample_env[idx]].env_id;
    std::vector<ad::Var> terms;
    std::vector<Real> coeff;
    for (std::size_t k = 0; k < steps_; ++k) {
      const Real* tp = s.ptr() + (cfg.window + k) * frame;
      Tensor<Real> target(fshape, std::vector<Real>(tp, tp + frame));
      const auto m = ad::mse(t, r.frames[k], target);
      out.mse.push_back(double(t.value(m)[0]));
      if (grads) {
        terms.push_back(m);
        coeff.push_back(Real(mse_coeff[k]));
      }
      if (grads && cfg_.loss.freq > 0.0) {
        const auto f = ad::freq_error(t, r.frames[k], target);
        out.freq.push_back(double(t.value(f)[0]));
        terms.push_back(f);
        coeff.push_back(Real(freq_coeff[k]));
      } else {
        out.freq.push_back(spectral::freq_weighted_sq_error(t.value(r.frames[k]), target));
      }
    }
    if (grads) t.backward(ad::weighted_sum(t, terms, coeff));
    return out;
  }

  void append_history(const std::vector<StepRecord>& recs) const {
    if (out_.empty()) return;
    std::ofstream os(out_ / "history.jsonl", std::ios::app);
    if (!os) throw FormatError("cannot append to " + (out_ / "history.jsonl").string());
    for (const auto& r : recs) os << objectives::to_json(r.loss, r.epoch, r.step).dump() << '\n';
  }

  void validate_now() {
    const auto val = datasets::read_dataset(cfg_.validation_data);
    evaluation::ModelForecaster<Real> f(model_, data_.normalization, data_.condition);
    const auto rep = evaluation::evaluate(f, val, cfg_.workers);
    const double score = rep.aggregates.at("nmse").mean;
    if (!best_val_ || score < *best_val_) {
      best_val_ = score;
      if (!out_.empty()) model::save_checkpoint(checkpoint(), out_ / "best.ckpt");
    }
  }

  TrainConfig cfg_;
  std::filesystem::path out_;
  model::MooeModel<Real> model_;
  TrainingSet<Real> data_;
  std::string system_;
  std::size_t steps_ = 0;
  Adam<Real> adam_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::optional<double> best_val_;
  std::filesystem::path last_good_;
  std::vector<StepRecord> history_;
};

template <std::floating_point Real>
struct TrainResult {
  model::Checkpoint<Real> checkpoint;
  std::vector<StepRecord> history;
};

/// Trains to cfg.epochs (continuing from `resume` if given). Writes
/// history.jsonl and model.ckpt into `out_dir` when it is non-empty.
template <std::floating_point Real>
TrainResult<Real> train(const TrainConfig& cfg, const datasets::Dataset& data, const std::filesystem::path& out_dir = {},
                        const model::Checkpoint<Real>* resume = nullptr) {
  Trainer<Real> t(cfg, data, out_dir, resume);
  t.run();
  return {t.checkpoint(), t.history()};
}

/// Full rollout of every trajectory in `data` with frozen weights.
template <std::floating_point Real>
evaluation::MetricsReport validate(const model::Checkpoint<Real>& ck, const datasets::Dataset& data,
                                   std::size_t workers = 0) {
  const evaluation::ModelForecaster<Real> f(ck);
  return evaluation::evaluate(f, data, workers);
}

}  // namespace imooe::training
