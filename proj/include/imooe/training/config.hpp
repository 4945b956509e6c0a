#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/model/config.hpp"
#include "imooe/objectives.hpp"
#include "json.hpp"

namespace imooe::training {

enum class Precision { f32, f64 };

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// "constant" or "cosine".
  std::string lr_schedule = "constant";
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  std::string device = "cpu";
  std::size_t workers = 0;

  objectives::PartitionMode partition = objectives::PartitionMode::by_env_and_step;
  std::size_t step_bucket = 1;
  /// Predicted steps per training sample; 0 unrolls the full horizon.
  std::size_t rollout_steps = 0;
  objectives::LossWeights loss;
  /// True when the schedule was given explicitly rather than scaled to epochs.
  bool explicit_schedule = false;

  model::ModelConfig model;

  std::string train_data;
  std::string validation_data;
  std::size_t validate_every = 0;
  std::size_t checkpoint_every = 0;

  /// Fills the schedule total (and the default warmup/ramp points, scaled
  /// proportionally) from `epochs`.
  void finalize() {
    if (!explicit_schedule) {
      const auto mode = loss.schedule.mode;
      loss.schedule = objectives::Schedule::proportional(std::max<std::size_t>(epochs, 1));
      loss.schedule.mode = mode;
    } else {
      loss.schedule.total = std::max(loss.schedule.total, epochs);
    }
  }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
      throw ConfigError("invalid Adam hyperparameters");
    if (lr_schedule != "constant" && lr_schedule != "cosine") throw ConfigError("lr_schedule must be constant|cosine");
    if (device != "cpu") throw ConfigError("only device 'cpu' is supported");
    if (step_bucket < 1) throw ConfigError("step_bucket must be >= 1");
    loss.validate();
  }
};

inline std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"lr_schedule", c.lr_schedule},
          {"seed", c.seed},
          {"precision", to_string(c.precision)},
          {"device", c.device},
          {"workers", c.workers},
          {"partition", objectives::to_string(c.partition)},
          {"step_bucket", c.step_bucket},
          {"rollout_steps", c.rollout_steps},
          {"loss",
           {{"pred", c.loss.pred},
            {"freq", c.loss.freq},
            {"mask", c.loss.mask},
            {"inv_max", c.loss.inv_max},
            {"schedule",
             {{"mode", c.loss.schedule.mode == objectives::ScheduleMode::linear ? "linear" : "fixed"},
              {"warmup_end", c.loss.schedule.warmup_end},
              {"ramp_end", c.loss.schedule.ramp_end},
              {"total", c.loss.schedule.total}}}}},
          {"model", c.model},
          {"train_data", c.train_data},
          {"validation_data", c.validation_data},
          {"validate_every", c.validate_every},
          {"checkpoint_every", c.checkpoint_every}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown key '" + k + "' in " + where);
}

}  // namespace detail

/// Parses a training config; absent keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    detail::reject_unknown(j,
                           {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "lr_schedule", "seed", "precision",
                            "device", "workers", "partition", "step_bucket", "rollout_steps", "loss", "model",
                            "train_data", "validation_data", "validate_every", "checkpoint_every"},
                           "train config");
    auto get = [&](const nlohmann::json& src, const char* key, auto& field) {
      if (src.contains(key)) field = src.at(key).get<std::decay_t<decltype(field)>>();
    };
    get(j, "epochs", c.epochs);
    get(j, "batch_size", c.batch_size);
    get(j, "lr", c.lr);
    get(j, "beta1", c.beta1);
    get(j, "beta2", c.beta2);
    get(j, "eps", c.eps);
    get(j, "lr_schedule", c.lr_schedule);
    get(j, "seed", c.seed);
    if (j.contains("precision")) {
      const auto p = j.at("precision").get<std::string>();
      if (p != "f32" && p != "f64") throw ConfigError("precision must be f32|f64");
      c.precision = p == "f32" ? Precision::f32 : Precision::f64;
    }
    get(j, "device", c.device);
    get(j, "workers", c.workers);
    if (j.contains("partition")) c.partition = objectives::parse_partition(j.at("partition").get<std::string>());
    get(j, "step_bucket", c.step_bucket);
    get(j, "rollout_steps", c.rollout_steps);
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      detail::reject_unknown(l, {"pred", "freq", "mask", "inv_max", "schedule"}, "loss");
      get(l, "pred", c.loss.pred);
      get(l, "freq", c.loss.freq);
      get(l, "mask", c.loss.mask);
      get(l, "inv_max", c.loss.inv_max);
      if (l.contains("schedule")) {
        const auto& s = l.at("schedule");
        detail::reject_unknown(s, {"mode", "warmup_end", "ramp_end", "total"}, "loss.schedule");
        if (s.contains("mode")) {
          const auto m = s.at("mode").get<std::string>();
          if (m != "linear" && m != "fixed") throw ConfigError("loss.schedule.mode must be linear|fixed");
          c.loss.schedule.mode = m == "linear" ? objectives::ScheduleMode::linear : objectives::ScheduleMode::fixed;
        }
        if (s.contains("warmup_end") || s.contains("ramp_end")) {
          c.explicit_schedule = true;
          get(s, "warmup_end", c.loss.schedule.warmup_end);
          get(s, "ramp_end", c.loss.schedule.ramp_end);
          get(s, "total", c.loss.schedule.total);
        }
      }
    }
    if (j.contains("model")) model::update_from_json(c.model, j.at("model"));
    get(j, "train_data", c.train_data);
    get(j, "validation_data", c.validation_data);
    get(j, "validate_every", c.validate_every);
    get(j, "checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.finalize();
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace imooe::training
