#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imooe/datasets/io.hpp"
#include "imooe/evaluation/metrics.hpp"
#include "imooe/model/checkpoint.hpp"
#include "imooe/model/mooe.hpp"
#include "imooe/parallel.hpp"
#include "json.hpp"

namespace imooe::evaluation {

/// Anything that turns a raw-space history [W,C,H,W] into `steps` raw-space frames.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::size_t window() const = 0;
  virtual Tensor<float> forecast(const Tensor<float>& history, std::size_t steps, const datasets::Environment& env,
                                 std::size_t traj_index) const = 0;
  /// Identifies the frozen weights behind the forecasts.
  virtual std::string tag() const { return ""; }
};

/// z-scored condition vector for `env`, or ones when parameters are unknown.
inline std::vector<double> condition_vector(const datasets::Environment& env, const model::ConditionStats& stats,
                                            bool known, std::size_t dim) {
  if (!known) return std::vector<double>(dim, 1.0);
  auto v = env.condition_vector();
  if (v.size() != dim || stats.mean.size() != dim || stats.std.size() != dim)
    throw ShapeError("condition vector length " + std::to_string(v.size()) + " does not match cond_dim " +
                     std::to_string(dim));
  for (std::size_t i = 0; i < dim; ++i) v[i] = (v[i] - stats.mean[i]) / stats.std[i];
  return v;
}

/// Mean/std over environments of the condition vectors; zero spread maps to 1.
inline model::ConditionStats condition_stats(const std::vector<datasets::Environment>& envs) {
  model::ConditionStats s;
  if (envs.empty()) return s;
  const std::size_t d = envs[0].condition_vector().size();
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (const auto& e : envs) {
    const auto v = e.condition_vector();
    for (std::size_t i = 0; i < d; ++i) s.mean[i] += v[i];
  }
  for (auto& m : s.mean) m /= double(envs.size());
  for (const auto& e : envs) {
    const auto v = e.condition_vector();
    for (std::size_t i = 0; i < d; ++i) s.std[i] += (v[i] - s.mean[i]) * (v[i] - s.mean[i]);
  }
  for (auto& x : s.std) {
    x = std::sqrt(x / double(envs.size()));
    if (!(x > 0.0)) x = 1.0;
  }
  return s;
}

/// A frozen MOOE model applied in normalized space.
template <std::floating_point Real>
class ModelForecaster : public Forecaster {
 public:
  explicit ModelForecaster(const model::Checkpoint<Real>& ck)
      : model_(model::restore_model(ck)), norm_(ck.normalization), cond_(ck.condition) {
    if (norm_.mean.size() != model_.config().channels || norm_.std.size() != model_.config().channels)
      throw FormatError("checkpoint normalization does not match the channel count");
  }
  ModelForecaster(model::MooeModel<Real> m, model::Normalization norm, model::ConditionStats cond)
      : model_(std::move(m)), norm_(std::move(norm)), cond_(std::move(cond)) {}

  std::size_t window() const override { return model_.config().window; }
  const model::MooeModel<Real>& model() const { return model_; }
  std::string tag() const override { return model::hex64(model::weight_hash(model_.params())); }

  Tensor<float> forecast(const Tensor<float>& history, std::size_t steps, const datasets::Environment& env,
                         std::size_t) const override {
    const auto& cfg = model_.config();
    const std::size_t plane = cfg.rows * cfg.cols;
    Tensor<Real> h(history.shape());
    for (std::size_t f = 0; f < history.dim(0); ++f)
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t o = (f * cfg.channels + c) * plane + i;
          h[o] = Real((double(history[o]) - norm_.mean[c]) / norm_.std[c]);
        }
    const auto cond = condition_vector(env, cond_, cfg.known_parameters, cfg.cond_dim);
    const Tensor<Real> p = model_.predict(h, steps, cond, cfg.eval_mask);
    Tensor<float> out(p.shape());
    for (std::size_t f = 0; f < steps; ++f)
      for (std::size_t c = 0; c < cfg.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t o = (f * cfg.channels + c) * plane + i;
          out[o] = float(double(p[o]) * norm_.std[c] + norm_.mean[c]);
        }
    return out;
  }

 private:
  model::MooeModel<Real> model_;
  model::Normalization norm_;
  model::ConditionStats cond_;
};

struct EnvMetrics {
  std::int64_t env_id = 0;
  std::string split;
  std::size_t trajectories = 0;
  std::map<std::string, double> params;
  double nmse = 0.0;
  double frmse_total = 0.0;
  std::optional<double> frmse_low, frmse_mid, frmse_high;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
};

/// Last-frame field of one forecast, kept for showcase images.
struct Showcase {
  std::int64_t env_id = 0;
  std::size_t trajectory = 0;
  std::size_t step = 0;
  std::size_t channel = 0;
  std::size_t rows = 0, cols = 0;
  std::vector<float> truth, pred;
};

struct MetricsReport {
  std::string system;
  std::string split;
  std::string model_tag;
  std::size_t window = 0;
  std::size_t steps = 0;
  std::vector<EnvMetrics> envs;
  std::map<std::string, Aggregate> aggregates;
  std::optional<Showcase> showcase;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"nmse", "frmse_total", "frmse_low", "frmse_mid", "frmse_high"};
  return names;
}

inline std::optional<double> metric(const EnvMetrics& e, const std::string& name) {
  if (name == "nmse") return e.nmse;
  if (name == "frmse_total") return e.frmse_total;
  if (name == "frmse_low") return e.frmse_low;
  if (name == "frmse_mid") return e.frmse_mid;
  if (name == "frmse_high") return e.frmse_high;
  throw ConfigError("unknown metric '" + name + "'");
}

/// Mean and population std over environments of every available metric.
inline std::map<std::string, Aggregate> aggregate(const std::vector<EnvMetrics>& envs) {
  std::map<std::string, Aggregate> out;
  for (const auto& name : metric_names()) {
    std::vector<double> v;
    for (const auto& e : envs)
      if (auto x = metric(e, name)) v.push_back(*x);
    if (v.empty()) continue;
    Aggregate a;
    for (double x : v) a.mean += x;
    a.mean /= double(v.size());
    for (double x : v) a.std += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(a.std / double(v.size()));
    out[name] = a;
  }
  return out;
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
inline std::optional<double> opt(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace detail

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : r.envs)
    envs.push_back({{"env_id", e.env_id},
                    {"split", e.split},
                    {"trajectories", e.trajectories},
                    {"params", e.params},
                    {"nmse", e.nmse},
                    {"frmse_total", e.frmse_total},
                    {"frmse_low", detail::opt(e.frmse_low)},
                    {"frmse_mid", detail::opt(e.frmse_mid)},
                    {"frmse_high", detail::opt(e.frmse_high)}});
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [k, a] : r.aggregates) agg[k] = {{"mean", a.mean}, {"std", a.std}};
  nlohmann::json j = {{"system", r.system},   {"split", r.split}, {"model_tag", r.model_tag},
                      {"window", r.window},   {"steps", r.steps}, {"environments", envs},
                      {"aggregates", agg}};
  if (r.showcase) {
    const auto& s = *r.showcase;
    j["showcase"] = {{"env_id", s.env_id}, {"trajectory", s.trajectory}, {"step", s.step}, {"channel", s.channel},
                     {"rows", s.rows},     {"cols", s.cols},             {"truth", s.truth}, {"pred", s.pred}};
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.system = j.at("system").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.model_tag = j.at("model_tag").get<std::string>();
  r.window = j.at("window").get<std::size_t>();
  r.steps = j.at("steps").get<std::size_t>();
  for (const auto& e : j.at("environments")) {
    EnvMetrics m;
    m.env_id = e.at("env_id").get<std::int64_t>();
    m.split = e.at("split").get<std::string>();
    m.trajectories = e.at("trajectories").get<std::size_t>();
    m.params = e.at("params").get<std::map<std::string, double>>();
    m.nmse = e.at("nmse").get<double>();
    m.frmse_total = e.at("frmse_total").get<double>();
    m.frmse_low = detail::opt(e.at("frmse_low"));
    m.frmse_mid = detail::opt(e.at("frmse_mid"));
    m.frmse_high = detail::opt(e.at("frmse_high"));
    r.envs.push_back(std::move(m));
  }
  for (const auto& [k, a] : j.at("aggregates").items())
    r.aggregates[k] = {a.at("mean").get<double>(), a.at("std").get<double>()};
  if (j.contains("showcase")) {
    const auto& s = j.at("showcase");
    r.showcase = Showcase{s.at("env_id").get<std::int64_t>(), s.at("trajectory").get<std::size_t>(),
                          s.at("step").get<std::size_t>(),    s.at("channel").get<std::size_t>(),
                          s.at("rows").get<std::size_t>(),    s.at("cols").get<std::size_t>(),
                          s.at("truth").get<std::vector<float>>(), s.at("pred").get<std::vector<float>>()};
  }
  return r;
}

inline void write_report(const MetricsReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write report " + path.string());
  os << to_json(r).dump(2) << '\n';
}

inline MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open report " + path.string());
  try {
    return report_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed report " + path.string() + ": " + e.what());
  }
}

/// Rolls out every trajectory from its first W frames over the rest of the
/// horizon and averages metrics per environment. Raw (denormalized) space.
inline MetricsReport evaluate(const Forecaster& f, const datasets::Dataset& data, std::size_t workers = 0) {
  const auto& m = data.manifest;
  const std::size_t w = f.window();
  if (m.saved_steps <= w)
    throw ConfigError("trajectories have " + std::to_string(m.saved_steps) + " frames, window is " +
                      std::to_string(w));
  const std::size_t steps = m.saved_steps - w;
  const std::size_t n_traj = m.trajectories_per_env;
  const std::size_t frame = m.channels * m.resolution * m.resolution;
  struct Slot {
    double nmse = 0.0;
    FrmseResult fr;
    Tensor<float> last_pred;
  };
  std::vector<Slot> slots(m.environments.size() * n_traj);
  parallel_for(slots.size(), worker_count(workers), [&](std::size_t job) {
    const std::size_t e = job / n_traj, t = job % n_traj;
    const float* base = data.arrays[e].ptr() + t * m.saved_steps * frame;
    Tensor<float> hist({w, m.channels, m.resolution, m.resolution}, std::vector<float>(base, base + w * frame));
    Tensor<float> truth({steps, m.channels, m.resolution, m.resolution},
                        std::vector<float>(base + w * frame, base + m.saved_steps * frame));
    Tensor<float> pred = f.forecast(hist, steps, m.environments[e], t);
    if (pred.shape() != truth.shape())
      throw ShapeError("forecaster returned " + shape_string(pred.shape()) + ", expected " +
                       shape_string(truth.shape()));
    slots[job].nmse = nmse(pred, truth);
    slots[job].fr = frmse(pred, truth);
    if (job == 0) slots[job].last_pred = std::move(pred);
  });
  MetricsReport r;
  r.system = datasets::to_string(m.system);
  r.split = datasets::to_string(m.split);
  r.model_tag = f.tag();
  r.window = w;
  r.steps = steps;
  for (std::size_t e = 0; e < m.environments.size(); ++e) {
    EnvMetrics em;
    em.env_id = m.environments[e].env_id;
    em.split = r.split;
    em.trajectories = n_traj;
    em.params = m.environments[e].params;
    for (const auto& [k, v] : m.environments[e].forcing) em.params[k] = v;
    double lo = 0.0, mid = 0.0, hi = 0.0;
    for (std::size_t t = 0; t < n_traj; ++t) {
      const Slot& s = slots[e * n_traj + t];
      em.nmse += s.nmse;
      em.frmse_total += s.fr.total;
      lo += s.fr.low.value_or(0.0);
      mid += s.fr.mid.value_or(0.0);
      hi += s.fr.high.value_or(0.0);
    }
    const double n = double(n_traj);
    em.nmse /= n;
    em.frmse_total /= n;
    const Slot& s0 = slots[e * n_traj];
    if (s0.fr.low) em.frmse_low = lo / n;
    if (s0.fr.mid) em.frmse_mid = mid / n;
    if (s0.fr.high) em.frmse_high = hi / n;
    r.envs.push_back(std::move(em));
  }
  r.aggregates = aggregate(r.envs);
  if (!slots.empty() && !slots[0].last_pred.empty()) {
    Showcase s;
    s.env_id = m.environments[0].env_id;
    s.step = steps - 1;
    s.rows = s.cols = m.resolution;
    const std::size_t plane = m.resolution * m.resolution;
    const float* truth = data.arrays[0].ptr() + (m.saved_steps - 1) * frame;
    s.truth.assign(truth, truth + plane);
    const float* pred = slots[0].last_pred.ptr() + (steps - 1) * frame;
    s.pred.assign(pred, pred + plane);
    r.showcase = std::move(s);
  }
  return r;
}

}  // namespace imooe::evaluation
