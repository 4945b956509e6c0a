#pragma once

// Declarative experiment recipes: generate / train / eval stages expanded over
// seeds, resumable by content hash, with an optional comparison rule and an
// ID-vs-OOD fit over evaluated runs.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "imooe/datasets/io.hpp"
#include "imooe/errors.hpp"
#include "imooe/evaluation/metrics.hpp"
#include "imooe/evaluation/plots.hpp"
#include "imooe/evaluation/report.hpp"
#include "imooe/model/checkpoint.hpp"
#include "imooe/training/config.hpp"
#include "imooe/training/trainer.hpp"
#include "json.hpp"

namespace imooe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bumped whenever stage semantics change so stale artifacts are not reused.
inline constexpr int kRecipeFormat = 1;

struct StageRun {
  std::string stage;
  std::string kind;
  std::string arm;
  std::optional<std::uint64_t> seed;
  std::string hash;
  fs::path dir;
  bool reused = false;
  double seconds = 0.0;
  /// Eval runs only: per-environment metric values and timing.
  std::optional<evaluation::MetricsReport> report;
  double seconds_per_trajectory = 0.0;
};

struct SeedComparison {
  std::uint64_t seed = 0;
  double a = 0.0;
  double b = 0.0;
  bool a_wins = false;
};

struct Verdict {
  std::string metric;
  std::string statistic;
  std::string a, b;
  std::vector<SeedComparison> seeds;
  std::size_t wins = 0;
  std::size_t required = 0;
  bool passed = false;
};

struct RecipeSummary {
  std::string recipe;
  std::string scale;
  std::vector<StageRun> runs;
  std::optional<Verdict> verdict;
  std::optional<evaluation::IdOodFit> fit;
};

struct RecipeOptions {
  std::string scale = "desk";
  std::size_t workers = 0;
  std::ostream* log = nullptr;
  /// Resolve and validate every stage (including train configs) without running.
  bool dry_run = false;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Replaces "$name" strings by the variable (type preserved) and "${name}"
/// inside longer strings by its text.
inline json substitute(const json& j, const json& vars) {
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = substitute(v, vars);
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(substitute(v, vars));
    return out;
  }
  if (!j.is_string()) return j;
  std::string s = j.get<std::string>();
  if (s.size() > 1 && s[0] == '$' && s[1] != '{') {
    const std::string key = s.substr(1);
    if (!vars.contains(key)) throw ConfigError("recipe variable '" + key + "' is not defined for this scale");
    return vars.at(key);
  }
  for (std::size_t pos; (pos = s.find("${")) != std::string::npos;) {
    const auto end = s.find('}', pos);
    if (end == std::string::npos) throw ConfigError("unterminated ${ in recipe string '" + s + "'");
    const std::string key = s.substr(pos + 2, end - pos - 2);
    if (!vars.contains(key)) throw ConfigError("recipe variable '" + key + "' is not defined for this scale");
    const json& v = vars.at(key);
    s.replace(pos, end - pos + 1, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return s;
}

inline std::string seed_dir(std::optional<std::uint64_t> seed) {
  return seed ? "seed_" + std::to_string(*seed) : "run";
}

inline bool stage_done(const fs::path& dir, const std::string& hash) {
  std::ifstream is(dir / "stage.json");
  if (!is) return false;
  try {
    return json::parse(is).at("hash").get<std::string>() == hash;
  } catch (const json::exception&) {
    return false;
  }
}

inline void mark_done(const fs::path& dir, const std::string& hash, const json& resolved) {
  std::ofstream os(dir / "stage.json");
  os << json{{"hash", hash}, {"stage", resolved}}.dump(2) << "\n";
  if (!os) throw FormatError("cannot write " + (dir / "stage.json").string());
}

inline std::string checkpoint_precision(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return model::read_checkpoint_header(is, path.string()).at("precision").get<std::string>();
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double statistic(const evaluation::MetricsReport& r, const std::string& metric, const std::string& stat) {
  std::vector<double> v;
  for (const auto& e : r.envs)
    if (auto x = evaluation::metric(e, metric)) v.push_back(*x);
  if (v.empty()) throw ConfigError("metric '" + metric + "' is absent from the report");
  if (stat == "median") return median(v);
  if (stat == "mean") {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
  }
  throw ConfigError("statistic must be median|mean, got '" + stat + "'");
}

}  // namespace detail

/// Trains with the precision named in `cfg`; returns the checkpoint path.
inline fs::path run_training(training::TrainConfig cfg, const fs::path& data_dir, const fs::path& out,
                             const fs::path& resume = {}) {
  const auto data = datasets::read_dataset(data_dir);
  cfg.train_data = data_dir.string();
  fs::create_directories(out);
  if (cfg.precision == training::Precision::f32) {
    std::optional<model::Checkpoint<float>> r;
    if (!resume.empty()) r = model::load_checkpoint<float>(resume);
    training::train<float>(cfg, data, out, r ? &*r : nullptr);
  } else {
    std::optional<model::Checkpoint<double>> r;
    if (!resume.empty()) r = model::load_checkpoint<double>(resume);
    training::train<double>(cfg, data, out, r ? &*r : nullptr);
  }
  return out / "model.ckpt";
}

/// Evaluates a checkpoint in the precision it was saved with.
inline evaluation::MetricsReport run_evaluation(const fs::path& ckpt, const datasets::Dataset& data,
                                                std::size_t workers = 0) {
  if (detail::checkpoint_precision(ckpt) == "f32")
    return evaluation::evaluate(evaluation::ModelForecaster<float>(model::load_checkpoint<float>(ckpt)), data, workers);
  return evaluation::evaluate(evaluation::ModelForecaster<double>(model::load_checkpoint<double>(ckpt)), data, workers);
}

inline json to_json(const RecipeSummary& s) {
  json runs = json::array();
  for (const auto& r : s.runs) {
    json j{{"stage", r.stage},   {"kind", r.kind},       {"arm", r.arm},          {"hash", r.hash},
           {"dir", r.dir.string()}, {"reused", r.reused}, {"seconds", r.seconds}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    if (r.report) {
      j["seconds_per_trajectory"] = r.seconds_per_trajectory;
      json agg = json::object();
      for (const auto& [k, a] : r.report->aggregates) agg[k] = {{"mean", a.mean}, {"std", a.std}};
      j["aggregates"] = agg;
      j["median_nmse"] = detail::statistic(*r.report, "nmse", "median");
    }
    runs.push_back(j);
  }
  json out{{"recipe", s.recipe}, {"scale", s.scale}, {"runs", runs}};
  if (s.verdict) {
    json seeds = json::array();
    for (const auto& c : s.verdict->seeds) seeds.push_back({{"seed", c.seed}, {"a", c.a}, {"b", c.b}, {"a_wins", c.a_wins}});
    out["verdict"] = {{"metric", s.verdict->metric},     {"statistic", s.verdict->statistic}, {"a", s.verdict->a},
                      {"b", s.verdict->b},               {"seeds", seeds},                     {"wins", s.verdict->wins},
                      {"required", s.verdict->required}, {"passed", s.verdict->passed}};
  }
  if (s.fit) {
    json pts = json::array();
    for (const auto& p : s.fit->points) pts.push_back({{"run", p.run_tag}, {"id", p.id_error}, {"ood", p.ood_error}});
    out["id_ood_fit"] = {{"points", pts}, {"slope", s.fit->slope}, {"intercept", s.fit->intercept}, {"r2", s.fit->r2}};
  }
  return out;
}

/// One row per eval run: stage, arm, seed, median/mean nMSE, mean fRMSE, s/trajectory.
inline void write_summary_table(const RecipeSummary& s, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << "stage,arm,seed,median_nmse,mean_nmse,mean_frmse,seconds_per_trajectory\n";
  for (const auto& r : s.runs) {
    if (!r.report) continue;
    os << r.stage << ',' << r.arm << ',' << (r.seed ? std::to_string(*r.seed) : "") << ','
       << evaluation::detail::num(detail::statistic(*r.report, "nmse", "median")) << ','
       << evaluation::detail::num(r.report->aggregates.at("nmse").mean) << ','
       << evaluation::detail::num(r.report->aggregates.at("frmse_total").mean) << ','
       << evaluation::detail::num(r.seconds_per_trajectory) << '\n';
  }
}

/// Executes `recipe` in `workdir`. Stage directories are
/// workdir/<stage>/<seed_N|run>; a stage whose stage.json carries the same
/// content hash is reused. A failing stage aborts with earlier artifacts kept.
inline RecipeSummary run_recipe(const json& recipe, const fs::path& workdir, const RecipeOptions& opt = {}) {
  training::detail::reject_unknown(recipe, {"name", "description", "seeds", "scales", "defaults", "stages", "compare", "fit"},
                                   "recipe");
  RecipeSummary summary;
  summary.recipe = recipe.value("name", std::string("unnamed"));
  summary.scale = opt.scale;
  json vars = json::object();
  if (recipe.contains("scales")) {
    if (!recipe.at("scales").contains(opt.scale))
      throw ConfigError("recipe '" + summary.recipe + "' has no scale '" + opt.scale + "'");
    vars = recipe.at("scales").at(opt.scale);
  }
  vars["scale"] = opt.scale;
  std::vector<std::uint64_t> seeds;
  if (recipe.contains("seeds")) seeds = detail::substitute(recipe.at("seeds"), vars).get<std::vector<std::uint64_t>>();
  const json defaults = recipe.value("defaults", json::object());
  const json stages = recipe.value("stages", json::array());

  // Validate every stage and its inputs before running anything.
  std::map<std::string, std::string> kinds;
  for (const auto& raw : stages) {
    const std::string name = raw.at("name").get<std::string>();
    const std::string kind = raw.at("kind").get<std::string>();
    if (kind != "generate" && kind != "train" && kind != "eval")
      throw ConfigError("stage '" + name + "': unknown kind '" + kind + "'");
    if (kinds.count(name)) throw ConfigError("duplicate stage name '" + name + "'");
    auto need = [&](const char* key, const std::string& want) {
      const std::string ref = raw.at(key).get<std::string>();
      auto it = kinds.find(ref);
      if (it != kinds.end() && it->second == want) return;
      if (want == "generate" && it == kinds.end() && fs::exists(fs::path(ref) / "manifest.json")) return;
      throw ConfigError("stage '" + name + "': input '" + ref + "' is not an earlier " + want + " stage");
    };
    if (kind == "train") need("data", "generate");
    if (kind == "eval") {
      need("train", "train");
      need("data", "generate");
    }
    kinds[name] = kind;
  }

  if (!opt.dry_run) fs::create_directories(workdir);
  std::map<std::string, std::map<std::string, std::string>> hashes;  // stage -> seed dir -> hash
  std::map<std::string, bool> per_seed_of;
  auto data_dir = [&](const std::string& ref) {
    return kinds.count(ref) ? workdir / ref / "run" : fs::path(ref);
  };
  auto data_hash = [&](const std::string& ref) {
    return kinds.count(ref) ? hashes.at(ref).at("run") : "path:" + fs::absolute(ref).string();
  };

  for (const auto& raw : stages) {
    const std::string name = raw.at("name").get<std::string>();
    const std::string kind = raw.at("kind").get<std::string>();
    const std::string arm = raw.value("arm", name);
    bool per_seed = false;
    if (kind == "train") per_seed = raw.value("per_seed", !seeds.empty());
    if (kind == "eval") per_seed = per_seed_of.at(raw.at("train").get<std::string>());
    per_seed_of[name] = per_seed;
    std::vector<std::optional<std::uint64_t>> expand;
    if (per_seed)
      for (auto s : seeds) expand.emplace_back(s);
    else
      expand.emplace_back(std::nullopt);

    for (const auto& seed : expand) {
      json v = vars;
      if (seed) v["seed"] = *seed;
      json resolved = detail::substitute(raw, v);
      const fs::path dir = workdir / name / detail::seed_dir(seed);
      json key{{"format", kRecipeFormat}, {"stage", resolved}};
      StageRun run;
      run.stage = name;
      run.kind = kind;
      run.arm = arm;
      run.seed = seed;
      run.dir = dir;

      if (kind == "generate") {
        datasets::GenerateOptions g;
        g.system = datasets::parse_system(resolved.at("system").get<std::string>());
        g.split = datasets::parse_split(resolved.at("split").get<std::string>());
        g.envs = resolved.at("envs").get<std::size_t>();
        g.trajectories = resolved.at("traj").get<std::size_t>();
        g.resolution = resolved.at("res").get<std::size_t>();
        g.seed = resolved.at("seed").get<std::uint64_t>();
        g.workers = opt.workers;
        run.hash = model::hex64(detail::fnv1a(key.dump()));
        if (!opt.dry_run && !(run.reused = detail::stage_done(dir, run.hash))) {
          const auto t0 = std::chrono::steady_clock::now();
          fs::create_directories(dir);
          datasets::write_dataset(datasets::generate_dataset(g), dir);
          run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
      } else if (kind == "train") {
        json cfg_json = detail::substitute(defaults.value("train", json::object()), v);
        cfg_json.merge_patch(resolved.value("config", json::object()));
        if (seed) {
          cfg_json["seed"] = *seed;
          if (!cfg_json.contains("model") || !cfg_json["model"].contains("init_seed")) cfg_json["model"]["init_seed"] = *seed;
        }
        const std::string data = resolved.at("data").get<std::string>();
        key["config"] = cfg_json;
        key["data"] = data_hash(data);
        if (resolved.contains("validation")) {
          const std::string val = resolved.at("validation").get<std::string>();
          cfg_json["validation_data"] = data_dir(val).string();
          key["validation"] = data_hash(val);
        }
        run.hash = model::hex64(detail::fnv1a(key.dump()));
        auto cfg = training::train_config_from_json(cfg_json);
        if (!opt.dry_run && !(run.reused = detail::stage_done(dir, run.hash))) {
          if (opt.workers) cfg.workers = opt.workers;
          const auto t0 = std::chrono::steady_clock::now();
          run_training(cfg, data_dir(data), dir);
          run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
      } else {
        const std::string train = resolved.at("train").get<std::string>();
        const std::string data = resolved.at("data").get<std::string>();
        const std::string sd = detail::seed_dir(seed);
        key["train"] = hashes.at(train).at(sd);
        key["data"] = data_hash(data);
        run.hash = model::hex64(detail::fnv1a(key.dump()));
        if (!raw.contains("arm")) run.arm = train;
        if (opt.dry_run) {
          // resolved only
        } else if ((run.reused = detail::stage_done(dir, run.hash))) {
          run.report = evaluation::read_report(dir / "report.json");
          std::ifstream is(dir / "timing.json");
          run.seconds_per_trajectory = json::parse(is).at("seconds_per_trajectory").get<double>();
        } else {
          const auto ds = datasets::read_dataset(data_dir(data));
          const auto t0 = std::chrono::steady_clock::now();
          run.report = run_evaluation(workdir / train / sd / "model.ckpt", ds, opt.workers);
          run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          const std::size_t n = ds.manifest.environments.size() * ds.manifest.trajectories_per_env;
          run.seconds_per_trajectory = run.seconds / double(std::max<std::size_t>(n, 1));
          fs::create_directories(dir);
          evaluation::write_report(*run.report, dir / "report.json");
          std::ofstream(dir / "timing.json") << json{{"seconds_per_trajectory", run.seconds_per_trajectory}}.dump() << "\n";
        }
      }
      if (!run.reused && !opt.dry_run) detail::mark_done(dir, run.hash, resolved);
      hashes[name][detail::seed_dir(seed)] = run.hash;
      if (opt.log)
        *opt.log << "[" << summary.recipe << "] " << name << " " << detail::seed_dir(seed) << " "
                 << (run.reused ? "reused" : "done") << " (" << run.seconds << " s)" << std::endl;
      summary.runs.push_back(std::move(run));
    }
  }

  auto eval_runs = [&](const std::string& stage) {
    std::vector<const StageRun*> out;
    for (const auto& r : summary.runs)
      if (r.stage == stage && r.report) out.push_back(&r);
    if (out.empty()) throw ConfigError("'" + stage + "' is not an eval stage of this recipe");
    return out;
  };

  if (opt.dry_run) return summary;

  if (recipe.contains("compare")) {
    const json c = detail::substitute(recipe.at("compare"), vars);
    Verdict v;
    v.metric = c.value("metric", std::string("nmse"));
    v.statistic = c.value("statistic", std::string("median"));
    v.a = c.at("a").get<std::string>();
    v.b = c.at("b").get<std::string>();
    const auto ra = eval_runs(v.a), rb = eval_runs(v.b);
    if (ra.size() != rb.size()) throw ConfigError("compared stages have different seed counts");
    for (std::size_t i = 0; i < ra.size(); ++i) {
      SeedComparison sc;
      sc.seed = ra[i]->seed.value_or(0);
      sc.a = detail::statistic(*ra[i]->report, v.metric, v.statistic);
      sc.b = detail::statistic(*rb[i]->report, v.metric, v.statistic);
      sc.a_wins = sc.a <= sc.b;
      v.wins += sc.a_wins;
      v.seeds.push_back(sc);
    }
    v.required = c.value("min_wins", ra.size() / 2 + 1);
    v.passed = v.wins >= v.required;
    summary.verdict = v;
  }

  if (recipe.contains("fit")) {
    const json f = recipe.at("fit");
    const std::string metric = f.value("metric", std::string("nmse"));
    std::vector<evaluation::FitPoint> pts;
    for (const auto& pair : f.at("pairs")) {
      const auto id = eval_runs(pair.at(0).get<std::string>()), ood = eval_runs(pair.at(1).get<std::string>());
      if (id.size() != ood.size()) throw ConfigError("fit pair has different seed counts");
      for (std::size_t i = 0; i < id.size(); ++i)
        pts.push_back({id[i]->arm + "/" + detail::seed_dir(id[i]->seed), detail::statistic(*id[i]->report, metric, "mean"),
                       detail::statistic(*ood[i]->report, metric, "mean")});
    }
    summary.fit = evaluation::id_ood_fit(pts);
  }

  std::ofstream(workdir / "summary.json") << to_json(summary).dump(2) << "\n";
  write_summary_table(summary, workdir / "summary.csv");
  return summary;
}

inline json load_recipe(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open recipe " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("malformed recipe " + path.string() + ": " + e.what());
  }
}

}  // namespace imooe::cli
