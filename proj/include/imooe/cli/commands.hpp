#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <typeinfo>
#include <vector>

#include "CLI11.hpp"
#include "imooe/cli/recipe.hpp"
#include "imooe/datasets/io.hpp"
#include "imooe/evaluation/plots.hpp"
#include "imooe/parallel.hpp"

namespace imooe::cli {

struct GenerateArgs {
  std::string system, split = "train", out;
  std::size_t envs = 16, traj = 64, res = 64, workers = 0;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config, data, out, resume;
  std::size_t workers = 0;
};

struct EvalArgs {
  std::string ckpt, data, split, out;
  std::size_t workers = 0;
};

struct ReportArgs {
  std::vector<std::string> in;
  std::string plots;
};

struct RecipeArgs {
  std::string recipe, work, scale = "desk";
  std::size_t workers = 0;
  bool dry_run = false;
};

inline void cmd_generate(const GenerateArgs& a, std::ostream& out) {
  datasets::GenerateOptions g;
  g.system = datasets::parse_system(a.system);
  g.split = datasets::parse_split(a.split);
  if (a.envs < 1 || a.traj < 1) throw ConfigError("--envs and --traj must be >= 1");
  g.envs = a.envs;
  g.trajectories = a.traj;
  g.resolution = a.res;
  g.seed = a.seed;
  g.workers = a.workers;
  const auto d = datasets::generate_dataset(g);
  datasets::write_dataset(d, a.out);
  out << "wrote " << a.envs << " x " << a.traj << " trajectories of " << datasets::to_string(g.system) << " ("
      << datasets::to_string(g.split) << ") to " << a.out << "\n";
}

inline void cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = training::load_train_config(a.config);
  std::string data = a.data.empty() ? cfg.train_data : a.data;
  if (data.empty()) throw ConfigError("no training data: pass --data or set train_data");
  if (a.workers) cfg.workers = a.workers;
  const auto ckpt = run_training(cfg, data, a.out, a.resume);
  out << "checkpoint " << ckpt.string() << "\n";
}

inline void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto data = datasets::read_dataset(a.data);
  if (!a.split.empty()) {
    const auto want = datasets::parse_split(a.split);
    if (want == datasets::Split::train_id) throw ConfigError("--split must be id or ood");
    if (data.manifest.split != want)
      throw ConfigError("dataset " + a.data + " holds split " + datasets::to_string(data.manifest.split) +
                        ", --split asked for " + datasets::to_string(want));
  }
  const auto r = run_evaluation(a.ckpt, data, a.workers);
  evaluation::write_report(r, a.out);
  out << "nmse " << evaluation::detail::num(r.aggregates.at("nmse").mean) << " +- "
      << evaluation::detail::num(r.aggregates.at("nmse").std) << " over " << r.envs.size() << " environments\n";
}

inline void cmd_report(const ReportArgs& a, std::ostream& out) {
  namespace fs = std::filesystem;
  if (a.in.empty()) throw ConfigError("report needs at least one --in file");
  std::map<std::string, std::map<std::string, double>> by_tag;  // tag -> split -> mean nmse
  for (const auto& path : a.in) {
    const auto r = evaluation::read_report(path);
    const std::string stem = fs::path(path).stem().string();
    out << stem << " [" << r.system << " " << r.split << "]";
    for (const auto& [k, v] : r.aggregates)
      out << " " << k << "=" << evaluation::detail::num(v.mean) << "+-" << evaluation::detail::num(v.std);
    out << "\n";
    by_tag[r.model_tag][r.split] = r.aggregates.at("nmse").mean;
    if (!a.plots.empty()) {
      evaluation::write_metrics_csv(r, fs::path(a.plots) / (stem + ".csv"));
      evaluation::write_showcase(r, fs::path(a.plots) / stem);
    }
  }
  std::vector<evaluation::FitPoint> pts;
  for (const auto& [tag, splits] : by_tag)
    if (splits.count("test_id") && splits.count("test_ood")) pts.push_back({tag, splits.at("test_id"), splits.at("test_ood")});
  if (pts.size() >= 2 && !a.plots.empty()) {
    const auto fit = evaluation::id_ood_fit(pts);
    evaluation::write_id_ood_svg(fit, fs::path(a.plots) / "id_ood.svg");
    out << "id-ood fit: slope " << fit.slope << " intercept " << fit.intercept << " r2 " << fit.r2 << "\n";
  }
}

inline void cmd_recipe_run(const RecipeArgs& a, std::ostream& out) {
  RecipeOptions opt;
  opt.scale = a.scale;
  opt.workers = a.workers;
  opt.log = &out;
  opt.dry_run = a.dry_run;
  const auto s = run_recipe(load_recipe(a.recipe), a.work, opt);
  out << "recipe " << s.recipe << " (" << s.scale << "): " << s.runs.size() << " runs";
  if (s.verdict)
    out << ", " << s.verdict->a << " vs " << s.verdict->b << ": " << s.verdict->wins << "/" << s.verdict->seeds.size()
        << " seeds, " << (s.verdict->passed ? "PASS" : "FAIL");
  if (a.dry_run)
    out << ", validated\n";
  else
    out << ", summary in " << (std::filesystem::path(a.work) / "summary.json").string() << "\n";
}

inline std::string error_type(const std::exception& e) {
  if (dynamic_cast<const NonFiniteError*>(&e)) return "NonFiniteError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "FilesystemError";
  return "InternalError";
}

/// Parses argv and dispatches. Errors go to `err` as one JSON line
/// {"error": {"command", "type", "message"}}; the return value is the exit code.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"imooe: multi-environment PDE forecasting with operator experts"};
  app.require_subcommand(1);
  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "simulate a dataset split");
  gen->add_option("--system", g.system, "dr|ns|bg|sw|hc")->required();
  gen->add_option("--split", g.split, "train|id|ood")->capture_default_str();
  gen->add_option("--envs", g.envs)->capture_default_str();
  gen->add_option("--traj", g.traj)->capture_default_str();
  gen->add_option("--res", g.res)->capture_default_str();
  gen->add_option("--seed", g.seed)->capture_default_str();
  gen->add_option("--workers", g.workers, "0 = all cores");
  gen->add_option("--out", g.out)->required();

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", t.config)->required();
  tr->add_option("--data", t.data);
  tr->add_option("--out", t.out)->required();
  tr->add_option("--resume", t.resume, "checkpoint to continue from");
  tr->add_option("--workers", t.workers);

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "zero-shot evaluation of a checkpoint");
  ev->add_option("--ckpt", e.ckpt)->required();
  ev->add_option("--data", e.data)->required();
  ev->add_option("--split", e.split, "id|ood");
  ev->add_option("--out", e.out)->required();
  ev->add_option("--workers", e.workers);

  ReportArgs r;
  auto* rep = app.add_subcommand("report", "tables and figures from evaluation reports");
  rep->add_option("--in", r.in)->required();
  rep->add_option("--plots", r.plots);

  RecipeArgs rc;
  auto* recipe = app.add_subcommand("recipe", "experiment recipes");
  recipe->require_subcommand(1);
  auto* run = recipe->add_subcommand("run", "run a recipe file");
  run->add_option("recipe", rc.recipe)->required();
  run->add_option("--work", rc.work)->required();
  run->add_option("--scale", rc.scale, "desk|paper")->capture_default_str();
  run->add_option("--workers", rc.workers);
  run->add_flag("--dry-run", rc.dry_run, "resolve and validate stages without running them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err);
  }
  std::string command = "?";
  try {
    if (gen->parsed()) {
      command = "generate";
      cmd_generate(g, out);
    } else if (tr->parsed()) {
      command = "train";
      cmd_train(t, out);
    } else if (ev->parsed()) {
      command = "eval";
      cmd_eval(e, out);
    } else if (rep->parsed()) {
      command = "report";
      cmd_report(r, out);
    } else if (run->parsed()) {
      command = "recipe run";
      cmd_recipe_run(rc, out);
    }
  } catch (const std::exception& ex) {
    err << nlohmann::json{{"error", {{"command", command}, {"type", error_type(ex)}, {"message", ex.what()}}}}.dump()
        << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace imooe::cli
