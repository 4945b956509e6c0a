#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/spectral.hpp"
#include "json.hpp"

namespace imooe::model {

enum class FusionMode { additive, nonlinear };
enum class MaskMode { learned, none };
/// Which mask values a forward pass uses.
enum class MaskUse { soft, hard, straight_through };

inline std::string to_string(FusionMode m) { return m == FusionMode::additive ? "additive" : "nonlinear"; }
inline FusionMode parse_fusion(const std::string& s) {
  if (s == "additive") return FusionMode::additive;
  if (s == "nonlinear") return FusionMode::nonlinear;
  throw ConfigError("unknown fusion mode '" + s + "' (additive|nonlinear)");
}
inline std::string to_string(MaskUse m) {
  switch (m) {
    case MaskUse::soft: return "soft";
    case MaskUse::hard: return "hard";
    case MaskUse::straight_through: return "straight_through";
  }
  return "?";
}
inline MaskUse parse_mask_use(const std::string& s) {
  if (s == "soft") return MaskUse::soft;
  if (s == "hard") return MaskUse::hard;
  if (s == "straight_through") return MaskUse::straight_through;
  throw ConfigError("unknown mask use '" + s + "' (soft|hard|straight_through)");
}

struct ModelConfig {
  std::size_t channels = 1;
  std::size_t rows = 64;
  std::size_t cols = 64;
  std::size_t window = 10;

  std::size_t experts = 2;
  std::string backbone = "fno";
  std::size_t layers = 4;
  std::size_t width = 64;
  std::size_t modes = 16;
  /// Hidden width of the expert projection; 0 means 2 * width.
  std::size_t projection_width = 0;

  std::size_t head_width = 64;
  FusionMode fusion = FusionMode::additive;
  std::size_t fusion_width = 128;
  std::size_t fusion_depth = 2;
  std::size_t cond_dim = 1;
  /// false: condition on a constant ones vector (parameters unknown).
  bool known_parameters = true;

  MaskMode mask = MaskMode::learned;
  /// Derivative kinds fed to the experts; others are zeroed.
  std::vector<std::string> derivative_kinds = {"dx", "dy", "dxx", "dyy", "dxy"};
  double mask_temperature = 1.0;
  MaskUse train_mask = MaskUse::soft;
  MaskUse eval_mask = MaskUse::hard;

  std::uint64_t init_seed = 0;

  std::size_t proj_width() const { return projection_width ? projection_width : 2 * width; }
  std::size_t stack_channels() const { return spectral::kDerivativeKinds * channels; }
  std::size_t expert_inputs() const { return 2 + window * channels + stack_channels(); }

  void validate() const {
    if (experts < 1) throw ConfigError("model.experts must be >= 1");
    if (backbone != "fno") throw ConfigError("unsupported backbone '" + backbone + "' (fno)");
    if (channels < 1 || window < 1 || layers < 1 || width < 1 || head_width < 1)
      throw ConfigError("model sizes must be positive");
    if (modes < 1 || modes > rows / 2 || modes > cols / 2)
      throw ConfigError("model.modes " + std::to_string(modes) + " exceeds half the grid");
    if (cond_dim < 1) throw ConfigError("model.cond_dim must be >= 1");
    if (!(mask_temperature > 0.0)) throw ConfigError("model.mask_temperature must be > 0");
    if (fusion == FusionMode::nonlinear && (fusion_depth < 1 || fusion_width < 1))
      throw ConfigError("nonlinear fusion needs fusion_depth, fusion_width >= 1");
    for (const auto& k : derivative_kinds) kind_index(k);
  }

  static std::size_t kind_index(const std::string& name) {
    for (std::size_t i = 0; i < spectral::kDerivativeKinds; ++i)
      if (name == spectral::kDerivativeNames[i]) return i;
    throw ConfigError("unknown derivative kind '" + name + "' (dx|dy|dxx|dyy|dxy)");
  }

  /// 1 for stack channels whose derivative kind is enabled.
  std::vector<double> kind_gate() const {
    std::vector<double> g(stack_channels(), 0.0);
    for (const auto& k : derivative_kinds) {
      const std::size_t idx = kind_index(k);
      for (std::size_t c = 0; c < channels; ++c) g[idx * channels + c] = 1.0;
    }
    return g;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"channels", c.channels},
       {"rows", c.rows},
       {"cols", c.cols},
       {"window", c.window},
       {"experts", c.experts},
       {"backbone", c.backbone},
       {"layers", c.layers},
       {"width", c.width},
       {"modes", c.modes},
       {"projection_width", c.projection_width},
       {"head_width", c.head_width},
       {"fusion", to_string(c.fusion)},
       {"fusion_width", c.fusion_width},
       {"fusion_depth", c.fusion_depth},
       {"cond_dim", c.cond_dim},
       {"known_parameters", c.known_parameters},
       {"mask", c.mask == MaskMode::learned ? "learned" : "none"},
       {"derivative_kinds", c.derivative_kinds},
       {"mask_temperature", c.mask_temperature},
       {"train_mask", to_string(c.train_mask)},
       {"eval_mask", to_string(c.eval_mask)},
       {"init_seed", c.init_seed}};
}

/// Reads the keys present in `j` over the current values of `c`.
inline void update_from_json(ModelConfig& c, const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "channels",    "rows",         "cols",         "window",   "experts",          "backbone",
      "layers",      "width",        "modes",        "projection_width", "head_width", "fusion",
      "fusion_width", "fusion_depth", "cond_dim",    "known_parameters", "mask",     "derivative_kinds",
      "mask_temperature", "train_mask", "eval_mask", "init_seed"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown model key '" + k + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("channels", c.channels);
  get("rows", c.rows);
  get("cols", c.cols);
  get("window", c.window);
  get("experts", c.experts);
  get("backbone", c.backbone);
  get("layers", c.layers);
  get("width", c.width);
  get("modes", c.modes);
  get("projection_width", c.projection_width);
  get("head_width", c.head_width);
  if (j.contains("fusion")) c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  get("fusion_width", c.fusion_width);
  get("fusion_depth", c.fusion_depth);
  get("cond_dim", c.cond_dim);
  get("known_parameters", c.known_parameters);
  if (j.contains("mask")) {
    const auto m = j.at("mask").get<std::string>();
    if (m != "learned" && m != "none") throw ConfigError("model.mask must be learned|none");
    c.mask = m == "learned" ? MaskMode::learned : MaskMode::none;
  }
  get("derivative_kinds", c.derivative_kinds);
  get("mask_temperature", c.mask_temperature);
  if (j.contains("train_mask")) c.train_mask = parse_mask_use(j.at("train_mask").get<std::string>());
  if (j.contains("eval_mask")) c.eval_mask = parse_mask_use(j.at("eval_mask").get<std::string>());
  get("init_seed", c.init_seed);
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  update_from_json(c, j);
}

}  // namespace imooe::model
