#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imooe/errors.hpp"
#include "imooe/random.hpp"

namespace imooe::datasets {

enum class SystemId { DR, NS, BG, SW, HC };
enum class Split { train_id, test_id, test_ood };

inline std::string to_string(SystemId s) {
  switch (s) {
    case SystemId::DR: return "dr";
    case SystemId::NS: return "ns";
    case SystemId::BG: return "bg";
    case SystemId::SW: return "sw";
    case SystemId::HC: return "hc";
  }
  return "?";
}

inline SystemId parse_system(std::string_view s) {
  if (s == "dr" || s == "DR") return SystemId::DR;
  if (s == "ns" || s == "NS") return SystemId::NS;
  if (s == "bg" || s == "BG") return SystemId::BG;
  if (s == "sw" || s == "SW") return SystemId::SW;
  if (s == "hc" || s == "HC") return SystemId::HC;
  throw ConfigError("unknown system id '" + std::string(s) + "'");
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train_id: return "train_id";
    case Split::test_id: return "test_id";
    case Split::test_ood: return "test_ood";
  }
  return "?";
}

/// Accepts both the CLI spelling (train/id/ood) and the manifest spelling.
inline Split parse_split(std::string_view s) {
  if (s == "train" || s == "train_id") return Split::train_id;
  if (s == "id" || s == "test_id") return Split::test_id;
  if (s == "ood" || s == "test_ood") return Split::test_ood;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

/// Closed interval, or half-open [lo, hi) when `upper_open`.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool upper_open = false;

  bool contains(double v) const { return v >= lo && (upper_open ? v < hi : v <= hi); }
  double length() const { return hi - lo; }
};

/// Union of disjoint intervals.
struct Range {
  std::vector<Interval> parts;

  bool empty() const { return parts.empty(); }
  bool contains(double v) const {
    for (const auto& p : parts)
      if (p.contains(v)) return true;
    return false;
  }
  double min() const { return parts.front().lo; }
  double max() const { return parts.back().hi; }

  /// Picks a part with probability proportional to its length, then uniform inside.
  double sample(Rng& rng) const {
    if (parts.empty()) throw ConfigError("cannot sample from an empty range");
    double total = 0.0;
    for (const auto& p : parts) total += p.length();
    double pick = uniform(rng, 0.0, total);
    for (const auto& p : parts) {
      if (pick < p.length() || &p == &parts.back()) return uniform(rng, p.lo, p.hi);
      pick -= p.length();
    }
    return parts.back().lo;
  }
};

enum class ParamRole { coefficient, initial, forcing };

struct ParamSpec {
  std::string name;
  ParamRole role = ParamRole::coefficient;
  Range id_range;
  Range ood_range;
  std::optional<double> fixed;  // held constant across all splits
};

struct SystemSpec {
  SystemId id = SystemId::DR;
  std::size_t channels = 1;
  std::array<double, 2> extent{1.0, 1.0};  // (Lx, Ly)
  double horizon = 1.0;                    // T
  std::size_t saved_steps = 21;            // N_t
  std::vector<std::string> channel_names;
  std::vector<ParamSpec> params;

  double dt_saved() const { return horizon / double(saved_steps - 1); }

  const ParamSpec& param(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw ConfigError("system " + to_string(id) + " has no parameter '" + std::string(name) + "'");
  }

  /// Throws unless every varied parameter has ID and OOD ranges that do not intersect.
  void assert_disjoint() const {
    for (const auto& p : params) {
      if (p.fixed) continue;
      for (const auto& a : p.id_range.parts)
        for (const auto& b : p.ood_range.parts) {
          const bool a_below = a.upper_open ? a.hi <= b.lo : a.hi < b.lo;
          const bool b_below = b.upper_open ? b.hi <= a.lo : b.hi < a.lo;
          if (!a_below && !b_below)
            throw ConfigError("ID and OOD ranges of " + p.name + " overlap for system " + to_string(id));
        }
    }
  }
};

namespace detail {

inline Range closed(double lo, double hi) { return Range{{Interval{lo, hi, false}}}; }
inline Range half_open(double lo, double hi) { return Range{{Interval{lo, hi, true}}}; }
inline Range two(double a, double b, double c, double d) {
  return Range{{Interval{a, b, false}, Interval{c, d, false}}};
}

inline SystemSpec build(SystemId id) {
  SystemSpec s;
  s.id = id;
  switch (id) {
    case SystemId::DR:
      // ID upper endpoints are open where they touch the OOD range.
      s.channels = 2;
      s.extent = {2.0, 2.0};
      s.horizon = 20.0;
      s.saved_steps = 21;
      s.channel_names = {"u", "v"};
      s.params = {{"D_u", ParamRole::coefficient, half_open(1e-3, 2e-3), closed(2e-3, 3e-3), {}},
                  {"D_v", ParamRole::coefficient, half_open(5e-3, 1e-2), closed(1e-2, 1.5e-2), {}},
                  {"k", ParamRole::coefficient, half_open(5e-3, 1e-2), closed(1e-2, 1.5e-2), {}}};
      break;
    case SystemId::NS:
      s.channels = 1;
      s.extent = {1.0, 1.0};
      s.horizon = 50.0;
      s.saved_steps = 31;
      s.channel_names = {"omega"};
      s.params = {{"nu", ParamRole::coefficient, closed(1e-5, 1e-3), two(5e-6, 8e-6, 1.2e-3, 2e-3), {}},
                  {"w", ParamRole::forcing, {}, {}, 2.0}};
      break;
    case SystemId::BG:
      s.channels = 2;
      s.extent = {64.0, 64.0};
      s.horizon = 1.0;
      s.saved_steps = 21;
      s.channel_names = {"u", "v"};
      s.params = {{"nu", ParamRole::coefficient, closed(5e-3, 5e-2), two(2.5e-3, 4e-3, 6e-2, 1e-1), {}}};
      break;
    case SystemId::SW:
      s.channels = 1;
      s.extent = {5.0, 5.0};
      s.horizon = 1.0;
      s.saved_steps = 21;
      s.channel_names = {"h"};
      s.params = {{"radius", ParamRole::initial, half_open(0.3, 0.63), closed(0.63, 0.7), {}}};
      break;
    case SystemId::HC:
      s.channels = 1;
      s.extent = {1.0, 1.0};
      s.horizon = 5.0;
      s.saved_steps = 21;
      s.channel_names = {"u"};
      s.params = {{"m1", ParamRole::forcing, half_open(1.0, 2.0), closed(2.0, 3.0), {}},
                  {"m2", ParamRole::forcing, half_open(5.0, 10.0), closed(10.0, 15.0), {}},
                  {"m3", ParamRole::forcing, half_open(1.0, 2.0), closed(2.0, 3.0), {}},
                  {"A", ParamRole::forcing, {}, {}, 200.0}};
      break;
  }
  s.assert_disjoint();
  return s;
}

}  // namespace detail

inline const SystemSpec& system_spec(SystemId id) {
  static const std::array<SystemSpec, 5> specs = {detail::build(SystemId::DR), detail::build(SystemId::NS),
                                                   detail::build(SystemId::BG), detail::build(SystemId::SW),
                                                   detail::build(SystemId::HC)};
  return specs[static_cast<std::size_t>(id)];
}

/// A sampled PDE context. `params` holds coefficient/initial-condition values,
/// `forcing` the parameters entering the forcing term.
struct Environment {
  std::int64_t env_id = 0;
  SystemId system = SystemId::DR;
  std::map<std::string, double> params;
  std::map<std::string, double> forcing;
  Split split = Split::train_id;
  std::uint64_t seed = 0;

  double value(const std::string& name) const {
    if (auto it = params.find(name); it != params.end()) return it->second;
    if (auto it = forcing.find(name); it != forcing.end()) return it->second;
    throw ConfigError("environment " + std::to_string(env_id) + " has no parameter '" + name + "'");
  }

  /// Parameter values in system order (coefficients/initial, then forcing).
  std::vector<double> condition_vector() const {
    std::vector<double> out;
    const auto& spec = system_spec(system);
    for (const auto& p : spec.params)
      if (p.role != ParamRole::forcing) out.push_back(value(p.name));
    for (const auto& p : spec.params)
      if (p.role == ParamRole::forcing) out.push_back(value(p.name));
    return out;
  }
};

inline const Range& split_range(const ParamSpec& p, Split split) {
  return split == Split::test_ood ? p.ood_range : p.id_range;
}

/// Draws `n_envs` environments, each parameter independently uniform over the
/// split's range. Deterministic in (system, split, n_envs, seed).
inline std::vector<Environment> sample_environments(const SystemSpec& spec, Split split, std::size_t n_envs,
                                                    std::uint64_t seed) {
  if (n_envs == 0) throw ConfigError("n_envs must be >= 1");
  for (const auto& p : spec.params)
    if (!p.fixed && split_range(p, split).empty())
      throw ConfigError("parameter " + p.name + " has an empty range for split " + to_string(split));
  std::vector<Environment> envs;
  envs.reserve(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    Environment env;
    env.env_id = static_cast<std::int64_t>(e);
    env.system = spec.id;
    env.split = split;
    env.seed = derive_seed(seed, {static_cast<std::uint64_t>(spec.id), static_cast<std::uint64_t>(split), e});
    Rng rng(derive_seed(env.seed, {0x70617261ULL}));
    for (const auto& p : spec.params) {
      const double v = p.fixed ? *p.fixed : split_range(p, split).sample(rng);
      (p.role == ParamRole::forcing ? env.forcing : env.params)[p.name] = v;
    }
    envs.push_back(std::move(env));
  }
  return envs;
}

/// Per-trajectory seed inside an environment.
inline std::uint64_t trajectory_seed(const Environment& env, std::size_t traj_index) {
  return derive_seed(env.seed, {0x7472616aULL, traj_index});
}

}  // namespace imooe::datasets
