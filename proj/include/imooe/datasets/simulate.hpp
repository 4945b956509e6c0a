#pragma once

#include <cstdint>
#include <sstream>

#include "imooe/datasets/initial_conditions.hpp"
#include "imooe/datasets/solvers.hpp"
#include "imooe/datasets/systems.hpp"

namespace imooe::datasets {

/// One simulated trajectory, [N_t, C, H, W] float32.
struct Trajectory {
  Tensor<float> u;
  double dt_saved = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  std::int64_t env_id = 0;
};

inline std::string describe(const Environment& env) {
  std::ostringstream os;
  os << "env " << env.env_id << " (" << to_string(env.system) << ", " << to_string(env.split) << "; ";
  bool first = true;
  for (const auto* m : {&env.params, &env.forcing})
    for (const auto& [k, v] : *m) {
      os << (first ? "" : ", ") << k << "=" << v;
      first = false;
    }
  os << ")";
  return os.str();
}

/// Full-precision trajectory [N_t, C, n, n] of `env` for the given trajectory seed.
inline Tensor<double> simulate_double(const Environment& env, std::uint64_t traj_seed, const SolveOptions& opt = {}) {
  const SystemSpec& spec = system_spec(env.system);
  const std::size_t n = opt.resolution;
  const TimeAxis time{spec.horizon, spec.saved_steps};
  const Tensor<double> init = initial_condition(env, traj_seed, n);
  try {
    switch (env.system) {
      case SystemId::DR:
        return solve_dr({env.value("D_u"), env.value("D_v"), env.value("k"), init, spec.extent[0], time}, opt);
      case SystemId::NS: {
        NsProblem p;
        p.nu = env.value("nu");
        p.w = env.value("w");
        p.init = init;
        p.length = spec.extent[0];
        p.time = time;
        return solve_ns(p, opt);
      }
      case SystemId::BG:
        return solve_bg({env.value("nu"), init, spec.extent[0], time}, opt);
      case SystemId::SW: {
        SwProblem p;
        p.init = Tensor<double>({3, n, n});
        std::copy(init.data().begin(), init.data().end(), p.init.ptr());
        p.length = spec.extent[0];
        p.time = time;
        return solve_sw(p, opt);
      }
      case SystemId::HC: {
        HcProblem p;
        p.conductivity = hc_coefficient(traj_seed, n, spec.extent[0]);
        p.init = init;
        p.amplitude = env.value("A");
        p.m1 = env.value("m1");
        p.m2 = env.value("m2");
        p.m3 = env.value("m3");
        p.length = spec.extent[0];
        p.time = time;
        return solve_hc(p, opt);
      }
    }
  } catch (const SimulationError& e) {
    throw SimulationError(describe(env) + ": " + e.what(), e.interval(), e.substep());
  }
  throw ConfigError("unknown system");
}

inline Trajectory simulate(const Environment& env, std::uint64_t traj_seed, const SolveOptions& opt = {}) {
  const SystemSpec& spec = system_spec(env.system);
  Trajectory t;
  t.u = simulate_double(env, traj_seed, opt).cast<float>();
  if (!t.u.all_finite()) throw SimulationError(describe(env) + ": float32 overflow in saved frames", 0, 0);
  t.dt_saved = spec.dt_saved();
  t.dx = spec.extent[0] / double(opt.resolution);
  t.dy = spec.extent[1] / double(opt.resolution);
  t.env_id = env.env_id;
  return t;
}

}  // namespace imooe::datasets
