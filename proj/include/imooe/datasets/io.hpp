#pragma once

#include <hdf5.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "imooe/datasets/simulate.hpp"
#include "imooe/datasets/systems.hpp"
#include "imooe/errors.hpp"
#include "imooe/parallel.hpp"
#include "imooe/tensor.hpp"
#include "json.hpp"

namespace imooe::datasets {

inline constexpr int kSchemaVersion = 1;

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  SystemId system = SystemId::DR;
  Split split = Split::train_id;
  std::size_t resolution = 64;
  std::size_t trajectories_per_env = 1;
  std::size_t saved_steps = 21;
  std::size_t channels = 1;
  double dt_saved = 1.0;
  double dx = 1.0;
  double dy = 1.0;
  std::uint64_t seed = 0;
  std::vector<Environment> environments;
  /// Per-channel z-score statistics over this dataset's arrays. Models take
  /// theirs from the train_id dataset.
  ChannelStats normalization;
  std::string dtype = "float32";
  std::string layout = "env_{id:04d}/u [n_traj, N_t, C, H, W] C-order";

  Shape env_shape() const { return {trajectories_per_env, saved_steps, channels, resolution, resolution}; }
};

/// Manifest plus one [n_traj, N_t, C, H, W] array per environment (manifest order).
struct Dataset {
  DatasetManifest manifest;
  std::vector<Tensor<float>> arrays;
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Environment& e) {
  return {{"env_id", e.env_id}, {"system", to_string(e.system)}, {"params", e.params},
          {"forcing", e.forcing}, {"split", to_string(e.split)},  {"seed", e.seed}};
}

inline Environment environment_from_json(const nlohmann::json& j) {
  Environment e;
  e.env_id = j.at("env_id").get<std::int64_t>();
  e.system = parse_system(j.at("system").get<std::string>());
  e.params = j.at("params").get<std::map<std::string, double>>();
  e.forcing = j.at("forcing").get<std::map<std::string, double>>();
  e.split = parse_split(j.at("split").get<std::string>());
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : m.environments) envs.push_back(to_json(e));
  return {{"schema_version", m.schema_version},
          {"system", to_string(m.system)},
          {"split", to_string(m.split)},
          {"resolution", m.resolution},
          {"trajectories_per_env", m.trajectories_per_env},
          {"saved_steps", m.saved_steps},
          {"channels", m.channels},
          {"channel_names", system_spec(m.system).channel_names},
          {"dt_saved", m.dt_saved},
          {"dx", m.dx},
          {"dy", m.dy},
          {"seed", m.seed},
          {"environments", envs},
          {"normalization", {{"mean", m.normalization.mean}, {"std", m.normalization.std}}},
          {"dtype", m.dtype},
          {"layout", m.layout}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kSchemaVersion)
    throw FormatError("unsupported dataset schema_version " + std::to_string(m.schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  m.system = parse_system(j.at("system").get<std::string>());
  m.split = parse_split(j.at("split").get<std::string>());
  m.resolution = j.at("resolution").get<std::size_t>();
  m.trajectories_per_env = j.at("trajectories_per_env").get<std::size_t>();
  m.saved_steps = j.at("saved_steps").get<std::size_t>();
  m.channels = j.at("channels").get<std::size_t>();
  m.dt_saved = j.at("dt_saved").get<double>();
  m.dx = j.at("dx").get<double>();
  m.dy = j.at("dy").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("environments")) m.environments.push_back(environment_from_json(e));
  m.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
  m.normalization.std = j.at("normalization").at("std").get<std::vector<double>>();
  m.dtype = j.at("dtype").get<std::string>();
  m.layout = j.at("layout").get<std::string>();
  if (m.dtype != "float32") throw FormatError("unsupported dtype " + m.dtype);
  return m;
}

// ---------------------------------------------------------------------------
// HDF5

namespace detail {

class H5Id {
 public:
  using Closer = herr_t (*)(hid_t);
  H5Id(hid_t id, Closer close, const std::string& what) : id_(id), close_(close) {
    if (id_ < 0) throw FormatError("HDF5: " + what);
  }
  H5Id(const H5Id&) = delete;
  H5Id& operator=(const H5Id&) = delete;
  ~H5Id() {
    if (id_ >= 0) close_(id_);
  }
  hid_t get() const { return id_; }

 private:
  hid_t id_;
  Closer close_;
};

inline void quiet_hdf5() { H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr); }

inline std::string env_group_name(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "env_%04lld", static_cast<long long>(id));
  return buf;
}

}  // namespace detail

inline ChannelStats compute_channel_stats(const std::vector<Tensor<float>>& arrays, std::size_t channels) {
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  std::vector<std::size_t> count(channels, 0);
  for (const auto& a : arrays) {
    const std::size_t plane = a.dim(3) * a.dim(4);
    const std::size_t frames = a.dim(0) * a.dim(1);
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t c = 0; c < channels; ++c) {
        const float* p = a.ptr() + (f * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum[c] += p[i];
        count[c] += plane;
      }
  }
  ChannelStats s{std::vector<double>(channels), std::vector<double>(channels)};
  for (std::size_t c = 0; c < channels; ++c) s.mean[c] = count[c] ? sum[c] / double(count[c]) : 0.0;
  for (const auto& a : arrays) {
    const std::size_t plane = a.dim(3) * a.dim(4);
    const std::size_t frames = a.dim(0) * a.dim(1);
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t c = 0; c < channels; ++c) {
        const float* p = a.ptr() + (f * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq[c] += (p[i] - s.mean[c]) * (p[i] - s.mean[c]);
      }
  }
  for (std::size_t c = 0; c < channels; ++c) s.std[c] = count[c] ? std::sqrt(sq[c] / double(count[c])) : 0.0;
  return s;
}

inline void validate(const Dataset& d) {
  const auto& m = d.manifest;
  if (m.environments.size() != d.arrays.size())
    throw ShapeError("manifest lists " + std::to_string(m.environments.size()) + " environments but " +
                     std::to_string(d.arrays.size()) + " arrays were given");
  for (std::size_t i = 0; i < d.arrays.size(); ++i)
    if (d.arrays[i].shape() != m.env_shape())
      throw ShapeError("array of " + detail::env_group_name(m.environments[i].env_id) + " has shape " +
                       shape_string(d.arrays[i].shape()) + ", manifest expects " + shape_string(m.env_shape()));
  if (m.normalization.mean.size() != m.channels || m.normalization.std.size() != m.channels)
    throw ConfigError("normalization stats must have one entry per channel");
  for (double s : m.normalization.std)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("normalization std must be > 0 for every channel");
}

inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  validate(d);
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
    os << to_json(d.manifest).dump(2) << '\n';
  }
  detail::quiet_hdf5();
  const auto path = (dir / "data.h5").string();
  detail::H5Id file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose, "create " + path);
  for (std::size_t i = 0; i < d.arrays.size(); ++i) {
    const auto name = detail::env_group_name(d.manifest.environments[i].env_id);
    detail::H5Id group(H5Gcreate2(file.get(), name.c_str(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT), H5Gclose,
                       "create group " + name);
    std::vector<hsize_t> dims(d.arrays[i].shape().begin(), d.arrays[i].shape().end());
    detail::H5Id space(H5Screate_simple(int(dims.size()), dims.data(), nullptr), H5Sclose, "dataspace");
    detail::H5Id dset(H5Dcreate2(group.get(), "u", H5T_IEEE_F32LE, space.get(), H5P_DEFAULT, H5P_DEFAULT,
                                 H5P_DEFAULT),
                      H5Dclose, "create dataset " + name + "/u");
    if (H5Dwrite(dset.get(), H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, d.arrays[i].ptr()) < 0)
      throw FormatError("HDF5: write " + name + "/u");
  }
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw FormatError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    is >> j;
    return manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  detail::quiet_hdf5();
  const auto path = (dir / "data.h5").string();
  detail::H5Id file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose, "open " + path);
  for (const auto& env : d.manifest.environments) {
    const auto name = detail::env_group_name(env.env_id) + "/u";
    detail::H5Id dset(H5Dopen2(file.get(), name.c_str(), H5P_DEFAULT), H5Dclose, "open dataset " + name);
    detail::H5Id space(H5Dget_space(dset.get()), H5Sclose, "dataspace of " + name);
    const int rank = H5Sget_simple_extent_ndims(space.get());
    std::vector<hsize_t> dims(std::size_t(std::max(rank, 0)));
    H5Sget_simple_extent_dims(space.get(), dims.data(), nullptr);
    Shape shape(dims.begin(), dims.end());
    if (shape != d.manifest.env_shape())
      throw ShapeError("dataset " + name + " has shape " + shape_string(shape) + ", manifest expects " +
                       shape_string(d.manifest.env_shape()));
    Tensor<float> a(shape);
    if (H5Dread(dset.get(), H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, a.ptr()) < 0)
      throw FormatError("HDF5: read " + name);
    d.arrays.push_back(std::move(a));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerateOptions {
  SystemId system = SystemId::DR;
  Split split = Split::train_id;
  std::size_t envs = 16;
  std::size_t trajectories = 64;
  std::size_t resolution = 64;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
};

/// Samples environments and simulates every (env, trajectory) pair. Pairs run
/// in parallel; results land in fixed slots so output is schedule-independent.
inline Dataset generate_dataset(const GenerateOptions& opt) {
  const SystemSpec& spec = system_spec(opt.system);
  Dataset d;
  auto& m = d.manifest;
  m.system = opt.system;
  m.split = opt.split;
  m.resolution = opt.resolution;
  m.trajectories_per_env = opt.trajectories;
  m.saved_steps = spec.saved_steps;
  m.channels = spec.channels;
  m.dt_saved = spec.dt_saved();
  m.dx = spec.extent[0] / double(opt.resolution);
  m.dy = spec.extent[1] / double(opt.resolution);
  m.seed = opt.seed;
  m.environments = sample_environments(spec, opt.split, opt.envs, opt.seed);
  d.arrays.assign(opt.envs, Tensor<float>(m.env_shape()));
  const std::size_t frame = spec.saved_steps * spec.channels * opt.resolution * opt.resolution;
  SolveOptions solve;
  solve.resolution = opt.resolution;
  parallel_for(opt.envs * opt.trajectories, worker_count(opt.workers), [&](std::size_t job) {
    const std::size_t e = job / opt.trajectories, t = job % opt.trajectories;
    const auto& env = m.environments[e];
    const Trajectory traj = simulate(env, trajectory_seed(env, t), solve);
    std::copy(traj.u.data().begin(), traj.u.data().end(), d.arrays[e].ptr() + t * frame);
  });
  m.normalization = compute_channel_stats(d.arrays, spec.channels);
  return d;
}

}  // namespace imooe::datasets
