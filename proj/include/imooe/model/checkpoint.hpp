#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "imooe/autodiff.hpp"
#include "imooe/errors.hpp"
#include "imooe/model/config.hpp"
#include "imooe/model/mooe.hpp"
#include "imooe/spectral.hpp"
#include "json.hpp"

namespace imooe::model {

inline constexpr char kCheckpointMagic[8] = {'I', 'M', 'O', 'O', 'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Per-channel z-score statistics of the state.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
};

/// z-score statistics of the condition vector over the training environments.
struct ConditionStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Everything needed to rebuild a trained forecaster, plus optional optimizer state.
template <std::floating_point Real>
struct Checkpoint {
  ModelConfig model;
  std::string system;
  Normalization normalization;
  ConditionStats condition;
  int derivative_ordering = spectral::kDerivativeOrderingVersion;
  /// Free-form training metadata (config, epoch counters, seed, best score).
  nlohmann::json meta = nlohmann::json::object();
  ad::ParameterSet<Real> params;
  std::vector<Tensor<Real>> adam_m;
  std::vector<Tensor<Real>> adam_v;
};

/// FNV-1a over the raw bytes of every parameter, in registration order.
template <std::floating_point Real>
std::uint64_t weight_hash(const ad::ParameterSet<Real>& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value(i).ptr());
    for (std::size_t b = 0; b < p.value(i).size() * sizeof(Real); ++b) {
      h ^= bytes[b];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

template <class Real>
constexpr const char* precision_name() {
  return sizeof(Real) == 4 ? "f32" : "f64";
}

}  // namespace detail

template <std::floating_point Real>
void save_checkpoint(const Checkpoint<Real>& ck, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<const Tensor<Real>*> blobs;
  std::uint64_t offset = 0;
  auto add = [&](const char* group, const std::string& name, const Tensor<Real>& t) {
    tensors.push_back({{"group", group}, {"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(Real);
    blobs.push_back(&t);
  };
  for (std::size_t i = 0; i < ck.params.size(); ++i) add("param", ck.params.name(i), ck.params.value(i));
  for (std::size_t i = 0; i < ck.adam_m.size(); ++i) add("adam_m", ck.params.name(i), ck.adam_m[i]);
  for (std::size_t i = 0; i < ck.adam_v.size(); ++i) add("adam_v", ck.params.name(i), ck.adam_v[i]);
  std::vector<std::string> kinds(spectral::kDerivativeNames.begin(), spectral::kDerivativeNames.end());
  const nlohmann::json header = {
      {"format_version", kCheckpointVersion},
      {"precision", detail::precision_name<Real>()},
      {"derivative_ordering", ck.derivative_ordering},
      {"derivative_stack", {{"kinds", kinds}, {"layout", "kind_major"}}},
      {"model", ck.model},
      {"system", ck.system},
      {"normalization", {{"mean", ck.normalization.mean}, {"std", ck.normalization.std}}},
      {"condition", {{"mean", ck.condition.mean}, {"std", ck.condition.std}}},
      {"weight_hash", hex64(weight_hash(ck.params))},
      {"meta", ck.meta},
      {"tensors", tensors}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot write checkpoint " + tmp.string());
    const std::uint64_t len = text.size();
    os.write(kCheckpointMagic, 8);
    os.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(text.data(), std::streamsize(len));
    for (const auto* t : blobs) os.write(reinterpret_cast<const char*>(t->ptr()), std::streamsize(t->size() * sizeof(Real)));
    if (!os) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Header of a checkpoint without its tensors.
inline nlohmann::json read_checkpoint_header(std::ifstream& is, const std::string& where) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError(where + " is not a checkpoint");
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw FormatError(where + ": unsupported checkpoint version " + std::to_string(version));
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  is.read(text.data(), std::streamsize(len));
  if (!is) throw FormatError(where + ": truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  }
}

/// Loads a checkpoint into precision Real (converting if it was saved in the
/// other precision). Refuses a derivative-ordering version it does not know.
template <std::floating_point Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  const auto h = read_checkpoint_header(is, path.string());
  Checkpoint<Real> ck;
  ck.derivative_ordering = h.at("derivative_ordering").get<int>();
  if (ck.derivative_ordering != spectral::kDerivativeOrderingVersion)
    throw FormatError("checkpoint " + path.string() + " uses derivative ordering version " +
                      std::to_string(ck.derivative_ordering) + ", this build uses " +
                      std::to_string(spectral::kDerivativeOrderingVersion));
  ck.model = h.at("model").get<ModelConfig>();
  ck.system = h.at("system").get<std::string>();
  ck.normalization = {h.at("normalization").at("mean").get<std::vector<double>>(),
                      h.at("normalization").at("std").get<std::vector<double>>()};
  ck.condition = {h.at("condition").at("mean").get<std::vector<double>>(),
                  h.at("condition").at("std").get<std::vector<double>>()};
  ck.meta = h.at("meta");
  const bool f32 = h.at("precision").get<std::string>() == "f32";
  const std::size_t width = f32 ? 4 : 8;
  const auto base = is.tellg();
  for (const auto& t : h.at("tensors")) {
    const Shape shape = t.at("shape").get<Shape>();
    const std::size_t n = shape_size(shape);
    is.seekg(base + std::streamoff(t.at("offset").get<std::uint64_t>()));
    Tensor<Real> v(shape);
    if (f32) {
      std::vector<float> raw(n);
      is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(n * width));
      std::copy(raw.begin(), raw.end(), v.ptr());
    } else {
      std::vector<double> raw(n);
      is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(n * width));
      std::copy(raw.begin(), raw.end(), v.ptr());
    }
    if (!is) throw FormatError(path.string() + ": truncated tensor " + t.at("name").get<std::string>());
    const auto group = t.at("group").get<std::string>();
    if (group == "param")
      ck.params.add(t.at("name").get<std::string>(), std::move(v));
    else if (group == "adam_m")
      ck.adam_m.push_back(std::move(v));
    else if (group == "adam_v")
      ck.adam_v.push_back(std::move(v));
  }
  return ck;
}

/// Builds a model from a checkpoint, verifying that names and shapes match.
template <std::floating_point Real>
MooeModel<Real> restore_model(const Checkpoint<Real>& ck) {
  MooeModel<Real> m(ck.model);
  auto& p = m.params();
  if (p.size() != ck.params.size())
    throw FormatError("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, model has " +
                      std::to_string(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.name(i) != ck.params.name(i) || p.value(i).shape() != ck.params.value(i).shape())
      throw FormatError("checkpoint tensor " + ck.params.name(i) + " " + shape_string(ck.params.value(i).shape()) +
                        " does not match model tensor " + p.name(i) + " " + shape_string(p.value(i).shape()));
    p.value(i) = ck.params.value(i);
  }
  return m;
}

}  // namespace imooe::model
