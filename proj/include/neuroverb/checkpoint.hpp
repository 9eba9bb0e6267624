#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "neuroverb/ad/adam.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/errors.hpp"
#include "neuroverb/model.hpp"

namespace neuroverb {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Values are held as doubles in memory; float32 tensors round-trip exactly.
struct TensorRecord {
  std::string name;
  ad::Shape shape;
  DType dtype = DType::f32;
  std::vector<double> values;
};

struct OptimizerRecord {
  bool present = false;
  ad::AdamConfig config;
  std::uint64_t step = 0;
  std::vector<TensorRecord> m;  // aligned with Checkpoint::params
  std::vector<TensorRecord> v;
};

// File layout (little-endian):
//   "NVRBCKPT" u32 version
//   str config  str phase  u64 epoch  f64 best_val
//   u8 has_optimizer [f64 lr beta1 beta2 eps  u64 step]
//   u32 n_tensors  { str name  u8 dtype  u32 rank  u64 dims[rank]  u64 offset }
//   u64 blob_bytes  blob
//   u32 crc32 of every preceding byte
// Strings are u32 length + bytes. Optimizer moments are stored as tensors
// named "adam.m:<param>" / "adam.v:<param>".
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  std::string phase = "init";
  std::uint64_t epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<TensorRecord> params;
  OptimizerRecord optimizer;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Throws IntegrityError on truncation or checksum mismatch and VersionError
// on an unknown format version. Nothing is returned on failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename T>
TensorRecord make_record(const std::string& name, const ad::Shape& shape, std::span<const T> values) {
  return {name, shape, dtype_of<T>(), std::vector<double>(values.begin(), values.end())};
}

template <typename T>
Checkpoint make_checkpoint(const ReverbModel<T>& model, const ad::AdamState<T>* adam,
                           std::string phase, std::uint64_t epoch, double best_val) {
  Checkpoint ck;
  ck.config = model.config();
  ck.phase = std::move(phase);
  ck.epoch = epoch;
  ck.best_val = best_val;
  const auto named = model.named_parameters();
  for (const auto& p : named) ck.params.push_back(make_record<T>(p.name, p.tensor.shape(), p.tensor.data()));
  if (adam != nullptr && !adam->m.empty()) {
    auto& opt = ck.optimizer;
    opt.present = true;
    opt.config = adam->config;
    opt.step = adam->t;
    if (adam->m.size() != named.size()) {
      throw StateError("make_checkpoint: optimizer state does not cover every parameter");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      opt.m.push_back(make_record<T>("adam.m:" + named[i].name, named[i].tensor.shape(), adam->m[i]));
      opt.v.push_back(make_record<T>("adam.v:" + named[i].name, named[i].tensor.shape(), adam->v[i]));
    }
  }
  return ck;
}

// Copies the checkpoint's parameter values into `model`. Throws ConfigError
// when the architecture differs.
template <typename T>
void restore_parameters(ReverbModel<T>& model, const Checkpoint& ck) {
  if (!(ck.config == model.config())) {
    throw ConfigError("checkpoint was written for a different model configuration");
  }
  auto named = model.named_parameters();
  if (named.size() != ck.params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, model has " +
                      std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& rec = ck.params[i];
    if (rec.name != named[i].name || rec.shape != named[i].tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + rec.name + "' " + ad::to_string(rec.shape) +
                        " does not match model tensor '" + named[i].name + "' " +
                        ad::to_string(named[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto d = named[i].tensor.data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(ck.params[i].values[k]);
  }
}

template <typename T>
ReverbModel<T> model_from_checkpoint(const Checkpoint& ck) {
  ReverbModel<T> model(ck.config);
  restore_parameters(model, ck);
  return model;
}

// Empty optimizer record -> fresh state with `fallback` hyperparameters.
template <typename T>
ad::AdamState<T> restore_optimizer(const Checkpoint& ck, const ad::AdamConfig& fallback) {
  if (!ck.optimizer.present) return ad::AdamState<T>(fallback);
  ad::AdamState<T> st(ck.optimizer.config);
  st.t = ck.optimizer.step;
  for (const auto& r : ck.optimizer.m) st.m.emplace_back(r.values.begin(), r.values.end());
  for (const auto& r : ck.optimizer.v) st.v.emplace_back(r.values.begin(), r.values.end());
  return st;
}

}  // namespace neuroverb
