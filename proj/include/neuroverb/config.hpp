#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace neuroverb {

// Architecture dimensions. Defaults are the full-size model; desk() is a
// proportionally reduced model for fast experiments and tests.
struct ModelConfig {
  std::size_t frame_size = 4096;
  std::size_t hop = 2048;
  std::size_t context = 4;
  std::size_t bands = 32;
  std::size_t conv_kernel = 64;
  std::size_t local_kernel = 128;
  std::size_t pool = 64;
  std::vector<std::size_t> shared_lstm = {64, 32};
  std::size_t branch_lstm = 16;
  std::size_t saaf_intervals = 25;
  std::size_t sfir_units = 1024;
  std::size_t sfir_interval = 8;
  std::vector<std::size_t> dnn_saaf = {32, 16, 16, 32};
  std::vector<std::size_t> se_lstm = {32, 512, 32};
  double dropout = 0.1;
  int sample_rate = 16000;

  static ModelConfig full() { return {}; }
  static ModelConfig desk();

  std::size_t context_frames() const { return 2 * context + 1; }
  std::size_t pooled_steps() const { return frame_size / pool; }
  std::size_t filter_length() const { return sfir_units * sfir_interval; }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LossConfig {
  double alpha_time = 1.0;
  double alpha_spec = 1e-4;
  double pre_emphasis = 0.95;

  bool operator==(const LossConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double finetune_factor = 0.75;
  bool finetune = true;  // false stops after the main phase
  std::size_t patience = 25;
  std::size_t max_epochs = 1000;           // per phase
  std::size_t pretrain_max_epochs = 1000;
  double lipschitz = 1.0;
  double lipschitz_weight = 1e-3;
  double val_frac = 0.05;
  double test_frac = 0.05;
  bool normalize = false;
  double fadeout_s = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
};

// Flat `key = value` text; lists are comma separated, '#' starts a comment.
// Keys use the field names above; a `preset = full|desk` line (first) selects
// the base model dimensions.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& config);

std::string format_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

}  // namespace neuroverb
