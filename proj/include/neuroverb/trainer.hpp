#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "neuroverb/audio_io.hpp"
#include "neuroverb/checkpoint.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/loss.hpp"
#include "neuroverb/model.hpp"

namespace neuroverb {

struct EpochLog {
  std::size_t epoch = 0;
  std::string phase;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  Checkpoint best;  // lowest validation loss over every phase that ran
  std::vector<EpochLog> log;
};

// Unsupervised front-end training: dry and wet frames are each reconstructed
// through pretrain_forward and the two losses summed. Only the Conv1D and
// Conv1D-Local kernels are updated. `model` ends with the best parameters.
TrainResult pretrain(ReverbModel<float>& model, const PairedDataset& data, const RunConfig& cfg,
                     const EpochCallback& on_epoch = {});

// Supervised training: a main phase at the configured learning rate, then a
// fine-tuning phase at lr * finetune_factor that starts from the main-phase
// best parameters with a fresh optimizer. Each phase stops `patience` epochs
// after its best validation loss (or at max_epochs). One optimizer step per
// training clip per epoch, with gradients averaged over the clip's frames.
// With train.finetune = false only the main phase runs.
TrainResult train(ReverbModel<float>& model, const PairedDataset& data, const RunConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Mean loss of one clip pair over all its frames, inference mode.
LossBreakdown<float> clip_loss(const ReverbModel<float>& model, const ClipPair& pair,
                               const LossConfig& cfg);

struct ClipMetrics {
  std::string id;
  double mae = 0.0;
  double mse = 0.0;
  double loss = 0.0;
};

struct MetricsTable {
  std::vector<ClipMetrics> rows;
  ClipMetrics mean;  // unweighted mean of the rows, id "mean"
};

// Per-clip metrics of the model's frame outputs against the wet frames.
MetricsTable evaluate(const ReverbModel<float>& model, const std::vector<const ClipPair*>& clips,
                      const LossConfig& cfg);

// Metrics between two equal-length clips, framed like the model input.
ClipMetrics compare_clips(const AudioClip& pred, const AudioClip& target, std::size_t frame_size,
                          std::size_t hop, const LossConfig& cfg, std::string id = {});

void write_metrics_csv(const MetricsTable& table, const std::filesystem::path& path);
std::string format_metrics_csv(const MetricsTable& table);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);
std::string format_log_line(const EpochLog& e);
inline constexpr const char* kLogHeader = "epoch,phase,lr,train_loss,val_loss";

// Log-power STFT grid: one row per frame (rectangular frames, as framed for
// the model), frame_size / 2 + 1 bins per row.
struct Spectrogram {
  std::size_t frame_size = 4096;
  std::size_t hop = 2048;
  int sample_rate = 16000;
  std::vector<std::vector<double>> grid;
};

Spectrogram compute_spectrogram(const AudioClip& clip, std::size_t frame_size = 4096,
                                std::size_t hop = 2048);
void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path);

}  // namespace neuroverb
