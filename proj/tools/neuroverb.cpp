// neuroverb: train, evaluate and run the plate/spring reverb model.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error
// (unreadable audio, manifest or checkpoint), 3 numeric failure (NaN).

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "neuroverb/audio_io.hpp"
#include "neuroverb/checkpoint.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/errors.hpp"
#include "neuroverb/model.hpp"
#include "neuroverb/random.hpp"
#include "neuroverb/trainer.hpp"

namespace nv = neuroverb;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr const char* kSeedEnv = "NEUROVERB_SEED";

nv::RunConfig load_run_config(const std::string& path) {
  nv::RunConfig cfg = path.empty() ? nv::RunConfig{} : nv::load_config(path);
  if (const char* s = std::getenv(kSeedEnv); s != nullptr && *s != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != std::string(s).size()) throw std::invalid_argument(s);
      cfg.train.seed = v;
    } catch (const std::exception&) {
      throw nv::ConfigError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + s + "'");
    }
  }
  return cfg;
}

nv::DatasetOptions dataset_options(const nv::RunConfig& cfg) {
  nv::DatasetOptions o;
  o.required_sample_rate = cfg.model.sample_rate;
  o.normalize = cfg.train.normalize;
  o.fadeout_s = cfg.train.fadeout_s;
  o.val_frac = cfg.train.val_frac;
  o.test_frac = cfg.train.test_frac;
  o.seed = derive_seed(cfg.train.seed, nv::SeedStream::split);
  return o;
}

// Streams epoch lines to stderr and, when requested, to a CSV log.
class EpochSink {
 public:
  explicit EpochSink(const std::string& path) {
    if (path.empty()) return;
    file_.emplace(path);
    if (!*file_) throw nv::WriteError("cannot write training log: " + path);
    *file_ << nv::kLogHeader << '\n';
  }

  void operator()(const nv::EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " [" << e.phase << "] lr=" << e.lr << " train=" << e.train_loss
              << " val=" << e.val_loss << '\n';
    if (file_) *file_ << nv::format_log_line(e) << std::endl;
  }

 private:
  std::optional<std::ofstream> file_;
};

nv::BitDepth parse_depth(const std::string& s) {
  if (s == "pcm16") return nv::BitDepth::pcm16;
  if (s == "pcm24") return nv::BitDepth::pcm24;
  return nv::BitDepth::float32;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural plate and spring reverb modeling"};
  app.require_subcommand(1);

  std::string manifest, config_path, out_path, init_path, ckpt_path, log_path, in_path;
  std::string split_name = "test", depth = "float32";
  std::size_t frame_size = 4096, hop = 2048;

  auto* pre = app.add_subcommand("pretrain", "Train the front-end to reconstruct dry and wet frames");
  pre->add_option("--manifest", manifest, "Dataset manifest (dry<TAB>wet<TAB>id per line)")->required();
  pre->add_option("--config", config_path, "key = value configuration file");
  pre->add_option("--out", out_path, "Output checkpoint")->required();
  pre->add_option("--log", log_path, "Per-epoch CSV log");

  auto* tr = app.add_subcommand("train", "Supervised training (main phase, then fine-tuning)");
  tr->add_option("--manifest", manifest, "Dataset manifest")->required();
  tr->add_option("--config", config_path, "key = value configuration file");
  tr->add_option("--init", init_path, "Pretrained checkpoint")->required();
  tr->add_option("--out", out_path, "Output checkpoint")->required();
  tr->add_option("--log", log_path, "Per-epoch CSV log");

  auto* ev = app.add_subcommand("eval", "Write per-clip mae, mse and loss for one split");
  ev->add_option("--manifest", manifest, "Dataset manifest")->required();
  ev->add_option("--config", config_path, "Configuration (dataset options and split seed)");
  ev->add_option("--ckpt", ckpt_path, "Trained checkpoint")->required();
  ev->add_option("--split", split_name, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));
  ev->add_option("--out", out_path, "Metrics CSV")->required();

  auto* inf = app.add_subcommand("infer", "Process a WAV file with a trained model");
  inf->add_option("--ckpt", ckpt_path, "Trained checkpoint")->required();
  inf->add_option("--in", in_path, "Input WAV")->required();
  inf->add_option("--out", out_path, "Output WAV")->required();
  inf->add_option("--bit-depth", depth, "pcm16, pcm24 or float32")
      ->check(CLI::IsMember({"pcm16", "pcm24", "float32"}));

  auto* spec = app.add_subcommand("spectrogram", "Export a log-power spectrogram grid as CSV");
  spec->add_option("--in", in_path, "Input WAV")->required();
  spec->add_option("--out", out_path, "Output CSV")->required();
  spec->add_option("--frame-size", frame_size, "FFT frame length");
  spec->add_option("--hop", hop, "Hop size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (pre->parsed()) {
      const auto cfg = load_run_config(config_path);
      const auto data = nv::load_dataset(manifest, dataset_options(cfg));
      nv::ReverbModel<float> model(cfg.model, derive_seed(cfg.train.seed, nv::SeedStream::init));
      EpochSink sink(log_path);
      auto res = nv::pretrain(model, data, cfg, std::ref(sink));
      nv::save_checkpoint(res.best, out_path);
      std::cerr << "best validation loss " << res.best.best_val << " at epoch " << res.best.epoch << '\n';
    } else if (tr->parsed()) {
      const auto cfg = load_run_config(config_path);
      const auto data = nv::load_dataset(manifest, dataset_options(cfg));
      const auto init = nv::load_checkpoint(init_path);
      nv::ReverbModel<float> model(cfg.model);
      nv::restore_parameters(model, init);
      EpochSink sink(log_path);
      auto res = nv::train(model, data, cfg, std::ref(sink));
      nv::save_checkpoint(res.best, out_path);
      std::cerr << "best validation loss " << res.best.best_val << " at epoch " << res.best.epoch << " ("
                << res.best.phase << ")\n";
    } else if (ev->parsed()) {
      auto cfg = load_run_config(config_path);
      const auto ck = nv::load_checkpoint(ckpt_path);
      cfg.model = ck.config;
      const auto data = nv::load_dataset(manifest, dataset_options(cfg));
      const auto model = nv::model_from_checkpoint<float>(ck);
      const auto table = nv::evaluate(model, data.subset(nv::parse_split(split_name)), cfg.loss);
      nv::write_metrics_csv(table, out_path);
      std::cout << nv::format_metrics_csv(table);
    } else if (inf->parsed()) {
      const auto ck = nv::load_checkpoint(ckpt_path);
      const auto model = nv::model_from_checkpoint<float>(ck);
      const auto clip = nv::load_wav(in_path);
      const auto clipped = nv::save_wav(model.process_clip(clip), out_path, parse_depth(depth));
      if (clipped > 0) std::cerr << "warning: " << clipped << " samples clipped\n";
    } else if (spec->parsed()) {
      nv::write_spectrogram_csv(nv::compute_spectrogram(nv::load_wav(in_path), frame_size, hop), out_path);
    }
  } catch (const nv::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const nv::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
