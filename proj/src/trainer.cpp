#include "neuroverb/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "neuroverb/ad/adam.hpp"
#include "neuroverb/ad/tape.hpp"
#include "neuroverb/dsp.hpp"
#include "neuroverb/loss.hpp"
#include "neuroverb/random.hpp"

namespace neuroverb {

namespace {

using FTensor = ad::Tensor<float>;

struct FramedPair {
  const ClipPair* pair = nullptr;
  std::vector<dsp::Frame> dry;
  std::vector<dsp::Frame> wet;
};

std::vector<FramedPair> frame_pairs(const std::vector<const ClipPair*>& clips, const ModelConfig& mc) {
  std::vector<FramedPair> out;
  for (const auto* p : clips) {
    if (p->dry.sample_rate != mc.sample_rate || p->wet.sample_rate != mc.sample_rate) {
      throw InvalidArgument("clip '" + p->id + "' is at " + std::to_string(p->dry.sample_rate) +
                            " Hz, the model expects " + std::to_string(mc.sample_rate) + " Hz");
    }
    out.push_back({p, dsp::frame_signal(p->dry.samples, mc.frame_size, mc.hop),
                   dsp::frame_signal(p->wet.samples, mc.frame_size, mc.hop)});
  }
  return out;
}

FTensor frame_tensor(const dsp::Frame& f) { return FTensor::from({f.size()}, f); }

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw NumericError("non-finite loss during " + where);
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next() % i]);
  return idx;
}

void ensure_grads(std::vector<FTensor>& params) {
  for (auto& p : params) p.ensure_grad();
}

double pretrain_frame_loss(const ReverbModel<float>& model, const dsp::Frame& frame, const LossConfig& cfg,
                           ad::Tape<float>* tape, float seed) {
  auto lb = compute_loss(frame_tensor(frame), model.pretrain_forward(frame), cfg);
  check_finite(lb.total, "pretraining");
  if (tape != nullptr) tape->backward(lb.objective, seed);
  return lb.total;
}

// Joint dry + wet reconstruction loss averaged over the frames of one pair.
double pretrain_pair_loss(const ReverbModel<float>& model, const FramedPair& fp, const LossConfig& cfg,
                          bool accumulate) {
  const std::size_t n = fp.dry.size();
  const float seed = 1.0f / static_cast<float>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto* frames : {&fp.dry, &fp.wet}) {
      if (accumulate) {
        ad::Tape<float> tape;
        acc += pretrain_frame_loss(model, (*frames)[i], cfg, &tape, seed);
      } else {
        acc += pretrain_frame_loss(model, (*frames)[i], cfg, nullptr, seed);
      }
    }
  }
  return acc / static_cast<double>(n);
}

struct PairLoss {
  double mae = 0.0;
  double mse = 0.0;
  double total = 0.0;
};

// Supervised loss averaged over the frames of one pair; with a context in
// training mode the gradients of the frame mean are accumulated.
PairLoss supervised_pair_loss(const ReverbModel<float>& model, const FramedPair& fp, const LossConfig& cfg,
                              const ForwardContext& ctx, bool accumulate) {
  const auto& mc = model.config();
  const std::size_t n = fp.dry.size();
  const float seed = 1.0f / static_cast<float>(n);
  PairLoss acc;
  for (std::size_t i = 0; i < n; ++i) {
    const auto stack = dsp::make_context(fp.dry, i, mc.context);
    auto run = [&]() {
      auto lb = compute_loss(frame_tensor(fp.wet[i]), model.forward(stack, ctx), cfg);
      check_finite(lb.total, "training");
      acc.mae += lb.mae_time;
      acc.mse += lb.mse_spec;
      acc.total += lb.total;
      return lb;
    };
    if (accumulate) {
      ad::Tape<float> tape;
      auto lb = run();
      tape.backward(lb.objective, seed);
    } else {
      run();
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {acc.mae * inv, acc.mse * inv, acc.total * inv};
}

// Runs epochs until `patience` epochs pass without a strict improvement of
// the validation loss, or max_epochs is reached.
struct PhaseSpec {
  std::string name;
  double lr = 0.0;
  std::size_t max_epochs = 0;
  std::size_t patience = 0;
};

struct PhaseOutcome {
  Checkpoint best;
  bool improved = false;
};

template <typename StepFn, typename ValFn>
PhaseOutcome run_phase(ReverbModel<float>& model, std::vector<FTensor> trainable, const PhaseSpec& spec,
                       std::size_t& epoch_counter, std::vector<EpochLog>& log, const EpochCallback& on_epoch,
                       std::size_t n_train, Rng& shuffle_rng, StepFn&& step, ValFn&& validate) {
  ad::AdamState<float> adam(ad::AdamConfig{spec.lr});
  PhaseOutcome out;
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < spec.max_epochs; ++e) {
    double train_sum = 0.0;
    for (std::size_t idx : shuffled(n_train, shuffle_rng)) {
      train_sum += step(idx);
      ensure_grads(trainable);
      ad::adam_step(trainable, adam);
    }
    EpochLog rec{epoch_counter++, spec.name, spec.lr, train_sum / static_cast<double>(n_train), validate()};
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!out.improved || rec.val_loss < out.best.best_val) {
      // The stored optimizer state is the full-model one only when every
      // parameter is trainable in this phase.
      const bool full = trainable.size() == model.parameters().size();
      out.best = make_checkpoint(model, full ? &adam : nullptr, spec.name, rec.epoch, rec.val_loss);
      out.improved = true;
      since_best = 0;
    } else if (++since_best >= spec.patience) {
      break;
    }
  }
  return out;
}

}  // namespace

TrainResult pretrain(ReverbModel<float>& model, const PairedDataset& data, const RunConfig& cfg,
                     const EpochCallback& on_epoch) {
  const auto train_set = frame_pairs(data.subset(Split::train), model.config());
  const auto val_set = frame_pairs(data.subset(Split::validation), model.config());
  if (train_set.empty()) throw InvalidArgument("pretrain: the training split is empty");
  if (val_set.empty()) throw InvalidArgument("pretrain: the validation split is empty");

  Rng shuffle_rng(derive_seed(cfg.train.seed, SeedStream::shuffle));
  TrainResult result;
  std::size_t epoch = 0;
  auto step = [&](std::size_t idx) { return pretrain_pair_loss(model, train_set[idx], cfg.loss, true); };
  auto validate = [&]() {
    double acc = 0.0;
    for (const auto& fp : val_set) acc += pretrain_pair_loss(model, fp, cfg.loss, false);
    return acc / static_cast<double>(val_set.size());
  };
  PhaseSpec spec{"pretrain", cfg.train.learning_rate, cfg.train.pretrain_max_epochs, cfg.train.patience};
  auto outcome = run_phase(model, model.frontend_parameters(), spec, epoch, result.log, on_epoch,
                           train_set.size(), shuffle_rng, step, validate);
  if (!outcome.improved) throw InvalidArgument("pretrain: max epochs is zero");
  restore_parameters(model, outcome.best);
  result.best = std::move(outcome.best);
  return result;
}

TrainResult train(ReverbModel<float>& model, const PairedDataset& data, const RunConfig& cfg,
                  const EpochCallback& on_epoch) {
  const auto train_set = frame_pairs(data.subset(Split::train), model.config());
  const auto val_set = frame_pairs(data.subset(Split::validation), model.config());
  if (train_set.empty()) throw InvalidArgument("train: the training split is empty");
  if (val_set.empty()) throw InvalidArgument("train: the validation split is empty");

  Rng shuffle_rng(derive_seed(cfg.train.seed, SeedStream::shuffle));
  Rng dropout_rng(derive_seed(cfg.train.seed, SeedStream::dropout));
  const ForwardContext train_ctx{Mode::train, &dropout_rng};
  const ForwardContext infer_ctx{};
  const auto reg_weight = static_cast<float>(cfg.train.lipschitz_weight);

  auto step = [&](std::size_t idx) {
    const double loss = supervised_pair_loss(model, train_set[idx], cfg.loss, train_ctx, true).total;
    if (reg_weight != 0.0f) {
      ad::Tape<float> tape;
      tape.backward(ad::scale(model.regularization(cfg.train.lipschitz), reg_weight));
    }
    return loss;
  };
  auto validate = [&]() {
    double acc = 0.0;
    for (const auto& fp : val_set) acc += supervised_pair_loss(model, fp, cfg.loss, infer_ctx, false).total;
    return acc / static_cast<double>(val_set.size());
  };

  TrainResult result;
  std::size_t epoch = 0;
  PhaseSpec main_spec{"main", cfg.train.learning_rate, cfg.train.max_epochs, cfg.train.patience};
  auto main = run_phase(model, model.parameters(), main_spec, epoch, result.log, on_epoch, train_set.size(),
                        shuffle_rng, step, validate);
  if (!main.improved) throw InvalidArgument("train: max epochs is zero");
  restore_parameters(model, main.best);
  if (!cfg.train.finetune) {
    result.best = std::move(main.best);
    return result;
  }

  PhaseSpec fine_spec{"finetune", cfg.train.learning_rate * cfg.train.finetune_factor, cfg.train.max_epochs,
                      cfg.train.patience};
  auto fine = run_phase(model, model.parameters(), fine_spec, epoch, result.log, on_epoch, train_set.size(),
                        shuffle_rng, step, validate);
  result.best = fine.best.best_val < main.best.best_val ? std::move(fine.best) : std::move(main.best);
  restore_parameters(model, result.best);
  return result;
}

LossBreakdown<float> clip_loss(const ReverbModel<float>& model, const ClipPair& pair, const LossConfig& cfg) {
  const auto fp = frame_pairs({&pair}, model.config());
  const auto l = supervised_pair_loss(model, fp.front(), cfg, ForwardContext{}, false);
  LossBreakdown<float> out;
  out.mae_time = l.mae;
  out.mse_spec = l.mse;
  out.total = l.total;
  return out;
}

namespace {

ClipMetrics mean_row(const std::vector<ClipMetrics>& rows) {
  ClipMetrics m{"mean"};
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.mae += r.mae;
    m.mse += r.mse;
    m.loss += r.loss;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  m.mae *= inv;
  m.mse *= inv;
  m.loss *= inv;
  return m;
}

}  // namespace

MetricsTable evaluate(const ReverbModel<float>& model, const std::vector<const ClipPair*>& clips,
                      const LossConfig& cfg) {
  if (clips.empty()) throw InvalidArgument("evaluate: no clips in the requested split");
  MetricsTable t;
  for (const auto* c : clips) {
    const auto l = clip_loss(model, *c, cfg);
    t.rows.push_back({c->id, l.mae_time, l.mse_spec, l.total});
  }
  t.mean = mean_row(t.rows);
  return t;
}

ClipMetrics compare_clips(const AudioClip& pred, const AudioClip& target, std::size_t frame_size,
                          std::size_t hop, const LossConfig& cfg, std::string id) {
  if (pred.size() != target.size()) {
    throw ShapeError("compare_clips: lengths " + std::to_string(pred.size()) + " and " +
                     std::to_string(target.size()) + " differ");
  }
  const auto fp = dsp::frame_signal(pred.samples, frame_size, hop);
  const auto ft = dsp::frame_signal(target.samples, frame_size, hop);
  ClipMetrics m{std::move(id)};
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const auto lb = compute_loss(frame_tensor(ft[i]), frame_tensor(fp[i]), cfg);
    m.mae += lb.mae_time;
    m.mse += lb.mse_spec;
    m.loss += lb.total;
  }
  const double inv = 1.0 / static_cast<double>(fp.size());
  m.mae *= inv;
  m.mse *= inv;
  m.loss *= inv;
  return m;
}

std::string format_metrics_csv(const MetricsTable& table) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "id,mae,mse,loss\n";
  for (const auto& r : table.rows) os << r.id << ',' << r.mae << ',' << r.mse << ',' << r.loss << '\n';
  os << table.mean.id << ',' << table.mean.mae << ',' << table.mean.mse << ',' << table.mean.loss << '\n';
  return os.str();
}

void write_metrics_csv(const MetricsTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw WriteError("cannot write metrics file: " + path.string());
  out << format_metrics_csv(table);
  if (!out) throw WriteError("failed writing metrics file: " + path.string());
}

std::string format_log_line(const EpochLog& e) {
  std::ostringstream os;
  os << std::setprecision(9) << e.epoch << ',' << e.phase << ',' << e.lr << ',' << e.train_loss << ','
     << e.val_loss;
  return os.str();
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw WriteError("cannot write training log: " + path.string());
  out << kLogHeader << '\n';
  for (const auto& e : log) out << format_log_line(e) << '\n';
  if (!out) throw WriteError("failed writing training log: " + path.string());
}

Spectrogram compute_spectrogram(const AudioClip& clip, std::size_t frame_size, std::size_t hop) {
  clip.validate();
  Spectrogram s{frame_size, hop, clip.sample_rate, {}};
  for (const auto& f : dsp::frame_signal(clip.samples, frame_size, hop)) {
    const std::vector<double> fd(f.begin(), f.end());
    s.grid.push_back(dsp::log_power_spectrum(fd));
  }
  return s;
}

void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw WriteError("cannot write spectrogram: " + path.string());
  const std::size_t bins = spec.grid.empty() ? spec.frame_size / 2 + 1 : spec.grid.front().size();
  out << "# log power spectrogram, natural log of |X|^2 + 1e-10\n"
      << "# rows=frames, columns=frequency bins\n"
      << "# frames=" << spec.grid.size() << '\n'
      << "# bins=" << bins << '\n'
      << "# frame_size=" << spec.frame_size << '\n'
      << "# hop=" << spec.hop << '\n'
      << "# sample_rate=" << spec.sample_rate << '\n'
      << "# bin_hz=" << static_cast<double>(spec.sample_rate) / static_cast<double>(spec.frame_size) << '\n'
      << "# frame_start_s=i*" << static_cast<double>(spec.hop) / spec.sample_rate << '\n';
  out << std::setprecision(9);
  for (const auto& row : spec.grid) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out << ',';
      out << row[k];
    }
    out << '\n';
  }
  if (!out) throw WriteError("failed writing spectrogram: " + path.string());
}

}  // namespace neuroverb
