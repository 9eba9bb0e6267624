#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/audio_io.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/dsp.hpp"
#include "neuroverb/errors.hpp"
#include "neuroverb/layers/backend.hpp"
#include "neuroverb/layers/frontend.hpp"
#include "neuroverb/layers/lstm.hpp"
#include "neuroverb/layers/saaf.hpp"
#include "neuroverb/layers/sfir.hpp"
#include "neuroverb/random.hpp"

namespace neuroverb {

using layers::ForwardContext;
using layers::Mode;

// Intermediate maps of one forward pass, all for the center frame unless
// noted otherwise.
template <typename T>
struct ForwardTrace {
  std::vector<ad::Tensor<T>> pooled;  // Z, one [C x P] map per context frame
  ad::Tensor<T> envelopes;            // Z1 [C x P]
  ad::Tensor<T> conditioning;         // Z2 [C x P]
  layers::SparseFirSet<T> filters;    // Z3
  ad::Tensor<T> bands;                // R [C x N]
  ad::Tensor<T> reverb;               // X5
  ad::Tensor<T> envelope_maps;        // X4
  ad::Tensor<T> direct;               // X2
  ad::Tensor<T> shaped;               // X3
  ad::Tensor<T> gain_direct;          // [C]
  ad::Tensor<T> gain_reverb;          // [C]
  ad::Tensor<T> mixed;                // X0
  ad::Tensor<T> output;               // [N]
};

// Front-end -> latent space -> synthesis back-end, operating on one frame
// with its context.
template <typename T>
class ReverbModel {
 public:
  using Tensor = ad::Tensor<T>;

  explicit ReverbModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    frontend_ = layers::FrontEnd<T>(c.bands, c.conv_kernel, c.local_kernel, c.pool);
    std::size_t in = c.bands;
    for (std::size_t units : c.shared_lstm) {
      shared_.emplace_back(in, units, c.dropout, c.dropout);
      in = 2 * units;
    }
    branch_env_ = layers::BiLstm<T>(in, c.branch_lstm, c.dropout, c.dropout);
    branch_fir_ = layers::BiLstm<T>(in, c.branch_lstm, c.dropout, c.dropout);
    saaf_env_ = layers::Saaf<T>(c.bands, c.saaf_intervals);
    saaf_fir_ = layers::Saaf<T>(c.bands, c.saaf_intervals);
    sfir_ = layers::SfirLayer<T>(c.pooled_steps(), c.sfir_units, c.sfir_interval);
    dnn_ = layers::DnnSaaf<T>(c.bands, c.dnn_saaf, c.saaf_intervals);
    se_direct_ = layers::SeLstm<T>(c.bands, c.se_lstm[0], c.se_lstm[1], c.se_lstm[2], c.dropout);
    se_reverb_ = layers::SeLstm<T>(c.bands, c.se_lstm[0], c.se_lstm[1], c.se_lstm[2], c.dropout);
  }

  ReverbModel(ModelConfig config, std::uint64_t seed) : ReverbModel(std::move(config)) { init(seed); }

  // Tensors are shared handles, so a plain copy would alias the parameters.
  // Use clone() for an independent copy.
  ReverbModel(const ReverbModel&) = delete;
  ReverbModel& operator=(const ReverbModel&) = delete;
  ReverbModel(ReverbModel&&) = default;
  ReverbModel& operator=(ReverbModel&&) = default;

  const ModelConfig& config() const { return config_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    frontend_.init(rng);
    for (auto& l : shared_) l.init(rng);
    branch_env_.init(rng);
    branch_fir_.init(rng);
    saaf_env_.init_identity();
    saaf_fir_.init_identity();
    sfir_.init(rng);
    dnn_.init(rng);
    se_direct_.init(rng);
    se_reverb_.init(rng);
  }

  // Every trainable tensor. The deconvolution has no entry of its own: it
  // reads front_end.conv.
  layers::ParamList<T> named_parameters() const {
    layers::ParamList<T> out;
    frontend_.collect(out, "front_end");
    for (std::size_t i = 0; i < shared_.size(); ++i)
      shared_[i].collect(out, "latent.shared" + std::to_string(i));
    branch_env_.collect(out, "latent.envelope");
    saaf_env_.collect(out, "latent.envelope_saaf");
    branch_fir_.collect(out, "latent.sfir");
    saaf_fir_.collect(out, "latent.sfir_saaf");
    sfir_.collect(out, "sfir");
    dnn_.collect(out, "back_end.dnn");
    se_direct_.collect(out, "back_end.se_direct");
    se_reverb_.collect(out, "back_end.se_reverb");
    return out;
  }

  std::vector<Tensor> parameters() const { return tensors(named_parameters()); }

  std::vector<Tensor> frontend_parameters() const {
    layers::ParamList<T> out;
    frontend_.collect(out, "front_end");
    return tensors(out);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : named_parameters()) n += p.tensor.size();
    return n;
  }

  // Sum of the Lipschitz penalties of every SAAF.
  Tensor regularization(double lipschitz) const {
    auto r = ad::add(saaf_env_.lipschitz_penalty(lipschitz), saaf_fir_.lipschitz_penalty(lipschitz));
    return ad::add(r, dnn_.activation.lipschitz_penalty(lipschitz));
  }

  // Copies parameter values (not gradients) from a model of the same config.
  template <typename U>
  void copy_from(const ReverbModel<U>& other) {
    if (!(other.config() == config_)) throw ConfigError("copy_from: model configs differ");
    auto src = other.named_parameters();
    auto dst = named_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto d = dst[i].tensor.data();
      auto s = src[i].tensor.data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(s[k]);
    }
  }

  ReverbModel clone() const {
    ReverbModel out(config_);
    out.copy_from(*this);
    return out;
  }

  Tensor forward(const dsp::FrameStack& stack, const ForwardContext& ctx) const {
    return forward_detailed(stack, ctx).output;
  }

  ForwardTrace<T> forward_detailed(const dsp::FrameStack& stack, const ForwardContext& ctx) const {
    check_stack(stack);
    const std::size_t n = config_.frame_size, p = config_.pooled_steps();
    const std::size_t k = stack.rows(), center = stack.context;

    ForwardTrace<T> tr;
    std::vector<Tensor> bands(k);
    for (std::size_t j = 0; j < k; ++j) {
      auto fo = frontend_.forward_frame(frame_tensor(stack.row(j)));
      bands[j] = fo.bands;
      tr.pooled.push_back(fo.pooled);
    }

    // Pooled steps of all context frames form one sequence of C-dim vectors.
    auto h = ad::transpose(ad::concat_cols(tr.pooled));
    for (const auto& l : shared_) h = l.forward(h, ctx);
    auto env_all = saaf_env_.forward(ad::transpose(branch_env_.forward(h, ctx)));
    auto fir_all = saaf_fir_.forward(ad::transpose(branch_fir_.forward(h, ctx)));

    std::vector<Tensor> direct(k), shaped(k);
    for (std::size_t j = 0; j < k; ++j) {
      auto z1 = ad::slice_cols(env_all, j * p, p);
      auto z2 = ad::slice_cols(fir_all, j * p, p);
      auto set = sfir_.build(z2);
      auto x5 = layers::sfir_apply(bands[j], set);
      auto x4 = layers::upsample_linear(z1, n);
      shaped[j] = ad::mul(x5, x4);
      direct[j] = dnn_.forward(bands[j]);
      if (j == center) {
        tr.envelopes = z1;
        tr.conditioning = z2;
        tr.filters = set;
        tr.reverb = x5;
        tr.envelope_maps = x4;
      }
    }
    tr.bands = bands[center];
    tr.direct = direct[center];
    tr.shaped = shaped[center];
    tr.gain_direct = se_direct_.gains(direct, center, ctx);
    tr.gain_reverb = se_reverb_.gains(shaped, center, ctx);
    tr.mixed = layers::backend_mix(tr.direct, tr.shaped, tr.gain_direct, tr.gain_reverb);
    tr.output = frontend_.deconv(tr.mixed);
    return tr;
  }

  // Front-end reconstruction of a single frame: the pooled maps are unpooled
  // at their recorded positions, multiplied with the band decomposition R and
  // synthesized by the tied deconvolution.
  Tensor pretrain_forward(std::span<const float> frame) const {
    if (frame.size() != config_.frame_size) {
      throw ShapeError("pretrain_forward: frame of " + std::to_string(frame.size()) +
                       " samples, expected " + std::to_string(config_.frame_size));
    }
    auto fo = frontend_.forward_frame(frame_tensor(frame));
    auto maps = ad::unpool(fo.pooled, fo.pool_indices, config_.frame_size);
    return frontend_.deconv(ad::mul(fo.bands, maps));
  }

  // Frames the clip, runs every frame with its context in inference mode and
  // overlap-adds the outputs back to the input length.
  AudioClip process_clip(const AudioClip& clip) const {
    clip.validate();
    if (clip.sample_rate != config_.sample_rate) {
      throw InvalidArgument("process_clip: clip at " + std::to_string(clip.sample_rate) +
                            " Hz, model expects " + std::to_string(config_.sample_rate) + " Hz");
    }
    const auto frames = dsp::frame_signal(clip.samples, config_.frame_size, config_.hop);
    std::vector<dsp::Frame> outs;
    outs.reserve(frames.size());
    ForwardContext ctx;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      auto y = forward(dsp::make_context(frames, i, config_.context), ctx);
      if (!y.all_finite()) throw NumericError("process_clip: non-finite model output");
      outs.emplace_back(y.data().begin(), y.data().end());
    }
    auto samples = dsp::overlap_add(outs, config_.hop);
    samples.resize(clip.samples.size());
    return AudioClip{std::move(samples), clip.sample_rate};
  }

  // Off: slot positions get no gradient, so finite differences of the whole
  // model match the tape exactly. Training always uses the estimator.
  void set_straight_through(bool on) { sfir_.straight_through = on; }

  const layers::FrontEnd<T>& front_end() const { return frontend_; }
  const layers::SfirLayer<T>& sfir() const { return sfir_; }
  const layers::DnnSaaf<T>& dnn() const { return dnn_; }
  const layers::SeLstm<T>& se_direct() const { return se_direct_; }
  const layers::SeLstm<T>& se_reverb() const { return se_reverb_; }
  const std::vector<layers::BiLstm<T>>& shared_lstms() const { return shared_; }
  const layers::BiLstm<T>& envelope_lstm() const { return branch_env_; }
  const layers::BiLstm<T>& sfir_lstm() const { return branch_fir_; }
  const layers::Saaf<T>& envelope_saaf() const { return saaf_env_; }
  const layers::Saaf<T>& sfir_saaf() const { return saaf_fir_; }

 private:
  static std::vector<Tensor> tensors(const layers::ParamList<T>& list) {
    std::vector<Tensor> out;
    out.reserve(list.size());
    for (const auto& p : list) out.push_back(p.tensor);
    return out;
  }

  static Tensor frame_tensor(std::span<const float> frame) {
    return Tensor::from({frame.size()}, std::vector<T>(frame.begin(), frame.end()));
  }

  void check_stack(const dsp::FrameStack& stack) const {
    if (stack.frame_size != config_.frame_size || stack.context != config_.context ||
        stack.frames.size() != stack.rows() * stack.frame_size) {
      throw ConfigError("frame stack of " + std::to_string(stack.rows()) + " x " +
                        std::to_string(stack.frame_size) + " does not match the model (" +
                        std::to_string(config_.context_frames()) + " x " +
                        std::to_string(config_.frame_size) + ")");
    }
  }

  ModelConfig config_;
  layers::FrontEnd<T> frontend_;
  std::vector<layers::BiLstm<T>> shared_;
  layers::BiLstm<T> branch_env_;
  layers::BiLstm<T> branch_fir_;
  layers::Saaf<T> saaf_env_;
  layers::Saaf<T> saaf_fir_;
  layers::SfirLayer<T> sfir_;
  layers::DnnSaaf<T> dnn_;
  layers::SeLstm<T> se_direct_;
  layers::SeLstm<T> se_reverb_;
};

}  // namespace neuroverb
