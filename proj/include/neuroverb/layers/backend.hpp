#pragma once

#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"
#include "neuroverb/layers/dense.hpp"
#include "neuroverb/layers/lstm.hpp"
#include "neuroverb/layers/saaf.hpp"

namespace neuroverb::layers {

// Time-distributed waveshaper: per sample, the C-channel vector goes through
// FC+tanh layers and a final FC followed by a per-channel SAAF.
template <typename T>
struct DnnSaaf {
  std::vector<Dense<T>> layers;
  Saaf<T> activation;

  DnnSaaf() = default;
  DnnSaaf(std::size_t channels, const std::vector<std::size_t>& widths, std::size_t intervals) {
    std::size_t in = channels;
    for (std::size_t w : widths) {
      layers.emplace_back(in, w);
      in = w;
    }
    activation = Saaf<T>(in, intervals);
  }

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
    activation.init_identity();
  }

  // R[C x N] -> [C x N]
  Tensor<T> forward(const Tensor<T>& bands) const {
    auto h = ad::transpose(bands);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = ad::tanh(h);
    }
    return activation.forward(ad::transpose(h));
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + ".fc" + std::to_string(i));
    activation.collect(out, prefix + ".saaf");
  }
};

// Squeeze-and-excitation gate with a recurrent layer over the context frames:
// |.| -> mean over time per channel -> LSTM (relu) -> FC (relu) -> FC (sigmoid).
template <typename T>
struct SeLstm {
  Lstm<T> lstm;
  Dense<T> excite;
  Dense<T> gate;

  SeLstm() = default;
  SeLstm(std::size_t channels, std::size_t lstm_units, std::size_t hidden, std::size_t out,
         double dropout)
      : lstm(channels, lstm_units, dropout, dropout), excite(lstm_units, hidden), gate(hidden, out) {}

  void init(Rng& rng) {
    lstm.init(rng);
    excite.init(rng);
    gate.init(rng);
  }

  static Tensor<T> descriptor(const Tensor<T>& maps) { return ad::row_mean(ad::abs(maps)); }

  // Per-channel gains in (0, 1) for frame `center` of the sequence.
  Tensor<T> gains(const std::vector<Tensor<T>>& frames, std::size_t center,
                  const ForwardContext& ctx) const {
    std::vector<Tensor<T>> desc;
    desc.reserve(frames.size());
    for (const auto& f : frames) desc.push_back(descriptor(f));
    auto seq = ad::concat_rows(desc);
    auto h = ad::relu(lstm.forward(seq, ctx));
    auto hc = ad::slice_rows(h, center, 1);
    auto e = ad::relu(excite.forward(hc));
    return ad::reshape(ad::sigmoid(gate.forward(e)), {gate.out_features()});
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    lstm.collect(out, prefix + ".lstm");
    excite.collect(out, prefix + ".fc0");
    gate.collect(out, prefix + ".fc1");
  }
};

// X0 = g2 * X2 + g3 * X3 with channel-wise gains.
template <typename T>
Tensor<T> backend_mix(const Tensor<T>& direct, const Tensor<T>& reverberant, const Tensor<T>& g_direct,
                      const Tensor<T>& g_reverb) {
  return ad::add(ad::scale_rows(direct, g_direct), ad::scale_rows(reverberant, g_reverb));
}

}  // namespace neuroverb::layers
