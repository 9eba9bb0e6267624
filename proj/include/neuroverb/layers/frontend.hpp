#pragma once

#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"

namespace neuroverb::layers {

// Learned filter bank: Conv1D (C kernels, |.| activation), a locally
// connected Conv1D per band (softplus) and max pooling. The Conv1D kernels are
// also the (transposed) synthesis filters of deconv().
template <typename T>
struct FrontEnd {
  Tensor<T> conv_kernels;   // [C x K1]
  Tensor<T> local_kernels;  // [C x K2]
  std::size_t pool = 64;

  struct FrameOutput {
    Tensor<T> bands;   // X1 = conv(frame) before the absolute value, [C x N]
    Tensor<T> pooled;  // [C x N/pool]
    std::vector<std::size_t> pool_indices;
  };

  FrontEnd() = default;
  FrontEnd(std::size_t channels, std::size_t k1, std::size_t k2, std::size_t pool_size)
      : conv_kernels(make_param<T>({channels, k1})),
        local_kernels(make_param<T>({channels, k2})),
        pool(pool_size) {}

  std::size_t channels() const { return conv_kernels.rows(); }
  std::size_t conv_pad() const { return (conv_kernels.cols() - 1) / 2; }
  std::size_t local_pad() const { return (local_kernels.cols() - 1) / 2; }

  void init(Rng& rng) {
    glorot_uniform(conv_kernels, conv_kernels.cols(), conv_kernels.cols() * channels(), rng);
    glorot_uniform(local_kernels, local_kernels.cols(), local_kernels.cols(), rng);
  }

  FrameOutput forward_frame(const Tensor<T>& frame) const {
    const std::size_t n = frame.size();
    auto bands = ad::conv1d(frame, conv_kernels, conv_pad(), n);
    auto local = ad::softplus(ad::depthwise_conv1d(ad::abs(bands), local_kernels, local_pad()));
    auto pooled = ad::maxpool_with_indices(local, pool);
    return {bands, pooled.pooled, std::move(pooled.indices)};
  }

  // Tied-weight transposed convolution back to one waveform frame.
  Tensor<T> deconv(const Tensor<T>& maps) const {
    return ad::conv_transpose1d(maps, conv_kernels, conv_pad(), maps.cols());
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".conv", conv_kernels});
    out.push_back({prefix + ".local_conv", local_kernels});
  }
};

}  // namespace neuroverb::layers
