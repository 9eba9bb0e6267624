#pragma once

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"

namespace neuroverb::layers {

// Fully connected layer applied to every row: Y = X W + b, X[N x in].
template <typename T>
struct Dense {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : weight(make_param<T>({in, out})), bias(make_param<T>({out})) {}

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  void init(Rng& rng) {
    glorot_uniform(weight, in_features(), out_features(), rng);
    std::fill(bias.data().begin(), bias.data().end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return ad::add_row_bias(ad::matmul(x, weight), bias);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

}  // namespace neuroverb::layers
