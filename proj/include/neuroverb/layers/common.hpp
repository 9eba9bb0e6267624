#pragma once

#include <Eigen/QR>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "neuroverb/ad/tensor.hpp"
#include "neuroverb/random.hpp"

namespace neuroverb::layers {

template <typename T>
using Tensor = ad::Tensor<T>;

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

enum class Mode { train, infer };

// Per-call forward state: the mode and, in training, the dropout stream.
struct ForwardContext {
  Mode mode = Mode::infer;
  Rng* dropout_rng = nullptr;

  bool training() const { return mode == Mode::train; }
};

template <typename T>
Tensor<T> make_param(ad::Shape shape) {
  return Tensor<T>::zeros(std::move(shape), true);
}

template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

// Fills a rows x cols tensor with a (semi-)orthogonal matrix from the QR
// factorization of a Gaussian draw.
template <typename T>
void orthogonal(Tensor<T>& t, Rng& rng) {
  const auto rows = static_cast<Eigen::Index>(t.rows());
  const auto cols = static_cast<Eigen::Index>(t.cols());
  const bool tall = rows >= cols;
  const Eigen::Index big = tall ? rows : cols, small = tall ? cols : rows;
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < big; ++i)
    for (Eigen::Index j = 0; j < small; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign correction makes the draw uniform over the orthogonal group.
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      t[static_cast<std::size_t>(i * cols + j)] = static_cast<T>(tall ? q(i, j) : q(j, i));
}

}  // namespace neuroverb::layers
