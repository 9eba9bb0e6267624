#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "neuroverb/errors.hpp"

namespace neuroverb::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Reference-counted handle to a dense row-major array. Copies of a Tensor
// alias the same storage; use clone() for an independent value.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto node = std::make_shared<TensorNode<T>>();
    node->value.assign(numel(shape), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  // Rows/cols view every tensor as 2-D: a rank-1 tensor is a single row.
  std::size_t rows() const { return rank() >= 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return rank() >= 2 ? size() / node_->shape[0] : size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  // Handle semantics: a const handle still refers to a mutable node, and
  // backward closures hold const copies of their inputs.
  std::span<T> ensure_grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void clear_grad() { node_->grad.clear(); }

  Tensor clone() const {
    auto t = from(shape(), node_->value, requires_grad());
    return t;
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  bool all_finite() const {
    for (T v : node_->value) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<TensorNode<T>> node_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(out), t.requires_grad());
}

}  // namespace neuroverb::ad
