#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "neuroverb/ad/tensor.hpp"
#include "neuroverb/errors.hpp"

namespace neuroverb::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for one parameter list. The moments are
// index-aligned with the parameter list passed to adam_step.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}

  void reset() {
    m.clear();
    v.clear();
    t = 0;
  }
};

// Bias-corrected Adam update. Every parameter must carry a gradient; the
// gradients are zeroed afterwards.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw StateError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T(0));
      state.v.emplace_back(p.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw StateError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.t += 1;
  const auto& cfg = state.config;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw StateError("adam_step: moment size mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] * inv_bc1;
      const T vhat = v[k] * inv_bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p.zero_grad();
  }
}

}  // namespace neuroverb::ad
