#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"
#include "neuroverb/layers/dense.hpp"

namespace neuroverb::layers {

// slot = min(floor(u * Ts), Ts - 1) for u in (0, 1). The backward pass is the
// identity: the upstream gradient reaches u unchanged (straight-through).
// With straight_through = false the slots are constants on the tape, which is
// the exact (almost everywhere zero) derivative of the rounding.
template <typename T>
Tensor<T> sfir_slots(const Tensor<T>& u, std::size_t interval, bool straight_through = true) {
  auto out = Tensor<T>::zeros(u.shape());
  const double top = static_cast<double>(interval - 1);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double s = std::floor(static_cast<double>(u[i]) * static_cast<double>(interval));
    out[i] = static_cast<T>(std::clamp(s, 0.0, top));
  }
  if (!straight_through) return out;
  if (auto* tape = ad::detail::recording_tape<T>({&u})) {
    out.set_requires_grad(true);
    tape->record("sfir_slots", [u, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gu = u.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gu[i] += g[i];
    });
  }
  return out;
}

namespace sfir_detail {

inline std::size_t position(std::size_t i, double slot, std::size_t interval) {
  return i * interval + static_cast<std::size_t>(slot);
}

}  // namespace sfir_detail

// Dense expansion of per-band sparse filters: values[C x N] and slots[C x N]
// -> [C x N*Ts] with filter[c][i*Ts + slot] = value, zero elsewhere.
//
// The slot derivative treats the coefficient position as continuous with
// linear interpolation between neighbouring taps: moving a coefficient from
// p to p+1 changes the loss by value * (G[p+1] - G[p]), G = dL/dfilter.
template <typename T>
Tensor<T> sfir_dense(const Tensor<T>& values, const Tensor<T>& slots, std::size_t interval) {
  ad::detail::require_same_shape("sfir_dense", values.shape(), slots.shape());
  const std::size_t nc = values.rows(), nu = values.cols(), len = nu * interval;
  auto out = Tensor<T>::zeros({nc, len});
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = 0; i < nu; ++i) {
      const std::size_t p = sfir_detail::position(i, static_cast<double>(slots[c * nu + i]), interval);
      out[c * len + p] = values[c * nu + i];
    }
  if (auto* tape = ad::detail::recording_tape<T>({&values, &slots})) {
    out.set_requires_grad(true);
    tape->record("sfir_dense", [values, slots, out, nc, nu, len, interval]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::span<T> gv, gs;
      if (values.requires_grad()) gv = values.ensure_grad();
      if (slots.requires_grad()) gs = slots.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t i = 0; i < nu; ++i) {
          const std::size_t p =
              sfir_detail::position(i, static_cast<double>(slots[c * nu + i]), interval);
          const T here = g[c * len + p];
          const T next = p + 1 < len ? g[c * len + p + 1] : T(0);
          if (!gv.empty()) gv[c * nu + i] += here;
          if (!gs.empty()) gs[c * nu + i] += values[c * nu + i] * (next - here);
        }
    });
  }
  return out;
}

// Fused equivalent of causal_conv_rows(R, sfir_dense(values, slots)) that
// touches only the nonzero taps: O(C * T * N) instead of O(C * T * N * Ts).
template <typename T>
Tensor<T> sparse_fir_conv(const Tensor<T>& r, const Tensor<T>& values, const Tensor<T>& slots,
                          std::size_t interval) {
  ad::detail::require_same_shape("sparse_fir_conv", values.shape(), slots.shape());
  const std::size_t nc = r.rows(), len = r.cols(), nu = values.cols();
  ad::detail::require(values.rows() == nc, "sparse_fir_conv", "band count mismatch");
  const std::size_t flen = nu * interval;
  auto out = Tensor<T>::zeros({nc, len});
  for (std::size_t c = 0; c < nc; ++c) {
    const T* rr = r.data().data() + c * len;
    T* orow = out.data().data() + c * len;
    for (std::size_t i = 0; i < nu; ++i) {
      const std::size_t p = sfir_detail::position(i, static_cast<double>(slots[c * nu + i]), interval);
      if (p >= len) break;
      const T v = values[c * nu + i];
      for (std::size_t t = p; t < len; ++t) orow[t] += v * rr[t - p];
    }
  }
  if (auto* tape = ad::detail::recording_tape<T>({&r, &values, &slots})) {
    out.set_requires_grad(true);
    tape->record("sparse_fir_conv", [r, values, slots, out, nc, len, nu, flen, interval]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::span<T> gr, gv, gs;
      if (r.requires_grad()) gr = r.ensure_grad();
      if (values.requires_grad()) gv = values.ensure_grad();
      if (slots.requires_grad()) gs = slots.ensure_grad();
      // G(j) = sum_{t >= j} g[t] * R[t - j], the gradient of a dense tap j.
      auto tap_grad = [&](std::size_t c, std::size_t j) -> T {
        if (j >= len || j >= flen) return T(0);
        const T* rr = r.data().data() + c * len;
        const T* gg = g.data() + c * len;
        T acc = 0;
        for (std::size_t t = j; t < len; ++t) acc += gg[t] * rr[t - j];
        return acc;
      };
      for (std::size_t c = 0; c < nc; ++c) {
        const T* gg = g.data() + c * len;
        for (std::size_t i = 0; i < nu; ++i) {
          const std::size_t p =
              sfir_detail::position(i, static_cast<double>(slots[c * nu + i]), interval);
          const T v = values[c * nu + i];
          if (!gr.empty() && p < len) {
            T* grow = gr.data() + c * len;
            for (std::size_t t = p; t < len; ++t) grow[t - p] += v * gg[t];
          }
          if (gv.empty() && gs.empty()) continue;
          const T here = tap_grad(c, p);
          if (!gv.empty()) gv[c * nu + i] += here;
          if (!gs.empty()) gs[c * nu + i] += v * (tap_grad(c, p + 1) - here);
        }
      }
    });
  }
  return out;
}

// Linear interpolation of X[C x P] to [C x T], knots at k * (T / P); values
// after the last knot hold the last input value.
template <typename T>
Tensor<T> upsample_linear(const Tensor<T>& x, std::size_t length) {
  const std::size_t nc = x.rows(), np = x.cols();
  if (np == 0 || length % np != 0) {
    throw ShapeError("upsample_linear: " + std::to_string(length) + " is not a multiple of " +
                     std::to_string(np));
  }
  const std::size_t stride = length / np;
  auto out = Tensor<T>::zeros({nc, length});
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t t = 0; t < length; ++t) {
      const std::size_t k = t / stride;
      const std::size_t k1 = std::min(k + 1, np - 1);
      const T a = static_cast<T>(t % stride) / static_cast<T>(stride);
      out[c * length + t] = (T(1) - a) * x[c * np + k] + a * x[c * np + k1];
    }
  if (auto* tape = ad::detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("upsample_linear", [x, out, nc, np, length, stride]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t t = 0; t < length; ++t) {
          const std::size_t k = t / stride;
          const std::size_t k1 = std::min(k + 1, np - 1);
          const T a = static_cast<T>(t % stride) / static_cast<T>(stride);
          gx[c * np + k] += (T(1) - a) * g[c * length + t];
          gx[c * np + k1] += a * g[c * length + t];
        }
    });
  }
  return out;
}

// Per-band sparse FIR filters: values in (-1, 1) and integer slots in
// [0, Ts). Both are returned as tensors on the tape.
template <typename T>
struct SparseFirSet {
  Tensor<T> values;  // [C x N]
  Tensor<T> slots;   // [C x N]
  std::size_t interval = 8;

  std::size_t bands() const { return values.rows(); }
  std::size_t coefficients() const { return values.cols(); }
  std::size_t length() const { return coefficients() * interval; }
};

// Two fully connected layers shared across bands map each band's latent
// vector to coefficient values (tanh) and slot fractions (sigmoid).
template <typename T>
struct SfirLayer {
  Dense<T> value_fc;
  Dense<T> position_fc;
  std::size_t interval = 8;
  bool straight_through = true;

  SfirLayer() = default;
  SfirLayer(std::size_t features, std::size_t units, std::size_t ts)
      : value_fc(features, units), position_fc(features, units), interval(ts) {}

  void init(Rng& rng) {
    value_fc.init(rng);
    position_fc.init(rng);
  }

  // latent[C x F] -> filter set with C bands of `units` coefficients.
  SparseFirSet<T> build(const Tensor<T>& latent) const {
    auto values = ad::tanh(value_fc.forward(latent));
    auto fractions = ad::sigmoid(position_fc.forward(latent));
    return {values, sfir_slots(fractions, interval, straight_through), interval};
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    value_fc.collect(out, prefix + ".values");
    position_fc.collect(out, prefix + ".positions");
  }
};

template <typename T>
Tensor<T> sfir_dense(const SparseFirSet<T>& set) {
  return sfir_dense(set.values, set.slots, set.interval);
}

// Causal per-band filtering of R[C x T] truncated to T samples.
template <typename T>
Tensor<T> sfir_apply(const Tensor<T>& r, const SparseFirSet<T>& set) {
  return sparse_fir_conv(r, set.values, set.slots, set.interval);
}

}  // namespace neuroverb::layers
