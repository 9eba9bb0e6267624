#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"

namespace neuroverb::layers {

// Smooth adaptive activation function: a C1 piecewise-quadratic map per
// channel. The second derivative is constant on each of S uniform intervals
// spanning [-1, 1] and zero outside, so
//
//   f(x) = bias + slope * x + sum_k curv[k] * q_k(x),
//   q_k(x) = integral_0^x (x - u) 1[u in I_k] du,
//
// which is continuous with a continuous first derivative everywhere and
// extends linearly beyond [-1, 1]. curv = 0, slope = 1, bias = 0 is the
// identity.
namespace saaf_detail {

struct Basis {
  double lo_edge;
  double width;
  std::size_t intervals;

  double edge(std::size_t k) const { return lo_edge + width * static_cast<double>(k); }

  // Signed overlap length of [0, x] (or [x, 0]) with interval k: dq_k/dx.
  double slope_term(std::size_t k, double x) const {
    const double a = edge(k), b = edge(k + 1);
    if (x >= 0.0) {
      const double lo = std::max(a, 0.0), hi = std::min(b, x);
      return hi > lo ? hi - lo : 0.0;
    }
    const double lo = std::max(a, x), hi = std::min(b, 0.0);
    return hi > lo ? -(hi - lo) : 0.0;
  }

  double value_term(std::size_t k, double x) const {
    const double a = edge(k), b = edge(k + 1);
    if (x >= 0.0) {
      const double lo = std::max(a, 0.0), hi = std::min(b, x);
      return hi > lo ? x * (hi - lo) - 0.5 * (hi * hi - lo * lo) : 0.0;
    }
    const double lo = std::max(a, x), hi = std::min(b, 0.0);
    return hi > lo ? 0.5 * (hi * hi - lo * lo) - x * (hi - lo) : 0.0;
  }
};

inline Basis basis(std::size_t intervals) { return {-1.0, 2.0 / static_cast<double>(intervals), intervals}; }

}  // namespace saaf_detail

// Applies channel c's SAAF to row c of X[C x N].
template <typename T>
Tensor<T> saaf(const Tensor<T>& x, const Tensor<T>& bias, const Tensor<T>& slope,
               const Tensor<T>& curv) {
  const std::size_t nc = x.rows(), n = x.cols(), ns = curv.cols();
  ad::detail::require(bias.size() == nc && slope.size() == nc && curv.rows() == nc, "saaf",
                      "parameter count does not match channel count " + std::to_string(nc));
  const auto B = saaf_detail::basis(ns);
  auto out = Tensor<T>::zeros(x.shape());
  for (std::size_t c = 0; c < nc; ++c) {
    const T* cv = curv.data().data() + c * ns;
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = static_cast<double>(x[c * n + i]);
      double acc = static_cast<double>(bias[c]) + static_cast<double>(slope[c]) * xv;
      for (std::size_t k = 0; k < ns; ++k) {
        if (cv[k] != T(0)) acc += static_cast<double>(cv[k]) * B.value_term(k, xv);
      }
      out[c * n + i] = static_cast<T>(acc);
    }
  }
  if (auto* tape = ad::detail::recording_tape<T>({&x, &bias, &slope, &curv})) {
    out.set_requires_grad(true);
    tape->record("saaf", [x, bias, slope, curv, out, nc, n, ns, B]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::span<T> gx, gb, gs, gc;
      if (x.requires_grad()) gx = x.ensure_grad();
      if (bias.requires_grad()) gb = bias.ensure_grad();
      if (slope.requires_grad()) gs = slope.ensure_grad();
      if (curv.requires_grad()) gc = curv.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c) {
        const T* cv = curv.data().data() + c * ns;
        double sum_b = 0.0, sum_s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = static_cast<double>(g[c * n + i]);
          if (gi == 0.0) continue;
          const double xv = static_cast<double>(x[c * n + i]);
          sum_b += gi;
          sum_s += gi * xv;
          if (!gx.empty()) {
            double d = static_cast<double>(slope[c]);
            for (std::size_t k = 0; k < ns; ++k) d += static_cast<double>(cv[k]) * B.slope_term(k, xv);
            gx[c * n + i] += static_cast<T>(gi * d);
          }
          if (!gc.empty()) {
            for (std::size_t k = 0; k < ns; ++k) gc[c * ns + k] += static_cast<T>(gi * B.value_term(k, xv));
          }
        }
        if (!gb.empty()) gb[c] += static_cast<T>(sum_b);
        if (!gs.empty()) gs[c] += static_cast<T>(sum_s);
      }
    });
  }
  return out;
}

// Sum over channels and over the S+1 breakpoints of max(0, |f'| - L)^2.
// f' is piecewise linear, so its extremes sit on breakpoints and the penalty
// is zero exactly when every channel's function is L-Lipschitz.
template <typename T>
Tensor<T> saaf_lipschitz_penalty(const Tensor<T>& slope, const Tensor<T>& curv, double lipschitz) {
  if (!(lipschitz > 0.0)) throw InvalidArgument("Lipschitz constant must be positive");
  const std::size_t nc = slope.size(), ns = curv.cols();
  const auto B = saaf_detail::basis(ns);
  double total = 0.0;
  struct Active {
    std::size_t channel;
    double point;
    double coeff;  // 2 * excess * sign(f')
  };
  std::vector<Active> active;
  for (std::size_t c = 0; c < nc; ++c) {
    const T* cv = curv.data().data() + c * ns;
    for (std::size_t j = 0; j <= ns; ++j) {
      const double p = B.edge(j);
      double d = static_cast<double>(slope[c]);
      for (std::size_t k = 0; k < ns; ++k) d += static_cast<double>(cv[k]) * B.slope_term(k, p);
      const double excess = std::abs(d) - lipschitz;
      if (excess > 0.0) {
        total += excess * excess;
        active.push_back({c, p, 2.0 * excess * (d > 0.0 ? 1.0 : -1.0)});
      }
    }
  }
  auto out = Tensor<T>::scalar(static_cast<T>(total));
  if (auto* tape = ad::detail::recording_tape<T>({&slope, &curv})) {
    out.set_requires_grad(true);
    tape->record("saaf_lipschitz", [slope, curv, out, active = std::move(active), ns, B]() mutable {
      if (!out.has_grad()) return;
      const double g = static_cast<double>(out.grad()[0]);
      std::span<T> gs, gc;
      if (slope.requires_grad()) gs = slope.ensure_grad();
      if (curv.requires_grad()) gc = curv.ensure_grad();
      for (const auto& a : active) {
        if (!gs.empty()) gs[a.channel] += static_cast<T>(g * a.coeff);
        if (!gc.empty()) {
          for (std::size_t k = 0; k < ns; ++k)
            gc[a.channel * ns + k] += static_cast<T>(g * a.coeff * B.slope_term(k, a.point));
        }
      }
    });
  }
  return out;
}

// One SAAF per channel.
template <typename T>
struct Saaf {
  Tensor<T> bias;       // [C]
  Tensor<T> slope;      // [C]
  Tensor<T> curvature;  // [C x S]

  Saaf() = default;
  Saaf(std::size_t channels, std::size_t intervals)
      : bias(make_param<T>({channels})),
        slope(make_param<T>({channels})),
        curvature(make_param<T>({channels, intervals})) {}

  std::size_t channels() const { return bias.size(); }
  std::size_t intervals() const { return curvature.cols(); }

  void init_identity() {
    std::fill(bias.data().begin(), bias.data().end(), T(0));
    std::fill(slope.data().begin(), slope.data().end(), T(1));
    std::fill(curvature.data().begin(), curvature.data().end(), T(0));
  }

  // X[C x N], one function per row.
  Tensor<T> forward(const Tensor<T>& x) const { return saaf(x, bias, slope, curvature); }

  Tensor<T> lipschitz_penalty(double lipschitz) const {
    return saaf_lipschitz_penalty(slope, curvature, lipschitz);
  }

  // Scalar evaluation of channel c outside the tape; used by tests and plots.
  double evaluate(std::size_t c, double x) const {
    const auto B = saaf_detail::basis(intervals());
    double acc = static_cast<double>(bias[c]) + static_cast<double>(slope[c]) * x;
    for (std::size_t k = 0; k < intervals(); ++k)
      acc += static_cast<double>(curvature[c * intervals() + k]) * B.value_term(k, x);
    return acc;
  }

  double derivative(std::size_t c, double x) const {
    const auto B = saaf_detail::basis(intervals());
    double acc = static_cast<double>(slope[c]);
    for (std::size_t k = 0; k < intervals(); ++k)
      acc += static_cast<double>(curvature[c * intervals() + k]) * B.slope_term(k, x);
    return acc;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".bias", bias});
    out.push_back({prefix + ".slope", slope});
    out.push_back({prefix + ".curvature", curvature});
  }
};

}  // namespace neuroverb::layers
