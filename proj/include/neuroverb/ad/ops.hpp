#pragma once

// Differentiable primitives. Every op computes its forward value eagerly and,
// when recording, registers a closure that accumulates the exact
// vector-Jacobian product into its inputs. Tensors are row-major; 2-D ops
// read rank-1 inputs as a single row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "neuroverb/ad/tape.hpp"
#include "neuroverb/ad/tensor.hpp"
#include "neuroverb/errors.hpp"

namespace neuroverb::ad {

namespace detail {

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

inline void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Applies y = f(x) elementwise; dfdx(x, y) gives the local derivative.
template <typename T, typename F, typename D>
Tensor<T> unary(const char* name, const Tensor<T>& x, F f, D dfdx) {
  auto out = Tensor<T>::zeros(x.shape());
  auto xv = x.data();
  auto yv = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = f(xv[i]);
  if (auto* tape = recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(name, [x, out, dfdx]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      auto xv = x.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      "sigmoid", x, [](T v) { return detail::sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary<T>(
      "softplus", x, [](T v) { return detail::softplus(v); },
      [](T v, T) { return detail::sigmoid(v); });
}

// relu'(0) = 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// abs'(0) = 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary<T>(
      "scale", x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

// ---------------------------------------------------------------------------
// Binary elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  if (auto* tape = detail::recording_tape<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("add", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  if (auto* tape = detail::recording_tape<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("sub", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  auto out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  if (auto* tape = detail::recording_tape<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("mul", [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

// X[N x M] + bias[M], bias broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = x.rows(), m = x.cols();
  detail::require(bias.size() == m, "add_row_bias",
                  "bias length " + std::to_string(bias.size()) + " != cols " + std::to_string(m));
  auto out = Tensor<T>::zeros(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = x[r * m + c] + bias[c];
  if (auto* tape = detail::recording_tape<T>({&x, &bias})) {
    out.set_requires_grad(true);
    tape->record("add_row_bias", [x, bias, out, n, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
      }
    });
  }
  return out;
}

// X[C x T] scaled row-wise by gains[C].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& gains) {
  const std::size_t n = x.rows(), m = x.cols();
  detail::require(gains.size() == n, "scale_rows",
                  "gain length " + std::to_string(gains.size()) + " != rows " + std::to_string(n));
  auto out = Tensor<T>::zeros(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = gains[r] * x[r * m + c];
  if (auto* tape = detail::recording_tape<T>({&x, &gains})) {
    out.set_requires_grad(true);
    tape->record("scale_rows", [x, gains, out, n, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += gains[r] * g[r * m + c];
      }
      if (gains.requires_grad()) {
        auto gg = gains.ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
          T acc = 0;
          for (std::size_t c = 0; c < m; ++c) acc += x[r * m + c] * g[r * m + c];
          gg[r] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

// A[N x K] * B[K x M] -> [N x M].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  detail::require(b.rows() == k, "matmul",
                  "inner dimensions differ: " + to_string(a.shape()) + " * " + to_string(b.shape()));
  auto out = Tensor<T>::zeros({n, m});
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = ov.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  if (auto* tape = detail::recording_tape<T>({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul", [a, b, out, n, k, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.data();
      auto bv = b.data();
      if (a.requires_grad()) {
        auto ga = a.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            const T* grow = g.data() + i * m;
            const T* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = av[i * k + p];
            if (aip == T(0)) continue;
            const T* grow = g.data() + i * m;
            T* gbrow = gb.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
          }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const std::size_t n = x.rows(), m = x.cols();
  auto out = Tensor<T>::zeros({m, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c * n + r] = x[r * m + c];
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("transpose", [x, out, n, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += g[c * n + r];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  auto out = Tensor<T>::from(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("reshape", [x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// Rows [start, start + count) of a 2-D tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  const std::size_t m = x.cols();
  detail::require(start + count <= x.rows(), "slice_rows",
                  "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                      ") exceeds " + std::to_string(x.rows()) + " rows");
  auto out = Tensor<T>::from({count, m}, std::vector<T>(x.data().begin() + start * m,
                                                        x.data().begin() + (start + count) * m));
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("slice_rows", [x, out, start, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[start * m + i] += g[i];
    });
  }
  return out;
}

// Columns [start, start + count) of a 2-D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  const std::size_t n = x.rows(), m = x.cols();
  detail::require(start + count <= m, "slice_cols",
                  "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                      ") exceeds " + std::to_string(m) + " cols");
  auto out = Tensor<T>::zeros({n, count});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = x[r * m + start + c];
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("slice_cols", [x, out, start, n, m, count]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < count; ++c) gx[r * m + start + c] += g[r * count + c];
    });
  }
  return out;
}

// Stacks 2-D tensors with equal column counts along the row axis.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t m = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == m, "concat_rows", "column counts differ");
    n += p.rows();
  }
  auto out = Tensor<T>::zeros({n, m});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + offset);
    offset += p.size();
  }
  if (auto* tape = detail::recording_tape<T>(parts)) {
    out.set_requires_grad(true);
    tape->record("concat_rows", [parts, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

// Joins 2-D tensors with equal row counts along the column axis.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t m = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == n, "concat_cols", "row counts differ");
    m += p.cols();
  }
  auto out = Tensor<T>::zeros({n, m});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < pc; ++c) out[r * m + c0 + c] = p[r * pc + c];
    c0 += pc;
  }
  if (auto* tape = detail::recording_tape<T>(parts)) {
    out.set_requires_grad(true);
    tape->record("concat_cols", [parts, out, n, m]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t c0 = 0;
      for (auto& p : parts) {
        const std::size_t pc = p.cols();
        if (p.requires_grad()) {
          auto gp = p.ensure_grad();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * m + c0 + c];
        }
        c0 += pc;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(acc);
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("sum", [x, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (T& gx : x.ensure_grad()) gx += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.size());
  auto out = Tensor<T>::scalar(acc * inv);
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("mean", [x, out, inv]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0] * inv;
      for (T& gx : x.ensure_grad()) gx += g;
    });
  }
  return out;
}

// Mean over the column axis of X[C x T] -> [C] (global average pooling).
template <typename T>
Tensor<T> row_mean(const Tensor<T>& x) {
  const std::size_t n = x.rows(), m = x.cols();
  const T inv = T(1) / static_cast<T>(m);
  auto out = Tensor<T>::zeros({n});
  for (std::size_t r = 0; r < n; ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < m; ++c) acc += x[r * m + c];
    out[r] = acc * inv;
  }
  if (auto* tape = detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("row_mean", [x, out, n, m, inv]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += g[r] * inv;
    });
  }
  return out;
}

template <typename T>
struct PoolResult {
  Tensor<T> pooled;
  // Absolute column position of each window maximum, row-major like pooled.
  std::vector<std::size_t> indices;
};

// Non-overlapping max pooling along the columns of X[C x T]. Ties go to the
// lowest index; the backward pass routes gradient to the recorded argmax only.
template <typename T>
PoolResult<T> maxpool_with_indices(const Tensor<T>& x, std::size_t window) {
  const std::size_t n = x.rows(), m = x.cols();
  if (window == 0 || m % window != 0) {
    throw ShapeError("maxpool: length " + std::to_string(m) + " not divisible by window " +
                     std::to_string(window));
  }
  const std::size_t p = m / window;
  PoolResult<T> res{Tensor<T>::zeros({n, p}), std::vector<std::size_t>(n * p)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t w = 0; w < p; ++w) {
      std::size_t best = w * window;
      T best_v = x[r * m + best];
      for (std::size_t c = best + 1; c < (w + 1) * window; ++c) {
        if (x[r * m + c] > best_v) {
          best_v = x[r * m + c];
          best = c;
        }
      }
      res.pooled[r * p + w] = best_v;
      res.indices[r * p + w] = best;
    }
  }
  if (auto* tape = detail::recording_tape<T>({&x})) {
    auto out = res.pooled;
    out.set_requires_grad(true);
    tape->record("maxpool", [x, out, idx = res.indices, n, m, p]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t w = 0; w < p; ++w) gx[r * m + idx[r * p + w]] += g[r * p + w];
    });
  }
  return res;
}

// Places pooled[C x P] back at the recorded positions of a [C x length] map.
template <typename T>
Tensor<T> unpool(const Tensor<T>& pooled, const std::vector<std::size_t>& indices,
                 std::size_t length) {
  const std::size_t n = pooled.rows(), p = pooled.cols();
  if (indices.size() != pooled.size()) {
    throw StateError("unpool: " + std::to_string(indices.size()) + " indices for " +
                     std::to_string(pooled.size()) + " pooled values");
  }
  for (std::size_t i : indices) {
    if (i >= length) {
      throw StateError("unpool: index " + std::to_string(i) + " out of range " +
                       std::to_string(length));
    }
  }
  auto out = Tensor<T>::zeros({n, length});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t w = 0; w < p; ++w) out[r * length + indices[r * p + w]] = pooled[r * p + w];
  if (auto* tape = detail::recording_tape<T>({&pooled})) {
    out.set_requires_grad(true);
    tape->record("unpool", [pooled, out, indices, n, p, length]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gp = pooled.ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t w = 0; w < p; ++w) gp[r * p + w] += g[r * length + indices[r * p + w]];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation, as in common deep-learning frameworks).
//
// conv1d: out[c][t] = sum_j w[c][j] * x[t + j - pad_left], zero outside x.
// "valid" is pad_left = 0, out_len = T - K + 1; "same" is
// pad_left = (K - 1) / 2, out_len = T.

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels, std::size_t pad_left,
                 std::size_t out_len) {
  const std::size_t len = x.size();
  const std::size_t nc = kernels.rows(), nk = kernels.cols();
  auto out = Tensor<T>::zeros({nc, out_len});
  auto xv = x.data();
  auto wv = kernels.data();
  auto ov = out.data();
  const auto plen = static_cast<std::ptrdiff_t>(len);
  const auto pad = static_cast<std::ptrdiff_t>(pad_left);
  const auto olen = static_cast<std::ptrdiff_t>(out_len);
  for (std::size_t c = 0; c < nc; ++c) {
    T* orow = ov.data() + c * out_len;
    for (std::size_t j = 0; j < nk; ++j) {
      const T w = wv[c * nk + j];
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min(olen, plen - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) orow[t] += w * xv[t + shift];
    }
  }
  if (auto* tape = detail::recording_tape<T>({&x, &kernels})) {
    out.set_requires_grad(true);
    tape->record("conv1d", [x, kernels, out, nc, nk, plen, pad, olen]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.data();
      auto wv = kernels.data();
      std::span<T> gx, gw;
      if (x.requires_grad()) gx = x.ensure_grad();
      if (kernels.requires_grad()) gw = kernels.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c) {
        const T* grow = g.data() + c * olen;
        for (std::size_t j = 0; j < nk; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t t1 = std::min(olen, plen - shift);
          if (!gx.empty()) {
            const T w = wv[c * nk + j];
            for (std::ptrdiff_t t = t0; t < t1; ++t) gx[t + shift] += w * grow[t];
          }
          if (!gw.empty()) {
            T acc = 0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += grow[t] * xv[t + shift];
            gw[c * nk + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

// Per-row ("locally connected") same-length correlation of X[C x T] with its
// own kernel row: out[c][t] = sum_j w[c][j] * X[c][t + j - pad_left].
template <typename T>
Tensor<T> depthwise_conv1d(const Tensor<T>& x, const Tensor<T>& kernels, std::size_t pad_left) {
  const std::size_t nc = x.rows(), len = x.cols(), nk = kernels.cols();
  detail::require(kernels.rows() == nc, "depthwise_conv1d", "kernel rows != channels");
  auto out = Tensor<T>::zeros({nc, len});
  auto xv = x.data();
  auto wv = kernels.data();
  auto ov = out.data();
  const auto plen = static_cast<std::ptrdiff_t>(len);
  const auto pad = static_cast<std::ptrdiff_t>(pad_left);
  for (std::size_t c = 0; c < nc; ++c) {
    T* orow = ov.data() + c * len;
    const T* xrow = xv.data() + c * len;
    for (std::size_t j = 0; j < nk; ++j) {
      const T w = wv[c * nk + j];
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min(plen, plen - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) orow[t] += w * xrow[t + shift];
    }
  }
  if (auto* tape = detail::recording_tape<T>({&x, &kernels})) {
    out.set_requires_grad(true);
    tape->record("depthwise_conv1d", [x, kernels, out, nc, nk, plen, pad]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.data();
      auto wv = kernels.data();
      std::span<T> gx, gw;
      if (x.requires_grad()) gx = x.ensure_grad();
      if (kernels.requires_grad()) gw = kernels.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c) {
        const T* grow = g.data() + c * plen;
        const T* xrow = xv.data() + c * plen;
        for (std::size_t j = 0; j < nk; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t t1 = std::min(plen, plen - shift);
          if (!gx.empty()) {
            const T w = wv[c * nk + j];
            T* gxrow = gx.data() + c * plen;
            for (std::ptrdiff_t t = t0; t < t1; ++t) gxrow[t + shift] += w * grow[t];
          }
          if (!gw.empty()) {
            T acc = 0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += grow[t] * xrow[t + shift];
            gw[c * nk + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

// Adjoint of conv1d with the same kernels and padding, summed over channels:
// out[n] = sum_c sum_j w[c][j] * Y[c][n - j + pad_left].
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& y, const Tensor<T>& kernels, std::size_t pad_left,
                           std::size_t out_len) {
  const std::size_t nc = y.rows(), ylen = y.cols(), nk = kernels.cols();
  detail::require(kernels.rows() == nc, "conv_transpose1d", "kernel rows != channels");
  auto out = Tensor<T>::zeros({out_len});
  auto yv = y.data();
  auto wv = kernels.data();
  auto ov = out.data();
  const auto olen = static_cast<std::ptrdiff_t>(out_len);
  const auto plen = static_cast<std::ptrdiff_t>(ylen);
  const auto pad = static_cast<std::ptrdiff_t>(pad_left);
  for (std::size_t c = 0; c < nc; ++c) {
    const T* yrow = yv.data() + c * ylen;
    for (std::size_t j = 0; j < nk; ++j) {
      const T w = wv[c * nk + j];
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min(plen, olen - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) ov[t + shift] += w * yrow[t];
    }
  }
  if (auto* tape = detail::recording_tape<T>({&y, &kernels})) {
    out.set_requires_grad(true);
    tape->record("conv_transpose1d", [y, kernels, out, nc, nk, plen, olen, pad]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto yv = y.data();
      auto wv = kernels.data();
      std::span<T> gy, gw;
      if (y.requires_grad()) gy = y.ensure_grad();
      if (kernels.requires_grad()) gw = kernels.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c) {
        const T* yrow = yv.data() + c * plen;
        for (std::size_t j = 0; j < nk; ++j) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t t1 = std::min(plen, olen - shift);
          if (!gy.empty()) {
            const T w = wv[c * nk + j];
            T* gyrow = gy.data() + c * plen;
            for (std::ptrdiff_t t = t0; t < t1; ++t) gyrow[t] += w * g[t + shift];
          }
          if (!gw.empty()) {
            T acc = 0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) acc += yrow[t] * g[t + shift];
            gw[c * nk + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

// Per-row causal convolution of R[C x T] with filters F[C x L], truncated to
// T samples: out[c][t] = sum_{j <= t} F[c][j] * R[c][t - j]. Zero taps are
// skipped in the forward pass, which makes sparse filters cheap.
template <typename T>
Tensor<T> causal_conv_rows(const Tensor<T>& r, const Tensor<T>& filters) {
  const std::size_t nc = r.rows(), len = r.cols(), flen = filters.cols();
  detail::require(filters.rows() == nc, "causal_conv_rows", "filter rows != channels");
  auto out = Tensor<T>::zeros({nc, len});
  const std::size_t taps = std::min(flen, len);
  for (std::size_t c = 0; c < nc; ++c) {
    const T* rrow = r.data().data() + c * len;
    const T* frow = filters.data().data() + c * flen;
    T* orow = out.data().data() + c * len;
    for (std::size_t j = 0; j < taps; ++j) {
      const T f = frow[j];
      if (f == T(0)) continue;
      for (std::size_t t = j; t < len; ++t) orow[t] += f * rrow[t - j];
    }
  }
  if (auto* tape = detail::recording_tape<T>({&r, &filters})) {
    out.set_requires_grad(true);
    tape->record("causal_conv_rows", [r, filters, out, nc, len, flen, taps]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::span<T> gr, gf;
      if (r.requires_grad()) gr = r.ensure_grad();
      if (filters.requires_grad()) gf = filters.ensure_grad();
      for (std::size_t c = 0; c < nc; ++c) {
        const T* rrow = r.data().data() + c * len;
        const T* frow = filters.data().data() + c * flen;
        const T* grow = g.data() + c * len;
        for (std::size_t j = 0; j < taps; ++j) {
          if (!gr.empty() && frow[j] != T(0)) {
            T* grrow = gr.data() + c * len;
            for (std::size_t t = j; t < len; ++t) grrow[t - j] += frow[j] * grow[t];
          }
          if (!gf.empty()) {
            T acc = 0;
            for (std::size_t t = j; t < len; ++t) acc += grow[t] * rrow[t - j];
            gf[c * flen + j] += acc;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses against a fixed target

template <typename T>
Tensor<T> mean_abs_error(const Tensor<T>& target, const Tensor<T>& pred) {
  return mean(abs(sub(pred, target)));
}

template <typename T>
Tensor<T> mean_squared_error(const Tensor<T>& target, const Tensor<T>& pred) {
  return mean(square(sub(pred, target)));
}

}  // namespace neuroverb::ad
