#pragma once

#include <cmath>
#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/layers/common.hpp"

namespace neuroverb::layers {

// Whole-sequence LSTM as one differentiable op with backpropagation through
// time. Gate layout along the 4H axis is (input, forget, cell, output):
//
//   z_t = (x_t * in_mask) Wx + (h_{t-1} * rec_mask) Wh + b
//   i, f, o = sigmoid(z_i, z_f, z_o);  g = tanh(z_g)
//   c_t = f c_{t-1} + i g;  h_t = o tanh(c_t)
//
// Masks are constant over time (empty = no dropout). With `reverse` the
// sequence is consumed from the last step to the first; outputs stay aligned
// with their input steps.
template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& wx, const Tensor<T>& wh,
                        const Tensor<T>& b, const std::vector<T>& in_mask,
                        const std::vector<T>& rec_mask, bool reverse) {
  const std::size_t steps = x.rows(), nin = x.cols(), nh = wh.rows(), g4 = 4 * nh;
  ad::detail::require(wx.rows() == nin && wx.cols() == g4, "lstm", "input kernel shape");
  ad::detail::require(wh.cols() == g4, "lstm", "recurrent kernel shape");
  ad::detail::require(b.size() == g4, "lstm", "bias shape");
  ad::detail::require(in_mask.empty() || in_mask.size() == nin, "lstm", "input mask length");
  ad::detail::require(rec_mask.empty() || rec_mask.size() == nh, "lstm", "recurrent mask length");

  // Masked inputs and their projection for all steps at once.
  std::vector<T> xm(x.data().begin(), x.data().end());
  if (!in_mask.empty()) {
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t k = 0; k < nin; ++k) xm[t * nin + k] *= in_mask[k];
  }
  std::vector<T> z(steps * g4);
  for (std::size_t t = 0; t < steps; ++t) {
    T* zr = z.data() + t * g4;
    for (std::size_t j = 0; j < g4; ++j) zr[j] = b[j];
    for (std::size_t k = 0; k < nin; ++k) {
      const T xv = xm[t * nin + k];
      if (xv == T(0)) continue;
      const T* wr = wx.data().data() + k * g4;
      for (std::size_t j = 0; j < g4; ++j) zr[j] += xv * wr[j];
    }
  }

  auto out = Tensor<T>::zeros({steps, nh});
  std::vector<T> gates(steps * g4), cells(steps * nh), tanh_c(steps * nh), hprev(steps * nh);
  std::vector<T> h(nh, T(0)), c(nh, T(0));
  const T* whv = wh.data().data();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    T* hp = hprev.data() + t * nh;
    for (std::size_t k = 0; k < nh; ++k) hp[k] = rec_mask.empty() ? h[k] : h[k] * rec_mask[k];
    T* zr = z.data() + t * g4;
    for (std::size_t k = 0; k < nh; ++k) {
      const T hv = hp[k];
      if (hv == T(0)) continue;
      const T* wr = whv + k * g4;
      for (std::size_t j = 0; j < g4; ++j) zr[j] += hv * wr[j];
    }
    T* gr = gates.data() + t * g4;
    for (std::size_t k = 0; k < nh; ++k) {
      const T gi = ad::detail::sigmoid(zr[k]);
      const T gf = ad::detail::sigmoid(zr[nh + k]);
      const T gg = std::tanh(zr[2 * nh + k]);
      const T go = ad::detail::sigmoid(zr[3 * nh + k]);
      gr[k] = gi;
      gr[nh + k] = gf;
      gr[2 * nh + k] = gg;
      gr[3 * nh + k] = go;
      c[k] = gf * c[k] + gi * gg;
      const T tc = std::tanh(c[k]);
      cells[t * nh + k] = c[k];
      tanh_c[t * nh + k] = tc;
      h[k] = go * tc;
      out[t * nh + k] = h[k];
    }
  }

  if (auto* tape = ad::detail::recording_tape<T>({&x, &wx, &wh, &b})) {
    out.set_requires_grad(true);
    tape->record("lstm", [x, wx, wh, b, out, in_mask, rec_mask, reverse, steps, nin, nh, g4,
                          xm = std::move(xm), gates = std::move(gates), cells = std::move(cells),
                          tanh_c = std::move(tanh_c), hprev = std::move(hprev)]() mutable {
      if (!out.has_grad()) return;
      auto gout = out.grad();
      std::vector<T> dz(steps * g4, T(0));
      std::vector<T> dh_next(nh, T(0)), dc_next(nh, T(0));
      const T* whv = wh.data().data();
      for (std::size_t s = steps; s-- > 0;) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        // Cell state entering step t, i.e. the one left by the previous step.
        const bool first = s == 0;
        const std::size_t tp = reverse ? t + 1 : t - 1;
        const T* gr = gates.data() + t * g4;
        T* dzr = dz.data() + t * g4;
        for (std::size_t k = 0; k < nh; ++k) {
          const T gi = gr[k], gf = gr[nh + k], gg = gr[2 * nh + k], go = gr[3 * nh + k];
          const T tc = tanh_c[t * nh + k];
          const T cprev = first ? T(0) : cells[tp * nh + k];
          const T dh = gout[t * nh + k] + dh_next[k];
          const T dgo = dh * tc;
          const T dc = dh * go * (T(1) - tc * tc) + dc_next[k];
          const T dgi = dc * gg;
          const T dgg = dc * gi;
          const T dgf = dc * cprev;
          dc_next[k] = dc * gf;
          dzr[k] = dgi * gi * (T(1) - gi);
          dzr[nh + k] = dgf * gf * (T(1) - gf);
          dzr[2 * nh + k] = dgg * (T(1) - gg * gg);
          dzr[3 * nh + k] = dgo * go * (T(1) - go);
        }
        // dh_{t-1} = (dz Wh^T) * rec_mask
        for (std::size_t k = 0; k < nh; ++k) {
          const T* wr = whv + k * g4;
          T acc = 0;
          for (std::size_t j = 0; j < g4; ++j) acc += dzr[j] * wr[j];
          dh_next[k] = rec_mask.empty() ? acc : acc * rec_mask[k];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.ensure_grad();
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t j = 0; j < g4; ++j) gb[j] += dz[t * g4 + j];
      }
      if (wx.requires_grad()) {
        auto gw = wx.ensure_grad();
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t k = 0; k < nin; ++k) {
            const T xv = xm[t * nin + k];
            if (xv == T(0)) continue;
            T* gwr = gw.data() + k * g4;
            const T* dzr = dz.data() + t * g4;
            for (std::size_t j = 0; j < g4; ++j) gwr[j] += xv * dzr[j];
          }
      }
      if (wh.requires_grad()) {
        auto gw = wh.ensure_grad();
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t k = 0; k < nh; ++k) {
            const T hv = hprev[t * nh + k];
            if (hv == T(0)) continue;
            T* gwr = gw.data() + k * g4;
            const T* dzr = dz.data() + t * g4;
            for (std::size_t j = 0; j < g4; ++j) gwr[j] += hv * dzr[j];
          }
      }
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        const T* wxv = wx.data().data();
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t k = 0; k < nin; ++k) {
            const T* wr = wxv + k * g4;
            const T* dzr = dz.data() + t * g4;
            T acc = 0;
            for (std::size_t j = 0; j < g4; ++j) acc += dzr[j] * wr[j];
            gx[t * nin + k] += in_mask.empty() ? acc : acc * in_mask[k];
          }
      }
    });
  }
  return out;
}

template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, const ForwardContext& ctx) {
  if (!ctx.training() || rate <= 0.0 || ctx.dropout_rng == nullptr) return {};
  std::vector<T> mask(n);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = ctx.dropout_rng->bernoulli(rate) ? T(0) : keep_scale;
  return mask;
}

// Unidirectional LSTM layer with input and recurrent dropout.
template <typename T>
struct Lstm {
  Tensor<T> kernel;            // [in x 4H]
  Tensor<T> recurrent_kernel;  // [H x 4H]
  Tensor<T> bias;              // [4H]
  double dropout = 0.0;
  double recurrent_dropout = 0.0;

  Lstm() = default;
  Lstm(std::size_t in, std::size_t units, double drop = 0.0, double rec_drop = 0.0)
      : kernel(make_param<T>({in, 4 * units})),
        recurrent_kernel(make_param<T>({units, 4 * units})),
        bias(make_param<T>({4 * units})),
        dropout(drop),
        recurrent_dropout(rec_drop) {}

  std::size_t units() const { return recurrent_kernel.rows(); }
  std::size_t in_features() const { return kernel.rows(); }

  // Glorot input kernel, orthogonal recurrent kernel, zero bias with the
  // forget-gate bias at 1.
  void init(Rng& rng) {
    glorot_uniform(kernel, in_features(), 4 * units(), rng);
    orthogonal(recurrent_kernel, rng);
    std::fill(bias.data().begin(), bias.data().end(), T(0));
    for (std::size_t k = 0; k < units(); ++k) bias[units() + k] = T(1);
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx, bool reverse = false) const {
    const auto in_mask = dropout_mask<T>(in_features(), dropout, ctx);
    const auto rec_mask = dropout_mask<T>(units(), recurrent_dropout, ctx);
    return lstm_sequence(x, kernel, recurrent_kernel, bias, in_mask, rec_mask, reverse);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".kernel", kernel});
    out.push_back({prefix + ".recurrent_kernel", recurrent_kernel});
    out.push_back({prefix + ".bias", bias});
  }
};

// Forward and backward LSTMs over the same sequence; outputs concatenated as
// [forward | backward] along the feature axis -> [T x 2H].
template <typename T>
struct BiLstm {
  Lstm<T> fwd;
  Lstm<T> bwd;

  BiLstm() = default;
  BiLstm(std::size_t in, std::size_t units, double drop = 0.0, double rec_drop = 0.0)
      : fwd(in, units, drop, rec_drop), bwd(in, units, drop, rec_drop) {}

  std::size_t units() const { return fwd.units(); }

  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) const {
    auto a = fwd.forward(x, ctx, false);
    auto b = bwd.forward(x, ctx, true);
    return ad::concat_cols<T>({a, b});
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    fwd.collect(out, prefix + ".fwd");
    bwd.collect(out, prefix + ".bwd");
  }
};

}  // namespace neuroverb::layers
