#pragma once

// Differentiable versions of the loss-side DSP: pre-emphasis and the
// log-power spectrum. Transforms run in double regardless of T.

#include <complex>
#include <vector>

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/dsp.hpp"
#include "neuroverb/fft.hpp"

namespace neuroverb::dsp {

template <typename T>
ad::Tensor<T> pre_emphasis(const ad::Tensor<T>& x, T coeff = static_cast<T>(kPreEmphasis)) {
  const std::size_t n = x.size();
  if (n == 0) throw InvalidArgument("pre-emphasis of an empty signal");
  auto out = ad::Tensor<T>::zeros(x.shape());
  out[0] = x[0];
  for (std::size_t i = 1; i < n; ++i) out[i] = x[i] - coeff * x[i - 1];
  if (auto* tape = ad::detail::recording_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("pre_emphasis", [x, out, coeff, n]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.ensure_grad();
      gx[0] += g[0];
      for (std::size_t i = 1; i < n; ++i) {
        gx[i] += g[i];
        gx[i - 1] -= coeff * g[i];
      }
    });
  }
  return out;
}

// log(|X_k|^2 + eps) for k = 0..N/2. With P_k = |X_k|^2 the gradient is
// dL/dx_n = 2 * sum_k (g_k / (P_k + eps)) * Re(X_k * exp(+i w k n)), which is
// one inverse real FFT of the weighted half spectrum.
template <typename T>
ad::Tensor<T> log_power_spectrum(const ad::Tensor<T>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> xd(frame.data().begin(), frame.data().end());
  for (double v : xd) {
    if (!std::isfinite(v)) throw InvalidArgument("log_power_spectrum: non-finite input");
  }
  auto spec = fft::rfft(xd);
  const std::size_t bins = spec.size();
  auto out = ad::Tensor<T>::zeros({bins});
  for (std::size_t k = 0; k < bins; ++k) {
    out[k] = static_cast<T>(std::log(std::norm(spec[k]) + kSpectralFloor));
  }
  if (auto* tape = ad::detail::recording_tape<T>({&frame})) {
    out.set_requires_grad(true);
    tape->record("log_power_spectrum", [frame, out, spec = std::move(spec), n, bins]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::vector<std::complex<double>> half(bins);
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = static_cast<double>(g[k]) / (std::norm(spec[k]) + kSpectralFloor);
        // irfft doubles the interior bins; pre-halve them so every bin counts once.
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        half[k] = spec[k] * (edge ? w : 0.5 * w);
      }
      const auto s = fft::irfft_unnormalized(half, n);
      auto gx = frame.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += static_cast<T>(2.0 * s[i]);
    });
  }
  return out;
}

}  // namespace neuroverb::dsp
