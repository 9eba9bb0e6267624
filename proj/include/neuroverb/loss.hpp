#pragma once

#include "neuroverb/ad/ops.hpp"
#include "neuroverb/config.hpp"
#include "neuroverb/dsp_ops.hpp"
#include "neuroverb/errors.hpp"

namespace neuroverb {

// total = alpha_time * mae_time + alpha_spec * mse_spec, where mae_time is
// taken over pre-emphasized waveforms and mse_spec over log power spectra.
template <typename T>
struct LossBreakdown {
  ad::Tensor<T> objective;  // differentiable total, on the active tape if any
  double mae_time = 0.0;
  double mse_spec = 0.0;
  double total = 0.0;
};

template <typename T>
LossBreakdown<T> compute_loss(const ad::Tensor<T>& target, const ad::Tensor<T>& pred,
                              const LossConfig& cfg = {}) {
  if (target.size() != pred.size()) {
    throw ShapeError("compute_loss: target has " + std::to_string(target.size()) +
                     " samples, prediction " + std::to_string(pred.size()));
  }
  const T coeff = static_cast<T>(cfg.pre_emphasis);
  auto mae = ad::mean_abs_error(dsp::pre_emphasis(target, coeff), dsp::pre_emphasis(pred, coeff));
  auto mse = ad::mean_squared_error(dsp::log_power_spectrum(target), dsp::log_power_spectrum(pred));
  LossBreakdown<T> out;
  out.objective = ad::add(ad::scale(mae, static_cast<T>(cfg.alpha_time)),
                          ad::scale(mse, static_cast<T>(cfg.alpha_spec)));
  out.mae_time = static_cast<double>(mae.item());
  out.mse_spec = static_cast<double>(mse.item());
  out.total = cfg.alpha_time * out.mae_time + cfg.alpha_spec * out.mse_spec;
  return out;
}

}  // namespace neuroverb
