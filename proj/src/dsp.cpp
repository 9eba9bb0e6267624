#include "neuroverb/dsp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "neuroverb/errors.hpp"
#include "neuroverb/fft.hpp"
#include "neuroverb/random.hpp"

namespace neuroverb::dsp {

std::vector<Frame> frame_signal(std::span<const float> signal, std::size_t frame_size,
                                std::size_t hop) {
  if (signal.empty()) throw InvalidArgument("cannot frame an empty signal");
  if (frame_size == 0 || frame_size % 2 != 0 || hop != frame_size / 2) {
    throw InvalidArgument("frame size must be even with a hop of half the frame");
  }
  const std::size_t count = (signal.size() + hop - 1) / hop;
  std::vector<Frame> frames(count, Frame(frame_size, 0.0f));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * hop;
    const std::size_t n = std::min(frame_size, signal.size() - start);
    std::copy_n(signal.begin() + static_cast<std::ptrdiff_t>(start), n, frames[i].begin());
  }
  return frames;
}

FrameStack make_context(const std::vector<Frame>& frames, std::size_t index, std::size_t context) {
  if (index >= frames.size()) {
    throw InvalidArgument("frame index " + std::to_string(index) + " out of range");
  }
  FrameStack stack;
  stack.context = context;
  stack.frame_size = frames[index].size();
  stack.center_index = index;
  stack.hop = stack.frame_size / 2;
  stack.frames.assign(stack.rows() * stack.frame_size, 0.0f);
  for (std::size_t r = 0; r < stack.rows(); ++r) {
    const auto src = static_cast<std::ptrdiff_t>(index) + static_cast<std::ptrdiff_t>(r) -
                     static_cast<std::ptrdiff_t>(context);
    if (src < 0 || src >= static_cast<std::ptrdiff_t>(frames.size())) continue;
    const auto& f = frames[static_cast<std::size_t>(src)];
    if (f.size() != stack.frame_size) throw InvalidArgument("frames differ in length");
    std::copy(f.begin(), f.end(), stack.frames.begin() + r * stack.frame_size);
  }
  return stack;
}

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

std::vector<float> overlap_add(const std::vector<Frame>& frames, std::size_t hop) {
  if (frames.empty()) return {};
  const std::size_t n = frames.front().size();
  for (const auto& f : frames) {
    if (f.size() != n) throw InvalidArgument("overlap_add: inconsistent frame lengths");
  }
  if (hop == 0 || hop > n) throw InvalidArgument("overlap_add: invalid hop");
  const auto window = hann_periodic(n);
  // For a COLA window the overlap sum is sum(w) / hop at every sample.
  double wsum = 0.0;
  for (double v : window) wsum += v;
  const double gain = wsum / static_cast<double>(hop);

  std::vector<double> acc((frames.size() - 1) * hop + n, 0.0);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) acc[i * hop + k] += window[k] * frames[i][k];
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / gain);
  return out;
}

std::vector<double> pre_emphasis(std::span<const double> x, double coeff) {
  if (x.empty()) throw InvalidArgument("pre-emphasis of an empty signal");
  std::vector<double> y(x.size());
  y[0] = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) y[n] = x[n] - coeff * x[n - 1];
  return y;
}

std::vector<double> log_power_spectrum(std::span<const double> frame) {
  for (double v : frame) {
    if (!std::isfinite(v)) throw InvalidArgument("log_power_spectrum: non-finite input");
  }
  const auto spec = fft::rfft(frame);
  std::vector<double> bins(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) bins[k] = std::log(std::norm(spec[k]) + kSpectralFloor);
  return bins;
}

std::vector<float> velvet_noise_ir(std::size_t length, std::size_t density_per_s,
                                   std::size_t sample_rate, std::uint64_t seed) {
  if (density_per_s == 0 || sample_rate % density_per_s != 0) {
    throw InvalidArgument("sample rate must be a multiple of the pulse density");
  }
  const std::size_t grid = sample_rate / density_per_s;
  if (length % grid != 0) {
    throw InvalidArgument("velvet noise length " + std::to_string(length) +
                          " is not a multiple of the grid size " + std::to_string(grid));
  }
  Rng rng(seed);
  std::vector<float> ir(length, 0.0f);
  for (std::size_t start = 0; start < length; start += grid) {
    const std::size_t pos = start + static_cast<std::size_t>(rng.uniform() * static_cast<double>(grid));
    ir[pos] = rng.bernoulli(0.5) ? 1.0f : -1.0f;
  }
  return ir;
}

std::vector<float> convolve_truncated(std::span<const float> signal, std::span<const float> ir) {
  std::vector<double> acc(signal.size(), 0.0);
  for (std::size_t j = 0; j < ir.size(); ++j) {
    if (ir[j] == 0.0f) continue;
    for (std::size_t t = j; t < signal.size(); ++t) acc[t] += static_cast<double>(ir[j]) * signal[t - j];
  }
  return std::vector<float>(acc.begin(), acc.end());
}

}  // namespace neuroverb::dsp
