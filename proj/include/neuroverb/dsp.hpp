#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "neuroverb/audio_io.hpp"

namespace neuroverb::dsp {

// Floor added to the power spectrum before the logarithm.
inline constexpr double kSpectralFloor = 1e-10;
inline constexpr double kPreEmphasis = 0.95;

using Frame = std::vector<float>;

// A centre frame with k frames of context on either side, stored row-major
// as (2k+1) x frame_size. Row k is the current frame; context rows that fall
// outside the signal are zero.
struct FrameStack {
  std::vector<float> frames;
  std::size_t context = 4;
  std::size_t frame_size = 0;
  std::size_t center_index = 0;
  std::size_t hop = 0;

  std::size_t rows() const { return 2 * context + 1; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(frames).subspan(r * frame_size, frame_size);
  }
  std::span<const float> center() const { return row(context); }
};

// Rectangular analysis frames at offsets i*hop, i = 0..ceil(len/hop)-1, the
// tail zero-padded. Requires an even frame size and hop = frame_size/2.
std::vector<Frame> frame_signal(std::span<const float> signal, std::size_t frame_size = 4096,
                                std::size_t hop = 2048);

FrameStack make_context(const std::vector<Frame>& frames, std::size_t index,
                        std::size_t context = 4);

// Periodic (DFT-even) Hann window.
std::vector<double> hann_periodic(std::size_t n);

// Windows each frame with a periodic Hann window, accumulates it at i*hop and
// divides by the constant overlap sum. The result has
// (frames-1)*hop + frame_size samples.
std::vector<float> overlap_add(const std::vector<Frame>& frames, std::size_t hop);

// y[0] = x[0]; y[n] = x[n] - coeff * x[n-1].
std::vector<double> pre_emphasis(std::span<const double> x, double coeff = kPreEmphasis);

// log(|DFT(frame)|^2 + eps) over the frame.size()/2 + 1 non-redundant bins.
std::vector<double> log_power_spectrum(std::span<const double> frame);

// Sparse pseudo-random impulse response with exactly one +/-1 pulse per
// sample_rate/density_per_s samples, at a uniformly drawn offset.
std::vector<float> velvet_noise_ir(std::size_t length, std::size_t density_per_s = 2000,
                                   std::size_t sample_rate = 16000, std::uint64_t seed = 0);

// Full linear convolution of a signal with an impulse response, truncated to
// the signal length.
std::vector<float> convolve_truncated(std::span<const float> signal, std::span<const float> ir);

}  // namespace neuroverb::dsp
