#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "neuroverb/ad/tensor.hpp"
#include "neuroverb/audio_io.hpp"
#include "neuroverb/dsp.hpp"
#include "neuroverb/random.hpp"

namespace testing {

namespace nv = neuroverb;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    nv::Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() / ("neuroverb_" + tag + "_" + std::to_string(rng.next() % 1000000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> random_signal(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  nv::Rng rng(seed);
  std::vector<float> x(n);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-amp, amp));
  return x;
}

template <typename T>
nv::ad::Tensor<T> random_tensor(nv::ad::Shape shape, nv::Rng& rng, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = false) {
  auto t = nv::ad::Tensor<T>::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Sum of sines; phases and amplitudes are per-component.
inline std::vector<float> sines(std::size_t n, const std::vector<double>& freqs, const std::vector<double>& amps,
                                const std::vector<double>& phases, int sample_rate = 16000) {
  std::vector<float> x(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double acc = 0.0;
    for (std::size_t k = 0; k < freqs.size(); ++k)
      acc += amps[k] * std::sin(2.0 * std::numbers::pi * freqs[k] * t + phases[k]);
    x[i] = static_cast<float>(acc);
  }
  return x;
}

// Decaying harmonic tone repeated every `period` samples: a cheap stand-in for
// a plucked note.
inline std::vector<float> plucked_tone(std::size_t n, double f0 = 330.0, std::size_t period = 1024,
                                       double decay = 300.0, double amp = 0.6) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    const double env = std::exp(-static_cast<double>(i % period) / decay);
    const double w = 2.0 * std::numbers::pi * f0 * t;
    x[i] = static_cast<float>(amp * env * (std::sin(w) + 0.5 * std::sin(3 * w) + 0.25 * std::sin(5 * w)));
  }
  return x;
}

// Velvet-noise impulse response with an exponential decay.
inline std::vector<float> decaying_velvet_ir(std::size_t length, double decay_samples, std::uint64_t seed) {
  auto ir = nv::dsp::velvet_noise_ir(length, 2000, 16000, seed);
  for (std::size_t i = 0; i < ir.size(); ++i)
    ir[i] = static_cast<float>(ir[i] * std::exp(-static_cast<double>(i) / decay_samples));
  return ir;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace testing
