#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace neuroverb {

// splitmix64 finalizer; derives independent stream seeds from one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Named seed streams.
enum class SeedStream : std::uint64_t { init = 1, dropout = 2, shuffle = 3, split = 4 };

inline std::uint64_t derive_seed(std::uint64_t root, SeedStream stream) {
  return derive_seed(root, static_cast<std::uint64_t>(stream));
}

// Engine plus distribution transforms written out explicitly, so that draws
// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace neuroverb
