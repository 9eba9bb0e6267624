#include "neuroverb/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>

#include "neuroverb/errors.hpp"

namespace neuroverb::fft {

namespace {

// One pair of FFTW plans per transform size. Plans are created once under a
// lock (the FFTW planner is not thread-safe) and executed on per-call buffers
// through the new-array interface.
struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

struct Buffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  std::size_t n = 0;

  explicit Buffers(std::size_t size) : n(size) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
  }
  ~Buffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  Buffers(const Buffers&) = delete;
  Buffers& operator=(const Buffers&) = delete;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Buffers scratch(n);
  PlanPair p;
  const int len = static_cast<int>(n);
  p.forward = fftw_plan_dft_r2c_1d(len, scratch.real, scratch.spec, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(len, scratch.spec, scratch.real, FFTW_ESTIMATE);
  if (p.forward == nullptr || p.inverse == nullptr) {
    throw InvalidArgument("FFTW could not plan a transform of size " + std::to_string(n));
  }
  return cache.emplace(n, p).first->second;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw InvalidArgument("rfft of an empty signal");
  const auto& plan = plans_for(n);
  Buffers buf(n);
  std::copy(x.begin(), x.end(), buf.real);
  fftw_execute_dft_r2c(plan.forward, buf.real, buf.spec);
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {buf.spec[k][0], buf.spec[k][1]};
  return out;
}

std::vector<double> irfft_unnormalized(std::span<const std::complex<double>> half, std::size_t n) {
  if (half.size() != n / 2 + 1) throw InvalidArgument("irfft: half spectrum length mismatch");
  const auto& plan = plans_for(n);
  Buffers buf(n);
  for (std::size_t k = 0; k < half.size(); ++k) {
    buf.spec[k][0] = half[k].real();
    buf.spec[k][1] = half[k].imag();
  }
  buf.spec[0][1] = 0.0;
  if (n % 2 == 0) buf.spec[n / 2][1] = 0.0;
  fftw_execute_dft_c2r(plan.inverse, buf.spec, buf.real);
  return std::vector<double>(buf.real, buf.real + n);
}

}  // namespace neuroverb::fft
