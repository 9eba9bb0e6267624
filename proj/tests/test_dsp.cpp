#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>

#include "neuroverb/ad/gradcheck.hpp"
#include "neuroverb/dsp.hpp"
#include "neuroverb/dsp_ops.hpp"
#include "neuroverb/errors.hpp"
#include "neuroverb/fft.hpp"
#include "support.hpp"

using namespace neuroverb;
using Catch::Matchers::WithinAbs;

namespace {

// O(N^2) DFT, the oracle for the FFT-backed spectra.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / n);
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("frame_signal covers the signal", "[dsp]") {
  std::vector<float> x(8192);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i + 1);

  const auto f = dsp::frame_signal(x);
  REQUIRE(f.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(f[i][0] == static_cast<float>(i * 2048 + 1));
  CHECK(f[2][4095] == 8192.0f);
  CHECK(f[3][2047] == 8192.0f);
  CHECK(f[3][2048] == 0.0f);
  CHECK(f[3][4095] == 0.0f);

  const auto g = dsp::frame_signal(std::span<const float>(x).first(4096));
  REQUIRE(g.size() == 2);
  CHECK(g[1][2047] == 4096.0f);
  CHECK(g[1][2048] == 0.0f);

  CHECK_THROWS_AS(dsp::frame_signal(std::vector<float>{}), InvalidArgument);
  CHECK_THROWS_AS(dsp::frame_signal(x, 4096, 1000), InvalidArgument);
}

TEST_CASE("make_context pads with zero rows", "[dsp]") {
  std::vector<dsp::Frame> frames;
  for (int i = 0; i < 9; ++i) frames.push_back(dsp::Frame(16, static_cast<float>(i + 1)));

  const auto first = dsp::make_context(frames, 0);
  for (std::size_t r = 0; r < 4; ++r)
    for (float v : first.row(r)) CHECK(v == 0.0f);
  CHECK(std::equal(first.center().begin(), first.center().end(), frames[0].begin()));
  CHECK(first.row(8)[0] == 5.0f);

  const auto mid = dsp::make_context(frames, 4);
  for (std::size_t r = 0; r < 9; ++r) CHECK(mid.row(r)[3] == static_cast<float>(r + 1));

  for (std::size_t i = 0; i < 9; ++i) {
    const auto s = dsp::make_context(frames, i);
    CHECK(std::equal(s.center().begin(), s.center().end(), frames[i].begin()));
  }
  CHECK_THROWS_AS(dsp::make_context(frames, 9), InvalidArgument);
}

TEST_CASE("hann overlap is constant", "[dsp]") {
  const auto w = dsp::hann_periodic(4096);
  double worst = 0.0;
  for (std::size_t i = 0; i < 2048; ++i) worst = std::max(worst, std::abs(w[i] + w[i + 2048] - 1.0));
  CHECK(worst < 1e-9);
}

TEST_CASE("frame then overlap-add reconstructs the interior", "[dsp]") {
  const auto x = testing::random_signal(40960, 17, 1.0);
  const auto y = dsp::overlap_add(dsp::frame_signal(x), 2048);
  REQUIRE(y.size() >= x.size());
  // The first half-frame is covered by one window only.
  double worst = 0.0;
  for (std::size_t i = 2048; i < x.size(); ++i) worst = std::max(worst, std::abs(double(y[i]) - x[i]));
  CHECK(worst < 1e-6);

  const auto zeros = dsp::overlap_add(std::vector<dsp::Frame>(3, dsp::Frame(64, 0.0f)), 32);
  CHECK(std::all_of(zeros.begin(), zeros.end(), [](float v) { return v == 0.0f; }));

  dsp::Frame impulse(4096, 0.0f);
  impulse[2048] = 1.0f;
  CHECK(dsp::overlap_add({impulse}, 2048)[2048] == 1.0f);

  CHECK_THROWS_AS(dsp::overlap_add({dsp::Frame(8), dsp::Frame(6)}, 4), InvalidArgument);
}

TEST_CASE("pre-emphasis", "[dsp]") {
  CHECK(dsp::pre_emphasis(std::vector<double>{1, 0, 0}) == std::vector<double>{1, -0.95, 0});
  const auto y = dsp::pre_emphasis(std::vector<double>{1, 1, 1});
  CHECK(y[0] == 1.0);
  CHECK_THAT(y[1], WithinAbs(0.05, 1e-15));
  CHECK_THAT(y[2], WithinAbs(0.05, 1e-15));

  // Direct-form FIR b = [1, -0.95] with zero initial state.
  const auto xf = testing::random_signal(1000, 21);
  const std::vector<double> x(xf.begin(), xf.end());
  const auto got = dsp::pre_emphasis(x);
  const double b[2] = {1.0, -0.95};
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 2 && k <= n; ++k) acc += b[k] * x[n - k];
    CHECK(got[n] == acc);
  }
  CHECK_THROWS_AS(dsp::pre_emphasis(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("log power spectrum closed forms", "[dsp]") {
  const std::size_t n = 4096;
  SECTION("zero frame") {
    for (double v : dsp::log_power_spectrum(std::vector<double>(n, 0.0)))
      CHECK_THAT(v, WithinAbs(std::log(dsp::kSpectralFloor), 1e-6));
  }
  SECTION("impulse") {
    std::vector<double> x(n, 0.0);
    x[0] = 1.0;
    const auto s = dsp::log_power_spectrum(x);
    CHECK(s.size() == n / 2 + 1);
    for (double v : s) CHECK_THAT(v, WithinAbs(std::log(1.0 + dsp::kSpectralFloor), 1e-6));
  }
  SECTION("cosine at bin 16") {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * std::numbers::pi * 16.0 * i / n);
    const auto s = dsp::log_power_spectrum(x);
    const double peak = std::log(std::pow(n / 2.0, 2) + dsp::kSpectralFloor);
    CHECK_THAT(s[16], WithinAbs(peak, 1e-6));
    CHECK(std::max_element(s.begin(), s.end()) - s.begin() == 16);
  }
  SECTION("matches a naive DFT") {
    const auto xf = testing::random_signal(256, 8);
    const std::vector<double> x(xf.begin(), xf.end());
    const auto s = dsp::log_power_spectrum(x);
    const auto ref = naive_dft(x);
    for (std::size_t k = 0; k < s.size(); ++k)
      CHECK_THAT(s[k], WithinAbs(std::log(std::norm(ref[k]) + dsp::kSpectralFloor), 1e-9));
  }
  SECTION("non-finite input") {
    std::vector<double> x(8, 0.0);
    x[3] = std::nan("");
    CHECK_THROWS_AS(dsp::log_power_spectrum(x), InvalidArgument);
  }
}

TEST_CASE("inverse real FFT", "[dsp]") {
  const auto xf = testing::random_signal(64, 2);
  const std::vector<double> x(xf.begin(), xf.end());
  const auto y = fft::irfft_unnormalized(fft::rfft(x), 64);
  for (std::size_t i = 0; i < 64; ++i) CHECK_THAT(y[i] / 64.0, WithinAbs(x[i], 1e-12));
}

TEST_CASE("differentiable loss-side transforms", "[dsp]") {
  Rng rng(5);
  auto x = testing::random_tensor<double>({8}, rng);
  const auto ref = dsp::pre_emphasis(std::vector<double>(x.data().begin(), x.data().end()));
  const auto got = dsp::pre_emphasis(x);
  for (std::size_t i = 0; i < 8; ++i) CHECK(got[i] == ref[i]);

  auto w = testing::random_tensor<double>({8}, rng);
  auto wpe = testing::random_tensor<double>({5}, rng);
  const double e1 = ad::finite_diff_check<double>(
      [&w](const ad::Tensor<double>& p) { return ad::sum(ad::mul(dsp::pre_emphasis(p), w)); }, x);
  const double e2 = ad::finite_diff_check<double>(
      [&wpe](const ad::Tensor<double>& p) { return ad::sum(ad::mul(dsp::log_power_spectrum(p), wpe)); }, x);
  CHECK(e1 < 1e-4);
  CHECK(e2 < 1e-4);

  // Odd length exercises the no-Nyquist-bin branch.
  auto odd = testing::random_tensor<double>({7}, rng);
  auto w4 = testing::random_tensor<double>({4}, rng);
  CHECK(ad::finite_diff_check<double>(
            [&w4](const ad::Tensor<double>& p) { return ad::sum(ad::mul(dsp::log_power_spectrum(p), w4)); },
            odd) < 1e-4);
}

TEST_CASE("velvet noise construction", "[dsp]") {
  const auto ir = dsp::velvet_noise_ir(16, 2000, 16000, 3);
  const auto nz = [](auto b, auto e) { return std::count_if(b, e, [](float v) { return v != 0.0f; }); };
  CHECK(nz(ir.begin(), ir.begin() + 8) == 1);
  CHECK(nz(ir.begin() + 8, ir.end()) == 1);

  const auto sec = dsp::velvet_noise_ir(16000, 2000, 16000, 11);
  CHECK(nz(sec.begin(), sec.end()) == 2000);
  for (float v : sec) CHECK((v == 0.0f || v == 1.0f || v == -1.0f));
  CHECK(sec == dsp::velvet_noise_ir(16000, 2000, 16000, 11));

  CHECK_THROWS_AS(dsp::velvet_noise_ir(12, 2000, 16000, 0), InvalidArgument);
  CHECK_THROWS_AS(dsp::velvet_noise_ir(16, 3000, 16000, 0), InvalidArgument);
}

TEST_CASE("truncated convolution", "[dsp]") {
  const std::vector<float> x{1, 2, 3, 4};
  const std::vector<float> h{1, 0.5f};
  CHECK(dsp::convolve_truncated(x, h) == std::vector<float>{1, 2.5f, 4, 5.5f});
}
