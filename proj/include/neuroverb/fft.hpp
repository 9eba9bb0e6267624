#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace neuroverb::fft {

// Real-to-complex DFT: X[k] = sum_n x[n] exp(-2*pi*i*k*n/N), k = 0..N/2.
std::vector<std::complex<double>> rfft(std::span<const double> x);

// Unnormalized inverse of rfft for a Hermitian half spectrum of length
// n/2 + 1: y[m] = sum_{k=0}^{n-1} Y[k] exp(+2*pi*i*k*m/n). The imaginary
// parts of Y[0] and Y[n/2] are ignored.
std::vector<double> irfft_unnormalized(std::span<const std::complex<double>> half, std::size_t n);

}  // namespace neuroverb::fft
