#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace anc {

// Spectral representation used by the autoencoder boundary transforms:
// s = [Re X_0 .. Re X_{L/2}, Im X_0 .. Im X_{L/2}] of the one-sided DFT,
// length 2*(L/2+1). L must be even.

inline std::size_t spectral_size(std::size_t filter_len) {
  return 2 * (filter_len / 2 + 1);
}

// In-place complex FFT; radix-2 for power-of-two sizes, naive DFT otherwise.
void fft(std::vector<std::complex<double>>& a, bool inverse);

std::vector<double> rfft_concat(std::span<const double> w);
std::vector<double> irfft_concat(std::span<const double> s);

// Adjoints of the two linear maps above (transpose maps), used by
// reverse-mode gradient accumulation.
std::vector<double> rfft_concat_adjoint(std::span<const double> u);
std::vector<double> irfft_concat_adjoint(std::span<const double> v);

}  // namespace anc
