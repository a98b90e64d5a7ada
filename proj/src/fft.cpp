#include "anc/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace anc {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

void dft_naive(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t m = 0; m < n; ++m) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * kPi * static_cast<double>(m * t) / static_cast<double>(n);
      acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[m] = inverse ? acc / static_cast<double>(n) : acc;
  }
  a = std::move(out);
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  if (a.empty()) return;
  if (is_pow2(a.size())) {
    fft_radix2(a, inverse);
  } else {
    dft_naive(a, inverse);
  }
}

std::vector<double> rfft_concat(std::span<const double> w) {
  const std::size_t len = w.size();
  if (len == 0 || len % 2 != 0) {
    throw std::invalid_argument("rfft_concat: filter length must be even and nonzero");
  }
  std::vector<std::complex<double>> a(len);
  for (std::size_t i = 0; i < len; ++i) a[i] = {w[i], 0.0};
  fft(a, false);
  const std::size_t bins = len / 2 + 1;
  std::vector<double> s(2 * bins);
  for (std::size_t m = 0; m < bins; ++m) {
    s[m] = a[m].real();
    s[bins + m] = a[m].imag();
  }
  // exact zeros on the bins a real signal cannot populate
  s[bins + 0] = 0.0;
  s[bins + len / 2] = 0.0;
  return s;
}

std::vector<double> irfft_concat(std::span<const double> s) {
  if (s.size() < 4 || s.size() % 2 != 0) {
    throw std::invalid_argument("irfft_concat: bad spectral vector length");
  }
  const std::size_t bins = s.size() / 2;
  const std::size_t len = 2 * (bins - 1);
  std::vector<std::complex<double>> a(len);
  a[0] = {s[0], s[bins]};
  a[len / 2] = {s[len / 2], s[bins + len / 2]};
  for (std::size_t m = 1; m < len / 2; ++m) {
    const std::complex<double> x(s[m], s[bins + m]);
    a[m] = x;
    a[len - m] = std::conj(x);
  }
  fft(a, true);
  std::vector<double> w(len);
  for (std::size_t t = 0; t < len; ++t) w[t] = a[t].real();
  return w;
}

std::vector<double> rfft_concat_adjoint(std::span<const double> u) {
  // dw_t = sum_m u_re[m] cos(2 pi m t / L) - u_im[m] sin(2 pi m t / L);
  // equals L * irfft_concat(u with interior bins halved).
  const std::size_t bins = u.size() / 2;
  const std::size_t len = 2 * (bins - 1);
  std::vector<double> half(u.begin(), u.end());
  for (std::size_t m = 1; m < len / 2; ++m) {
    half[m] *= 0.5;
    half[bins + m] *= 0.5;
  }
  auto w = irfft_concat(half);
  for (auto& x : w) x *= static_cast<double>(len);
  return w;
}

std::vector<double> irfft_concat_adjoint(std::span<const double> v) {
  const std::size_t len = v.size();
  std::vector<std::complex<double>> a(len);
  for (std::size_t i = 0; i < len; ++i) a[i] = {v[i], 0.0};
  fft(a, false);
  const std::size_t bins = len / 2 + 1;
  std::vector<double> u(2 * bins, 0.0);
  const double inv_len = 1.0 / static_cast<double>(len);
  u[0] = a[0].real() * inv_len;
  u[len / 2] = a[len / 2].real() * inv_len;
  for (std::size_t m = 1; m < len / 2; ++m) {
    u[m] = 2.0 * a[m].real() * inv_len;
    u[bins + m] = 2.0 * a[m].imag() * inv_len;
  }
  return u;
}

}  // namespace anc
