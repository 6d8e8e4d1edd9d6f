#pragma once
// Discrete Fourier transforms: iterative radix-2 for power-of-two sizes and
// Bluestein's chirp-z algorithm for everything else (the SC-FDMA spreading
// DFT is not a power of two). Unitary wrappers scale by 1/sqrt(N) in both
// directions so Parseval holds exactly between stages.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "fhc/types.hpp"

namespace fhc {

namespace detail {

// In-place radix-2 DIT. sign = -1 forward, +1 inverse (unscaled).
inline void fft_pow2(CVec& a, int sign) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const Cpx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Cpx w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const Cpx u = a[i + j];
        const Cpx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct BluesteinPlan {
  std::size_t n = 0;
  std::size_t m = 0;       // padded power-of-two size
  CVec chirp;              // exp(-i*pi*k^2/n), length n
  CVec chirp_fft;          // FFT of the zero-padded conjugate chirp kernel
};

inline std::shared_ptr<const BluesteinPlan> bluestein_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  auto plan = std::make_shared<BluesteinPlan>();
  plan->n = n;
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  plan->m = m;
  plan->chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small for large k.
    const double phase = M_PI * static_cast<double>((k * k) % (2 * n)) /
                         static_cast<double>(n);
    plan->chirp[k] = Cpx(std::cos(phase), -std::sin(phase));
  }
  CVec b(m, Cpx(0.0, 0.0));
  b[0] = std::conj(plan->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b[k] = std::conj(plan->chirp[k]);
    b[m - k] = b[k];
  }
  fft_pow2(b, -1);
  plan->chirp_fft = std::move(b);
  cache[n] = plan;
  return plan;
}

inline void fft_bluestein(CVec& a, int sign) {
  const std::size_t n = a.size();
  auto plan = bluestein_plan(n);
  CVec x(plan->m, Cpx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const Cpx c = sign < 0 ? plan->chirp[k] : std::conj(plan->chirp[k]);
    x[k] = a[k] * c;
  }
  fft_pow2(x, -1);
  if (sign < 0) {
    for (std::size_t k = 0; k < plan->m; ++k) x[k] *= plan->chirp_fft[k];
  } else {
    for (std::size_t k = 0; k < plan->m; ++k) x[k] *= std::conj(plan->chirp_fft[k]);
  }
  fft_pow2(x, +1);
  const double inv_m = 1.0 / static_cast<double>(plan->m);
  for (std::size_t k = 0; k < n; ++k) {
    const Cpx c = sign < 0 ? plan->chirp[k] : std::conj(plan->chirp[k]);
    a[k] = x[k] * c * inv_m;
  }
}

}  // namespace detail

// Unscaled forward DFT: X[k] = sum_n x[n] exp(-i 2 pi k n / N).
inline void dft_inplace(CVec& a) {
  if (is_pow2(a.size())) detail::fft_pow2(a, -1);
  else detail::fft_bluestein(a, -1);
}

// Unscaled inverse DFT (no 1/N).
inline void idft_inplace(CVec& a) {
  if (is_pow2(a.size())) detail::fft_pow2(a, +1);
  else detail::fft_bluestein(a, +1);
}

inline CVec dft_unitary(CVec x) {
  dft_inplace(x);
  const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
  for (auto& v : x) v *= s;
  return x;
}

inline CVec idft_unitary(CVec x) {
  idft_inplace(x);
  const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
  for (auto& v : x) v *= s;
  return x;
}

}  // namespace fhc
