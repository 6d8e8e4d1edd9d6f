#pragma once
// Shared scalar/vector types and the error taxonomy used across the library.

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhc {

using Cpx  = std::complex<double>;
using CVec = std::vector<Cpx>;
using RVec = std::vector<double>;

// Contract violations are thrown, never silently clamped, so tests can pin
// every error path.
struct ConfigError  : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError   : std::runtime_error { using std::runtime_error::runtime_error; };
struct StreamError  : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericError : std::runtime_error { using std::runtime_error::runtime_error; };
struct StatsError   : std::runtime_error { using std::runtime_error::runtime_error; };
struct MetricError  : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError      : std::runtime_error { using std::runtime_error::runtime_error; };

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (const auto& x : v) {
    if constexpr (std::is_same_v<T, Cpx>) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    } else {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

// 64-bit FNV-1a, used for config and parameter digests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = d[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace fhc
