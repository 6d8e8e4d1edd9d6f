#pragma once
// Gray-mapped square QAM with unit average power. Per symbol the first
// log2(L) bits select the I level and the remaining log2(L) bits the Q level
// (L = sqrt(M)); each axis uses a binary-reflected Gray code over the PAM
// levels {-(L-1), ..., -1, +1, ..., +(L-1)}.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fhc/types.hpp"

namespace fhc {

inline bool qam_order_supported(int mod_order) {
  return mod_order == 4 || mod_order == 16 || mod_order == 64;
}

inline int qam_bits_per_symbol(int mod_order) {
  switch (mod_order) {
    case 4: return 2;
    case 16: return 4;
    case 64: return 6;
    default: throw ConfigError("unsupported QAM order " + std::to_string(mod_order));
  }
}

namespace detail {

inline unsigned gray_to_binary(unsigned g) {
  unsigned b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

// PAM levels for one axis, unit-average-power normalized jointly with the
// other axis: E|c|^2 = 2 (L^2 - 1) / 3 * step^2 = 1.
inline std::vector<double> pam_levels(int mod_order) {
  const int l = static_cast<int>(std::lround(std::sqrt(double(mod_order))));
  const double norm = std::sqrt(2.0 * (double(l) * l - 1.0) / 3.0);
  std::vector<double> levels(l);
  for (int i = 0; i < l; ++i) levels[i] = (2 * i + 1 - l) / norm;
  return levels;
}

}  // namespace detail

// Maps a bit sequence onto QAM symbols. |bits| must be a multiple of
// log2(mod_order).
inline CVec qam_map(const std::vector<std::uint8_t>& bits, int mod_order) {
  const int bps = qam_bits_per_symbol(mod_order);
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw ShapeError("bit count not a multiple of bits-per-symbol");
  const int half = bps / 2;
  const auto levels = detail::pam_levels(mod_order);
  CVec out(bits.size() / static_cast<std::size_t>(bps));
  for (std::size_t s = 0; s < out.size(); ++s) {
    unsigned gi = 0, gq = 0;
    for (int b = 0; b < half; ++b) gi = (gi << 1) | bits[s * bps + b];
    for (int b = 0; b < half; ++b) gq = (gq << 1) | bits[s * bps + half + b];
    out[s] = Cpx(levels[detail::gray_to_binary(gi)],
                 levels[detail::gray_to_binary(gq)]);
  }
  return out;
}

}  // namespace fhc
