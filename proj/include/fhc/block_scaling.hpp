#pragma once
// Per-block magnitude normalization with integer scaling factors of q_s bits.
// The factor is the ceiling of the block's max |Re|/|Im|, clamped to
// 2^q_s - 1 and floored at 1 so an all-zero block stays representable.

#include <cmath>

#include "fhc/bitio.hpp"
#include "fhc/types.hpp"

namespace fhc {

struct ScalingConfig {
  int n_s = 320;  // complex samples per block
  int q_s = 8;    // bits per factor
};

inline ScalingConfig make_scaling_config(int n_s, int q_s) {
  if (n_s < 1) throw ConfigError("n_s must be >= 1");
  if (q_s < 1 || q_s > 15) throw ConfigError("q_s must be in [1, 15]");
  return ScalingConfig{n_s, q_s};
}

inline std::size_t num_blocks(std::size_t n, const ScalingConfig& cfg) {
  return (n + static_cast<std::size_t>(cfg.n_s) - 1) / static_cast<std::size_t>(cfg.n_s);
}

struct ScaledFrame {
  CVec s;
  std::vector<std::uint32_t> t;
};

inline ScaledFrame compute_and_apply_scaling(const CVec& x, const ScalingConfig& cfg) {
  if (x.empty()) throw ShapeError("empty input");
  const std::uint32_t t_max = (1u << cfg.q_s) - 1u;
  ScaledFrame out;
  out.s.resize(x.size());
  out.t.resize(num_blocks(x.size(), cfg));
  for (std::size_t b = 0; b < out.t.size(); ++b) {
    const std::size_t lo = b * static_cast<std::size_t>(cfg.n_s);
    const std::size_t hi = std::min(x.size(), lo + static_cast<std::size_t>(cfg.n_s));
    double t_raw = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      t_raw = std::max({t_raw, std::abs(x[i].real()), std::abs(x[i].imag())});
    const double ceiled = std::ceil(t_raw);
    std::uint32_t t = ceiled > static_cast<double>(t_max)
                          ? t_max
                          : static_cast<std::uint32_t>(ceiled);
    if (t < 1u) t = 1u;
    out.t[b] = t;
    const double inv = 1.0 / static_cast<double>(t);
    for (std::size_t i = lo; i < hi; ++i) out.s[i] = x[i] * inv;
  }
  return out;
}

inline CVec rescale(const CVec& s_hat, const std::vector<std::uint32_t>& t,
                    const ScalingConfig& cfg) {
  if (t.size() != num_blocks(s_hat.size(), cfg))
    throw ShapeError("factor count does not match block count");
  CVec x(s_hat.size());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const std::size_t lo = b * static_cast<std::size_t>(cfg.n_s);
    const std::size_t hi = std::min(s_hat.size(), lo + static_cast<std::size_t>(cfg.n_s));
    const double f = static_cast<double>(t[b]);
    for (std::size_t i = lo; i < hi; ++i) x[i] = s_hat[i] * f;
  }
  return x;
}

// Wire format of the b_t segment: N_t big-endian q_s-bit fields, MSB first.
inline void pack_scaling_factors(const std::vector<std::uint32_t>& t,
                                 const ScalingConfig& cfg, BitWriter& bw) {
  for (const auto v : t) bw.put_bits(v, static_cast<unsigned>(cfg.q_s));
}

inline std::vector<std::uint32_t> unpack_scaling_factors(BitReader& br,
                                                         std::size_t n_t,
                                                         const ScalingConfig& cfg) {
  std::vector<std::uint32_t> t(n_t);
  for (auto& v : t)
    v = static_cast<std::uint32_t>(br.get_bits(static_cast<unsigned>(cfg.q_s)));
  return t;
}

}  // namespace fhc
