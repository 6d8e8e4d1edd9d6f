#pragma once
// Rational-rate resampling: decimation (up-K, low-pass, down-M) at the
// encoder and the mirrored interpolation (up-M, low-pass, down-K) at the
// decoder. Convolution is circular over the frame, which makes the
// (taps-1)/2 group delay removable exactly and avoids edge transients on the
// frame-periodic OFDM symbols. The filter is a Kaiser-windowed sinc.

#include <cmath>

#include "fhc/types.hpp"

namespace fhc {

struct ResamplerSpec {
  int k = 5;                 // upsample factor at the encoder
  int m = 8;                 // downsample factor at the encoder, m > k
  int taps = 161;            // odd FIR length
  double kaiser_beta = 8.0;
  double gain = 5.0;         // decimation filter gain, = k
  bool bypass = false;       // diagnostics: identity mapping
};

inline ResamplerSpec make_resampler_spec(int k, int m, int taps = 161,
                                         double kaiser_beta = 8.0,
                                         bool bypass = false) {
  if (k < 1 || m < 1) throw ConfigError("resampler factors must be positive");
  if (!bypass && !(m > k) && !(k == 1 && m == 1))
    throw ConfigError("resampler requires m > k (or k = m = 1 diagnostics)");
  if (taps < 1 || taps % 2 == 0) throw ConfigError("taps must be odd and positive");
  if (kaiser_beta < 0.0) throw ConfigError("kaiser_beta must be >= 0");
  ResamplerSpec s;
  s.k = k;
  s.m = m;
  s.taps = taps;
  s.kaiser_beta = kaiser_beta;
  s.gain = static_cast<double>(k);
  s.bypass = bypass;
  return s;
}

namespace detail {

inline double bessel_i0(double x) {
  // Power series; converges quickly for the beta range used here.
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int i = 1; i < 64; ++i) {
    term *= q / (static_cast<double>(i) * i);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

// Kaiser-windowed sinc, cutoff pi/max(k,m) at the upsampled rate.
inline RVec design_lowpass(const ResamplerSpec& spec, double gain) {
  const int t = spec.taps;
  const int d = (t - 1) / 2;
  const double wc = M_PI / static_cast<double>(std::max(spec.k, spec.m));
  const double i0b = bessel_i0(spec.kaiser_beta);
  RVec h(static_cast<std::size_t>(t));
  for (int n = 0; n < t; ++n) {
    const double x = static_cast<double>(n - d);
    const double sinc = n == d ? wc / M_PI : std::sin(wc * x) / (M_PI * x);
    const double r = x / static_cast<double>(d);
    const double win = bessel_i0(spec.kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<std::size_t>(n)] = gain * sinc * win;
  }
  return h;
}

// Core rational resampler: zero-insert by `up`, circular convolution with h
// (group delay pre-compensated), keep every `down`-th sample.
inline CVec resample_circular(const CVec& x, const RVec& h, int up, int down) {
  const std::size_t n = x.size();
  const std::size_t l = n * static_cast<std::size_t>(up);
  if (l % static_cast<std::size_t>(down) != 0)
    throw ConfigError("resampler output length is not an integer");
  const std::size_t n_out = l / static_cast<std::size_t>(down);
  const long taps = static_cast<long>(h.size());
  const long delay = (taps - 1) / 2;
  CVec y(n_out, Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < n_out; ++i) {
    // Output sample i of the aligned stream sits at upsampled index
    // i*down + delay before alignment. Only inputs at multiples of `up`
    // contribute.
    const long base = static_cast<long>(i) * down + delay;
    long t0 = base % up;
    Cpx acc(0.0, 0.0);
    for (long t = t0; t < taps; t += up) {
      long q = (base - t) / up;           // input index, may wrap
      q %= static_cast<long>(n);
      if (q < 0) q += static_cast<long>(n);
      acc += h[static_cast<std::size_t>(t)] * x[static_cast<std::size_t>(q)];
    }
    y[i] = acc;
  }
  return y;
}

// Exact transpose of resample_circular, used to backpropagate through the
// decoder-side interpolation without tracing the FIR graph.
inline CVec resample_circular_adjoint(const CVec& g, const RVec& h, int up, int down,
                                      std::size_t n_in) {
  const std::size_t l = n_in * static_cast<std::size_t>(up);
  if (l % static_cast<std::size_t>(down) != 0)
    throw ConfigError("resampler output length is not an integer");
  const std::size_t n_out = l / static_cast<std::size_t>(down);
  if (g.size() != n_out) throw ShapeError("adjoint input length mismatch");
  const long taps = static_cast<long>(h.size());
  const long delay = (taps - 1) / 2;
  CVec gx(n_in, Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < n_out; ++i) {
    const long base = static_cast<long>(i) * down + delay;
    long t0 = base % up;
    for (long t = t0; t < taps; t += up) {
      long q = (base - t) / up;
      q %= static_cast<long>(n_in);
      if (q < 0) q += static_cast<long>(n_in);
      gx[static_cast<std::size_t>(q)] += h[static_cast<std::size_t>(t)] * g[i];
    }
  }
  return gx;
}

}  // namespace detail

// Encoder-side decimation: length N -> N*k/m.
inline CVec decimate(const CVec& x, const ResamplerSpec& spec) {
  if (spec.bypass) return x;
  const RVec h = detail::design_lowpass(spec, spec.gain);
  return detail::resample_circular(x, h, spec.k, spec.m);
}

// Decoder-side interpolation: length N' -> N'*m/k. Mirror of decimate with
// the roles of k and m swapped and gain m.
inline CVec interpolate(const CVec& x, const ResamplerSpec& spec) {
  if (spec.bypass) return x;
  const RVec h = detail::design_lowpass(spec, static_cast<double>(spec.m));
  return detail::resample_circular(x, h, spec.m, spec.k);
}

// Adjoint of interpolate: maps a gradient w.r.t. the interpolated signal back
// to a gradient w.r.t. the decimated-domain signal.
inline CVec interpolate_adjoint(const CVec& g, const ResamplerSpec& spec,
                                std::size_t n_in) {
  if (spec.bypass) return g;
  const RVec h = detail::design_lowpass(spec, static_cast<double>(spec.m));
  return detail::resample_circular_adjoint(g, h, spec.m, spec.k, n_in);
}

inline std::size_t decimated_length(std::size_t n, const ResamplerSpec& spec) {
  if (spec.bypass) return n;
  const std::size_t l = n * static_cast<std::size_t>(spec.k);
  if (l % static_cast<std::size_t>(spec.m) != 0)
    throw ConfigError("frame length not divisible for decimation");
  return l / static_cast<std::size_t>(spec.m);
}

}  // namespace fhc
