#pragma once
// Learned factorized probability model over integer-rounded latents, one
// scalar CDF per latent channel. Construction: four composed stages with
// inner width 4; stage k applies x -> g_k(H_k x + b_k) with
// g_k(y) = y + a_k .* tanh(y), and the last stage applies the logistic
// squashing. H_k is kept elementwise positive via softplus and a_k > -1 via
// tanh, which guarantees a monotone CDF and hence valid PMFs at every
// checkpoint, trained or not.

#include <cmath>

#include "fhc/nn.hpp"
#include "fhc/range_coder.hpp"

namespace fhc {

inline constexpr int kCdfStages = 4;
inline constexpr int kCdfWidth = 4;
inline constexpr double kDensityFloor = 0x1.0p-30;

struct CdfChannelWeights {
  // Raw (unconstrained) parameters; effective H = softplus(H_raw),
  // a = tanh(a_raw).
  nn::Mat h_raw[kCdfStages];  // 4x1, 4x4, 4x4, 1x4
  nn::Mat b[kCdfStages];      // 4,4,4,1
  nn::Mat a_raw[kCdfStages - 1];

  void init(Rng& rng) {
    const int dims[kCdfStages + 1] = {1, kCdfWidth, kCdfWidth, kCdfWidth, 1};
    for (int k = 0; k < kCdfStages; ++k) {
      const double lim = 1.0 / std::sqrt(static_cast<double>(dims[k]));
      h_raw[k] = nn::random_uniform(dims[k + 1], dims[k], lim, rng);
      b[k] = nn::random_uniform(dims[k + 1], 1, lim, rng);
      if (k < kCdfStages - 1) a_raw[k] = nn::random_uniform(dims[k + 1], 1, lim, rng);
    }
  }
};

struct CdfChannelGrads {
  nn::Mat h_raw[kCdfStages];
  nn::Mat b[kCdfStages];
  nn::Mat a_raw[kCdfStages - 1];
  void match(const CdfChannelWeights& w) {
    for (int k = 0; k < kCdfStages; ++k) {
      h_raw[k] = nn::Mat(w.h_raw[k].rows, w.h_raw[k].cols);
      b[k] = nn::Mat(w.b[k].rows, w.b[k].cols);
      if (k < kCdfStages - 1) a_raw[k] = nn::Mat(w.a_raw[k].rows, w.a_raw[k].cols);
    }
  }
};

namespace detail {
inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

// Forward cache for one CDF evaluation.
struct CdfTape {
  double v[kCdfStages + 1][kCdfWidth] = {};  // stage inputs/outputs
  double y[kCdfStages][kCdfWidth] = {};      // pre-activations
  double out = 0.0;
};

inline double cdf_forward(const CdfChannelWeights& w, double x, CdfTape& tape) {
  const int dims[kCdfStages + 1] = {1, kCdfWidth, kCdfWidth, kCdfWidth, 1};
  tape.v[0][0] = x;
  for (int k = 0; k < kCdfStages; ++k) {
    for (int r = 0; r < dims[k + 1]; ++r) {
      double acc = w.b[k].at(r, 0);
      for (int c = 0; c < dims[k]; ++c)
        acc += detail::softplus(w.h_raw[k].at(r, c)) * tape.v[k][c];
      tape.y[k][r] = acc;
      if (k < kCdfStages - 1) {
        const double a = std::tanh(w.a_raw[k].at(r, 0));
        tape.v[k + 1][r] = acc + a * std::tanh(acc);
      }
    }
  }
  // Clamp away from the representable endpoints so the output stays strictly
  // inside (0,1) even when the logistic saturates.
  const double s = nn::sigmoid(tape.y[kCdfStages - 1][0]);
  tape.out = std::min(std::max(s, 1e-300), 1.0 - 1e-16);
  return tape.out;
}

// Backpropagates d(loss)/d(cdf output); accumulates parameter gradients and
// returns d(loss)/dx.
inline double cdf_backward(const CdfChannelWeights& w, const CdfTape& tape,
                           double d_out, CdfChannelGrads& g) {
  const int dims[kCdfStages + 1] = {1, kCdfWidth, kCdfWidth, kCdfWidth, 1};
  double dv[kCdfWidth] = {};
  // Final sigmoid stage.
  {
    const double s = tape.out;
    const double dy = d_out * s * (1.0 - s);
    const int k = kCdfStages - 1;
    for (int c = 0; c < dims[k]; ++c) {
      const double h = detail::softplus(w.h_raw[k].at(0, c));
      g.h_raw[k].at(0, c) += dy * tape.v[k][c] * detail::softplus_grad(w.h_raw[k].at(0, c));
      dv[c] = dy * h;
    }
    g.b[k].at(0, 0) += dy;
  }
  for (int k = kCdfStages - 2; k >= 0; --k) {
    double dnext[kCdfWidth] = {};
    for (int r = 0; r < dims[k + 1]; ++r) {
      const double th = std::tanh(tape.y[k][r]);
      const double a = std::tanh(w.a_raw[k].at(r, 0));
      const double dy = dv[r] * (1.0 + a * (1.0 - th * th));
      g.a_raw[k].at(r, 0) += dv[r] * th * (1.0 - a * a);
      g.b[k].at(r, 0) += dy;
      for (int c = 0; c < dims[k]; ++c) {
        const double hraw = w.h_raw[k].at(r, c);
        g.h_raw[k].at(r, c) += dy * tape.v[k][c] * detail::softplus_grad(hraw);
        dnext[c] += dy * detail::softplus(hraw);
      }
    }
    for (int c = 0; c < kCdfWidth; ++c) dv[c] = dnext[c];
  }
  return dv[0];
}

inline double cdf_value(const CdfChannelWeights& w, double x) {
  CdfTape tape;
  return cdf_forward(w, x, tape);
}

// Effective (reparameterized) stage weights, computed once per batch of CDF
// evaluations: the softplus/tanh transforms dominate the per-element cost
// otherwise.
struct CdfChannelEval {
  nn::Mat h[kCdfStages];        // softplus(h_raw)
  nn::Mat h_gs[kCdfStages];     // d softplus / d h_raw
  RVec a[kCdfStages - 1];       // tanh(a_raw)
  RVec a_gs[kCdfStages - 1];    // 1 - a^2

  explicit CdfChannelEval(const CdfChannelWeights& w) {
    for (int k = 0; k < kCdfStages; ++k) {
      h[k] = nn::Mat(w.h_raw[k].rows, w.h_raw[k].cols);
      h_gs[k] = nn::Mat(w.h_raw[k].rows, w.h_raw[k].cols);
      for (std::size_t i = 0; i < h[k].size(); ++i) {
        h[k].a[i] = detail::softplus(w.h_raw[k].a[i]);
        h_gs[k].a[i] = detail::softplus_grad(w.h_raw[k].a[i]);
      }
      if (k < kCdfStages - 1) {
        a[k].resize(w.a_raw[k].size());
        a_gs[k].resize(w.a_raw[k].size());
        for (std::size_t i = 0; i < a[k].size(); ++i) {
          a[k][i] = std::tanh(w.a_raw[k].a[i]);
          a_gs[k][i] = 1.0 - a[k][i] * a[k][i];
        }
      }
    }
  }
};

inline double cdf_forward_cached(const CdfChannelWeights& w, const CdfChannelEval& e,
                                 double x, CdfTape& tape) {
  const int dims[kCdfStages + 1] = {1, kCdfWidth, kCdfWidth, kCdfWidth, 1};
  tape.v[0][0] = x;
  for (int k = 0; k < kCdfStages; ++k) {
    for (int r = 0; r < dims[k + 1]; ++r) {
      double acc = w.b[k].at(r, 0);
      for (int c = 0; c < dims[k]; ++c) acc += e.h[k].at(r, c) * tape.v[k][c];
      tape.y[k][r] = acc;
      if (k < kCdfStages - 1)
        tape.v[k + 1][r] = acc + e.a[k][static_cast<std::size_t>(r)] * std::tanh(acc);
    }
  }
  const double sg = nn::sigmoid(tape.y[kCdfStages - 1][0]);
  tape.out = std::min(std::max(sg, 1e-300), 1.0 - 1e-16);
  return tape.out;
}

inline double cdf_backward_cached(const CdfChannelWeights&, const CdfChannelEval& e,
                                  const CdfTape& tape, double d_out,
                                  CdfChannelGrads& g) {
  const int dims[kCdfStages + 1] = {1, kCdfWidth, kCdfWidth, kCdfWidth, 1};
  double dv[kCdfWidth] = {};
  {
    const double sg = tape.out;
    const double dy = d_out * sg * (1.0 - sg);
    const int k = kCdfStages - 1;
    for (int c = 0; c < dims[k]; ++c) {
      g.h_raw[k].at(0, c) += dy * tape.v[k][c] * e.h_gs[k].at(0, c);
      dv[c] = dy * e.h[k].at(0, c);
    }
    g.b[k].at(0, 0) += dy;
  }
  for (int k = kCdfStages - 2; k >= 0; --k) {
    double dnext[kCdfWidth] = {};
    for (int r = 0; r < dims[k + 1]; ++r) {
      const double th = std::tanh(tape.y[k][r]);
      const double a = e.a[k][static_cast<std::size_t>(r)];
      const double dy = dv[r] * (1.0 + a * (1.0 - th * th));
      g.a_raw[k].at(r, 0) += dv[r] * th * e.a_gs[k][static_cast<std::size_t>(r)];
      g.b[k].at(r, 0) += dy;
      for (int c = 0; c < dims[k]; ++c) {
        g.h_raw[k].at(r, c) += dy * tape.v[k][c] * e.h_gs[k].at(r, c);
        dnext[c] += dy * e.h[k].at(r, c);
      }
    }
    for (int c = 0; c < kCdfWidth; ++c) dv[c] = dnext[c];
  }
  return dv[0];
}

struct FactorizedModel {
  std::vector<CdfChannelWeights> channels;

  void init(int v, Rng& rng) {
    channels.resize(static_cast<std::size_t>(v));
    for (auto& c : channels) c.init(rng);
  }
  int num_channels() const { return static_cast<int>(channels.size()); }
};

struct FactorizedGrads {
  std::vector<CdfChannelGrads> channels;
  void match(const FactorizedModel& m) {
    channels.resize(m.channels.size());
    for (std::size_t i = 0; i < m.channels.size(); ++i)
      channels[i].match(m.channels[i]);
  }
};

inline void collect(CdfChannelWeights& w, const std::string& p,
                    std::vector<nn::ParamRef>& out) {
  for (int k = 0; k < kCdfStages; ++k) {
    out.push_back({p + ".h" + std::to_string(k), &w.h_raw[k]});
    out.push_back({p + ".b" + std::to_string(k), &w.b[k]});
    if (k < kCdfStages - 1) out.push_back({p + ".a" + std::to_string(k), &w.a_raw[k]});
  }
}
inline void collect(CdfChannelGrads& w, const std::string& p,
                    std::vector<nn::ParamRef>& out) {
  for (int k = 0; k < kCdfStages; ++k) {
    out.push_back({p + ".h" + std::to_string(k), &w.h_raw[k]});
    out.push_back({p + ".b" + std::to_string(k), &w.b[k]});
    if (k < kCdfStages - 1) out.push_back({p + ".a" + std::to_string(k), &w.a_raw[k]});
  }
}
inline void collect(FactorizedModel& m, const std::string& p,
                    std::vector<nn::ParamRef>& out) {
  for (std::size_t i = 0; i < m.channels.size(); ++i)
    collect(m.channels[i], p + ".ch" + std::to_string(i), out);
}
inline void collect(FactorizedGrads& m, const std::string& p,
                    std::vector<nn::ParamRef>& out) {
  for (std::size_t i = 0; i < m.channels.size(); ++i)
    collect(m.channels[i], p + ".ch" + std::to_string(i), out);
}

// Probability of the integer symbol under the channel model.
inline double pmf(const FactorizedModel& m, int channel, double value) {
  const auto& w = m.channels[static_cast<std::size_t>(channel)];
  return cdf_value(w, value + 0.5) - cdf_value(w, value - 0.5);
}

// ---------------------------------------------------------------------------
// Rate estimate (average bits per latent element) over noise-relaxed latents.
// Z is time-major T x V; the density of z~ under the model is the CDF
// difference across the unit interval around it. Underflows are floored at
// 2^-30 before the log and counted.

struct RateResult {
  double bits_per_element = 0.0;
  long floored = 0;
};

inline RateResult rate_estimate(const FactorizedModel& m, const nn::Mat& z) {
  RateResult res;
  const int v = m.num_channels();
  if (z.cols != v) throw ShapeError("latent width does not match channel count");
  double bits = 0.0;
  std::vector<CdfChannelEval> evals;
  evals.reserve(m.channels.size());
  for (const auto& w : m.channels) evals.emplace_back(w);
  CdfTape tape;
  for (int t = 0; t < z.rows; ++t)
    for (int c = 0; c < v; ++c) {
      const auto& w = m.channels[static_cast<std::size_t>(c)];
      const auto& e = evals[static_cast<std::size_t>(c)];
      double p = cdf_forward_cached(w, e, z.at(t, c) + 0.5, tape) -
                 cdf_forward_cached(w, e, z.at(t, c) - 0.5, tape);
      if (p < kDensityFloor) {
        p = kDensityFloor;
        ++res.floored;
      }
      bits -= std::log2(p);
    }
  res.bits_per_element = bits / static_cast<double>(z.size());
  return res;
}

// Same estimate with gradients: accumulates model parameter gradients scaled
// by `weight` and writes d(rate)/dZ into gz (+=).
inline RateResult rate_estimate_grad(const FactorizedModel& m, const nn::Mat& z,
                                     FactorizedGrads& g, nn::Mat& gz,
                                     double weight = 1.0) {
  RateResult res;
  const int v = m.num_channels();
  if (z.cols != v) throw ShapeError("latent width does not match channel count");
  if (!gz.same_shape(z)) throw ShapeError("gradient buffer shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(z.size());
  const double ln2 = std::log(2.0);
  double bits = 0.0;
  std::vector<CdfChannelEval> evals;
  evals.reserve(m.channels.size());
  for (const auto& w : m.channels) evals.emplace_back(w);
  CdfTape hi_tape, lo_tape;
  for (int t = 0; t < z.rows; ++t)
    for (int c = 0; c < v; ++c) {
      const auto& w = m.channels[static_cast<std::size_t>(c)];
      const auto& e = evals[static_cast<std::size_t>(c)];
      auto& gw = g.channels[static_cast<std::size_t>(c)];
      const double hi = cdf_forward_cached(w, e, z.at(t, c) + 0.5, hi_tape);
      const double lo = cdf_forward_cached(w, e, z.at(t, c) - 0.5, lo_tape);
      double p = hi - lo;
      bits -= std::log2(std::max(p, kDensityFloor));
      if (p < kDensityFloor) {
        ++res.floored;
        continue;  // flat region: no gradient through the floored density
      }
      const double dp = -weight * inv_n / (ln2 * p);
      const double dhi = cdf_backward_cached(w, e, hi_tape, dp, gw);
      const double dlo = cdf_backward_cached(w, e, lo_tape, -dp, gw);
      gz.at(t, c) += dhi + dlo;
    }
  res.bits_per_element = bits * inv_n;
  return res;
}

// ---------------------------------------------------------------------------
// Lookup table: per-channel PMF over the observed integer support, widened by
// two, tails folded into the edges, floored at 2^-16, renormalized, then
// quantized to 16-bit cumulative frequencies for the range coder.

struct EntropyTable {
  int lo = 0;
  int hi = 0;
  RVec probs;
  std::vector<std::uint32_t> freq;
  std::vector<std::uint32_t> cum;

  std::size_t width() const { return probs.size(); }
};

inline EntropyTable build_channel_table(const CdfChannelWeights& w, int obs_min,
                                        int obs_max) {
  if (obs_min > obs_max) throw StatsError("no latents observed for table support");
  EntropyTable t;
  t.lo = obs_min - 2;
  t.hi = obs_max + 2;
  const std::size_t n = static_cast<std::size_t>(t.hi - t.lo + 1);
  t.probs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = static_cast<double>(t.lo + static_cast<int>(j));
    t.probs[j] = cdf_value(w, v + 0.5) - cdf_value(w, v - 0.5);
  }
  // Fold tail mass into the edge entries, then floor and renormalize.
  t.probs.front() += cdf_value(w, static_cast<double>(t.lo) - 0.5);
  t.probs.back() += 1.0 - cdf_value(w, static_cast<double>(t.hi) + 0.5);
  const double floor_p = 1.0 / static_cast<double>(kFreqTotal);
  double sum = 0.0;
  for (auto& p : t.probs) {
    p = std::max(p, floor_p);
    sum += p;
  }
  for (auto& p : t.probs) p /= sum;

  t.freq.resize(n);
  std::uint64_t total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    t.freq[j] = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(std::llround(t.probs[j] * kFreqTotal)));
    total += t.freq[j];
  }
  // Deterministic fixup: walk from the largest entries.
  while (total != kFreqTotal) {
    std::size_t big = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (t.freq[j] > t.freq[big]) big = j;
    if (total > kFreqTotal) {
      --t.freq[big];
      --total;
    } else {
      ++t.freq[big];
      ++total;
    }
  }
  t.cum.assign(n + 1, 0);
  for (std::size_t j = 0; j < n; ++j) t.cum[j + 1] = t.cum[j] + t.freq[j];
  return t;
}

// Builds per-channel tables from the rounded training latents (time-major
// T x V rows per frame, any number of frames).
inline std::vector<EntropyTable> build_tables(const FactorizedModel& m,
                                              const std::vector<nn::Mat>& latents) {
  const int v = m.num_channels();
  std::vector<int> mn(static_cast<std::size_t>(v), std::numeric_limits<int>::max());
  std::vector<int> mx(static_cast<std::size_t>(v), std::numeric_limits<int>::min());
  for (const auto& z : latents) {
    if (z.cols != v) throw ShapeError("latent width mismatch");
    for (int t = 0; t < z.rows; ++t)
      for (int c = 0; c < v; ++c) {
        const int q = static_cast<int>(std::floor(z.at(t, c) + 0.5));
        mn[static_cast<std::size_t>(c)] = std::min(mn[static_cast<std::size_t>(c)], q);
        mx[static_cast<std::size_t>(c)] = std::max(mx[static_cast<std::size_t>(c)], q);
      }
  }
  std::vector<EntropyTable> tables;
  tables.reserve(static_cast<std::size_t>(v));
  for (int c = 0; c < v; ++c) {
    if (mn[static_cast<std::size_t>(c)] > mx[static_cast<std::size_t>(c)])
      throw StatsError("empty latent set");
    tables.push_back(build_channel_table(m.channels[static_cast<std::size_t>(c)],
                                         mn[static_cast<std::size_t>(c)],
                                         mx[static_cast<std::size_t>(c)]));
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Arithmetic coding of integer symbols against a table. Out-of-support
// symbols are clamped to the nearest edge; the count is returned so callers
// can log it.

inline std::size_t ac_encode_channel(const std::vector<int>& symbols,
                                     const EntropyTable& t, RangeEncoder& enc) {
  std::size_t clamped = 0;
  for (int s : symbols) {
    int idx = s - t.lo;
    if (idx < 0) {
      idx = 0;
      ++clamped;
    } else if (idx > t.hi - t.lo) {
      idx = t.hi - t.lo;
      ++clamped;
    }
    enc.encode(t.cum[static_cast<std::size_t>(idx)], t.freq[static_cast<std::size_t>(idx)]);
  }
  return clamped;
}

inline std::vector<int> ac_decode_channel(RangeDecoder& dec, const EntropyTable& t,
                                          std::size_t count) {
  std::vector<int> out(count);
  for (auto& s : out) {
    const std::uint32_t target = dec.decode_target();
    const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), target);
    const auto idx = static_cast<std::size_t>(it - t.cum.begin()) - 1;
    if (idx >= t.freq.size()) throw StreamError("decoded symbol out of table range");
    dec.consume(t.cum[idx], t.freq[idx]);
    s = t.lo + static_cast<int>(idx);
  }
  return out;
}

// Elementwise round-half-up, matching z_hat = floor(z + 1/2).
inline nn::Mat round_latent(const nn::Mat& z) {
  nn::Mat out(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i) out.a[i] = std::floor(z.a[i] + 0.5);
  return out;
}

}  // namespace fhc
