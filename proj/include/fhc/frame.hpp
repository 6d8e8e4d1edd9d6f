#pragma once
// Baseband frame generation and metrics: OFDMA downlink frames, SC-FDMA
// uplink frames with cyclic prefix, the multipath fading channel, and EVM.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "fhc/fft.hpp"
#include "fhc/qam.hpp"
#include "fhc/rng.hpp"
#include "fhc/types.hpp"

namespace fhc {

enum class Scenario : std::uint8_t { downlink = 0, uplink = 1 };
enum class Domain : std::uint8_t { time = 0, frequency = 1 };

struct FrameSpec {
  Scenario scenario = Scenario::downlink;
  int n_fft = 512;
  int n_sym = 224;
  int n_cp = 64;
  int mod_order = 64;
  std::vector<int> occupied;  // FFT bin indices, ascending centered frequency

  int bits_per_frame() const { return n_sym * qam_bits_per_symbol(mod_order); }
  // Frame length entering the compressor: downlink is CP-less.
  int compress_len() const {
    return scenario == Scenario::downlink ? n_fft : n_fft + n_cp;
  }
};

// Centered contiguous occupied block in DC-centered ordering, mapped to FFT
// bin indices mod n_fft.
inline std::vector<int> centered_occupied_set(int n_fft, int n_sym) {
  std::vector<int> occ(static_cast<std::size_t>(n_sym));
  for (int i = 0; i < n_sym; ++i) {
    const int centered = i - n_sym / 2;
    occ[static_cast<std::size_t>(i)] = ((centered % n_fft) + n_fft) % n_fft;
  }
  return occ;
}

inline FrameSpec make_frame_spec(Scenario scenario, int n_fft, int n_sym,
                                 int n_cp, int mod_order) {
  if (n_fft <= 0 || n_sym <= 0) throw ConfigError("n_fft and n_sym must be positive");
  if (n_sym > n_fft) throw ConfigError("n_sym exceeds n_fft");
  if (n_cp < 0 || n_cp >= n_fft) throw ConfigError("n_cp must be in [0, n_fft)");
  if (!qam_order_supported(mod_order))
    throw ConfigError("unsupported mod_order " + std::to_string(mod_order));
  FrameSpec spec;
  spec.scenario = scenario;
  spec.n_fft = n_fft;
  spec.n_sym = n_sym;
  spec.n_cp = n_cp;
  spec.mod_order = mod_order;
  spec.occupied = centered_occupied_set(n_fft, n_sym);
  return spec;
}

struct ComplexFrame {
  CVec samples;
  std::shared_ptr<const FrameSpec> spec;
  Domain domain = Domain::time;
};

// Downlink: QAM symbols assigned directly to the occupied OFDMA subcarriers,
// guard band zero, unitary IDFT. The CP is not appended; it is redundant on
// the noiseless BBU side and is re-inserted after decompression.
inline ComplexFrame build_downlink_frame(const std::vector<std::uint8_t>& bits,
                                         std::shared_ptr<const FrameSpec> spec) {
  if (spec->scenario != Scenario::downlink)
    throw ConfigError("downlink builder called with non-downlink spec");
  if (static_cast<int>(bits.size()) != spec->bits_per_frame())
    throw ShapeError("bit count does not match n_sym * log2(mod_order)");
  const CVec symbols = qam_map(bits, spec->mod_order);
  CVec spectrum(static_cast<std::size_t>(spec->n_fft), Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < symbols.size(); ++i)
    spectrum[static_cast<std::size_t>(spec->occupied[i])] = symbols[i];
  ComplexFrame f;
  f.samples = idft_unitary(std::move(spectrum));
  f.spec = std::move(spec);
  f.domain = Domain::time;
  return f;
}

// Uplink SC-FDMA transmit frame: n_sym-point DFT spreading, mapping onto the
// occupied subcarriers, n_fft-point IDFT, then a cyclic prefix copied from
// the tail.
inline ComplexFrame build_uplink_tx_frame(const std::vector<std::uint8_t>& bits,
                                          std::shared_ptr<const FrameSpec> spec) {
  if (spec->scenario != Scenario::uplink)
    throw ConfigError("uplink builder called with non-uplink spec");
  if (static_cast<int>(bits.size()) != spec->bits_per_frame())
    throw ShapeError("bit count does not match n_sym * log2(mod_order)");
  CVec spread = dft_unitary(qam_map(bits, spec->mod_order));
  CVec spectrum(static_cast<std::size_t>(spec->n_fft), Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < spread.size(); ++i)
    spectrum[static_cast<std::size_t>(spec->occupied[i])] = spread[i];
  CVec body = idft_unitary(std::move(spectrum));
  CVec out;
  out.reserve(body.size() + static_cast<std::size_t>(spec->n_cp));
  out.insert(out.end(), body.end() - spec->n_cp, body.end());
  out.insert(out.end(), body.begin(), body.end());
  ComplexFrame f;
  f.samples = std::move(out);
  f.spec = std::move(spec);
  f.domain = Domain::time;
  return f;
}

struct ChannelSpec {
  int n_taps = 7;
  double snr_db = 5.0;
  std::uint64_t seed = 0;
  bool noise_only = false;              // diagnostic: emit only the noise
  std::optional<CVec> fixed_taps;       // test hook overriding the tap draw
};

// Multipath fading plus AWGN. Taps are i.i.d. CN(0,1) (not power-normalized);
// the noise variance is set against the faded signal's empirical power so the
// realized SNR matches snr_db for every tap draw.
inline ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelSpec& ch,
                                  Rng& rng) {
  if (frame.domain != Domain::time) throw ShapeError("channel expects a time-domain frame");
  if (ch.n_taps < 1) throw ConfigError("n_taps must be >= 1");
  CVec taps;
  if (ch.fixed_taps) {
    taps = *ch.fixed_taps;
  } else {
    taps.resize(static_cast<std::size_t>(ch.n_taps));
    for (auto& t : taps) t = rng.cnormal(1.0);
  }
  const std::size_t n = frame.samples.size();
  CVec faded(n, Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    Cpx acc(0.0, 0.0);
    const std::size_t tmax = std::min(taps.size(), i + 1);
    for (std::size_t t = 0; t < tmax; ++t) acc += taps[t] * frame.samples[i - t];
    faded[i] = acc;
  }
  double sig_power = 0.0;
  for (const auto& v : faded) sig_power += std::norm(v);
  sig_power /= static_cast<double>(n);
  double noise_var = 0.0;
  if (std::isfinite(ch.snr_db))
    noise_var = sig_power * std::pow(10.0, -ch.snr_db / 10.0);
  ComplexFrame out;
  out.spec = frame.spec;
  out.domain = Domain::time;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Cpx noise = noise_var > 0.0 ? rng.cnormal(noise_var) : Cpx(0.0, 0.0);
    out.samples[i] = ch.noise_only ? noise : faded[i] + noise;
  }
  return out;
}

inline ComplexFrame apply_channel(const ComplexFrame& frame, const ChannelSpec& ch) {
  Rng rng(ch.seed);
  return apply_channel(frame, ch, rng);
}

// Strips the CP (when present for the scenario) and returns the unitary
// n_fft-point spectrum.
inline CVec frame_spectrum(const CVec& time_samples, const FrameSpec& spec) {
  const std::size_t n_fft = static_cast<std::size_t>(spec.n_fft);
  if (time_samples.size() == n_fft) {
    return dft_unitary(time_samples);
  }
  if (time_samples.size() == n_fft + static_cast<std::size_t>(spec.n_cp)) {
    CVec body(time_samples.begin() + spec.n_cp, time_samples.end());
    return dft_unitary(std::move(body));
  }
  throw ShapeError("frame length matches neither n_fft nor n_fft + n_cp");
}

struct EvmResult {
  double pct = 0.0;
  double db = 0.0;
};

// Sentinel dB value reported for an exact reconstruction.
inline constexpr double kEvmPerfectDb = 200.0;

// EVM restricted to the occupied subcarriers; both inputs frequency domain.
inline EvmResult evm(const CVec& original_fd, const CVec& reconstructed_fd,
                     const std::vector<int>& occupied) {
  if (original_fd.size() != reconstructed_fd.size())
    throw ShapeError("EVM inputs differ in length");
  double num = 0.0, den = 0.0;
  for (int k : occupied) {
    if (k < 0 || static_cast<std::size_t>(k) >= original_fd.size())
      throw ShapeError("occupied index out of range");
    num += std::norm(reconstructed_fd[static_cast<std::size_t>(k)] -
                     original_fd[static_cast<std::size_t>(k)]);
    den += std::norm(original_fd[static_cast<std::size_t>(k)]);
  }
  if (den <= 0.0) throw MetricError("zero reference energy on occupied subcarriers");
  EvmResult r;
  r.pct = std::sqrt(num / den) * 100.0;
  r.db = num <= 0.0 ? kEvmPerfectDb : 10.0 * std::log10(den / num);
  return r;
}

}  // namespace fhc
