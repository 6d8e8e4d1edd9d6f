#pragma once
// End-to-end frame paths shared by training, evaluation and the CLI: frame
// preparation (decimate, scale, stack), per-scheme encode/decode to bit-exact
// streams, reconstruction back to the time domain, EVM evaluation over
// datasets, and the differentiable loss graphs.

#include "fhc/bitstream.hpp"
#include "fhc/dataset.hpp"
#include "fhc/models.hpp"
#include "fhc/statistics.hpp"

namespace fhc {

// ---------------------------------------------------------------------------
// Frame preparation

struct PreparedFrame {
  nn::Mat S;                        // N' x 2 time-major [Re, Im] stack
  std::vector<std::uint32_t> t;     // block scaling factors
  CVec x_f_occ;                     // reference spectrum on occupied bins
  std::size_t raw_len = 0;
};

inline CVec occupied_values(const CVec& spectrum, const FrameSpec& spec) {
  CVec v(spec.occupied.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = spectrum[static_cast<std::size_t>(spec.occupied[i])];
  return v;
}

inline PreparedFrame prepare_frame(const CVec& raw, const FrameSpec& spec,
                                   const ResamplerSpec& rs, const ScalingConfig& sc) {
  PreparedFrame p;
  p.raw_len = raw.size();
  const CVec dec = decimate(raw, rs);
  ScaledFrame sf = compute_and_apply_scaling(dec, sc);
  p.t = std::move(sf.t);
  const int n = static_cast<int>(sf.s.size());
  p.S = nn::Mat(n, 2);
  for (int j = 0; j < n; ++j) {
    p.S.at(j, 0) = sf.s[static_cast<std::size_t>(j)].real();
    p.S.at(j, 1) = sf.s[static_cast<std::size_t>(j)].imag();
  }
  p.x_f_occ = occupied_values(frame_spectrum(raw, spec), spec);
  return p;
}

// Scaled-domain s_hat -> time-domain reconstruction of the compressor input.
inline CVec reconstruct_time(const CVec& s_hat, const std::vector<std::uint32_t>& t,
                             const ScalingConfig& sc, const ResamplerSpec& rs) {
  return interpolate(rescale(s_hat, t, sc), rs);
}

inline CVec mat_to_cvec(const nn::Mat& s) {
  CVec v(static_cast<std::size_t>(s.rows));
  for (int j = 0; j < s.rows; ++j)
    v[static_cast<std::size_t>(j)] = Cpx(s.at(j, 0), s.at(j, 1));
  return v;
}

// Occupied-spectrum values of a reconstruction, given the decoder output.
inline CVec recon_spectrum_occ(const nn::Mat& s_hat, const PreparedFrame& p,
                               const FrameSpec& spec, const ResamplerSpec& rs,
                               const ScalingConfig& sc) {
  const CVec x_hat = reconstruct_time(mat_to_cvec(s_hat), p.t, sc, rs);
  return occupied_values(frame_spectrum(x_hat, spec), spec);
}

// Distortion D = ||x_f - x_hat_f||^2/||x_f||^2 on occupied bins, plus its
// gradient w.r.t. the decoder output matrix. The whole inverse pipeline
// (rescale, interpolate, CP drop, DFT, selection) is linear, so the gradient
// is its adjoint applied to the frequency-domain residual.
inline double distortion_and_grad(const nn::Mat& s_hat, const PreparedFrame& p,
                                  const FrameSpec& spec, const ResamplerSpec& rs,
                                  const ScalingConfig& sc, nn::Mat& g_s_hat,
                                  double weight) {
  const CVec s_hat_c = mat_to_cvec(s_hat);
  const CVec x_hat_scaled = rescale(s_hat_c, p.t, sc);
  const CVec x_hat = interpolate(x_hat_scaled, rs);
  const std::size_t n_fft = static_cast<std::size_t>(spec.n_fft);
  const std::size_t cp = x_hat.size() - n_fft;  // 0 for downlink
  CVec body(x_hat.begin() + static_cast<std::ptrdiff_t>(cp), x_hat.end());
  const CVec spectrum = dft_unitary(std::move(body));
  const CVec xhat_occ = occupied_values(spectrum, spec);

  CVec g_occ;
  const double d = normalized_se_grad(p.x_f_occ, xhat_occ, g_occ);

  // Adjoint chain: embed -> inverse unitary DFT -> CP zero-pad -> transpose
  // of interpolate -> rescale (diagonal) -> unstack.
  CVec g_spec(n_fft, Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < g_occ.size(); ++i)
    g_spec[static_cast<std::size_t>(spec.occupied[i])] = g_occ[i];
  CVec g_body = idft_unitary(std::move(g_spec));
  CVec g_time(x_hat.size(), Cpx(0.0, 0.0));
  for (std::size_t i = 0; i < n_fft; ++i) g_time[cp + i] = g_body[i];
  CVec g_scaled = interpolate_adjoint(g_time, rs, x_hat_scaled.size());
  // rescale is multiplication by t per block; its adjoint is the same.
  const CVec g_s = rescale(g_scaled, p.t, sc);
  for (int j = 0; j < g_s_hat.rows; ++j) {
    g_s_hat.at(j, 0) += weight * g_s[static_cast<std::size_t>(j)].real();
    g_s_hat.at(j, 1) += weight * g_s[static_cast<std::size_t>(j)].imag();
  }
  return d;
}

inline double distortion_only(const nn::Mat& s_hat, const PreparedFrame& p,
                              const FrameSpec& spec, const ResamplerSpec& rs,
                              const ScalingConfig& sc) {
  return normalized_se(p.x_f_occ, recon_spectrum_occ(s_hat, p, spec, rs, sc));
}

// ---------------------------------------------------------------------------
// Scheme encode/decode. Encoders consume the raw compressor input; decoders
// reproduce the time-domain frame bit-exactly from the stream plus bundle.

struct EncodedFrame {
  FrameBitstream bs;
  nn::Mat s_hat;           // decoder-side scaled-domain reconstruction
  std::size_t clamped = 0;  // entropy-coded schemes: out-of-support symbols
};

inline FrameBitstream make_header(SchemeId scheme, const FrameSpec& spec,
                                  const ScalingConfig& sc, std::size_t n_prime,
                                  const std::vector<std::uint32_t>& t) {
  FrameBitstream bs;
  bs.scheme = scheme;
  bs.scenario = static_cast<std::uint8_t>(spec.scenario);
  bs.n_prime = static_cast<std::uint16_t>(n_prime);
  bs.n_t = static_cast<std::uint16_t>(t.size());
  bs.q_s = static_cast<std::uint8_t>(sc.q_s);
  bs.t_factors = t;
  return bs;
}

// -- classical scalar --------------------------------------------------------

inline EncodedFrame encode_classical_sq(const CVec& raw, const ScalarCodebook& cb,
                                        const FrameSpec& spec, const ResamplerSpec& rs,
                                        const ScalingConfig& sc) {
  const CVec dec = decimate(raw, rs);
  const ScaledFrame sf = compute_and_apply_scaling(dec, sc);
  ScalarApplyResult r = apply_scalar(sf.s, cb);
  EncodedFrame out;
  out.bs = make_header(SchemeId::scalar_q, spec, sc, sf.s.size(), sf.t);
  out.bs.payload = std::move(r.payload);
  out.bs.payload_bits = r.payload_bits;
  out.s_hat = nn::Mat(static_cast<int>(sf.s.size()), 2);
  for (int j = 0; j < out.s_hat.rows; ++j) {
    out.s_hat.at(j, 0) = r.s_hat[static_cast<std::size_t>(j)].real();
    out.s_hat.at(j, 1) = r.s_hat[static_cast<std::size_t>(j)].imag();
  }
  return out;
}

inline CVec decode_classical_sq(const FrameBitstream& bs, const ScalarCodebook& cb,
                                const ScalingConfig& sc, const ResamplerSpec& rs) {
  const std::size_t n = bs.n_prime;
  const CVec s_hat = decode_scalar(bs.payload, 2ull * cb.q_bits * n, n, cb);
  return reconstruct_time(s_hat, bs.t_factors, sc, rs);
}

// -- classical vector ---------------------------------------------------------

inline EncodedFrame encode_classical_vq(const CVec& raw, const VectorCodebook& cb,
                                        bool entropy_coded, const FrameSpec& spec,
                                        const ResamplerSpec& rs, const ScalingConfig& sc) {
  const CVec dec = decimate(raw, rs);
  const ScaledFrame sf = compute_and_apply_scaling(dec, sc);
  VectorApplyResult r = apply_vector(sf.s, cb, entropy_coded);
  EncodedFrame out;
  out.bs = make_header(SchemeId::vector_q, spec, sc, sf.s.size(), sf.t);
  out.bs.payload = std::move(r.payload);
  out.bs.payload_bits = r.payload_bits;
  out.s_hat = nn::Mat(static_cast<int>(sf.s.size()), 2);
  for (int j = 0; j < out.s_hat.rows; ++j) {
    out.s_hat.at(j, 0) = r.s_hat[static_cast<std::size_t>(j)].real();
    out.s_hat.at(j, 1) = r.s_hat[static_cast<std::size_t>(j)].imag();
  }
  return out;
}

inline CVec decode_classical_vq(const FrameBitstream& bs, const VectorCodebook& cb,
                                bool entropy_coded, const ScalingConfig& sc,
                                const ResamplerSpec& rs) {
  const std::size_t n = bs.n_prime;
  const CVec s_hat = decode_vector(bs.payload, 8ull * bs.payload.size(), n, cb,
                                   entropy_coded);
  return reconstruct_time(s_hat, bs.t_factors, sc, rs);
}

// -- latent quantization (schemes 2 and 3) ------------------------------------

inline EncodedFrame encode_latent(const CVec& raw, LatentModel& m,
                                  const FrameSpec& spec, const ResamplerSpec& rs,
                                  const ScalingConfig& sc) {
  PreparedFrame p = prepare_frame(raw, spec, rs, sc);
  nn::TransformTape tape;
  const nn::Mat z = nn::transform_forward(m.enc, p.S, tape);
  EncodedFrame out;
  out.bs = make_header(m.vector_quantized ? SchemeId::latent_vq : SchemeId::latent_uniform,
                       spec, sc, static_cast<std::size_t>(p.S.rows), p.t);
  BitWriter bw;
  nn::Mat z_hat;
  if (m.vector_quantized) {
    VqResult q = vq_latent_quantize(z, m.cb);
    const auto width = static_cast<unsigned>(m.cb.block_dim * m.q_bits);
    for (auto idx : q.indices) bw.put_bits(idx, width);
    z_hat = std::move(q.z_hat);
  } else {
    const auto idx = uniform_latent_indices(z, m.q_bits);
    for (auto i : idx) bw.put_bits(i, static_cast<unsigned>(m.q_bits));
    z_hat = uniform_latent_quantize(z, m.q_bits);
  }
  out.bs.payload_bits = bw.bit_count();
  out.bs.payload = bw.take();
  nn::TransformTape dtape;
  out.s_hat = nn::transform_forward(m.dec, z_hat, dtape);
  return out;
}

inline CVec decode_latent(const FrameBitstream& bs, LatentModel& m,
                          const ScalingConfig& sc, const ResamplerSpec& rs) {
  const int n = bs.n_prime;
  const int v = m.enc.out_dim;
  nn::Mat z_hat;
  if (bs.scheme == SchemeId::latent_vq) {
    const auto width = static_cast<unsigned>(m.cb.block_dim * m.q_bits);
    const std::size_t n_blocks = static_cast<std::size_t>(n) * v /
                                 static_cast<std::size_t>(m.cb.block_dim);
    BitReader br(bs.payload, static_cast<std::size_t>(n_blocks) * width);
    std::vector<std::uint32_t> idx(n_blocks);
    for (auto& i : idx) i = static_cast<std::uint32_t>(br.get_bits(width));
    z_hat = vq_latent_from_indices(idx, n, v, m.cb);
  } else if (bs.scheme == SchemeId::latent_uniform) {
    const std::size_t count = static_cast<std::size_t>(n) * v;
    BitReader br(bs.payload, count * static_cast<unsigned>(m.q_bits));
    std::vector<std::uint32_t> idx(count);
    for (auto& i : idx)
      i = static_cast<std::uint32_t>(br.get_bits(static_cast<unsigned>(m.q_bits)));
    z_hat = uniform_latent_from_indices(idx, n, v, m.q_bits);
  } else {
    throw StreamError("bitstream scheme does not match latent model");
  }
  nn::TransformTape tape;
  const nn::Mat s_hat = nn::transform_forward(m.dec, z_hat, tape);
  return reconstruct_time(mat_to_cvec(s_hat), bs.t_factors, sc, rs);
}

// -- neural compression (scheme 4), also the variable-rate entry point --------

inline EncodedFrame encode_neural(const CVec& raw, NeuralModel& m,
                                  const FrameSpec& spec, const ResamplerSpec& rs,
                                  const ScalingConfig& sc,
                                  double scale = 1.0, std::uint8_t rate_index = kNoRateIndex,
                                  const std::vector<EntropyTable>* tables_override = nullptr) {
  PreparedFrame p = prepare_frame(raw, spec, rs, sc);
  nn::TransformTape tape;
  nn::Mat z = nn::transform_forward(m.enc, p.S, tape);
  if (scale != 1.0)
    for (auto& v : z.a) v *= scale;
  const nn::Mat z_hat = round_latent(z);
  const auto& tables = tables_override ? *tables_override : m.tables;
  if (tables.size() != static_cast<std::size_t>(z.cols))
    throw ShapeError("table count does not match latent channels");

  EncodedFrame out;
  out.bs = make_header(SchemeId::neural, spec, sc, static_cast<std::size_t>(p.S.rows), p.t);
  out.bs.sym_count = static_cast<std::uint32_t>(z_hat.rows);
  out.bs.rate_index = rate_index;
  RangeEncoder enc;
  std::vector<int> syms(static_cast<std::size_t>(z_hat.rows));
  for (int c = 0; c < z_hat.cols; ++c) {
    for (int t = 0; t < z_hat.rows; ++t)
      syms[static_cast<std::size_t>(t)] = static_cast<int>(z_hat.at(t, c));
    out.clamped += ac_encode_channel(syms, tables[static_cast<std::size_t>(c)], enc);
  }
  out.bs.payload = enc.finish();
  out.bs.payload_bits = 8ull * out.bs.payload.size();

  // Decoder-side reconstruction: rescale by 1/scale before the transform.
  nn::Mat z_dec = z_hat;
  if (scale != 1.0)
    for (auto& v : z_dec.a) v /= scale;
  nn::TransformTape dtape;
  out.s_hat = nn::transform_forward(m.dec, z_dec, dtape);
  return out;
}

inline CVec decode_neural(const FrameBitstream& bs, NeuralModel& m,
                          const ScalingConfig& sc, const ResamplerSpec& rs,
                          double scale = 1.0,
                          const std::vector<EntropyTable>* tables_override = nullptr) {
  const auto& tables = tables_override ? *tables_override : m.tables;
  const int v = m.enc.out_dim;
  const auto count = static_cast<std::size_t>(bs.sym_count);
  RangeDecoder dec(bs.payload);
  nn::Mat z_hat(static_cast<int>(count), v);
  for (int c = 0; c < v; ++c) {
    const auto syms = ac_decode_channel(dec, tables[static_cast<std::size_t>(c)], count);
    for (std::size_t t = 0; t < count; ++t)
      z_hat.at(static_cast<int>(t), c) = static_cast<double>(syms[t]);
  }
  if (scale != 1.0)
    for (auto& val : z_hat.a) val /= scale;
  nn::TransformTape tape;
  const nn::Mat s_hat = nn::transform_forward(m.dec, z_hat, tape);
  return reconstruct_time(mat_to_cvec(s_hat), bs.t_factors, sc, rs);
}

// -- successive refinement (scheme 5) -----------------------------------------

// Deterministic reconstruction of layer ell's decoder-side S_hat from rounded
// latents; shared verbatim by the encoder (which re-derives it) and decoder.
inline nn::Mat refinement_layer_output(NeuralModel& layer, const nn::Mat& z_hat) {
  nn::TransformTape tape;
  return nn::transform_forward(layer.dec, z_hat, tape);
}

inline nn::Mat stack_refinement_input(const nn::Mat& S, const nn::Mat& s_hat_prev) {
  nn::Mat x(S.rows, 4);
  for (int t = 0; t < S.rows; ++t) {
    x.at(t, 0) = S.at(t, 0);
    x.at(t, 1) = S.at(t, 1);
    x.at(t, 2) = s_hat_prev.at(t, 0);
    x.at(t, 3) = s_hat_prev.at(t, 1);
  }
  return x;
}

// Encodes layers 1..up_to (1-based); payload l is bit-identical whether or
// not higher layers exist.
inline std::vector<EncodedFrame> refine_encode(const CVec& raw, RefinementStack& stack,
                                               std::size_t up_to, const FrameSpec& spec,
                                               const ResamplerSpec& rs,
                                               const ScalingConfig& sc) {
  if (up_to == 0 || up_to > stack.layers.size())
    throw ConfigError("refinement layer index out of range");
  PreparedFrame p = prepare_frame(raw, spec, rs, sc);
  std::vector<EncodedFrame> out;
  nn::Mat s_hat_accum;
  for (std::size_t l = 0; l < up_to; ++l) {
    NeuralModel& layer = stack.layers[l];
    nn::Mat enc_in = l == 0 ? p.S : stack_refinement_input(p.S, s_hat_accum);
    nn::TransformTape tape;
    const nn::Mat z = nn::transform_forward(layer.enc, enc_in, tape);
    const nn::Mat z_hat = round_latent(z);
    EncodedFrame ef;
    ef.bs = make_header(SchemeId::refinement, spec, sc,
                        static_cast<std::size_t>(p.S.rows), p.t);
    ef.bs.sym_count = static_cast<std::uint32_t>(z_hat.rows);
    ef.bs.layer_index = static_cast<std::uint8_t>(l);
    RangeEncoder enc;
    std::vector<int> syms(static_cast<std::size_t>(z_hat.rows));
    for (int c = 0; c < z_hat.cols; ++c) {
      for (int t = 0; t < z_hat.rows; ++t)
        syms[static_cast<std::size_t>(t)] = static_cast<int>(z_hat.at(t, c));
      ef.clamped += ac_encode_channel(syms, layer.tables[static_cast<std::size_t>(c)], enc);
    }
    ef.bs.payload = enc.finish();
    ef.bs.payload_bits = 8ull * ef.bs.payload.size();
    const nn::Mat dec_out = refinement_layer_output(layer, z_hat);
    if (l == 0) {
      s_hat_accum = dec_out;
    } else {
      for (std::size_t i = 0; i < s_hat_accum.size(); ++i)
        s_hat_accum.a[i] += dec_out.a[i];
    }
    ef.s_hat = s_hat_accum;
    out.push_back(std::move(ef));
  }
  return out;
}

// Decodes a contiguous prefix of layer payloads.
inline CVec refine_decode(const std::vector<FrameBitstream>& payloads,
                          RefinementStack& stack, const ScalingConfig& sc,
                          const ResamplerSpec& rs) {
  if (payloads.empty()) throw StreamError("no refinement payloads");
  nn::Mat s_hat_accum;
  for (std::size_t l = 0; l < payloads.size(); ++l) {
    const FrameBitstream& bs = payloads[l];
    if (bs.layer_index != static_cast<std::uint8_t>(l))
      throw StreamError("gap in refinement payload prefix");
    NeuralModel& layer = stack.layers[l];
    const int v = layer.enc.out_dim;
    const auto count = static_cast<std::size_t>(bs.sym_count);
    RangeDecoder dec(bs.payload);
    nn::Mat z_hat(static_cast<int>(count), v);
    for (int c = 0; c < v; ++c) {
      const auto syms =
          ac_decode_channel(dec, layer.tables[static_cast<std::size_t>(c)], count);
      for (std::size_t t = 0; t < count; ++t)
        z_hat.at(static_cast<int>(t), c) = static_cast<double>(syms[t]);
    }
    const nn::Mat dec_out = refinement_layer_output(layer, z_hat);
    if (l == 0) {
      s_hat_accum = dec_out;
    } else {
      for (std::size_t i = 0; i < s_hat_accum.size(); ++i)
        s_hat_accum.a[i] += dec_out.a[i];
    }
  }
  return reconstruct_time(mat_to_cvec(s_hat_accum), payloads[0].t_factors, sc, rs);
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation

struct EvalResult {
  double bits_per_element = 0.0;  // (payload + b_t) / (2 N')
  double cr = 0.0;
  double evm_pct = 0.0;  // dataset-level: summed numerators over denominators
  double evm_db = 0.0;
  double evm_pct_p50 = 0.0;
  double evm_pct_p90 = 0.0;
  double evm_pct_p99 = 0.0;
  double alpha = 1.0;
  std::size_t clamped = 0;
  std::size_t frames = 0;
};

// Folds per-frame EVM numerators/denominators and payload accounting.
class EvalAccumulator {
 public:
  explicit EvalAccumulator(const RunConfig& cfg) : cfg_(cfg) {}

  void add(const CVec& raw, const CVec& x_hat, const FrameBitstream& bs,
           std::size_t clamped = 0) {
    const auto spec = *cfg_.frame_spec();
    const CVec x_occ = occupied_values(frame_spectrum(raw, spec), spec);
    const CVec y_occ = occupied_values(frame_spectrum(x_hat, spec), spec);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x_occ.size(); ++i) {
      num += std::norm(y_occ[i] - x_occ[i]);
      den += std::norm(x_occ[i]);
    }
    num_ += num;
    den_ += den;
    per_frame_pct_.push_back(std::sqrt(num / den) * 100.0);
    content_bits_ += static_cast<double>(bs.content_bits());
    payload_bits_ += static_cast<double>(bs.payload_bits);
    n_t_ = bs.t_factors.size();
    n_prime_ = bs.n_prime;
    clamped_ += clamped;
    ++frames_;
  }

  EvalResult finish() {
    if (frames_ == 0) throw StatsError("no frames evaluated");
    EvalResult r;
    r.frames = frames_;
    r.clamped = clamped_;
    r.evm_pct = std::sqrt(num_ / den_) * 100.0;
    r.evm_db = num_ <= 0.0 ? kEvmPerfectDb : 10.0 * std::log10(den_ / num_);
    std::sort(per_frame_pct_.begin(), per_frame_pct_.end());
    auto pct = [&](double q) {
      const auto idx = static_cast<std::size_t>(q * static_cast<double>(per_frame_pct_.size() - 1));
      return per_frame_pct_[idx];
    };
    r.evm_pct_p50 = pct(0.5);
    r.evm_pct_p90 = pct(0.9);
    r.evm_pct_p99 = pct(0.99);
    r.bits_per_element = content_bits_ / static_cast<double>(frames_) /
                         (2.0 * static_cast<double>(n_prime_));
    r.cr = compression_ratio(payload_bits_ / static_cast<double>(frames_),
                             static_cast<int>(n_prime_), static_cast<int>(n_t_),
                             cfg_.scaling.q_s, cfg_.resampler.k, cfg_.resampler.m);
    return r;
  }

 private:
  RunConfig cfg_;
  double num_ = 0.0, den_ = 0.0;
  double content_bits_ = 0.0, payload_bits_ = 0.0;
  std::size_t n_t_ = 1, n_prime_ = 1, frames_ = 0, clamped_ = 0;
  std::vector<double> per_frame_pct_;
};

// ---------------------------------------------------------------------------
// Differentiable loss graphs (training-time forward/backward per frame)

struct LossBreakdown {
  double distortion = 0.0;  // normalized squared error
  double rate = 0.0;        // bits per latent element (entropy-model schemes)
  double aux = 0.0;         // VQ codebook + commitment terms
  double total = 0.0;
};

// Scheme 4 training graph: additive-uniform-noise relaxation of rounding,
// loss = lambda * D + I. Gradients accumulate into the provided buffers.
inline LossBreakdown neural_loss_grad(NeuralModel& m, nn::TransformGrads& g_enc,
                                      nn::TransformGrads& g_dec, FactorizedGrads& g_prior,
                                      const PreparedFrame& p, const FrameSpec& spec,
                                      const ResamplerSpec& rs, const ScalingConfig& sc,
                                      double lambda, Rng& noise_rng) {
  static thread_local nn::TransformTape enc_tape, dec_tape;
  nn::Mat z = nn::transform_forward(m.enc, p.S, enc_tape);
  nn::Mat z_noisy(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i)
    z_noisy.a[i] = z.a[i] + noise_rng.uniform(-0.5, 0.5);

  nn::Mat s_hat = nn::transform_forward(m.dec, z_noisy, dec_tape);

  LossBreakdown lb;
  nn::Mat g_s_hat(s_hat.rows, s_hat.cols);
  lb.distortion = distortion_and_grad(s_hat, p, spec, rs, sc, g_s_hat, lambda);

  nn::Mat g_z(z.rows, z.cols);
  const RateResult rr = rate_estimate_grad(m.prior, z_noisy, g_prior, g_z, 1.0);
  lb.rate = rr.bits_per_element;

  // Decoder backward adds its input gradient onto the rate term's.
  nn::Mat g_z_dec = nn::transform_backward(m.dec, z_noisy, dec_tape, g_s_hat, g_dec);
  for (std::size_t i = 0; i < g_z.size(); ++i) g_z.a[i] += g_z_dec.a[i];
  nn::transform_backward(m.enc, p.S, enc_tape, g_z, g_enc);

  lb.total = lambda * lb.distortion + lb.rate;
  return lb;
}

// Evaluation-mode counterpart (hard rounding, no gradients).
inline LossBreakdown neural_loss_eval(NeuralModel& m, const PreparedFrame& p,
                                      const FrameSpec& spec, const ResamplerSpec& rs,
                                      const ScalingConfig& sc, double lambda,
                                      Rng& noise_rng) {
  static thread_local nn::TransformTape enc_tape, dec_tape;
  nn::Mat z = nn::transform_forward(m.enc, p.S, enc_tape);
  nn::Mat z_noisy(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i)
    z_noisy.a[i] = z.a[i] + noise_rng.uniform(-0.5, 0.5);
  const nn::Mat s_hat = nn::transform_forward(m.dec, z_noisy, dec_tape);
  LossBreakdown lb;
  lb.distortion = distortion_only(s_hat, p, spec, rs, sc);
  lb.rate = rate_estimate(m.prior, z_noisy).bits_per_element;
  lb.total = lambda * lb.distortion + lb.rate;
  return lb;
}

// Latent-quantization training graph (schemes 2/3). Uniform: straight-through
// gradients flow through clip and quantizer unchanged. VQ: straight-through
// reconstruction gradients plus codebook and commitment terms.
inline LossBreakdown latent_loss_grad(LatentModel& m, nn::TransformGrads& g_enc,
                                      nn::TransformGrads& g_dec, nn::Mat* g_codebook,
                                      const PreparedFrame& p, const FrameSpec& spec,
                                      const ResamplerSpec& rs, const ScalingConfig& sc,
                                      bool quantize_enabled = true) {
  static thread_local nn::TransformTape enc_tape, dec_tape;
  nn::Mat z = nn::transform_forward(m.enc, p.S, enc_tape);

  nn::Mat z_hat;
  VqResult vq;
  if (!quantize_enabled) {
    z_hat = z;
  } else if (m.vector_quantized) {
    vq = vq_latent_quantize(z, m.cb);
    z_hat = vq.z_hat;
  } else {
    z_hat = uniform_latent_quantize(z, m.q_bits);
  }

  nn::Mat s_hat = nn::transform_forward(m.dec, z_hat, dec_tape);

  LossBreakdown lb;
  nn::Mat g_s_hat(s_hat.rows, s_hat.cols);
  lb.distortion = distortion_and_grad(s_hat, p, spec, rs, sc, g_s_hat, 1.0);

  // Straight-through: the reconstruction gradient w.r.t. z_hat is applied to
  // z unchanged.
  nn::Mat g_z = nn::transform_backward(m.dec, z_hat, dec_tape, g_s_hat, g_dec);
  if (quantize_enabled && m.vector_quantized) {
    if (g_codebook) lb.aux += vq_codebook_term_grad(z, vq, m.cb, *g_codebook);
    lb.aux += vq_commitment_term_grad(z, vq, m.cb.beta, g_z);
  }
  nn::transform_backward(m.enc, p.S, enc_tape, g_z, g_enc);
  lb.total = lb.distortion + lb.aux;
  return lb;
}

inline LossBreakdown latent_loss_eval(LatentModel& m, const PreparedFrame& p,
                                      const FrameSpec& spec, const ResamplerSpec& rs,
                                      const ScalingConfig& sc) {
  nn::TransformTape enc_tape;
  nn::Mat z = nn::transform_forward(m.enc, p.S, enc_tape);
  nn::Mat z_hat = m.vector_quantized ? vq_latent_quantize(z, m.cb).z_hat
                                     : uniform_latent_quantize(z, m.q_bits);
  nn::TransformTape dec_tape;
  const nn::Mat s_hat = nn::transform_forward(m.dec, z_hat, dec_tape);
  LossBreakdown lb;
  lb.distortion = distortion_only(s_hat, p, spec, rs, sc);
  if (m.vector_quantized) {
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double diff = z.a[i] - z_hat.a[i];
      d += diff * diff;
    }
    lb.aux = (1.0 + m.cb.beta) * d;
  }
  lb.total = lb.distortion + lb.aux;
  return lb;
}

// Refinement layer training graph: lower layers frozen, their rounded-latent
// reconstruction supplied as s_hat_prev.
inline LossBreakdown refinement_loss_grad(NeuralModel& layer, nn::TransformGrads& g_enc,
                                          nn::TransformGrads& g_dec,
                                          FactorizedGrads& g_prior,
                                          const PreparedFrame& p, const nn::Mat& s_hat_prev,
                                          const FrameSpec& spec, const ResamplerSpec& rs,
                                          const ScalingConfig& sc, double lambda,
                                          Rng& noise_rng) {
  const nn::Mat enc_in = stack_refinement_input(p.S, s_hat_prev);
  static thread_local nn::TransformTape enc_tape, dec_tape;
  nn::Mat z = nn::transform_forward(layer.enc, enc_in, enc_tape);
  nn::Mat z_noisy(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i)
    z_noisy.a[i] = z.a[i] + noise_rng.uniform(-0.5, 0.5);
  nn::Mat residual = nn::transform_forward(layer.dec, z_noisy, dec_tape);
  nn::Mat s_hat(residual.rows, residual.cols);
  for (std::size_t i = 0; i < s_hat.size(); ++i)
    s_hat.a[i] = s_hat_prev.a[i] + residual.a[i];

  LossBreakdown lb;
  nn::Mat g_s_hat(s_hat.rows, s_hat.cols);
  lb.distortion = distortion_and_grad(s_hat, p, spec, rs, sc, g_s_hat, lambda);
  nn::Mat g_z(z.rows, z.cols);
  const RateResult rr = rate_estimate_grad(layer.prior, z_noisy, g_prior, g_z, 1.0);
  lb.rate = rr.bits_per_element;
  // d s_hat / d residual = identity.
  nn::Mat g_z_dec = nn::transform_backward(layer.dec, z_noisy, dec_tape, g_s_hat, g_dec);
  for (std::size_t i = 0; i < g_z.size(); ++i) g_z.a[i] += g_z_dec.a[i];
  nn::transform_backward(layer.enc, enc_in, enc_tape, g_z, g_enc);
  lb.total = lambda * lb.distortion + lb.rate;
  return lb;
}

}  // namespace fhc
