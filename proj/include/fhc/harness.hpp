#pragma once
// Dataset-level drivers shared by the CLI and the acceptance suite: scheme
// evaluation over a frame set (through the full serialize/parse/decode path),
// classical training helpers and the covariance check.

#include "fhc/pipeline.hpp"
#include "fhc/threading.hpp"
#include "fhc/trainer.hpp"

namespace fhc {

// Every evaluation round-trips the serialized bitstream so the in-memory path
// and the file path are the same code.
inline EvalResult evaluate_classical_sq(const RunConfig& cfg, const ScalarCodebook& cb,
                                        const std::vector<CVec>& frames) {
  const auto spec = cfg.frame_spec();
  EvalAccumulator acc(cfg);
  for (const auto& raw : frames) {
    EncodedFrame ef = encode_classical_sq(raw, cb, *spec, cfg.resampler, cfg.scaling);
    const FrameBitstream bs = parse_bitstream(serialize(ef.bs), ef.bs.payload_bits);
    const CVec x_hat = decode_classical_sq(bs, cb, cfg.scaling, cfg.resampler);
    acc.add(raw, x_hat, ef.bs);
  }
  return acc.finish();
}

inline EvalResult evaluate_classical_vq(const RunConfig& cfg, const VectorCodebook& cb,
                                        bool entropy_coded,
                                        const std::vector<CVec>& frames) {
  const auto spec = cfg.frame_spec();
  EvalAccumulator acc(cfg);
  double payload_bits = 0.0, fixed_bits = 0.0;
  for (const auto& raw : frames) {
    EncodedFrame ef = encode_classical_vq(raw, cb, entropy_coded, *spec, cfg.resampler,
                                          cfg.scaling);
    const FrameBitstream bs = parse_bitstream(serialize(ef.bs), ef.bs.payload_bits);
    const CVec x_hat = decode_classical_vq(bs, cb, entropy_coded, cfg.scaling,
                                           cfg.resampler);
    acc.add(raw, x_hat, ef.bs);
    payload_bits += static_cast<double>(ef.bs.payload_bits);
    fixed_bits += static_cast<double>(2 * bs.n_prime * cb.q_bits);
  }
  EvalResult r = acc.finish();
  r.alpha = entropy_coded ? payload_bits / fixed_bits : 1.0;
  return r;
}

inline EvalResult evaluate_latent(const RunConfig& cfg, LatentModel& m,
                                  const std::vector<CVec>& frames) {
  const auto spec = cfg.frame_spec();
  std::vector<CVec> x_hat(frames.size());
  std::vector<FrameBitstream> streams(frames.size());
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    EncodedFrame ef = encode_latent(frames[i], m, *spec, cfg.resampler, cfg.scaling);
    const FrameBitstream bs = parse_bitstream(serialize(ef.bs), ef.bs.payload_bits);
    x_hat[i] = decode_latent(bs, m, cfg.scaling, cfg.resampler);
    streams[i] = std::move(ef.bs);
  });
  EvalAccumulator acc(cfg);
  for (std::size_t i = 0; i < frames.size(); ++i)
    acc.add(frames[i], x_hat[i], streams[i]);
  return acc.finish();
}

inline EvalResult evaluate_neural(const RunConfig& cfg, NeuralModel& m,
                                  const std::vector<CVec>& frames, double scale = 1.0,
                                  std::uint8_t rate_index = kNoRateIndex,
                                  const std::vector<EntropyTable>* tables = nullptr) {
  const auto spec = cfg.frame_spec();
  std::vector<CVec> x_hat(frames.size());
  std::vector<FrameBitstream> streams(frames.size());
  std::vector<std::size_t> clamped(frames.size(), 0);
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    EncodedFrame ef = encode_neural(frames[i], m, *spec, cfg.resampler, cfg.scaling,
                                    scale, rate_index, tables);
    const FrameBitstream bs = parse_bitstream(serialize(ef.bs), ef.bs.payload_bits);
    x_hat[i] = decode_neural(bs, m, cfg.scaling, cfg.resampler, scale, tables);
    streams[i] = std::move(ef.bs);
    clamped[i] = ef.clamped;
  });
  EvalAccumulator acc(cfg);
  for (std::size_t i = 0; i < frames.size(); ++i)
    acc.add(frames[i], x_hat[i], streams[i], clamped[i]);
  return acc.finish();
}

// Refinement evaluation: decode the prefix b^1..b^l.
inline EvalResult evaluate_refinement(const RunConfig& cfg, RefinementStack& stack,
                                      std::size_t up_to,
                                      const std::vector<CVec>& frames) {
  const auto spec = cfg.frame_spec();
  std::vector<CVec> x_hat(frames.size());
  std::vector<FrameBitstream> streams(frames.size());
  std::vector<std::size_t> clamped(frames.size(), 0);
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    auto encoded = refine_encode(frames[i], stack, up_to, *spec, cfg.resampler,
                                 cfg.scaling);
    std::vector<FrameBitstream> payloads;
    std::uint64_t content = 0;
    for (auto& ef : encoded) {
      payloads.push_back(parse_bitstream(serialize(ef.bs), ef.bs.payload_bits));
      content += ef.bs.content_bits();
      clamped[i] += ef.clamped;
    }
    x_hat[i] = refine_decode(payloads, stack, cfg.scaling, cfg.resampler);
    // Account the whole prefix as one stream: every transmitted bit of the
    // decoded layers counts, with the shared factors counted once.
    FrameBitstream combined = encoded[0].bs;
    combined.payload_bits = content - static_cast<std::uint64_t>(combined.q_s) *
                                          combined.t_factors.size();
    streams[i] = std::move(combined);
  });
  EvalAccumulator acc(cfg);
  for (std::size_t i = 0; i < frames.size(); ++i)
    acc.add(frames[i], x_hat[i], streams[i], clamped[i]);
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Classical training from a frame set

inline ScalarCodebook train_scalar_on_frames(const RunConfig& cfg,
                                             const std::vector<CVec>& frames,
                                             int q_bits, std::size_t max_frames = 400) {
  RVec samples;
  const std::size_t use = std::min(frames.size(), max_frames);
  for (std::size_t i = 0; i < use; ++i) {
    const CVec dec = decimate(frames[i], cfg.resampler);
    const ScaledFrame sf = compute_and_apply_scaling(dec, cfg.scaling);
    for (const auto& v : sf.s) {
      samples.push_back(v.real());
      samples.push_back(v.imag());
    }
  }
  return train_scalar(samples, q_bits, 300, 1e-10);
}

inline VectorCodebook train_vector_on_frames(const RunConfig& cfg,
                                             const std::vector<CVec>& frames,
                                             int block, int q_bits,
                                             std::size_t max_frames = 400) {
  std::vector<RVec> blocks;
  const std::size_t use = std::min(frames.size(), max_frames);
  for (std::size_t i = 0; i < use; ++i) {
    const CVec dec = decimate(frames[i], cfg.resampler);
    const ScaledFrame sf = compute_and_apply_scaling(dec, cfg.scaling);
    auto fb = interleave_blocks(sf.s, block);
    blocks.insert(blocks.end(), fb.begin(), fb.end());
  }
  return train_vector(blocks, block, q_bits, 40, 1e-8, cfg.train.seed);
}

// ---------------------------------------------------------------------------
// Proposition-1 check

// The analytic lag formula indexes the decimated spectrum with the occupied
// block at linear bins k*..N'-k*-1; the physical signal is DC-centered, which
// differs by exactly a (-1)^n time modulation. Frames are shifted into the
// formula's layout before estimation.
inline void shift_band_to_linear(CVec& frame) {
  for (std::size_t n = 1; n < frame.size(); n += 2) frame[n] = -frame[n];
}

inline CovarianceReport covariance_check(const RunConfig& cfg, std::size_t n_frames) {
  const auto spec = cfg.frame_spec();
  if (spec->scenario != Scenario::downlink)
    throw ConfigError("covariance check runs on the noiseless downlink path");
  const std::size_t n_prime = cfg.n_prime();
  const int k_star = (static_cast<int>(n_prime) - cfg.n_sym) / 2;
  // Decimation with gain k scales spectral amplitudes by sqrt(K/M) relative
  // to a unitary band extraction, so the effective per-symbol power is K/M.
  const double p_eff = static_cast<double>(cfg.resampler.k) /
                       static_cast<double>(cfg.resampler.m);

  std::vector<CVec> frames(n_frames);
  Cpx grand_sum(0.0, 0.0);
  std::mutex mu;
  parallel_for(n_frames, cfg.threads, [&](std::size_t i) {
    CVec raw = generate_frame(spec, cfg.channel, cfg.dataset.seed, i);
    CVec dec = decimate(raw, cfg.resampler);
    Cpx local(0.0, 0.0);
    for (const auto& v : dec) local += v;
    shift_band_to_linear(dec);
    frames[i] = std::move(dec);
    std::lock_guard<std::mutex> lock(mu);
    grand_sum += local;
  });

  CovarianceReport rep;
  rep.analytic = analytic_covariance(static_cast<int>(n_prime), k_star, p_eff);
  rep.empirical = empirical_covariance(frames);
  rep.rel_frobenius_error = relative_frobenius_error(rep.empirical, rep.analytic);
  rep.grand_mean = grand_sum / (static_cast<double>(n_frames) * static_cast<double>(n_prime));
  rep.mean_bound = 3.0 * std::sqrt(p_eff / (static_cast<double>(n_frames) *
                                            static_cast<double>(n_prime)));
  rep.mean_consistent = std::abs(rep.grand_mean.real()) < rep.mean_bound &&
                        std::abs(rep.grand_mean.imag()) < rep.mean_bound;
  return rep;
}

}  // namespace fhc
