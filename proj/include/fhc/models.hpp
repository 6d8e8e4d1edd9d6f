#pragma once
// Scheme model containers and their ModelBundle serialization. Arrays
// round-trip bit-exactly; parameter digests back the frozen-layer checks.

#include "fhc/classical.hpp"
#include "fhc/config.hpp"
#include "fhc/entropy_model.hpp"
#include "fhc/latent.hpp"
#include "fhc/model_bundle.hpp"
#include "fhc/nn.hpp"

namespace fhc {

// Scheme 0/1: trained classical codebooks.
struct ClassicalModel {
  ScalarCodebook scalar;
  VectorCodebook vector;
  bool has_scalar = false;
  bool has_vector = false;
};

// Schemes 2/3: transform pair plus latent quantizer.
struct LatentModel {
  nn::TransformWeights enc;  // 2 x N' -> V x N'
  nn::TransformWeights dec;  // V x N' -> 2 x N'
  int q_bits = 4;
  bool vector_quantized = false;
  LatentVqCodebook cb;  // vector_quantized only
};

// Scheme 4: transform pair, factorized prior, per-channel tables.
struct NeuralModel {
  nn::TransformWeights enc;
  nn::TransformWeights dec;
  FactorizedModel prior;
  std::vector<EntropyTable> tables;
};

// Scheme 5: greedily trained refinement layers. Layer 0 is the base model;
// layers >= 1 take the 4-row stack [S; S_hat_prev].
struct RefinementStack {
  std::vector<NeuralModel> layers;
  std::vector<double> lambdas;
};

// Variable-rate set: one shared transform (from the largest-lambda model),
// per-scale probability nets and tables. scales.back() == 1 reuses the base
// prior/tables so that operating point is bit-identical to the base model.
struct VariableRateSet {
  NeuralModel base;
  std::vector<double> scales;                      // ascending, last == 1
  std::vector<FactorizedModel> priors;             // one per scale
  std::vector<std::vector<EntropyTable>> tables;   // one set per scale
};

// ---------------------------------------------------------------------------
// Bundle helpers

inline void put_transform(ModelBundle& b, const std::string& prefix,
                          nn::TransformWeights& w) {
  std::vector<nn::ParamRef> refs;
  collect(w, prefix, refs);
  for (auto& r : refs) b.put_mat(r.name, *r.m);
}

inline void get_transform(const ModelBundle& b, const std::string& prefix,
                          nn::TransformWeights& w) {
  std::vector<nn::ParamRef> refs;
  collect(w, prefix, refs);
  for (auto& r : refs) {
    nn::Mat m = b.get_mat(r.name);
    if (!m.same_shape(*r.m)) throw IoError("bundle shape mismatch: " + r.name);
    *r.m = std::move(m);
  }
}

inline void put_prior(ModelBundle& b, const std::string& prefix, FactorizedModel& m) {
  std::vector<nn::ParamRef> refs;
  collect(m, prefix, refs);
  for (auto& r : refs) b.put_mat(r.name, *r.m);
}

inline void get_prior(const ModelBundle& b, const std::string& prefix,
                      FactorizedModel& m) {
  std::vector<nn::ParamRef> refs;
  collect(m, prefix, refs);
  for (auto& r : refs) {
    nn::Mat mat = b.get_mat(r.name);
    if (!mat.same_shape(*r.m)) throw IoError("bundle shape mismatch: " + r.name);
    *r.m = std::move(mat);
  }
}

inline void put_tables(ModelBundle& b, const std::string& prefix,
                       const std::vector<EntropyTable>& tables) {
  for (std::size_t c = 0; c < tables.size(); ++c) {
    const auto& t = tables[c];
    const std::string p = prefix + ".ch" + std::to_string(c);
    b.put_i32(p + ".support", {t.lo, t.hi});
    b.put_u32(p + ".freq", t.freq);
    b.put_rvec(p + ".probs", t.probs);
  }
}

inline std::vector<EntropyTable> get_tables(const ModelBundle& b,
                                            const std::string& prefix, int channels) {
  std::vector<EntropyTable> tables(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    auto& t = tables[static_cast<std::size_t>(c)];
    const std::string p = prefix + ".ch" + std::to_string(c);
    const auto support = b.get_i32(p + ".support");
    if (support.size() != 2) throw IoError("bad table support: " + p);
    t.lo = support[0];
    t.hi = support[1];
    t.freq = b.get_u32(p + ".freq");
    t.probs = b.get_rvec(p + ".probs");
    if (t.freq.size() != t.probs.size() ||
        t.freq.size() != static_cast<std::size_t>(t.hi - t.lo + 1))
      throw IoError("inconsistent table arrays: " + p);
    t.cum.assign(t.freq.size() + 1, 0);
    for (std::size_t j = 0; j < t.freq.size(); ++j) t.cum[j + 1] = t.cum[j] + t.freq[j];
    if (t.cum.back() != kFreqTotal) throw IoError("table frequencies do not sum to 2^16");
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Per-scheme bundle formats. Every bundle carries the config snapshot and a
// "scheme" array is implied by the config's train.scheme field.

inline ModelBundle bundle_classical(ClassicalModel& m, const RunConfig& cfg) {
  ModelBundle b;
  b.config_json() = config_to_json(cfg).dump(2);
  if (m.has_scalar) {
    b.put_rvec("sq.levels", m.scalar.levels);
    b.put_u32("sq.q_bits", {static_cast<std::uint32_t>(m.scalar.q_bits)});
  }
  if (m.has_vector) {
    RVec flat;
    for (const auto& row : m.vector.vectors)
      flat.insert(flat.end(), row.begin(), row.end());
    b.put_f64("vq.codebook", flat.data(),
              {static_cast<std::uint32_t>(m.vector.vectors.size()),
               static_cast<std::uint32_t>(m.vector.block_dim)});
    b.put_u8("vq.code_lengths", m.vector.code_lengths);
    b.put_u32("vq.geometry", {static_cast<std::uint32_t>(m.vector.block_dim),
                              static_cast<std::uint32_t>(m.vector.q_bits)});
    b.put_rvec("vq.alpha", {m.vector.alpha});
  }
  return b;
}

inline ClassicalModel classical_from_bundle(const ModelBundle& b) {
  ClassicalModel m;
  if (b.has("sq.levels")) {
    m.scalar.levels = b.get_rvec("sq.levels");
    m.scalar.q_bits = static_cast<int>(b.get_u32("sq.q_bits")[0]);
    m.has_scalar = true;
  }
  if (b.has("vq.codebook")) {
    const NamedArray& a = b.get("vq.codebook");
    const auto rows = a.dims[0];
    const auto cols = a.dims[1];
    RVec flat(a.elements());
    std::memcpy(flat.data(), a.bytes.data(), a.bytes.size());
    m.vector.vectors.assign(rows, RVec(cols));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        m.vector.vectors[r][c] = flat[static_cast<std::size_t>(r) * cols + c];
    m.vector.code_lengths = b.get_u8("vq.code_lengths");
    const auto geom = b.get_u32("vq.geometry");
    m.vector.block_dim = static_cast<int>(geom[0]);
    m.vector.q_bits = static_cast<int>(geom[1]);
    m.vector.alpha = b.get_rvec("vq.alpha")[0];
    m.has_vector = true;
  }
  return m;
}

inline ModelBundle bundle_latent(LatentModel& m, const RunConfig& cfg) {
  ModelBundle b;
  b.config_json() = config_to_json(cfg).dump(2);
  put_transform(b, "enc", m.enc);
  put_transform(b, "dec", m.dec);
  b.put_u32("latent.q_bits", {static_cast<std::uint32_t>(m.q_bits)});
  b.put_u32("latent.vector", {m.vector_quantized ? 1u : 0u});
  if (m.vector_quantized) {
    b.put_mat("latent.codebook", m.cb.e);
    b.put_u32("latent.block", {static_cast<std::uint32_t>(m.cb.block_dim)});
  }
  return b;
}

inline LatentModel latent_from_bundle(const ModelBundle& b) {
  const RunConfig cfg = config_from_json(Json::parse(b.config_json()));
  LatentModel m;
  Rng init(0);
  m.enc.init(2, cfg.train.latent_channels, cfg.train.hidden, init);
  m.dec.init(cfg.train.latent_channels, 2, cfg.train.hidden, init);
  get_transform(b, "enc", m.enc);
  get_transform(b, "dec", m.dec);
  m.q_bits = static_cast<int>(b.get_u32("latent.q_bits")[0]);
  m.vector_quantized = b.get_u32("latent.vector")[0] != 0;
  if (m.vector_quantized) {
    const int block = static_cast<int>(b.get_u32("latent.block")[0]);
    m.cb = make_latent_vq_codebook(block, m.q_bits);
    m.cb.e = b.get_mat("latent.codebook");
  }
  return m;
}

inline void put_neural(ModelBundle& b, const std::string& prefix, NeuralModel& m) {
  put_transform(b, prefix + ".enc", m.enc);
  put_transform(b, prefix + ".dec", m.dec);
  put_prior(b, prefix + ".prior", m.prior);
  put_tables(b, prefix + ".table", m.tables);
}

inline void get_neural(const ModelBundle& b, const std::string& prefix,
                       NeuralModel& m, int enc_in, int v, int hidden) {
  Rng init(0);
  m.enc.init(enc_in, v, hidden, init);
  m.dec.init(v, 2, hidden, init);
  m.prior.init(v, init);
  get_transform(b, prefix + ".enc", m.enc);
  get_transform(b, prefix + ".dec", m.dec);
  get_prior(b, prefix + ".prior", m.prior);
  m.tables = get_tables(b, prefix + ".table", v);
}

inline ModelBundle bundle_neural(NeuralModel& m, const RunConfig& cfg) {
  ModelBundle b;
  b.config_json() = config_to_json(cfg).dump(2);
  put_neural(b, "model", m);
  return b;
}

inline NeuralModel neural_from_bundle(const ModelBundle& b) {
  const RunConfig cfg = config_from_json(Json::parse(b.config_json()));
  NeuralModel m;
  get_neural(b, "model", m, 2, cfg.train.latent_channels, cfg.train.hidden);
  return m;
}

inline ModelBundle bundle_refinement(RefinementStack& s, const RunConfig& cfg) {
  ModelBundle b;
  b.config_json() = config_to_json(cfg).dump(2);
  b.put_rvec("refine.lambdas", s.lambdas);
  for (std::size_t l = 0; l < s.layers.size(); ++l)
    put_neural(b, "layer" + std::to_string(l), s.layers[l]);
  return b;
}

inline RefinementStack refinement_from_bundle(const ModelBundle& b) {
  const RunConfig cfg = config_from_json(Json::parse(b.config_json()));
  RefinementStack s;
  s.lambdas = b.get_rvec("refine.lambdas");
  s.layers.resize(s.lambdas.size());
  for (std::size_t l = 0; l < s.layers.size(); ++l)
    get_neural(b, "layer" + std::to_string(l), s.layers[l], l == 0 ? 2 : 4,
               cfg.train.latent_channels, cfg.train.hidden);
  return s;
}

inline ModelBundle bundle_varrate(VariableRateSet& vr, const RunConfig& cfg) {
  ModelBundle b;
  b.config_json() = config_to_json(cfg).dump(2);
  put_neural(b, "base", vr.base);
  b.put_rvec("vr.scales", vr.scales);
  // The shared transform is stored once; only per-scale priors and tables
  // are added (the last scale reuses the base pair).
  for (std::size_t w = 0; w + 1 < vr.scales.size(); ++w) {
    put_prior(b, "vr" + std::to_string(w) + ".prior", vr.priors[w]);
    put_tables(b, "vr" + std::to_string(w) + ".table", vr.tables[w]);
  }
  return b;
}

inline VariableRateSet varrate_from_bundle(const ModelBundle& b) {
  const RunConfig cfg = config_from_json(Json::parse(b.config_json()));
  VariableRateSet vr;
  get_neural(b, "base", vr.base, 2, cfg.train.latent_channels, cfg.train.hidden);
  vr.scales = b.get_rvec("vr.scales");
  const std::size_t w_count = vr.scales.size();
  vr.priors.resize(w_count);
  vr.tables.resize(w_count);
  Rng init(0);
  for (std::size_t w = 0; w + 1 < w_count; ++w) {
    vr.priors[w].init(cfg.train.latent_channels, init);
    get_prior(b, "vr" + std::to_string(w) + ".prior", vr.priors[w]);
    vr.tables[w] = get_tables(b, "vr" + std::to_string(w) + ".table",
                              cfg.train.latent_channels);
  }
  vr.priors[w_count - 1] = vr.base.prior;
  vr.tables[w_count - 1] = vr.base.tables;
  return vr;
}

inline std::uint64_t transform_digest(nn::TransformWeights& w) {
  std::vector<nn::ParamRef> refs;
  collect(w, "t", refs);
  return nn::params_digest(refs);
}

inline std::uint64_t neural_model_digest(NeuralModel& m) {
  std::vector<nn::ParamRef> refs;
  collect(m.enc, "e", refs);
  collect(m.dec, "d", refs);
  collect(m.prior, "p", refs);
  return nn::params_digest(refs);
}

}  // namespace fhc
