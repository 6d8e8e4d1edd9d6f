// Acceptance suite: one runnable criterion per line,每 pinned tolerance in
// code. Run with no arguments for all criteria, or pass criterion numbers
// (e.g. "fhc_acceptance 1 3 5"). Exit code is the number of failures.
//
// Heavy artifacts (trained models) are built once and shared between
// criteria. Setting FHC_ACCEPT_CACHE=<dir> caches them on disk between runs;
// the default is a fresh build in a temporary directory.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "fhc/harness.hpp"
#include "fhc/report.hpp"

namespace fs = std::filesystem;
using namespace fhc;

namespace {

using Clock = std::chrono::steady_clock;

double wall_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Pinned desk-scale run configurations

constexpr std::size_t kTrainFrames = 256;
constexpr std::size_t kValFrames = 24;
constexpr std::size_t kTestFrames = 64;
constexpr int kNeuralEpochs = 150;
constexpr int kLatentEpochs = 70;
constexpr double kDeskLr = 2e-3;
constexpr std::uint64_t kDataSeed = 1;

RunConfig dl_cfg() {
  RunConfig cfg = default_config(Scenario::downlink);
  cfg.dataset.train = kTrainFrames;
  cfg.dataset.val = kValFrames;
  cfg.dataset.test = kTestFrames;
  cfg.dataset.seed = kDataSeed;
  cfg.train.lr = kDeskLr;
  cfg.threads = 0;
  return cfg;
}

RunConfig ul_cfg(double snr_db = 5.0) {
  RunConfig cfg = default_config(Scenario::uplink);
  cfg.channel.snr_db = snr_db;
  cfg.dataset.train = 192;
  cfg.dataset.val = 16;
  cfg.dataset.test = 48;
  cfg.dataset.seed = kDataSeed;
  cfg.train.lr = kDeskLr;
  cfg.threads = 0;
  return cfg;
}

struct FrameSets {
  std::vector<CVec> train_raw, test_raw;
  std::vector<PreparedFrame> train, val;
};

FrameSets make_sets(const RunConfig& cfg) {
  FrameSets fsets;
  const auto spec = cfg.frame_spec();
  fsets.train_raw =
      generate_frames(spec, cfg.channel, cfg.dataset.train, cfg.dataset.seed * 3, cfg.threads);
  auto val_raw =
      generate_frames(spec, cfg.channel, cfg.dataset.val, cfg.dataset.seed * 3 + 1, cfg.threads);
  fsets.test_raw =
      generate_frames(spec, cfg.channel, cfg.dataset.test, cfg.dataset.seed * 3 + 2, cfg.threads);
  fsets.train.resize(fsets.train_raw.size());
  const auto spec2 = cfg.frame_spec();
  parallel_for(fsets.train_raw.size(), cfg.threads, [&](std::size_t i) {
    fsets.train[i] = prepare_frame(fsets.train_raw[i], *spec2, cfg.resampler, cfg.scaling);
  });
  fsets.val.resize(val_raw.size());
  parallel_for(val_raw.size(), cfg.threads, [&](std::size_t i) {
    fsets.val[i] = prepare_frame(val_raw[i], *spec2, cfg.resampler, cfg.scaling);
  });
  return fsets;
}

// ---------------------------------------------------------------------------
// Artifact store (lazy training, optional on-disk cache)

struct Artifacts {
  fs::path cache_dir;
  bool cache_enabled = false;
  std::map<std::string, double> train_walls;

  std::map<std::uint64_t, NeuralModel> dl_neural;       // by training seed
  std::map<int, LatentModel> dl_latent_uq, dl_latent_vq;  // by q_bits (seed in key*16)
  std::map<std::string, NeuralModel> ul_neural;         // by tag
  RefinementStack ul_stack;
  bool ul_stack_ready = false;
  VariableRateSet ul_vr;
  bool ul_vr_ready = false;
  TrainLog last_latent_uq_log;

  std::map<std::string, FrameSets> sets;

  FrameSets& get_sets(const std::string& key, const RunConfig& cfg) {
    auto it = sets.find(key);
    if (it != sets.end()) return it->second;
    return sets.emplace(key, make_sets(cfg)).first->second;
  }

  Artifacts() {
    if (const char* dir = std::getenv("FHC_ACCEPT_CACHE")) {
      cache_dir = dir;
      fs::create_directories(cache_dir);
      cache_enabled = true;
    }
  }

  std::string cache_path(const std::string& name) const {
    return (cache_dir / (name + ".cprb")).string();
  }

  NeuralModel train_neural(const RunConfig& cfg, FrameSets& fsets, int epochs,
                           const std::string& name) {
    if (cache_enabled && fs::exists(cache_path(name))) {
      std::printf("    [cache] %s\n", name.c_str());
      return neural_from_bundle(ModelBundle::load(cache_path(name)));
    }
    const auto t0 = Clock::now();
    NeuralTrainer tr(cfg);
    tr.run(fsets.train, fsets.val, epochs, false);
    NeuralModel m = tr.finish(fsets.train);
    train_walls[name] = wall_s(t0);
    std::printf("    trained %s in %.0f s (val D %.3e, R %.3f)\n", name.c_str(),
                train_walls[name], tr.log.epochs.back().val_distortion,
                tr.log.epochs.back().val_rate);
    if (cache_enabled) {
      RunConfig c = cfg;
      ModelBundle b = bundle_neural(m, c);
      b.save(cache_path(name));
    }
    return m;
  }

  LatentModel train_latent(const RunConfig& cfg, FrameSets& fsets, bool vq, int epochs,
                           const std::string& name, TrainLog* log_out = nullptr) {
    if (cache_enabled && fs::exists(cache_path(name))) {
      std::printf("    [cache] %s\n", name.c_str());
      return latent_from_bundle(ModelBundle::load(cache_path(name)));
    }
    const auto t0 = Clock::now();
    LatentTrainer tr(cfg, vq);
    tr.run(fsets.train, fsets.val, epochs, false);
    LatentModel m = tr.finish();
    if (log_out) *log_out = tr.log;
    train_walls[name] = wall_s(t0);
    std::printf("    trained %s in %.0f s (val D %.3e)\n", name.c_str(),
                train_walls[name], tr.log.epochs.back().val_distortion);
    if (cache_enabled) {
      RunConfig c = cfg;
      ModelBundle b = bundle_latent(m, c);
      b.save(cache_path(name));
    }
    return m;
  }
};

Artifacts art;

// ---------------------------------------------------------------------------
// Criterion 1: filter floor

bool crit1(std::string& detail) {
  const auto t0 = Clock::now();
  RunConfig cfg = dl_cfg();
  const auto spec = cfg.frame_spec();
  auto frames = generate_frames(spec, cfg.channel, 200, 77, cfg.threads);
  EvalAccumulator acc(cfg);
  FrameBitstream dummy;
  dummy.n_prime = static_cast<std::uint16_t>(cfg.n_prime());
  dummy.n_t = 1;
  dummy.q_s = 8;
  dummy.t_factors = {1};
  for (const auto& raw : frames) {
    const CVec rt = interpolate(decimate(raw, cfg.resampler), cfg.resampler);
    acc.add(raw, rt, dummy);
  }
  EvalResult r = acc.finish();
  const double w = wall_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "round-trip EVM %.2f dB (gate >= 35), %.1f s (gate < 60)",
                r.evm_db, w);
  detail = buf;
  return r.evm_db >= 35.0 && w < 60.0;
}

// Criterion 2: Proposition-1 statistics

bool crit2(std::string& detail) {
  const auto t0 = Clock::now();
  RunConfig cfg = dl_cfg();
  CovarianceReport rep = covariance_check(cfg, 20000);
  const bool herm = max_hermitian_deviation(rep.empirical) < 1e-9;
  const bool psd = is_psd_within(rep.analytic, 1e-9 * rep.analytic.at(0, 0).real());
  const double w = wall_s(t0);
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "rel Frobenius %.4f (gate < 0.05), |mean| (%.2e, %.2e) vs bound %.2e, "
                "Hermitian %s, PSD %s, %.1f s (gate < 300)",
                rep.rel_frobenius_error, std::abs(rep.grand_mean.real()),
                std::abs(rep.grand_mean.imag()), rep.mean_bound, herm ? "ok" : "BAD",
                psd ? "ok" : "BAD", w);
  detail = buf;
  return rep.rel_frobenius_error < 0.05 && rep.mean_consistent && herm && psd &&
         w < 300.0;
}

// Criterion 3: range coder

bool crit3(std::string& detail) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::vector<double> probs(257);
  double total = 0.0;
  for (auto& p : probs) {
    p = std::pow(rng.uniform(), 2.5) + 1e-8;
    total += p;
  }
  for (auto& p : probs) p /= total;
  // Quantize to coder frequencies (floored at 1/2^16, renormalized).
  std::vector<std::uint32_t> freq(probs.size());
  std::uint64_t ftot = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    freq[i] = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(std::llround(probs[i] * kFreqTotal)));
    ftot += freq[i];
  }
  while (ftot != kFreqTotal) {
    auto big = std::max_element(freq.begin(), freq.end());
    if (ftot > kFreqTotal) { --*big; --ftot; } else { ++*big; ++ftot; }
  }
  std::vector<std::uint32_t> cum(freq.size() + 1, 0);
  for (std::size_t i = 0; i < freq.size(); ++i) cum[i + 1] = cum[i] + freq[i];

  const std::size_t n = 1000000;
  std::vector<std::uint32_t> syms(n);
  for (auto& s : syms) {
    const auto target = static_cast<std::uint32_t>(rng.below(kFreqTotal));
    s = static_cast<std::uint32_t>(
        std::upper_bound(cum.begin(), cum.end(), target) - cum.begin() - 1);
  }
  RangeEncoder enc;
  for (auto s : syms) enc.encode(cum[s], freq[s]);
  const auto payload = enc.finish();
  RangeDecoder dec(payload);
  bool lossless = true;
  for (std::size_t i = 0; i < n && lossless; ++i) {
    const std::uint32_t target = dec.decode_target();
    const auto s = static_cast<std::uint32_t>(
        std::upper_bound(cum.begin(), cum.end(), target) - cum.begin() - 1);
    if (s != syms[i]) lossless = false;
    dec.consume(cum[s], freq[s]);
  }
  double info = 0.0;  // Eq.(17) right-hand side with the table probabilities
  for (auto s : syms) info -= std::log2(probs[s]);
  const double realized = 8.0 * static_cast<double>(payload.size());
  const double bound = info + 32.0 + 0.05 * static_cast<double>(n);
  const double w = wall_s(t0);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "lossless %s, %.0f bits vs bound %.0f (info %.0f), %.1f s (gate < 60)",
                lossless ? "yes" : "NO", realized, bound, info, w);
  detail = buf;
  return lossless && realized < bound && w < 60.0;
}

// Criterion 4: Lloyd-Max vs exhaustive oracle

bool crit4(std::string& detail) {
  const auto t0 = Clock::now();
  Rng rng(31415);
  RVec samples(150000);
  for (auto& v : samples) v = rng.normal();
  LloydStats st;
  ScalarCodebook cb;
  bool monotone = true;
  try {
    cb = train_scalar(samples, 2, 300, 1e-12, &st);  // throws if distortion rises
  } catch (const NumericError&) {
    monotone = false;
  }
  double lloyd_mse = 0.0;
  for (double x : samples) {
    const double d = x - cb.levels[nearest_level(cb.levels, x)];
    lloyd_mse += d * d;
  }
  lloyd_mse /= static_cast<double>(samples.size());

  // Exhaustive symmetric-threshold search on a 1e-3 grid: thresholds
  // {-t, 0, t}, levels are conditional centroids.
  RVec sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  RVec ps(n + 1, 0.0), ps2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i + 1] = ps[i] + sorted[i];
    ps2[i + 1] = ps2[i] + sorted[i] * sorted[i];
  }
  auto cell = [&](std::size_t lo, std::size_t hi) {
    if (hi <= lo) return 0.0;
    const double cnt = static_cast<double>(hi - lo);
    const double c = (ps[hi] - ps[lo]) / cnt;
    return (ps2[hi] - ps2[lo]) - c * (ps[hi] - ps[lo]);
  };
  auto idx = [&](double x) {
    return static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
  };
  const std::size_t zero = idx(0.0);
  double oracle = std::numeric_limits<double>::infinity();
  for (double t = 0.001; t < 4.0; t += 0.001) {
    const std::size_t a = idx(-t), b = idx(t);
    oracle = std::min(oracle, (cell(0, a) + cell(a, zero) + cell(zero, b) + cell(b, n)) /
                                  static_cast<double>(n));
  }
  const double w = wall_s(t0);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "Lloyd MSE %.6f vs oracle %.6f (gate <= 1.02x), monotone %s, %.1f s",
                lloyd_mse, oracle, monotone ? "yes" : "NO", w);
  detail = buf;
  return monotone && lloyd_mse <= 1.02 * oracle && w < 60.0;
}

// Criterion 5: gradient suite

bool crit5(std::string& detail) {
  const auto t0 = Clock::now();
  RunConfig cfg = default_config(Scenario::downlink);
  cfg.n_fft = 64;
  cfg.n_sym = 16;
  cfg.n_cp = 8;
  cfg.mod_order = 16;
  cfg.resampler = make_resampler_spec(5, 8, 81, 8.0);
  cfg.scaling = make_scaling_config(40, 8);
  cfg.threads = 1;
  const auto spec = cfg.frame_spec();
  const CVec raw = generate_frame(spec, cfg.channel, 4242, 0);
  const PreparedFrame prep = prepare_frame(raw, *spec, cfg.resampler, cfg.scaling);
  int checked = 0, failed = 0;
  const char* block = "";
  auto check = [&](double numeric, double analytic, double floor_abs) {
    ++checked;
    if (std::abs(numeric - analytic) >
        1e-5 * std::max(std::abs(numeric), std::abs(analytic)) + floor_abs) {
      ++failed;
      std::printf("    FD mismatch [%s]: numeric %.7e analytic %.7e\n", block,
                  numeric, analytic);
    }
  };

  {  // dense + gated recurrence through the encoder/decoder graph, eps 1e-5
    block = "autoencoder";
    Rng init(1);
    nn::TransformWeights enc, dec;
    enc.init(2, 2, 4, init);
    dec.init(2, 2, 4, init);
    auto loss_at = [&]() {
      nn::TransformTape et, dt;
      nn::Mat z = nn::transform_forward(enc, prep.S, et);
      const nn::Mat s_hat = nn::transform_forward(dec, z, dt);
      return distortion_only(s_hat, prep, *spec, cfg.resampler, cfg.scaling);
    };
    nn::TransformTape et, dt;
    nn::Mat z = nn::transform_forward(enc, prep.S, et);
    nn::Mat s_hat = nn::transform_forward(dec, z, dt);
    nn::Mat g_s_hat(s_hat.rows, s_hat.cols);
    distortion_and_grad(s_hat, prep, *spec, cfg.resampler, cfg.scaling, g_s_hat, 1.0);
    nn::TransformGrads ge, gd;
    ge.match(enc);
    gd.match(dec);
    nn::Mat gz = nn::transform_backward(dec, z, dt, g_s_hat, gd);
    nn::transform_backward(enc, prep.S, et, gz, ge);
    std::vector<nn::ParamRef> prefs, grefs;
    collect(enc, "e", prefs);
    collect(dec, "d", prefs);
    collect(ge, "e", grefs);
    collect(gd, "d", grefs);
    Rng pick(2);
    const double eps = 1e-5;
    for (int probe = 0; probe < 48; ++probe) {
      const std::size_t pi = pick.below(prefs.size());
      nn::Mat& pm = *prefs[pi].m;
      const std::size_t ei = pick.below(pm.size());
      const double saved = pm.a[ei];
      pm.a[ei] = saved + eps;
      const double lp = loss_at();
      pm.a[ei] = saved - eps;
      const double lm = loss_at();
      pm.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), grefs[pi].m->a[ei], 1e-9);
    }
  }

  {  // rate term Eq.(21): parameters and latents, eps 1e-4 (CDF-difference noise)
    block = "rate";
    Rng init(3);
    FactorizedModel prior;
    prior.init(2, init);
    // Probes stay inside the model's typical support: near the density floor
    // the CDF-difference evaluation noise swamps any finite-difference
    // oracle, while the analytic gradient path is the same code either way.
    nn::Mat z(24, 2);
    for (auto& v : z.a) v = init.uniform(-1.5, 1.5);
    FactorizedGrads g;
    g.match(prior);
    nn::Mat gz(z.rows, z.cols);
    rate_estimate_grad(prior, z, g, gz);
    std::vector<nn::ParamRef> prefs, grefs;
    collect(prior, "p", prefs);
    collect(g, "p", grefs);
    Rng pick(4);
    // Balances evaluation noise against the third-derivative truncation of
    // the log-CDF-difference terms.
    const double eps = 1e-4;
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t pi = pick.below(prefs.size());
      nn::Mat& pm = *prefs[pi].m;
      const std::size_t ei = pick.below(pm.size());
      const double saved = pm.a[ei];
      pm.a[ei] = saved + eps;
      const double lp = rate_estimate(prior, z).bits_per_element;
      pm.a[ei] = saved - eps;
      const double lm = rate_estimate(prior, z).bits_per_element;
      pm.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), grefs[pi].m->a[ei], 2e-6);
    }
    for (int probe = 0; probe < 16; ++probe) {
      const std::size_t ei = pick.below(z.size());
      const double saved = z.a[ei];
      z.a[ei] = saved + eps;
      const double lp = rate_estimate(prior, z).bits_per_element;
      z.a[ei] = saved - eps;
      const double lm = rate_estimate(prior, z).bits_per_element;
      z.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), gz.a[ei], 2e-6);
    }
  }

  {  // full R-D training graph Eq.(20) with fixed relaxation noise
    block = "rd-loss";
    Rng init(5);
    NeuralModel m;
    m.enc.init(2, 2, 4, init);
    m.dec.init(2, 2, 4, init);
    m.prior.init(2, init);
    const double lambda = 50.0;
    const Rng noise_base(99);
    nn::TransformGrads ge, gd;
    ge.match(m.enc);
    gd.match(m.dec);
    FactorizedGrads gp;
    gp.match(m.prior);
    Rng noise0 = noise_base;
    neural_loss_grad(m, ge, gd, gp, prep, *spec, cfg.resampler, cfg.scaling, lambda,
                     noise0);
    auto loss_at = [&]() {
      Rng noise = noise_base;
      nn::TransformTape et, dt;
      nn::Mat z = nn::transform_forward(m.enc, prep.S, et);
      nn::Mat zn(z.rows, z.cols);
      for (std::size_t i = 0; i < z.size(); ++i)
        zn.a[i] = z.a[i] + noise.uniform(-0.5, 0.5);
      const nn::Mat s_hat = nn::transform_forward(m.dec, zn, dt);
      return lambda * distortion_only(s_hat, prep, *spec, cfg.resampler, cfg.scaling) +
             rate_estimate(m.prior, zn).bits_per_element;
    };
    std::vector<nn::ParamRef> prefs, grefs;
    collect(m.enc, "e", prefs);
    collect(m.dec, "d", prefs);
    collect(m.prior, "p", prefs);
    collect(ge, "e", grefs);
    collect(gd, "d", grefs);
    collect(gp, "p", grefs);
    Rng pick(6);
    const double eps = 1e-4;
    for (int probe = 0; probe < 48; ++probe) {
      const std::size_t pi = pick.below(prefs.size());
      nn::Mat& pm = *prefs[pi].m;
      const std::size_t ei = pick.below(pm.size());
      const double saved = pm.a[ei];
      pm.a[ei] = saved + eps;
      const double lp = loss_at();
      pm.a[ei] = saved - eps;
      const double lm = loss_at();
      pm.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), grefs[pi].m->a[ei], 2e-6);
    }
  }

  {  // both latent quantizer losses
    block = "latent";
    Rng init(7);
    LatentModel m;
    m.enc.init(2, 2, 4, init);
    m.dec.init(2, 2, 4, init);
    m.q_bits = 3;
    // Uniform: STE identity is structural; check the decoder-side gradient.
    nn::TransformTape et;
    nn::Mat z = nn::transform_forward(m.enc, prep.S, et);
    nn::Mat z_hat = uniform_latent_quantize(z, m.q_bits);
    {
      nn::TransformTape dt;
      nn::Mat s_hat = nn::transform_forward(m.dec, z_hat, dt);
      nn::Mat g_s_hat(s_hat.rows, s_hat.cols);
      distortion_and_grad(s_hat, prep, *spec, cfg.resampler, cfg.scaling, g_s_hat, 1.0);
      nn::TransformGrads gd;
      gd.match(m.dec);
      nn::transform_backward(m.dec, z_hat, dt, g_s_hat, gd);
      auto loss_at = [&]() {
        nn::TransformTape dt2;
        const nn::Mat s2 = nn::transform_forward(m.dec, z_hat, dt2);
        return distortion_only(s2, prep, *spec, cfg.resampler, cfg.scaling);
      };
      std::vector<nn::ParamRef> prefs, grefs;
      collect(m.dec, "d", prefs);
      collect(gd, "d", grefs);
      Rng pick(8);
      const double eps = 1e-5;
      for (int probe = 0; probe < 24; ++probe) {
        const std::size_t pi = pick.below(prefs.size());
        nn::Mat& pm = *prefs[pi].m;
        const std::size_t ei = pick.below(pm.size());
        const double saved = pm.a[ei];
        pm.a[ei] = saved + eps;
        const double lp = loss_at();
        pm.a[ei] = saved - eps;
        const double lm = loss_at();
        pm.a[ei] = saved;
        check((lp - lm) / (2.0 * eps), grefs[pi].m->a[ei], 1e-9);
      }
    }
    // VQ: codebook and commitment terms with frozen assignments.
    LatentVqCodebook cb = make_latent_vq_codebook(2, 2);
    for (auto& v : cb.e.a) v = init.uniform(-1.0, 1.0);
    VqResult q = vq_latent_quantize(z, cb);
    nn::Mat g_cb(cb.e.rows, cb.e.cols);
    nn::Mat g_z(z.rows, z.cols);
    vq_codebook_term_grad(z, q, cb, g_cb);
    vq_commitment_term_grad(z, q, 1.0, g_z);
    Rng pick(9);
    const double eps = 1e-6;
    for (int probe = 0; probe < 16; ++probe) {
      const std::size_t ei = pick.below(z.size());
      const double saved = z.a[ei];
      auto commit = [&]() {
        double l = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
          const double d = z.a[j] - q.z_hat.a[j];
          l += d * d;
        }
        return l;
      };
      z.a[ei] = saved + eps;
      const double lp = commit();
      z.a[ei] = saved - eps;
      const double lm = commit();
      z.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), g_z.a[ei], 1e-9);
    }
    for (int probe = 0; probe < 16; ++probe) {
      const std::size_t ri = pick.below(static_cast<std::size_t>(cb.e.rows));
      const std::size_t ci = pick.below(2);
      auto cbterm = [&]() {
        double l = 0.0;
        const auto b = static_cast<std::size_t>(cb.block_dim);
        for (std::size_t i = 0; i < q.indices.size(); ++i) {
          const double* er = cb.e.row(static_cast<int>(q.indices[i]));
          for (std::size_t j = 0; j < b; ++j) {
            const double d = er[j] - z.a[i * b + j];
            l += d * d;
          }
        }
        return l;
      };
      const double saved = cb.e.at(static_cast<int>(ri), static_cast<int>(ci));
      cb.e.at(static_cast<int>(ri), static_cast<int>(ci)) = saved + eps;
      const double lp = cbterm();
      cb.e.at(static_cast<int>(ri), static_cast<int>(ci)) = saved - eps;
      const double lm = cbterm();
      cb.e.at(static_cast<int>(ri), static_cast<int>(ci)) = saved;
      check((lp - lm) / (2.0 * eps), g_cb.at(static_cast<int>(ri), static_cast<int>(ci)),
            1e-9);
    }
  }

  {  // refinement loss Eq.(24): layer-2 parameters, frozen base
    block = "refinement";
    Rng init(10);
    NeuralModel layer;
    layer.enc.init(4, 2, 4, init);
    layer.dec.init(2, 2, 4, init);
    layer.prior.init(2, init);
    nn::Mat prev(prep.S.rows, 2);
    for (auto& v : prev.a) v = init.uniform(-0.5, 0.5);
    const double lambda = 50.0;
    const Rng noise_base(55);
    nn::TransformGrads ge, gd;
    ge.match(layer.enc);
    gd.match(layer.dec);
    FactorizedGrads gp;
    gp.match(layer.prior);
    Rng noise0 = noise_base;
    refinement_loss_grad(layer, ge, gd, gp, prep, prev, *spec, cfg.resampler,
                         cfg.scaling, lambda, noise0);
    auto loss_at = [&]() {
      Rng noise = noise_base;
      nn::TransformTape et, dt;
      const nn::Mat enc_in = stack_refinement_input(prep.S, prev);
      nn::Mat z = nn::transform_forward(layer.enc, enc_in, et);
      nn::Mat zn(z.rows, z.cols);
      for (std::size_t i = 0; i < z.size(); ++i)
        zn.a[i] = z.a[i] + noise.uniform(-0.5, 0.5);
      const nn::Mat res = nn::transform_forward(layer.dec, zn, dt);
      nn::Mat s_hat(res.rows, res.cols);
      for (std::size_t i = 0; i < s_hat.size(); ++i) s_hat.a[i] = prev.a[i] + res.a[i];
      return lambda * distortion_only(s_hat, prep, *spec, cfg.resampler, cfg.scaling) +
             rate_estimate(layer.prior, zn).bits_per_element;
    };
    std::vector<nn::ParamRef> prefs, grefs;
    collect(layer.enc, "e", prefs);
    collect(layer.dec, "d", prefs);
    collect(layer.prior, "p", prefs);
    collect(ge, "e", grefs);
    collect(gd, "d", grefs);
    collect(gp, "p", grefs);
    Rng pick(11);
    const double eps = 1e-4;
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t pi = pick.below(prefs.size());
      nn::Mat& pm = *prefs[pi].m;
      const std::size_t ei = pick.below(pm.size());
      const double saved = pm.a[ei];
      pm.a[ei] = saved + eps;
      const double lp = loss_at();
      pm.a[ei] = saved - eps;
      const double lm = loss_at();
      pm.a[ei] = saved;
      check((lp - lm) / (2.0 * eps), grefs[pi].m->a[ei], 2e-6);
    }
  }

  const double w = wall_s(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d finite-difference probes, %d failed, %.1f s (gate < 300)",
                checked, failed, w);
  detail = buf;
  return failed == 0 && w < 300.0;
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7 share the downlink trained models.

NeuralModel& dl_neural_model(std::uint64_t seed) {
  auto it = art.dl_neural.find(seed);
  if (it != art.dl_neural.end()) return it->second;
  RunConfig cfg = dl_cfg();
  cfg.train.lambda = 500.0;
  cfg.train.seed = seed;
  FrameSets& fsets = art.get_sets("dl", cfg);
  NeuralModel m = art.train_neural(cfg, fsets, kNeuralEpochs,
                                   "dl-neural-l500-s" + std::to_string(seed));
  return art.dl_neural.emplace(seed, std::move(m)).first->second;
}

bool crit6(std::string& detail) {
  RunConfig cfg = dl_cfg();
  cfg.train.lambda = 500.0;
  cfg.train.seed = 1;
  NeuralModel& m = dl_neural_model(1);
  FrameSets& fsets = art.get_sets("dl", cfg);
  // Held-out frames: the test split, never seen in training.
  const auto spec = cfg.frame_spec();
  double est = 0.0;
  Rng noise(424242);
  std::size_t count = 0;
  for (const auto& raw : fsets.test_raw) {
    PreparedFrame p = prepare_frame(raw, *spec, cfg.resampler, cfg.scaling);
    nn::TransformTape tape;
    nn::Mat z = nn::transform_forward(m.enc, p.S, tape);
    nn::Mat zn(z.rows, z.cols);
    for (std::size_t i = 0; i < z.size(); ++i) zn.a[i] = z.a[i] + noise.uniform(-0.5, 0.5);
    est += rate_estimate(m.prior, zn).bits_per_element;
    ++count;
  }
  est /= static_cast<double>(count);
  EvalResult r = evaluate_neural(cfg, m, fsets.test_raw);
  const double realized = r.bits_per_element -
                          8.0 / (2.0 * static_cast<double>(cfg.n_prime()));  // minus b_t
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "estimate %.4f vs realized %.4f bits/element (gate |diff| < 0.1)", est,
                realized);
  detail = buf;
  return std::abs(est - realized) < 0.1;
}

bool crit7(std::string& detail) {
  const auto t0 = Clock::now();
  RunConfig cfg = dl_cfg();
  FrameSets& fsets = art.get_sets("dl", cfg);
  // Classical scalar-quantizer curve over Q; the comparison point for each
  // neural model is the highest-rate SQ point at equal-or-lower bits/element.
  std::vector<EvalResult> sq_curve;
  for (int q = 2; q <= 7; ++q) {
    ScalarCodebook sq = train_scalar_on_frames(cfg, fsets.train_raw, q);
    sq_curve.push_back(evaluate_classical_sq(cfg, sq, fsets.test_raw));
    std::printf("    SQ Q=%d: %.4f bits, EVM %.4f%%\n", q,
                sq_curve.back().bits_per_element, sq_curve.back().evm_pct);
  }
  auto sq_at_or_below = [&](double bits) -> const EvalResult* {
    const EvalResult* best = nullptr;
    for (const auto& r : sq_curve)
      if (r.bits_per_element <= bits + 1e-9 &&
          (!best || r.bits_per_element > best->bits_per_element))
        best = &r;
    return best;
  };

  int pass_seeds = 0;
  double max_train_wall = 0.0;
  bool uq_loss_drop_ok = false;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    NeuralModel& nm = dl_neural_model(seed);
    const EvalResult nr = evaluate_neural(cfg, nm, fsets.test_raw);

    bool latent_ok = true;
    for (int q : {4, 5}) {
      RunConfig lcfg = cfg;
      lcfg.train.q_bits = q;
      lcfg.train.block = 2;
      lcfg.train.seed = seed;
      lcfg.train.warmup_steps = 120;
      lcfg.train.reseed_interval = 200;
      TrainLog uq_log;
      LatentModel uq_m =
          art.train_latent(lcfg, fsets, false, kLatentEpochs,
                           "dl-uq-q" + std::to_string(q) + "-s" + std::to_string(seed),
                           &uq_log);
      LatentModel vq_m =
          art.train_latent(lcfg, fsets, true, kLatentEpochs,
                           "dl-vq-q" + std::to_string(q) + "-s" + std::to_string(seed));
      const EvalResult uq_r = evaluate_latent(lcfg, uq_m, fsets.test_raw);
      const EvalResult vq_r = evaluate_latent(lcfg, vq_m, fsets.test_raw);
      std::printf("    seed %llu Q=%d: uq %.4f%%, vq %.4f%%\n",
                  static_cast<unsigned long long>(seed), q, uq_r.evm_pct, vq_r.evm_pct);
      if (!(vq_r.evm_pct < uq_r.evm_pct)) latent_ok = false;
      if (seed == 1 && q == 4 && !uq_log.epochs.empty()) {
        // latent-uq training property: validation loss falls >= 30% from epoch 1.
        uq_loss_drop_ok = uq_log.epochs.back().val_distortion <=
                          0.7 * uq_log.epochs.front().val_distortion;
      }
    }
    const EvalResult* sq_ref = sq_at_or_below(nr.bits_per_element);
    const bool neural_ok = sq_ref != nullptr && nr.evm_pct < sq_ref->evm_pct;
    std::printf("    seed %llu neural: %.4f bits EVM %.4f%% vs SQ(%.4f bits, %.4f%%) -> %s\n",
                static_cast<unsigned long long>(seed), nr.bits_per_element, nr.evm_pct,
                sq_ref ? sq_ref->bits_per_element : 0.0, sq_ref ? sq_ref->evm_pct : 0.0,
                neural_ok && latent_ok ? "ordered" : "NOT ordered");
    if (neural_ok && latent_ok) ++pass_seeds;
  }
  for (const auto& [name, wall] : art.train_walls)
    if (name.rfind("dl-neural", 0) == 0) max_train_wall = std::max(max_train_wall, wall);
  const double w = wall_s(t0);
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "ordering held for %d of 5 seeds (gate >= 4); uq val-loss drop >= 30%%: %s; "
                "max single training %.0f s (gate <= 7200); criterion wall %.0f s",
                pass_seeds, uq_loss_drop_ok ? "yes" : "no*", max_train_wall, w);
  detail = buf;
  // The 30% drop is the latent_codecs training-property invariant; when the
  // models come from the disk cache the log is unavailable and it is skipped.
  const bool drop_gate = art.cache_enabled ? true : uq_loss_drop_ok;
  return pass_seeds >= 4 && drop_gate && max_train_wall <= 7200.0;
}

// Criterion 8: CR accounting

bool crit8(std::string& detail) {
  RunConfig cfg = dl_cfg();
  FrameSets& fsets = art.get_sets("dl", cfg);
  ScalarCodebook sq = train_scalar_on_frames(cfg, fsets.train_raw, 4);
  const auto spec = cfg.frame_spec();
  bool exact = true;
  for (std::size_t i = 0; i < 8; ++i) {
    EncodedFrame ef = encode_classical_sq(fsets.test_raw[i], sq, *spec, cfg.resampler,
                                          cfg.scaling);
    // Header-excluded stream bits must match Eq. (5)'s accounting exactly.
    const std::uint64_t measured = ef.bs.content_bits();
    const std::uint64_t formula = 2ull * 4ull * cfg.n_prime() +
                                  8ull * ef.bs.t_factors.size();
    if (measured != formula) exact = false;
  }
  const double cr = compression_ratio(2.0 * 4.0 * 320.0, 320, 1, 8, 5, 8);
  const bool worked = cr == 1605.0 / 9600.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "bit accounting exact: %s; CR(Q=4) = %.10f == 1605/9600: %s",
                exact ? "yes" : "NO", cr, worked ? "yes" : "NO");
  detail = buf;
  return exact && worked;
}

// ---------------------------------------------------------------------------
// Criteria 9-11: uplink artifacts

RefinementStack& ul_refinement() {
  if (art.ul_stack_ready) return art.ul_stack;
  RunConfig cfg = ul_cfg();
  cfg.refine_lambdas = {1e2, 1e3, 1e4};
  FrameSets& fsets = art.get_sets("ul", cfg);
  art.ul_stack.lambdas = cfg.refine_lambdas;

  const std::string base_name = "ul-neural-l100-s1";
  RunConfig base_cfg = cfg;
  base_cfg.train.lambda = 1e2;
  base_cfg.train.seed = 1;
  art.ul_stack.layers.push_back(art.train_neural(base_cfg, fsets, 100, base_name));
  art.ul_neural["snr5-l100"] = art.ul_stack.layers[0];

  for (std::size_t l = 1; l < cfg.refine_lambdas.size(); ++l) {
    const std::string name = "ul-refine-l" + std::to_string(l);
    if (art.cache_enabled && fs::exists(art.cache_path(name))) {
      std::printf("    [cache] %s\n", name.c_str());
      NeuralModel m;
      get_neural(ModelBundle::load(art.cache_path(name)), "model", m, 4, 2, 32);
      art.ul_stack.layers.push_back(std::move(m));
      continue;
    }
    const auto t0 = Clock::now();
    RunConfig lcfg = cfg;
    lcfg.train.seed = 1;
    NeuralModel layer = train_refinement_layer(lcfg, art.ul_stack, l, fsets.train,
                                               fsets.val, 60, cfg.refine_lambdas[l],
                                               false);
    std::printf("    trained %s in %.0f s\n", name.c_str(), wall_s(t0));
    if (art.cache_enabled) {
      ModelBundle b;
      b.config_json() = config_to_json(lcfg).dump(2);
      put_neural(b, "model", layer);
      b.save(art.cache_path(name));
    }
    art.ul_stack.layers.push_back(std::move(layer));
  }
  art.ul_stack_ready = true;
  return art.ul_stack;
}

bool crit9(std::string& detail) {
  RunConfig cfg = ul_cfg();
  RefinementStack& stack = ul_refinement();
  FrameSets& fsets = art.get_sets("ul", cfg);

  double evm_db[3];
  for (std::size_t l = 1; l <= 3; ++l)
    evm_db[l - 1] = evaluate_refinement(cfg, stack, l, fsets.test_raw).evm_db;
  const bool monotone = evm_db[0] < evm_db[1] && evm_db[1] < evm_db[2];

  // Prefix decode of layer 1 must be bit-identical to the standalone base
  // model (same parameters, scheme-4 stream).
  const auto spec = cfg.frame_spec();
  NeuralModel base = stack.layers[0];
  bool identical = true;
  for (std::size_t i = 0; i < 6; ++i) {
    auto layered = refine_encode(fsets.test_raw[i], stack, 1, *spec, cfg.resampler,
                                 cfg.scaling);
    EncodedFrame plain = encode_neural(fsets.test_raw[i], base, *spec, cfg.resampler,
                                       cfg.scaling);
    if (layered[0].bs.payload != plain.bs.payload ||
        layered[0].s_hat.a != plain.s_hat.a)
      identical = false;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "EVM per layer: %.2f / %.2f / %.2f dB (strictly increasing: %s); "
                "layer-1 prefix bit-identical: %s",
                evm_db[0], evm_db[1], evm_db[2], monotone ? "yes" : "NO",
                identical ? "yes" : "NO");
  detail = buf;
  return monotone && identical;
}

bool crit10(std::string& detail) {
  RunConfig cfg = ul_cfg();
  cfg.train.lambda = 5e3;
  cfg.train.seed = 1;
  cfg.varrate_scales = {0.1, 0.25, 0.5, 0.9, 1.0};
  cfg.varrate_epochs = 25;
  FrameSets& fsets = art.get_sets("ul", cfg);
  if (!art.ul_vr_ready) {
    NeuralModel base = art.train_neural(cfg, fsets, 120, "ul-neural-l5000-s1");
    art.ul_vr = build_varrate_set(cfg, std::move(base), fsets.train, false);
    art.ul_vr_ready = true;
  }
  VariableRateSet& vr = art.ul_vr;

  std::vector<double> rates;
  for (std::size_t w = 0; w < vr.scales.size(); ++w) {
    EvalResult r = evaluate_neural(cfg, vr.base, fsets.test_raw, vr.scales[w],
                                   static_cast<std::uint8_t>(w), &vr.tables[w]);
    rates.push_back(r.bits_per_element);
  }
  bool nondecreasing = true;
  for (std::size_t w = 1; w < rates.size(); ++w)
    if (rates[w] < rates[w - 1] - 1e-9) nondecreasing = false;

  // a = 1 payload bit-identical to the base model.
  const auto spec = cfg.frame_spec();
  bool identical = true;
  for (std::size_t i = 0; i < 6; ++i) {
    EncodedFrame plain = encode_neural(fsets.test_raw[i], vr.base, *spec, cfg.resampler,
                                       cfg.scaling);
    EncodedFrame scaled = encode_neural(fsets.test_raw[i], vr.base, *spec, cfg.resampler,
                                        cfg.scaling, 1.0, 4, &vr.tables.back());
    if (plain.bs.payload != scaled.bs.payload || plain.bs.t_factors != scaled.bs.t_factors)
      identical = false;
  }

  // Support shrinkage: the a=0.1 table width within a factor 2 of 0.1x the
  // a=1 width.
  double w1 = 0.0, ww = 0.0;
  for (int c = 0; c < 2; ++c) {
    w1 += static_cast<double>(vr.tables.front()[static_cast<std::size_t>(c)].width());
    ww += static_cast<double>(vr.tables.back()[static_cast<std::size_t>(c)].width());
  }
  const double ratio = w1 / ww;  // expect about 0.1
  const bool shrink = ratio >= 0.05 && ratio <= 0.2;

  // One stored transform: bundle inspection counts transform parameters once.
  RunConfig bc = cfg;
  ModelBundle b = bundle_varrate(vr, bc);
  std::size_t transform_elems = 0;
  for (const auto& a : b.arrays())
    if (a.dtype == Dtype::f64 && (a.name.find(".enc.") != std::string::npos ||
                                  a.name.find(".dec.") != std::string::npos))
      transform_elems += a.elements();
  std::vector<nn::ParamRef> refs;
  collect(vr.base.enc, "e", refs);
  collect(vr.base.dec, "d", refs);
  const std::size_t one_copy = nn::param_count(refs);
  const bool single = transform_elems == one_copy;

  char buf[280];
  std::snprintf(buf, sizeof(buf),
                "rates %.3f/%.3f/%.3f/%.3f/%.3f nondecreasing: %s; a=1 bit-identical: %s; "
                "support ratio %.3f in [0.05,0.2]: %s; transform stored once (%zu f64): %s",
                rates[0], rates[1], rates[2], rates[3], rates[4],
                nondecreasing ? "yes" : "NO", identical ? "yes" : "NO", ratio,
                shrink ? "yes" : "NO", transform_elems, single ? "yes" : "NO");
  detail = buf;
  return nondecreasing && identical && shrink && single;
}

bool crit11(std::string& detail) {
  RefinementStack& stack = ul_refinement();  // provides the 5 dB lambda=1e2 model
  NeuralModel& m5 = art.ul_neural["snr5-l100"];
  (void)stack;
  bool ok = true;
  char buf[300];
  std::string lines;
  for (double snr : {-5.0, 15.0}) {
    RunConfig mcfg = ul_cfg(snr);
    mcfg.train.lambda = 1e2;
    mcfg.train.seed = 1;
    FrameSets& msets = art.get_sets("ul-snr" + std::to_string((int)snr), mcfg);
    NeuralModel matched = art.train_neural(
        mcfg, msets, 100, "ul-neural-l100-snr" + std::to_string((int)snr));
    const EvalResult matched_r = evaluate_neural(mcfg, matched, msets.test_raw);
    const EvalResult mismatched_r = evaluate_neural(mcfg, m5, msets.test_raw);
    const double degradation = matched_r.evm_db - mismatched_r.evm_db;
    std::snprintf(buf, sizeof(buf), "snr %+g dB: matched %.2f dB vs 5dB-trained %.2f dB (delta %.2f); ",
                  snr, matched_r.evm_db, mismatched_r.evm_db, degradation);
    lines += buf;
    if (degradation > 3.0) ok = false;
  }
  detail = lines + (ok ? "gate <= 3 dB" : "GATE EXCEEDED (3 dB)");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "filter floor (decimate-interpolate EVM >= 35 dB)", crit1},
      {2, "decimated-output statistics (covariance and mean)", crit2},
      {3, "arithmetic coder losslessness and rate bound", crit3},
      {4, "Lloyd-Max optimality vs exhaustive oracle", crit4},
      {5, "gradient suite (central differences)", crit5},
      {6, "rate-estimate fidelity vs realized coded rate", crit6},
      {7, "qualitative R-D ordering across seeds", crit7},
      {8, "compression-ratio accounting (exact)", crit8},
      {9, "successive refinement layering", crit9},
      {10, "variable-rate operation from one shared transform", crit10},
      {11, "mismatched-SNR robustness", crit11},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::printf("criterion %2d: %s\n", c.id, c.name);
    std::fflush(stdout);
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", c.id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
