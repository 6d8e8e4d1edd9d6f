#pragma once
// Run configuration: JSON on disk, schema-validated (unknown keys are
// rejected), with the 5G numerology defaults embedded. Every derived report
// row carries the config digest so results are reproducible from the file.

#include <fstream>
#include <set>

#include <json.hpp>

#include "fhc/block_scaling.hpp"
#include "fhc/frame.hpp"
#include "fhc/multirate.hpp"

namespace fhc {

using Json = nlohmann::json;

struct TrainConfig {
  std::string scheme = "neural";  // sq | vq | latent-uq | latent-vq | neural
  double lambda = 500.0;
  int q_bits = 4;
  int block = 2;      // VQ block dimension (classical and latent)
  int epochs = 80;
  int batch = 32;
  double lr = 1e-4;
  int plateau = 20;
  double decay = 0.8;
  std::uint64_t seed = 1;
  int warmup_steps = 500;     // latent-vq: steps before codebook seeding
  int reseed_interval = 200;  // latent-vq: dead-codeword reseed cadence
  int hidden = 32;            // N_h
  int latent_channels = 2;    // V
  bool entropy_coded = true;  // classical vq payload mode
};

struct DatasetConfig {
  std::size_t train = 20000;
  std::size_t val = 2000;
  std::size_t test = 2000;
  std::uint64_t seed = 1;
  std::string dir = "data";
};

struct SweepConfig {
  std::vector<std::string> schemes = {"sq", "vq", "latent-uq", "latent-vq", "neural"};
  std::vector<int> q_grid = {4, 5, 6, 7};
  std::vector<double> lambda_grid = {1e2, 5e2, 1e3, 5e3};
};

struct RunConfig {
  Scenario scenario = Scenario::downlink;
  int n_fft = 512;
  int n_sym = 224;
  int n_cp = 64;
  int mod_order = 64;
  ChannelSpec channel;
  ResamplerSpec resampler;
  ScalingConfig scaling;
  DatasetConfig dataset;
  TrainConfig train;
  SweepConfig sweep;
  std::vector<double> refine_lambdas = {1e2, 1e3, 1e4};
  std::vector<double> varrate_scales = {0.1, 0.25, 0.5, 0.9, 1.0};
  int varrate_epochs = 30;
  int threads = 0;  // 0 = auto (FHC_THREADS or hardware)
  std::string out_dir = "runs";
  // Recorded numerology metadata (informational).
  double bandwidth_mhz = 20.0;
  double subcarrier_khz = 60.0;
  double sample_rate_mhz = 30.72;

  std::shared_ptr<const FrameSpec> frame_spec() const {
    return std::make_shared<const FrameSpec>(
        make_frame_spec(scenario, n_fft, n_sym, n_cp, mod_order));
  }
  std::size_t n_prime() const {
    return decimated_length(static_cast<std::size_t>(
                                scenario == Scenario::downlink ? n_fft : n_fft + n_cp),
                            resampler);
  }
};

// Scaling block length follows the scenario so a single factor covers the
// frame (320 downlink, 360 uplink).
inline RunConfig default_config(Scenario scenario) {
  RunConfig cfg;
  cfg.scenario = scenario;
  cfg.resampler = make_resampler_spec(5, 8, 161, 8.0);
  cfg.scaling = make_scaling_config(scenario == Scenario::downlink ? 320 : 360, 8);
  cfg.channel = ChannelSpec{};
  if (scenario == Scenario::downlink)
    cfg.channel.snr_db = std::numeric_limits<double>::infinity();
  return cfg;
}

namespace detail {

inline void require_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key: " + where + "." + it.key());
}

template <typename T>
void maybe(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig config_from_json(const Json& j) {
  detail::require_keys(j, {"scenario", "frame", "channel", "resampler", "scaling",
                           "dataset", "train", "sweep", "refine", "varrate",
                           "threads", "out_dir", "metadata"},
                       "config");
  std::string scen = "downlink";
  detail::maybe(j, "scenario", scen);
  if (scen != "downlink" && scen != "uplink")
    throw ConfigError("scenario must be downlink or uplink");
  RunConfig cfg = default_config(scen == "downlink" ? Scenario::downlink
                                                    : Scenario::uplink);
  if (j.contains("frame")) {
    const Json& f = j.at("frame");
    detail::require_keys(f, {"n_fft", "n_sym", "n_cp", "mod_order"}, "frame");
    detail::maybe(f, "n_fft", cfg.n_fft);
    detail::maybe(f, "n_sym", cfg.n_sym);
    detail::maybe(f, "n_cp", cfg.n_cp);
    detail::maybe(f, "mod_order", cfg.mod_order);
  }
  if (j.contains("channel")) {
    const Json& c = j.at("channel");
    detail::require_keys(c, {"n_taps", "snr_db", "noise_only"}, "channel");
    detail::maybe(c, "n_taps", cfg.channel.n_taps);
    if (c.contains("snr_db")) {
      if (c.at("snr_db").is_string() && c.at("snr_db").get<std::string>() == "inf")
        cfg.channel.snr_db = std::numeric_limits<double>::infinity();
      else
        cfg.channel.snr_db = c.at("snr_db").get<double>();
    }
    detail::maybe(c, "noise_only", cfg.channel.noise_only);
  }
  if (j.contains("resampler")) {
    const Json& r = j.at("resampler");
    detail::require_keys(r, {"k", "m", "taps", "kaiser_beta", "bypass"}, "resampler");
    int k = cfg.resampler.k, m = cfg.resampler.m, taps = cfg.resampler.taps;
    double beta = cfg.resampler.kaiser_beta;
    bool bypass = cfg.resampler.bypass;
    detail::maybe(r, "k", k);
    detail::maybe(r, "m", m);
    detail::maybe(r, "taps", taps);
    detail::maybe(r, "kaiser_beta", beta);
    detail::maybe(r, "bypass", bypass);
    cfg.resampler = make_resampler_spec(k, m, taps, beta, bypass);
  }
  if (j.contains("scaling")) {
    const Json& s = j.at("scaling");
    detail::require_keys(s, {"n_s", "q_s"}, "scaling");
    int n_s = cfg.scaling.n_s, q_s = cfg.scaling.q_s;
    detail::maybe(s, "n_s", n_s);
    detail::maybe(s, "q_s", q_s);
    cfg.scaling = make_scaling_config(n_s, q_s);
  }
  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    detail::require_keys(d, {"train", "val", "test", "seed", "dir"}, "dataset");
    detail::maybe(d, "train", cfg.dataset.train);
    detail::maybe(d, "val", cfg.dataset.val);
    detail::maybe(d, "test", cfg.dataset.test);
    detail::maybe(d, "seed", cfg.dataset.seed);
    detail::maybe(d, "dir", cfg.dataset.dir);
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    detail::require_keys(t,
                         {"scheme", "lambda", "q_bits", "block", "epochs", "batch",
                          "lr", "plateau", "decay", "seed", "warmup_steps",
                          "reseed_interval", "hidden", "latent_channels",
                          "entropy_coded"},
                         "train");
    detail::maybe(t, "scheme", cfg.train.scheme);
    detail::maybe(t, "lambda", cfg.train.lambda);
    detail::maybe(t, "q_bits", cfg.train.q_bits);
    detail::maybe(t, "block", cfg.train.block);
    detail::maybe(t, "epochs", cfg.train.epochs);
    detail::maybe(t, "batch", cfg.train.batch);
    detail::maybe(t, "lr", cfg.train.lr);
    detail::maybe(t, "plateau", cfg.train.plateau);
    detail::maybe(t, "decay", cfg.train.decay);
    detail::maybe(t, "seed", cfg.train.seed);
    detail::maybe(t, "warmup_steps", cfg.train.warmup_steps);
    detail::maybe(t, "reseed_interval", cfg.train.reseed_interval);
    detail::maybe(t, "hidden", cfg.train.hidden);
    detail::maybe(t, "latent_channels", cfg.train.latent_channels);
    detail::maybe(t, "entropy_coded", cfg.train.entropy_coded);
  }
  if (j.contains("sweep")) {
    const Json& s = j.at("sweep");
    detail::require_keys(s, {"schemes", "q_grid", "lambda_grid"}, "sweep");
    detail::maybe(s, "schemes", cfg.sweep.schemes);
    detail::maybe(s, "q_grid", cfg.sweep.q_grid);
    detail::maybe(s, "lambda_grid", cfg.sweep.lambda_grid);
  }
  if (j.contains("refine")) {
    const Json& r = j.at("refine");
    detail::require_keys(r, {"lambdas"}, "refine");
    detail::maybe(r, "lambdas", cfg.refine_lambdas);
  }
  if (j.contains("varrate")) {
    const Json& v = j.at("varrate");
    detail::require_keys(v, {"scales", "epochs"}, "varrate");
    detail::maybe(v, "scales", cfg.varrate_scales);
    detail::maybe(v, "epochs", cfg.varrate_epochs);
  }
  detail::maybe(j, "threads", cfg.threads);
  detail::maybe(j, "out_dir", cfg.out_dir);
  if (j.contains("metadata")) {
    const Json& m = j.at("metadata");
    detail::require_keys(m, {"bandwidth_mhz", "subcarrier_khz", "sample_rate_mhz"},
                         "metadata");
    detail::maybe(m, "bandwidth_mhz", cfg.bandwidth_mhz);
    detail::maybe(m, "subcarrier_khz", cfg.subcarrier_khz);
    detail::maybe(m, "sample_rate_mhz", cfg.sample_rate_mhz);
  }
  // Construct once to surface invariant violations early.
  (void)cfg.frame_spec();
  (void)cfg.n_prime();
  return cfg;
}

inline Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["scenario"] = cfg.scenario == Scenario::downlink ? "downlink" : "uplink";
  j["frame"] = {{"n_fft", cfg.n_fft},
                {"n_sym", cfg.n_sym},
                {"n_cp", cfg.n_cp},
                {"mod_order", cfg.mod_order}};
  if (std::isfinite(cfg.channel.snr_db))
    j["channel"] = {{"n_taps", cfg.channel.n_taps},
                    {"snr_db", cfg.channel.snr_db},
                    {"noise_only", cfg.channel.noise_only}};
  else
    j["channel"] = {{"n_taps", cfg.channel.n_taps},
                    {"snr_db", "inf"},
                    {"noise_only", cfg.channel.noise_only}};
  j["resampler"] = {{"k", cfg.resampler.k},
                    {"m", cfg.resampler.m},
                    {"taps", cfg.resampler.taps},
                    {"kaiser_beta", cfg.resampler.kaiser_beta},
                    {"bypass", cfg.resampler.bypass}};
  j["scaling"] = {{"n_s", cfg.scaling.n_s}, {"q_s", cfg.scaling.q_s}};
  j["dataset"] = {{"train", cfg.dataset.train},
                  {"val", cfg.dataset.val},
                  {"test", cfg.dataset.test},
                  {"seed", cfg.dataset.seed},
                  {"dir", cfg.dataset.dir}};
  j["train"] = {{"scheme", cfg.train.scheme},
                {"lambda", cfg.train.lambda},
                {"q_bits", cfg.train.q_bits},
                {"block", cfg.train.block},
                {"epochs", cfg.train.epochs},
                {"batch", cfg.train.batch},
                {"lr", cfg.train.lr},
                {"plateau", cfg.train.plateau},
                {"decay", cfg.train.decay},
                {"seed", cfg.train.seed},
                {"warmup_steps", cfg.train.warmup_steps},
                {"reseed_interval", cfg.train.reseed_interval},
                {"hidden", cfg.train.hidden},
                {"latent_channels", cfg.train.latent_channels},
                {"entropy_coded", cfg.train.entropy_coded}};
  j["sweep"] = {{"schemes", cfg.sweep.schemes},
                {"q_grid", cfg.sweep.q_grid},
                {"lambda_grid", cfg.sweep.lambda_grid}};
  j["refine"] = {{"lambdas", cfg.refine_lambdas}};
  j["varrate"] = {{"scales", cfg.varrate_scales}, {"epochs", cfg.varrate_epochs}};
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;
  j["metadata"] = {{"bandwidth_mhz", cfg.bandwidth_mhz},
                   {"subcarrier_khz", cfg.subcarrier_khz},
                   {"sample_rate_mhz", cfg.sample_rate_mhz}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string config_digest(const RunConfig& cfg) {
  return hex64(fnv1a(config_to_json(cfg).dump()));
}

}  // namespace fhc
