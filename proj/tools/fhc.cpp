// fhc: fronthaul IQ compression toolkit.
//
// Subcommands: gen-dataset, train, encode, decode, evaluate, sweep, covcheck,
// inspect-bundle. Configuration comes from a JSON file (see README); every
// report row carries the config digest and seed.

#include <chrono>
#include <filesystem>

#include <CLI11.hpp>

#include "fhc/harness.hpp"
#include "fhc/report.hpp"

namespace fs = std::filesystem;
using namespace fhc;

namespace {

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig load_cfg(const std::string& path, const std::string& scenario_flag,
                   int threads_flag, bool deterministic) {
  RunConfig cfg;
  if (!path.empty()) {
    cfg = load_config(path);
  } else if (!scenario_flag.empty()) {
    cfg = default_config(scenario_flag == "uplink" ? Scenario::uplink
                                                   : Scenario::downlink);
  } else {
    cfg = default_config(Scenario::downlink);
  }
  if (threads_flag > 0) cfg.threads = threads_flag;
  if (deterministic) cfg.threads = 1;
  return cfg;
}

std::vector<PreparedFrame> prep_frames(const RunConfig& cfg,
                                       const std::vector<CVec>& frames) {
  const auto spec = cfg.frame_spec();
  std::vector<PreparedFrame> out(frames.size());
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    out[i] = prepare_frame(frames[i], *spec, cfg.resampler, cfg.scaling);
  });
  return out;
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  out << "epoch,train_loss,val_loss,val_distortion,val_rate,val_evm_pct,lr,"
         "codebook_util\n";
  for (const auto& e : log.epochs)
    out << e.epoch << "," << e.train_loss << "," << e.val_loss << ","
        << e.val_distortion << "," << e.val_rate << "," << e.val_evm_pct << ","
        << e.lr << "," << e.codebook_util << "\n";
}

int cmd_gen_dataset(const RunConfig& cfg) {
  const auto spec = cfg.frame_spec();
  fs::create_directories(cfg.dataset.dir);
  struct Split {
    const char* name;
    std::size_t count;
    std::uint64_t salt;
  };
  // Split seeds are disjoint substream salts of the dataset seed.
  const Split splits[] = {{"train", cfg.dataset.train, 0},
                          {"val", cfg.dataset.val, 1},
                          {"test", cfg.dataset.test, 2}};
  for (const auto& sp : splits) {
    const std::uint64_t seed = cfg.dataset.seed * 3 + sp.salt;
    auto frames = generate_frames(spec, cfg.channel, sp.count, seed, cfg.threads);
    const std::string path = (fs::path(cfg.dataset.dir) / (std::string(sp.name) + ".cprf")).string();
    write_dataset(path, *spec, frames);
    std::printf("wrote %s: %zu frames of %d samples\n", path.c_str(), frames.size(),
                spec->compress_len());
  }
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& out_path, int epochs_flag,
              const std::string& resume, const std::string& checkpoint_out,
              bool verbose) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  const std::string train_path =
      (fs::path(cfg.dataset.dir) / "train.cprf").string();
  const std::string val_path = (fs::path(cfg.dataset.dir) / "val.cprf").string();
  Dataset train_ds = read_dataset(train_path);
  Dataset val_ds = read_dataset(val_path);
  auto train_prep = prep_frames(cfg, train_ds.frames);
  auto val_prep = prep_frames(cfg, val_ds.frames);
  const int epochs = epochs_flag > 0 ? epochs_flag : cfg.train.epochs;
  const std::string scheme = cfg.train.scheme;
  const std::string out =
      out_path.empty() ? (fs::path(cfg.out_dir) / (scheme + ".cprb")).string()
                       : out_path;

  if (scheme == "sq" || scheme == "vq") {
    ClassicalModel m;
    if (scheme == "sq") {
      m.scalar = train_scalar_on_frames(cfg, train_ds.frames, cfg.train.q_bits);
      m.has_scalar = true;
    } else {
      m.vector = train_vector_on_frames(cfg, train_ds.frames, cfg.train.block,
                                        cfg.train.q_bits);
      m.has_vector = true;
      std::printf("vq codebook: alpha = %.4f\n", m.vector.alpha);
    }
    bundle_classical(m, cfg).save(out);
  } else if (scheme == "latent-uq" || scheme == "latent-vq") {
    LatentTrainer tr(cfg, scheme == "latent-vq");
    tr.run(train_prep, val_prep, epochs, verbose);
    LatentModel m = tr.finish();
    bundle_latent(m, cfg).save(out);
    write_train_log(out + ".log.csv", tr.log);
  } else if (scheme == "neural") {
    NeuralTrainer tr = resume.empty() ? NeuralTrainer(cfg)
                                      : NeuralTrainer::load_checkpoint(resume);
    tr.run(train_prep, val_prep, epochs, verbose);
    if (!checkpoint_out.empty()) tr.save_checkpoint(checkpoint_out);
    NeuralModel m = tr.finish(train_prep);
    bundle_neural(m, cfg).save(out);
    write_train_log(out + ".log.csv", tr.log);
  } else if (scheme == "refinement") {
    RefinementStack stack;
    stack.lambdas = cfg.refine_lambdas;
    RunConfig base_cfg = cfg;
    base_cfg.train.lambda = cfg.refine_lambdas.at(0);
    NeuralTrainer base(base_cfg);
    base.run(train_prep, val_prep, epochs, verbose);
    stack.layers.push_back(base.finish(train_prep));
    for (std::size_t l = 1; l < cfg.refine_lambdas.size(); ++l) {
      stack.layers.push_back(train_refinement_layer(cfg, stack, l, train_prep,
                                                    val_prep, epochs,
                                                    cfg.refine_lambdas[l], verbose));
    }
    bundle_refinement(stack, cfg).save(out);
  } else if (scheme == "varrate") {
    NeuralTrainer base(cfg);
    base.run(train_prep, val_prep, epochs, verbose);
    NeuralModel bm = base.finish(train_prep);
    VariableRateSet vr = build_varrate_set(cfg, std::move(bm), train_prep, verbose);
    bundle_varrate(vr, cfg).save(out);
  } else {
    throw ConfigError("unknown training scheme: " + scheme);
  }
  std::printf("trained %s -> %s (%.1f s)\n", scheme.c_str(), out.c_str(),
              wall_since(t0));
  return 0;
}

// Scheme dispatch for encode/decode/evaluate from a bundle's config snapshot.
struct LoadedBundle {
  RunConfig cfg;
  std::string scheme;
  ClassicalModel classical;
  LatentModel latent;
  NeuralModel neural;
  RefinementStack stack;
  VariableRateSet vr;
  bool is_varrate = false;
};

LoadedBundle load_any_bundle(const std::string& path) {
  ModelBundle b = ModelBundle::load(path);
  LoadedBundle lb;
  lb.cfg = config_from_json(Json::parse(b.config_json()));
  lb.scheme = lb.cfg.train.scheme;
  if (lb.scheme == "sq" || lb.scheme == "vq") {
    lb.classical = classical_from_bundle(b);
  } else if (lb.scheme == "latent-uq" || lb.scheme == "latent-vq") {
    lb.latent = latent_from_bundle(b);
  } else if (lb.scheme == "neural") {
    lb.neural = neural_from_bundle(b);
  } else if (lb.scheme == "refinement") {
    lb.stack = refinement_from_bundle(b);
  } else if (lb.scheme == "varrate") {
    lb.vr = varrate_from_bundle(b);
    lb.is_varrate = true;
  } else {
    throw IoError("bundle has unknown scheme: " + lb.scheme);
  }
  return lb;
}

int cmd_encode(const std::string& bundle_path, const std::string& in_path,
               const std::string& out_path, int rate_index, int layers) {
  LoadedBundle lb = load_any_bundle(bundle_path);
  RunConfig& cfg = lb.cfg;
  Dataset ds = read_dataset(in_path);
  const auto spec = cfg.frame_spec();
  std::vector<FrameBitstream> streams;
  for (const auto& raw : ds.frames) {
    if (lb.scheme == "sq") {
      streams.push_back(encode_classical_sq(raw, lb.classical.scalar, *spec,
                                            cfg.resampler, cfg.scaling).bs);
    } else if (lb.scheme == "vq") {
      streams.push_back(encode_classical_vq(raw, lb.classical.vector,
                                            cfg.train.entropy_coded, *spec,
                                            cfg.resampler, cfg.scaling).bs);
    } else if (lb.scheme == "latent-uq" || lb.scheme == "latent-vq") {
      streams.push_back(encode_latent(raw, lb.latent, *spec, cfg.resampler,
                                      cfg.scaling).bs);
    } else if (lb.scheme == "neural") {
      streams.push_back(encode_neural(raw, lb.neural, *spec, cfg.resampler,
                                      cfg.scaling).bs);
    } else if (lb.is_varrate) {
      const auto w = static_cast<std::size_t>(rate_index);
      if (rate_index < 0 || w >= lb.vr.scales.size())
        throw ConfigError("--rate-index out of range for this bundle");
      streams.push_back(encode_neural(raw, lb.vr.base, *spec, cfg.resampler,
                                      cfg.scaling, lb.vr.scales[w],
                                      static_cast<std::uint8_t>(w),
                                      &lb.vr.tables[w]).bs);
    } else if (lb.scheme == "refinement") {
      const auto up_to = layers > 0 ? static_cast<std::size_t>(layers)
                                    : lb.stack.layers.size();
      for (auto& ef : refine_encode(raw, lb.stack, up_to, *spec, cfg.resampler,
                                    cfg.scaling))
        streams.push_back(std::move(ef.bs));
    }
  }
  write_stream_file(out_path, streams);
  std::printf("encoded %zu frames -> %s (%zu records)\n", ds.frames.size(),
              out_path.c_str(), streams.size());
  return 0;
}

int cmd_decode(const std::string& bundle_path, const std::string& in_path,
               const std::string& out_path) {
  LoadedBundle lb = load_any_bundle(bundle_path);
  RunConfig& cfg = lb.cfg;
  const auto spec = cfg.frame_spec();
  auto streams = read_stream_file(in_path);
  std::vector<CVec> frames;
  for (std::size_t i = 0; i < streams.size();) {
    const FrameBitstream& bs = streams[i];
    CVec x_hat;
    if (bs.scheme == SchemeId::scalar_q) {
      x_hat = decode_classical_sq(bs, lb.classical.scalar, cfg.scaling, cfg.resampler);
      ++i;
    } else if (bs.scheme == SchemeId::vector_q) {
      x_hat = decode_classical_vq(bs, lb.classical.vector, cfg.train.entropy_coded,
                                  cfg.scaling, cfg.resampler);
      ++i;
    } else if (bs.scheme == SchemeId::latent_uniform || bs.scheme == SchemeId::latent_vq) {
      x_hat = decode_latent(bs, lb.latent, cfg.scaling, cfg.resampler);
      ++i;
    } else if (bs.scheme == SchemeId::neural) {
      if (lb.is_varrate) {
        const auto w = static_cast<std::size_t>(bs.rate_index);
        if (w >= lb.vr.scales.size()) throw StreamError("rate index out of range");
        x_hat = decode_neural(bs, lb.vr.base, cfg.scaling, cfg.resampler,
                              lb.vr.scales[w], &lb.vr.tables[w]);
      } else {
        x_hat = decode_neural(bs, lb.neural, cfg.scaling, cfg.resampler);
      }
      ++i;
    } else if (bs.scheme == SchemeId::refinement) {
      std::vector<FrameBitstream> prefix;
      while (i < streams.size() && streams[i].scheme == SchemeId::refinement &&
             streams[i].layer_index == prefix.size()) {
        prefix.push_back(streams[i]);
        ++i;
      }
      x_hat = refine_decode(prefix, lb.stack, cfg.scaling, cfg.resampler);
    } else {
      throw StreamError("unknown scheme in stream file");
    }
    // Downlink: the CP stripped before compression is re-inserted here.
    if (static_cast<Scenario>(bs.scenario) == Scenario::downlink && cfg.n_cp > 0) {
      CVec with_cp;
      with_cp.reserve(x_hat.size() + static_cast<std::size_t>(cfg.n_cp));
      with_cp.insert(with_cp.end(), x_hat.end() - cfg.n_cp, x_hat.end());
      with_cp.insert(with_cp.end(), x_hat.begin(), x_hat.end());
      x_hat = std::move(with_cp);
    }
    frames.push_back(std::move(x_hat));
  }
  write_dataset(out_path, *spec, frames, frames.empty() ? 0 : frames[0].size());
  std::printf("decoded %zu frames -> %s\n", frames.size(), out_path.c_str());
  return 0;
}

EvalResult evaluate_bundle(LoadedBundle& lb, const std::vector<CVec>& frames,
                           int rate_index, int layers) {
  RunConfig& cfg = lb.cfg;
  if (lb.scheme == "sq")
    return evaluate_classical_sq(cfg, lb.classical.scalar, frames);
  if (lb.scheme == "vq")
    return evaluate_classical_vq(cfg, lb.classical.vector, cfg.train.entropy_coded,
                                 frames);
  if (lb.scheme == "latent-uq" || lb.scheme == "latent-vq")
    return evaluate_latent(cfg, lb.latent, frames);
  if (lb.scheme == "neural") return evaluate_neural(cfg, lb.neural, frames);
  if (lb.is_varrate) {
    const auto w = static_cast<std::size_t>(rate_index);
    if (rate_index < 0 || w >= lb.vr.scales.size())
      throw ConfigError("--rate-index out of range");
    return evaluate_neural(cfg, lb.vr.base, frames, lb.vr.scales[w],
                           static_cast<std::uint8_t>(w), &lb.vr.tables[w]);
  }
  if (lb.scheme == "refinement") {
    const auto up_to =
        layers > 0 ? static_cast<std::size_t>(layers) : lb.stack.layers.size();
    return evaluate_refinement(cfg, lb.stack, up_to, frames);
  }
  throw ConfigError("unknown scheme: " + lb.scheme);
}

int cmd_evaluate(const std::string& bundle_path, const std::string& in_path,
                 int rate_index, int layers) {
  LoadedBundle lb = load_any_bundle(bundle_path);
  Dataset ds = read_dataset(in_path);
  const EvalResult r = evaluate_bundle(lb, ds.frames, rate_index, layers);
  std::printf("scheme=%s frames=%zu bits/elem=%.4f CR=%.4f EVM=%.4f%% (%.2f dB) "
              "p50=%.4f%% p90=%.4f%% p99=%.4f%% alpha=%.4f clamped=%zu\n",
              lb.scheme.c_str(), r.frames, r.bits_per_element, r.cr, r.evm_pct,
              r.evm_db, r.evm_pct_p50, r.evm_pct_p90, r.evm_pct_p99, r.alpha,
              r.clamped);
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& bundles_dir, bool mismatch) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  Dataset test_ds = read_dataset((fs::path(cfg.dataset.dir) / "test.cprf").string());
  Dataset train_ds = read_dataset((fs::path(cfg.dataset.dir) / "train.cprf").string());
  std::vector<RDRow> rows;

  for (const auto& scheme : cfg.sweep.schemes) {
    if (scheme == "sq" || scheme == "vq") {
      for (int q : cfg.sweep.q_grid) {
        const auto ts = std::chrono::steady_clock::now();
        EvalResult r;
        if (scheme == "sq") {
          ScalarCodebook cb = train_scalar_on_frames(cfg, train_ds.frames, q);
          r = evaluate_classical_sq(cfg, cb, test_ds.frames);
        } else {
          VectorCodebook cb =
              train_vector_on_frames(cfg, train_ds.frames, cfg.train.block, q);
          r = evaluate_classical_vq(cfg, cb, cfg.train.entropy_coded, test_ds.frames);
        }
        rows.push_back(make_row(scheme, "Q=" + std::to_string(q), r, cfg,
                                wall_since(ts)));
        std::printf("%s Q=%d: %.3f bits/elem, EVM %.2f dB\n", scheme.c_str(), q,
                    r.bits_per_element, r.evm_db);
      }
    } else if (scheme == "latent-uq" || scheme == "latent-vq") {
      for (int q : cfg.sweep.q_grid) {
        const std::string path =
            (fs::path(bundles_dir) / (scheme + "-Q" + std::to_string(q) + ".cprb"))
                .string();
        if (!fs::exists(path)) {
          std::fprintf(stderr, "warning: missing bundle %s; row skipped\n",
                       path.c_str());
          continue;
        }
        const auto ts = std::chrono::steady_clock::now();
        LoadedBundle lb = load_any_bundle(path);
        lb.cfg.threads = cfg.threads;
        EvalResult r = evaluate_bundle(lb, test_ds.frames, -1, 0);
        rows.push_back(make_row(scheme, "Q=" + std::to_string(q), r, lb.cfg,
                                wall_since(ts)));
        std::printf("%s Q=%d: %.3f bits/elem, EVM %.2f dB\n", scheme.c_str(), q,
                    r.bits_per_element, r.evm_db);
      }
    } else if (scheme == "neural") {
      for (double lambda : cfg.sweep.lambda_grid) {
        char name[64];
        std::snprintf(name, sizeof(name), "neural-lambda%g.cprb", lambda);
        const std::string path = (fs::path(bundles_dir) / name).string();
        if (!fs::exists(path)) {
          std::fprintf(stderr, "warning: missing bundle %s; row skipped\n",
                       path.c_str());
          continue;
        }
        const auto ts = std::chrono::steady_clock::now();
        LoadedBundle lb = load_any_bundle(path);
        lb.cfg.threads = cfg.threads;
        EvalResult r = evaluate_bundle(lb, test_ds.frames, -1, 0);
        char param[32];
        std::snprintf(param, sizeof(param), "lambda=%g", lambda);
        rows.push_back(make_row(scheme, param, r, lb.cfg, wall_since(ts)));
        std::printf("neural lambda=%g: %.3f bits/elem, EVM %.2f dB\n", lambda,
                    r.bits_per_element, r.evm_db);

        if (mismatch && cfg.scenario == Scenario::uplink) {
          for (double snr : {-5.0, 15.0}) {
            RunConfig mcfg = cfg;
            mcfg.channel.snr_db = snr;
            auto frames = generate_frames(mcfg.frame_spec(), mcfg.channel,
                                          test_ds.frames.size(),
                                          cfg.dataset.seed * 3 + 2, cfg.threads);
            EvalResult mr = evaluate_neural(lb.cfg, lb.neural, frames);
            char tag[48];
            std::snprintf(tag, sizeof(tag), "mismatched:snr=%g", snr);
            rows.push_back(make_row(scheme, param, mr, lb.cfg, 0.0, tag));
          }
          for (int taps : {1, 3}) {
            RunConfig mcfg = cfg;
            mcfg.channel.n_taps = taps;
            auto frames = generate_frames(mcfg.frame_spec(), mcfg.channel,
                                          test_ds.frames.size(),
                                          cfg.dataset.seed * 3 + 2, cfg.threads);
            EvalResult mr = evaluate_neural(lb.cfg, lb.neural, frames);
            char tag[48];
            std::snprintf(tag, sizeof(tag), "mismatched:taps=%d", taps);
            rows.push_back(make_row(scheme, param, mr, lb.cfg, 0.0, tag));
          }
        }
      }
    }
  }

  const std::string scen = cfg.scenario == Scenario::downlink ? "downlink" : "uplink";
  const std::string csv = (fs::path(cfg.out_dir) / ("sweep-" + scen + ".csv")).string();
  const std::string svg = (fs::path(cfg.out_dir) / ("sweep-" + scen + ".svg")).string();
  write_csv(csv, rows);
  write_svg(svg, rows, "rate-distortion sweep (" + scen + ")");
  std::printf("wrote %s and %s (%.1f s total)\n", csv.c_str(), svg.c_str(),
              wall_since(t0));
  return 0;
}

int cmd_covcheck(const RunConfig& cfg, std::size_t frames) {
  const auto t0 = std::chrono::steady_clock::now();
  CovarianceReport rep = covariance_check(cfg, frames);
  std::printf("frames: %zu\n", frames);
  std::printf("relative Frobenius error: %.4f (gate: < 0.05)\n",
              rep.rel_frobenius_error);
  std::printf("grand mean: (%.3e, %.3e), bound %.3e per component -> %s\n",
              rep.grand_mean.real(), rep.grand_mean.imag(), rep.mean_bound,
              rep.mean_consistent ? "consistent with zero" : "INCONSISTENT");
  std::printf("empirical Hermitian deviation: %.3e\n",
              max_hermitian_deviation(rep.empirical));
  std::printf("analytic PSD within 1e-9*P: %s\n",
              is_psd_within(rep.analytic, 1e-9 * rep.analytic.at(0, 0).real())
                  ? "yes" : "NO");
  std::printf("(%.1f s)\n", wall_since(t0));
  fs::create_directories(cfg.out_dir);
  std::ofstream out((fs::path(cfg.out_dir) / "covcheck.json").string());
  out << "{\n  \"frames\": " << frames
      << ",\n  \"rel_frobenius_error\": " << rep.rel_frobenius_error
      << ",\n  \"grand_mean\": [" << rep.grand_mean.real() << ", "
      << rep.grand_mean.imag() << "],\n  \"mean_bound\": " << rep.mean_bound
      << ",\n  \"mean_consistent\": " << (rep.mean_consistent ? "true" : "false")
      << "\n}\n";
  return rep.rel_frobenius_error < 0.05 && rep.mean_consistent ? 0 : 1;
}

int cmd_inspect_bundle(const std::string& path) {
  ModelBundle b = ModelBundle::load(path);
  std::printf("bundle: %s\n", path.c_str());
  std::printf("digest: %s\n", hex64(b.digest()).c_str());
  Json cfg = Json::parse(b.config_json());
  std::printf("scheme: %s\n",
              cfg.contains("train")
                  ? cfg["train"]["scheme"].get<std::string>().c_str()
                  : "?");
  std::size_t total_f64 = 0, transform_f64 = 0;
  for (const auto& a : b.arrays()) {
    std::string shape;
    for (std::size_t i = 0; i < a.dims.size(); ++i)
      shape += (i ? "x" : "") + std::to_string(a.dims[i]);
    std::printf("  %-28s %-4s %-12s %8zu elems  %s\n", a.name.c_str(),
                a.dtype == Dtype::f64   ? "f64"
                : a.dtype == Dtype::i32 ? "i32"
                : a.dtype == Dtype::u32 ? "u32"
                : a.dtype == Dtype::u16 ? "u16"
                                        : "u8",
                shape.c_str(), a.elements(),
                hex64(fnv1a(a.bytes.data(), a.bytes.size())).c_str());
    if (a.dtype == Dtype::f64) {
      total_f64 += a.elements();
      // Transform parameters: encoder/decoder weights under any prefix.
      if (a.name.find(".enc.") != std::string::npos ||
          a.name.find(".dec.") != std::string::npos ||
          a.name.rfind("enc.", 0) == 0 || a.name.rfind("dec.", 0) == 0)
        transform_f64 += a.elements();
    }
  }
  std::printf("total f64 parameters: %zu (transform: %zu)\n", total_f64,
              transform_f64);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fronthaul IQ compression toolkit"};
  app.require_subcommand(1);

  std::string config_path, scenario_flag;
  int threads = 0;
  bool deterministic = false;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--scenario", scenario_flag, "downlink|uplink (when no config file)");
  app.add_option("--threads", threads, "worker thread count (0 = auto/FHC_THREADS)");
  app.add_flag("--deterministic", deterministic,
               "force single-threaded bit-reproducible execution");
  app.add_flag("-v,--verbose", verbose, "per-epoch training output");

  auto* gen = app.add_subcommand("gen-dataset", "generate train/val/test frame files");

  auto* train = app.add_subcommand("train", "train the configured scheme");
  std::string train_out, resume, checkpoint_out;
  int epochs_flag = 0;
  train->add_option("--out", train_out, "output bundle path");
  train->add_option("--epochs", epochs_flag, "override config epoch count");
  train->add_option("--resume", resume, "resume a neural training checkpoint");
  train->add_option("--checkpoint", checkpoint_out, "write a training checkpoint");

  auto* enc = app.add_subcommand("encode", "encode a frame file to bitstreams");
  std::string bundle_path, in_path, out_path;
  int rate_index = -1, layers = 0;
  enc->add_option("--bundle", bundle_path)->required();
  enc->add_option("--in", in_path)->required();
  enc->add_option("--out", out_path)->required();
  enc->add_option("--rate-index", rate_index, "variable-rate operating point");
  enc->add_option("--layers", layers, "refinement: encode layers 1..L");

  auto* dec = app.add_subcommand("decode", "decode bitstreams to frames");
  std::string d_bundle, d_in, d_out;
  dec->add_option("--bundle", d_bundle)->required();
  dec->add_option("--in", d_in)->required();
  dec->add_option("--out", d_out)->required();

  auto* ev = app.add_subcommand("evaluate", "encode+decode a frame file, report EVM");
  std::string e_bundle, e_in;
  int e_rate = -1, e_layers = 0;
  ev->add_option("--bundle", e_bundle)->required();
  ev->add_option("--in", e_in)->required();
  ev->add_option("--rate-index", e_rate);
  ev->add_option("--layers", e_layers);

  auto* sweep = app.add_subcommand("sweep", "R-D sweep over the configured grids");
  std::string bundles_dir = "runs";
  bool mismatch = false;
  sweep->add_option("--bundles", bundles_dir, "directory of trained bundles");
  sweep->add_flag("--mismatch", mismatch, "add mismatched-channel rows (uplink)");

  auto* cov = app.add_subcommand("covcheck", "empirical vs analytic covariance");
  std::size_t cov_frames = 20000;
  cov->add_option("--frames", cov_frames, "Monte Carlo frame count");

  auto* insp = app.add_subcommand("inspect-bundle", "list bundle arrays and digests");
  std::string i_bundle;
  insp->add_option("--bundle", i_bundle)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_cfg(config_path, scenario_flag, threads, deterministic);
    if (gen->parsed()) return cmd_gen_dataset(cfg);
    if (train->parsed())
      return cmd_train(cfg, train_out, epochs_flag, resume, checkpoint_out, verbose);
    if (enc->parsed()) return cmd_encode(bundle_path, in_path, out_path, rate_index, layers);
    if (dec->parsed()) return cmd_decode(d_bundle, d_in, d_out);
    if (ev->parsed()) return cmd_evaluate(e_bundle, e_in, e_rate, e_layers);
    if (sweep->parsed()) return cmd_sweep(cfg, bundles_dir, mismatch);
    if (cov->parsed()) return cmd_covcheck(cfg, cov_frames);
    if (insp->parsed()) return cmd_inspect_bundle(i_bundle);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
