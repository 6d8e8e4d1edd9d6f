#pragma once
// Training loops. All stochastic inputs (shuffles, relaxation noise) come
// from stateless per-epoch substreams of the run seed, so a checkpoint needs
// only parameters plus optimizer state and a resumed run reproduces the
// uninterrupted trajectory; gradients of a batch are merged in a fixed order.

#include <atomic>
#include <cstdio>
#include <mutex>

#include "fhc/pipeline.hpp"
#include "fhc/threading.hpp"

namespace fhc {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_distortion = 0.0;
  double val_rate = 0.0;
  double val_evm_pct = 0.0;  // 100 * sqrt(val distortion)
  double lr = 0.0;
  double codebook_util = 1.0;  // latent-vq only
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  bool aborted_non_finite = false;
  int codebook_reseeds = 0;

  void print_last(const char* tag) const {
    const EpochLog& e = epochs.back();
    std::printf("[%s] epoch %3d  train %.6g  val %.6g (D %.3e, R %.4f, EVM %.3f%%)  lr %.2e\n",
                tag, e.epoch, e.train_loss, e.val_loss, e.val_distortion, e.val_rate,
                e.val_evm_pct, e.lr);
  }
};

namespace detail {

struct GradBundle {
  nn::TransformGrads enc, dec;
  FactorizedGrads prior;
  nn::Mat codebook;
  bool has_prior = false;
  bool has_codebook = false;

  void zero() {
    std::vector<nn::ParamRef> refs;
    collect(enc, "e", refs);
    collect(dec, "d", refs);
    if (has_prior) collect(prior, "p", refs);
    for (auto& r : refs) r.m->zero();
    if (has_codebook) codebook.zero();
  }

  void add_scaled(const GradBundle& o, double s) {
    std::vector<nn::ParamRef> a, b;
    collect(enc, "e", a);
    collect(dec, "d", a);
    if (has_prior) collect(prior, "p", a);
    auto& oo = const_cast<GradBundle&>(o);
    collect(oo.enc, "e", b);
    collect(oo.dec, "d", b);
    if (has_prior) collect(oo.prior, "p", b);
    for (std::size_t i = 0; i < a.size(); ++i) nn::axpy(s, *b[i].m, *a[i].m);
    if (has_codebook) nn::axpy(s, o.codebook, codebook);
  }
};

inline std::vector<PreparedFrame> prepare_all(const std::vector<CVec>& frames,
                                              const RunConfig& cfg) {
  const auto spec = cfg.frame_spec();
  std::vector<PreparedFrame> out(frames.size());
  parallel_for(frames.size(), cfg.threads, [&](std::size_t i) {
    out[i] = prepare_frame(frames[i], *spec, cfg.resampler, cfg.scaling);
  });
  return out;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::substream(seed, 0x5f0e11ull + static_cast<std::uint64_t>(epoch));
  rng.shuffle(order.begin(), order.end());
  return order;
}

inline Rng frame_noise_rng(std::uint64_t seed, int epoch, std::size_t frame_index) {
  return Rng::substream(seed ^ 0x9e3779b97f4a7c15ull,
                        (static_cast<std::uint64_t>(epoch) << 32) | frame_index);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scheme 4 trainer

struct NeuralTrainer {
  RunConfig cfg;
  NeuralModel model;
  nn::Adam opt;
  nn::PlateauScheduler sched;
  TrainLog log;
  int next_epoch = 0;
  // Best-so-far snapshot (by validation loss).
  double best_val = std::numeric_limits<double>::infinity();
  NeuralModel best_model;

  explicit NeuralTrainer(const RunConfig& cfg_) : cfg(cfg_), opt(cfg_.train.lr),
      sched(cfg_.train.plateau, cfg_.train.decay) {
    Rng init(cfg.train.seed);
    model.enc.init(2, cfg.train.latent_channels, cfg.train.hidden, init);
    model.dec.init(cfg.train.latent_channels, 2, cfg.train.hidden, init);
    model.prior.init(cfg.train.latent_channels, init);
    best_model = model;
  }

  std::vector<nn::ParamRef> param_refs() {
    std::vector<nn::ParamRef> refs;
    collect(model.enc, "enc", refs);
    collect(model.dec, "dec", refs);
    collect(model.prior, "prior", refs);
    return refs;
  }

  // Returns false if training aborted on a non-finite loss (the best
  // checkpoint so far is kept).
  bool run(const std::vector<PreparedFrame>& train_set,
           const std::vector<PreparedFrame>& val_set, int epochs, bool verbose) {
    const auto spec = cfg.frame_spec();
    const int threads = resolve_threads(cfg.threads);
    std::vector<detail::GradBundle> buffers(static_cast<std::size_t>(threads));
    for (auto& b : buffers) {
      b.enc.match(model.enc);
      b.dec.match(model.dec);
      b.prior.match(model.prior);
      b.has_prior = true;
    }
    auto prefs = param_refs();
    std::vector<nn::ParamRef> grefs;
    collect(buffers[0].enc, "enc", grefs);
    collect(buffers[0].dec, "dec", grefs);
    collect(buffers[0].prior, "prior", grefs);

    const std::size_t batch = static_cast<std::size_t>(cfg.train.batch);
    for (int epoch = next_epoch; epoch < next_epoch + epochs; ++epoch) {
      const auto order = detail::epoch_order(train_set.size(), cfg.train.seed, epoch);
      double epoch_loss = 0.0;
      std::size_t epoch_frames = 0;
      bool finite = true;
      for (std::size_t base = 0; base < order.size(); base += batch) {
        const std::size_t bsz = std::min(batch, order.size() - base);
        for (auto& b : buffers) b.zero();
        std::vector<double> losses(bsz, 0.0);
        std::atomic<bool> failed{false};
        parallel_for(bsz, threads, [&](std::size_t slot) {
          const std::size_t tid = slot * static_cast<std::size_t>(threads) / std::max<std::size_t>(bsz, 1);
          auto& buf = buffers[std::min(tid, buffers.size() - 1)];
          Rng noise = detail::frame_noise_rng(cfg.train.seed, epoch, base + slot);
          try {
            const LossBreakdown lb = neural_loss_grad(
                model, buf.enc, buf.dec, buf.prior, train_set[order[base + slot]],
                *spec, cfg.resampler, cfg.scaling, cfg.train.lambda, noise);
            losses[slot] = lb.total;
          } catch (const NumericError&) {
            failed = true;
          }
        });
        for (double l : losses) {
          if (!std::isfinite(l)) failed = true;
          epoch_loss += l;
        }
        if (failed) {
          finite = false;
          break;
        }
        epoch_frames += bsz;
        const double inv = 1.0 / static_cast<double>(bsz);
        for (std::size_t b = 1; b < buffers.size(); ++b)
          buffers[0].add_scaled(buffers[b], 1.0);
        std::vector<nn::ParamRef> g0;
        collect(buffers[0].enc, "enc", g0);
        collect(buffers[0].dec, "dec", g0);
        collect(buffers[0].prior, "prior", g0);
        for (auto& r : g0)
          for (auto& v : r.m->a) v *= inv;
        opt.step(prefs, g0);
      }
      if (!finite) {
        log.aborted_non_finite = true;
        model = best_model;
        if (verbose) std::printf("[neural] aborting on non-finite loss; best checkpoint restored\n");
        next_epoch = epoch + 1;
        return false;
      }

      // Validation (noise-relaxed loss; EVM proxy from the distortion term).
      double vd = 0.0, vr = 0.0;
      {
        std::vector<double> d(val_set.size()), r(val_set.size());
        parallel_for(val_set.size(), threads, [&](std::size_t i) {
          Rng noise = detail::frame_noise_rng(cfg.train.seed ^ 0xabcdu, epoch, i);
          const LossBreakdown lb = neural_loss_eval(model, val_set[i], *spec,
                                                    cfg.resampler, cfg.scaling,
                                                    cfg.train.lambda, noise);
          d[i] = lb.distortion;
          r[i] = lb.rate;
        });
        for (std::size_t i = 0; i < val_set.size(); ++i) {
          vd += d[i];
          vr += r[i];
        }
        vd /= static_cast<double>(val_set.size());
        vr /= static_cast<double>(val_set.size());
      }
      const double val_total = cfg.train.lambda * vd + vr;
      EpochLog el;
      el.epoch = epoch;
      el.train_loss = epoch_loss / static_cast<double>(epoch_frames);
      el.val_loss = val_total;
      el.val_distortion = vd;
      el.val_rate = vr;
      el.val_evm_pct = 100.0 * std::sqrt(vd);
      el.lr = opt.lr();
      log.epochs.push_back(el);
      if (verbose) log.print_last("neural");
      if (val_total < best_val) {
        best_val = val_total;
        best_model = model;
      }
      opt.set_lr(opt.lr() * sched.observe(val_total));
    }
    next_epoch += epochs;
    return true;
  }

  // Full training state to disk: parameters, optimizer moments, schedule.
  // A resumed run continues the uninterrupted trajectory exactly because all
  // randomness is drawn from stateless per-epoch substreams.
  void save_checkpoint(const std::string& path) {
    ModelBundle b;
    b.config_json() = config_to_json(cfg).dump(2);
    put_neural_params(b, "model");
    {
      NeuralTrainer tmp(cfg);
      tmp.model = best_model;
      tmp.put_neural_params(b, "best");
    }
    const auto& m1 = opt.moments1();
    const auto& m2 = opt.moments2();
    for (std::size_t i = 0; i < m1.size(); ++i) {
      b.put_mat("opt.m" + std::to_string(i), m1[i]);
      b.put_mat("opt.v" + std::to_string(i), m2[i]);
    }
    b.put_rvec("state", {static_cast<double>(opt.steps()), opt.lr(),
                         static_cast<double>(next_epoch), best_val, sched.best(),
                         static_cast<double>(sched.stall()),
                         static_cast<double>(m1.size())});
    b.save(path);
  }

  static NeuralTrainer load_checkpoint(const std::string& path) {
    ModelBundle b = ModelBundle::load(path);
    const RunConfig cfg = config_from_json(Json::parse(b.config_json()));
    NeuralTrainer tr(cfg);
    tr.get_neural_params(b, "model", tr.model);
    tr.get_neural_params(b, "best", tr.best_model);
    const RVec st = b.get_rvec("state");
    const auto n = static_cast<std::size_t>(st[6]);
    std::vector<nn::Mat> m1(n), m2(n);
    for (std::size_t i = 0; i < n; ++i) {
      m1[i] = b.get_mat("opt.m" + std::to_string(i));
      m2[i] = b.get_mat("opt.v" + std::to_string(i));
    }
    tr.opt = nn::Adam(st[1]);
    tr.opt.restore(std::move(m1), std::move(m2), static_cast<long>(st[0]), st[1]);
    tr.next_epoch = static_cast<int>(st[2]);
    tr.best_val = st[3];
    tr.sched = nn::PlateauScheduler(cfg.train.plateau, cfg.train.decay);
    tr.sched.restore(st[4], static_cast<int>(st[5]));
    return tr;
  }

  void put_neural_params(ModelBundle& b, const std::string& prefix) {
    put_transform(b, prefix + ".enc", model.enc);
    put_transform(b, prefix + ".dec", model.dec);
    put_prior(b, prefix + ".prior", model.prior);
  }
  void get_neural_params(const ModelBundle& b, const std::string& prefix,
                         NeuralModel& into) {
    get_transform(b, prefix + ".enc", into.enc);
    get_transform(b, prefix + ".dec", into.dec);
    get_prior(b, prefix + ".prior", into.prior);
  }

  // Finalize: adopt the best checkpoint and derive its lookup tables from the
  // rounded training latents.
  NeuralModel finish(const std::vector<PreparedFrame>& train_set) {
    model = best_model;
    std::vector<nn::Mat> latents(train_set.size());
    parallel_for(train_set.size(), cfg.threads, [&](std::size_t i) {
      nn::TransformTape tape;
      latents[i] = nn::transform_forward(model.enc, train_set[i].S, tape);
    });
    model.tables = build_tables(model.prior, latents);
    return model;
  }
};

// ---------------------------------------------------------------------------
// Schemes 2/3 trainer

struct LatentTrainer {
  RunConfig cfg;
  LatentModel model;
  nn::Adam opt;
  nn::PlateauScheduler sched;
  TrainLog log;
  long step_count = 0;
  bool codebook_ready = false;
  double best_val = std::numeric_limits<double>::infinity();
  LatentModel best_model;
  std::vector<std::uint64_t> usage;  // per-codeword usage since last reseed

  explicit LatentTrainer(const RunConfig& cfg_, bool vector_quantized)
      : cfg(cfg_), opt(cfg_.train.lr), sched(cfg_.train.plateau, cfg_.train.decay) {
    Rng init(cfg.train.seed);
    model.enc.init(2, cfg.train.latent_channels, cfg.train.hidden, init);
    model.dec.init(cfg.train.latent_channels, 2, cfg.train.hidden, init);
    model.q_bits = cfg.train.q_bits;
    model.vector_quantized = vector_quantized;
    if (vector_quantized) {
      model.cb = make_latent_vq_codebook(cfg.train.block, cfg.train.q_bits);
      usage.assign(static_cast<std::size_t>(model.cb.rows()), 0);
    }
    best_model = model;
  }

  // k-means++ seeding of the codebook over latent blocks from the
  // warm-started encoder.
  void seed_codebook(const std::vector<PreparedFrame>& train_set) {
    const auto b = static_cast<std::size_t>(model.cb.block_dim);
    std::vector<RVec> blocks;
    for (const auto& p : train_set) {
      nn::TransformTape tape;
      const nn::Mat z = nn::transform_forward(model.enc, p.S, tape);
      for (std::size_t i = 0; i + b <= z.size(); i += b) {
        RVec blk(b);
        for (std::size_t j = 0; j < b; ++j) blk[j] = z.a[i + j];
        blocks.push_back(std::move(blk));
      }
      if (blocks.size() > 60000) break;
    }
    const std::size_t k = static_cast<std::size_t>(model.cb.rows());
    if (blocks.size() < k) throw StatsError("not enough latent blocks to seed codebook");
    Rng rng(cfg.train.seed ^ 0xc0deba11ull);
    std::vector<RVec> centers;
    centers.reserve(k);
    centers.push_back(blocks[rng.below(blocks.size())]);
    RVec d2(blocks.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
      const RVec& last = centers.back();
      double total = 0.0;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
          const double diff = blocks[i][j] - last[j];
          d += diff * diff;
        }
        d2[i] = std::min(d2[i], d);
        total += d2[i];
      }
      double r = rng.uniform() * total;
      std::size_t pick = blocks.size() - 1;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
      centers.push_back(blocks[pick]);
    }
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < b; ++j)
        model.cb.e.at(static_cast<int>(r), static_cast<int>(j)) = centers[r][j];
    codebook_ready = true;
  }

  bool run(const std::vector<PreparedFrame>& train_set,
           const std::vector<PreparedFrame>& val_set, int epochs, bool verbose) {
    const auto spec = cfg.frame_spec();
    const int threads = resolve_threads(cfg.threads);
    std::vector<detail::GradBundle> buffers(static_cast<std::size_t>(threads));
    for (auto& buf : buffers) {
      buf.enc.match(model.enc);
      buf.dec.match(model.dec);
      if (model.vector_quantized) {
        buf.codebook = nn::Mat(model.cb.e.rows, model.cb.e.cols);
        buf.has_codebook = true;
      }
    }
    // The codebook participates from step zero (zero gradients during the
    // warm-up) so the optimizer's moment buffers keep a fixed layout.
    auto collect_params = [&](std::vector<nn::ParamRef>& refs) {
      collect(model.enc, "enc", refs);
      collect(model.dec, "dec", refs);
      if (model.vector_quantized) refs.push_back({"codebook", &model.cb.e});
    };
    auto collect_grads = [&](std::vector<nn::ParamRef>& refs) {
      collect(buffers[0].enc, "enc", refs);
      collect(buffers[0].dec, "dec", refs);
      if (model.vector_quantized) refs.push_back({"codebook", &buffers[0].codebook});
    };

    const std::size_t batch = static_cast<std::size_t>(cfg.train.batch);
    const int first_epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch + 1;
    for (int epoch = first_epoch; epoch < first_epoch + epochs; ++epoch) {
      const auto order = detail::epoch_order(train_set.size(), cfg.train.seed, epoch);
      double epoch_loss = 0.0;
      std::size_t epoch_frames = 0;
      bool finite = true;
      for (std::size_t base = 0; base < order.size(); base += batch) {
        // Warm-up phase for VQ: plain autoencoder until the codebook seeds.
        if (model.vector_quantized && !codebook_ready &&
            step_count >= cfg.train.warmup_steps) {
          seed_codebook(train_set);
          if (verbose) std::printf("[latent] codebook seeded at step %ld\n", step_count);
        }
        const bool quantize = !model.vector_quantized || codebook_ready;
        const std::size_t bsz = std::min(batch, order.size() - base);
        for (auto& buf : buffers) buf.zero();
        std::vector<double> losses(bsz, 0.0);
        std::vector<std::vector<std::uint32_t>> batch_indices(bsz);
        std::atomic<bool> failed{false};
        parallel_for(bsz, threads, [&](std::size_t slot) {
          const std::size_t tid = slot * static_cast<std::size_t>(threads) / std::max<std::size_t>(bsz, 1);
          auto& buf = buffers[std::min(tid, buffers.size() - 1)];
          try {
            const LossBreakdown lb = latent_loss_grad(
                model, buf.enc, buf.dec, buf.has_codebook ? &buf.codebook : nullptr,
                train_set[order[base + slot]], *spec, cfg.resampler, cfg.scaling,
                quantize);
            losses[slot] = lb.total;
            if (model.vector_quantized && codebook_ready) {
              nn::TransformTape tape;
              const nn::Mat z = nn::transform_forward(model.enc,
                                                      train_set[order[base + slot]].S, tape);
              batch_indices[slot] = vq_latent_quantize(z, model.cb).indices;
            }
          } catch (const NumericError&) {
            failed = true;
          }
        });
        for (double l : losses) {
          if (!std::isfinite(l)) failed = true;
          epoch_loss += l;
        }
        if (failed) {
          finite = false;
          break;
        }
        epoch_frames += bsz;
        for (auto& idxs : batch_indices)
          for (auto i : idxs) ++usage[i];
        const double inv = 1.0 / static_cast<double>(bsz);
        for (std::size_t b = 1; b < buffers.size(); ++b)
          buffers[0].add_scaled(buffers[b], 1.0);
        std::vector<nn::ParamRef> prefs, grefs;
        collect_params(prefs);
        collect_grads(grefs);
        for (auto& r : grefs)
          for (auto& v : r.m->a) v *= inv;
        opt.step(prefs, grefs);
        ++step_count;

        if (model.vector_quantized && codebook_ready &&
            step_count % cfg.train.reseed_interval == 0)
          reseed_dead_codewords(train_set, order, base, bsz, verbose);
      }
      if (!finite) {
        log.aborted_non_finite = true;
        model = best_model;
        if (verbose) std::printf("[latent] aborting on non-finite loss; best checkpoint restored\n");
        return false;
      }

      double vd = 0.0;
      {
        std::vector<double> d(val_set.size());
        parallel_for(val_set.size(), threads, [&](std::size_t i) {
          d[i] = latent_loss_eval(model, val_set[i], *spec, cfg.resampler, cfg.scaling)
                     .distortion;
        });
        for (double v : d) vd += v;
        vd /= static_cast<double>(val_set.size());
      }
      EpochLog el;
      el.epoch = epoch;
      el.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_frames, 1));
      el.val_loss = vd;
      el.val_distortion = vd;
      el.val_evm_pct = 100.0 * std::sqrt(vd);
      el.lr = opt.lr();
      if (model.vector_quantized && codebook_ready) {
        std::size_t used = 0;
        for (auto u : usage)
          if (u > 0) ++used;
        el.codebook_util = static_cast<double>(used) / static_cast<double>(usage.size());
      }
      log.epochs.push_back(el);
      if (verbose) log.print_last(model.vector_quantized ? "latent-vq" : "latent-uq");
      if (vd < best_val) {
        best_val = vd;
        best_model = model;
      }
      opt.set_lr(opt.lr() * sched.observe(vd));
    }
    return true;
  }

  void reseed_dead_codewords(const std::vector<PreparedFrame>& train_set,
                             const std::vector<std::size_t>& order, std::size_t base,
                             std::size_t bsz, bool verbose) {
    // Collect the highest-error latent blocks from the current batch.
    const auto b = static_cast<std::size_t>(model.cb.block_dim);
    std::vector<std::pair<double, RVec>> worst;
    for (std::size_t slot = 0; slot < bsz; ++slot) {
      nn::TransformTape tape;
      const nn::Mat z = nn::transform_forward(model.enc, train_set[order[base + slot]].S, tape);
      const VqResult q = vq_latent_quantize(z, model.cb);
      for (std::size_t i = 0; i * b < z.size(); ++i) {
        double err = 0.0;
        RVec blk(b);
        for (std::size_t j = 0; j < b; ++j) {
          blk[j] = z.a[i * b + j];
          const double d = z.a[i * b + j] - q.z_hat.a[i * b + j];
          err += d * d;
        }
        worst.emplace_back(err, std::move(blk));
      }
    }
    std::sort(worst.begin(), worst.end(),
              [](const auto& a, const auto& c) { return a.first > c.first; });
    std::size_t cursor = 0;
    int reseeded = 0;
    for (std::size_t r = 0; r < usage.size(); ++r) {
      if (usage[r] != 0) continue;
      if (cursor >= worst.size()) break;
      for (std::size_t j = 0; j < b; ++j)
        model.cb.e.at(static_cast<int>(r), static_cast<int>(j)) = worst[cursor].second[j];
      ++cursor;
      ++reseeded;
    }
    if (reseeded > 0) {
      log.codebook_reseeds += reseeded;
      if (verbose)
        std::printf("[latent-vq] reseeded %d dead codewords at step %ld\n", reseeded,
                    step_count);
    }
    std::fill(usage.begin(), usage.end(), 0);
  }

  LatentModel finish() {
    model = best_model;
    return model;
  }
};

// ---------------------------------------------------------------------------
// Refinement stack trainer: greedy per-layer training with frozen lower
// layers (digest-checked by the caller/tests).

inline NeuralModel train_refinement_layer(const RunConfig& cfg, RefinementStack& stack,
                                          std::size_t layer_index,
                                          const std::vector<PreparedFrame>& train_set,
                                          const std::vector<PreparedFrame>& val_set,
                                          int epochs, double lambda, bool verbose) {
  if (layer_index == 0 || layer_index != stack.layers.size())
    throw ConfigError("refinement layers must be trained in order");
  const auto spec = cfg.frame_spec();
  const int threads = resolve_threads(cfg.threads);

  // Decoder-reproducible reconstruction of the frozen prefix, per frame.
  auto cached_prev = [&](const std::vector<PreparedFrame>& set) {
    std::vector<nn::Mat> prev(set.size());
    parallel_for(set.size(), threads, [&](std::size_t i) {
      nn::Mat accum;
      for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        NeuralModel& lm = stack.layers[l];
        nn::TransformTape tape;
        const nn::Mat enc_in = l == 0 ? set[i].S : stack_refinement_input(set[i].S, accum);
        const nn::Mat z = nn::transform_forward(lm.enc, enc_in, tape);
        const nn::Mat dec_out = refinement_layer_output(lm, round_latent(z));
        if (l == 0) {
          accum = dec_out;
        } else {
          for (std::size_t k = 0; k < accum.size(); ++k) accum.a[k] += dec_out.a[k];
        }
      }
      prev[i] = std::move(accum);
    });
    return prev;
  };
  const auto train_prev = cached_prev(train_set);
  const auto val_prev = cached_prev(val_set);

  NeuralModel layer;
  Rng init(cfg.train.seed + 7919 * static_cast<std::uint64_t>(layer_index));
  layer.enc.init(4, cfg.train.latent_channels, cfg.train.hidden, init);
  layer.dec.init(cfg.train.latent_channels, 2, cfg.train.hidden, init);
  layer.prior.init(cfg.train.latent_channels, init);

  nn::Adam opt(cfg.train.lr);
  nn::PlateauScheduler sched(cfg.train.plateau, cfg.train.decay);
  std::vector<detail::GradBundle> buffers(static_cast<std::size_t>(threads));
  for (auto& b : buffers) {
    b.enc.match(layer.enc);
    b.dec.match(layer.dec);
    b.prior.match(layer.prior);
    b.has_prior = true;
  }
  std::vector<nn::ParamRef> prefs;
  collect(layer.enc, "enc", prefs);
  collect(layer.dec, "dec", prefs);
  collect(layer.prior, "prior", prefs);

  double best_val = std::numeric_limits<double>::infinity();
  NeuralModel best = layer;
  const std::size_t batch = static_cast<std::size_t>(cfg.train.batch);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = detail::epoch_order(train_set.size(), cfg.train.seed + 31, epoch);
    for (std::size_t base = 0; base < order.size(); base += batch) {
      const std::size_t bsz = std::min(batch, order.size() - base);
      for (auto& b : buffers) b.zero();
      parallel_for(bsz, threads, [&](std::size_t slot) {
        const std::size_t tid = slot * static_cast<std::size_t>(threads) / std::max<std::size_t>(bsz, 1);
        auto& buf = buffers[std::min(tid, buffers.size() - 1)];
        Rng noise = detail::frame_noise_rng(cfg.train.seed + 31, epoch, base + slot);
        const std::size_t fi = order[base + slot];
        refinement_loss_grad(layer, buf.enc, buf.dec, buf.prior, train_set[fi],
                             train_prev[fi], *spec, cfg.resampler, cfg.scaling,
                             lambda, noise);
      });
      for (std::size_t b = 1; b < buffers.size(); ++b)
        buffers[0].add_scaled(buffers[b], 1.0);
      std::vector<nn::ParamRef> grefs;
      collect(buffers[0].enc, "enc", grefs);
      collect(buffers[0].dec, "dec", grefs);
      collect(buffers[0].prior, "prior", grefs);
      const double inv = 1.0 / static_cast<double>(bsz);
      for (auto& r : grefs)
        for (auto& v : r.m->a) v *= inv;
      opt.step(prefs, grefs);
    }
    // Validation loss of this layer.
    double vt = 0.0;
    {
      std::vector<double> t(val_set.size());
      parallel_for(val_set.size(), threads, [&](std::size_t i) {
        Rng noise = detail::frame_noise_rng(cfg.train.seed ^ 0xdcba, epoch, i);
        nn::TransformTape etape, dtape;
        const nn::Mat enc_in = stack_refinement_input(val_set[i].S, val_prev[i]);
        nn::Mat z = nn::transform_forward(layer.enc, enc_in, etape);
        nn::Mat z_noisy(z.rows, z.cols);
        for (std::size_t k = 0; k < z.size(); ++k)
          z_noisy.a[k] = z.a[k] + noise.uniform(-0.5, 0.5);
        const nn::Mat residual = nn::transform_forward(layer.dec, z_noisy, dtape);
        nn::Mat s_hat(residual.rows, residual.cols);
        for (std::size_t k = 0; k < s_hat.size(); ++k)
          s_hat.a[k] = val_prev[i].a[k] + residual.a[k];
        const double d = distortion_only(s_hat, val_set[i], *spec, cfg.resampler, cfg.scaling);
        const double r = rate_estimate(layer.prior, z_noisy).bits_per_element;
        t[i] = lambda * d + r;
      });
      for (double v : t) vt += v;
      vt /= static_cast<double>(val_set.size());
    }
    if (verbose)
      std::printf("[refine-l%zu] epoch %3d  val %.6g  lr %.2e\n", layer_index, epoch,
                  vt, opt.lr());
    if (vt < best_val) {
      best_val = vt;
      best = layer;
    }
    opt.set_lr(opt.lr() * sched.observe(vt));
  }
  layer = best;

  // Tables from the rounded training latents of this layer.
  std::vector<nn::Mat> latents(train_set.size());
  parallel_for(train_set.size(), threads, [&](std::size_t i) {
    nn::TransformTape tape;
    latents[i] = nn::transform_forward(
        layer.enc, stack_refinement_input(train_set[i].S, train_prev[i]), tape);
  });
  layer.tables = build_tables(layer.prior, latents);
  return layer;
}

// ---------------------------------------------------------------------------
// Variable-rate: train a probability net for each scale against the frozen
// shared transform; only phi_w updates.

inline void train_varrate_prior(const RunConfig& cfg, const std::vector<nn::Mat>& latents,
                                double scale, FactorizedModel& prior, int epochs,
                                bool verbose) {
  Rng init(cfg.train.seed ^ fnv1a(&scale, sizeof(scale)));
  prior.init(cfg.train.latent_channels, init);
  FactorizedGrads grads;
  grads.match(prior);
  std::vector<nn::ParamRef> prefs, grefs;
  collect(prior, "prior", prefs);
  collect(grads, "prior", grefs);
  nn::Adam opt(1e-3);  // only the tiny probability net trains here
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = detail::epoch_order(latents.size(), cfg.train.seed + 97, epoch);
    double rate = 0.0;
    const std::size_t batch = static_cast<std::size_t>(cfg.train.batch);
    for (std::size_t base = 0; base < order.size(); base += batch) {
      const std::size_t bsz = std::min(batch, order.size() - base);
      for (auto& r : grefs) r.m->zero();
      for (std::size_t slot = 0; slot < bsz; ++slot) {
        const nn::Mat& z0 = latents[order[base + slot]];
        Rng noise = detail::frame_noise_rng(cfg.train.seed + 97, epoch, base + slot);
        nn::Mat z(z0.rows, z0.cols);
        for (std::size_t i = 0; i < z.size(); ++i)
          z.a[i] = scale * z0.a[i] + noise.uniform(-0.5, 0.5);
        nn::Mat gz(z.rows, z.cols);
        rate += rate_estimate_grad(prior, z, grads, gz, 1.0).bits_per_element;
      }
      const double inv = 1.0 / static_cast<double>(bsz);
      for (auto& r : grefs)
        for (auto& v : r.m->a) v *= inv;
      opt.step(prefs, grefs);
    }
    if (verbose)
      std::printf("[vr a=%.2f] epoch %3d  rate %.4f bits/elem\n", scale, epoch,
                  rate / static_cast<double>(latents.size()));
  }
}

inline VariableRateSet build_varrate_set(const RunConfig& cfg, NeuralModel base,
                                         const std::vector<PreparedFrame>& train_set,
                                         bool verbose) {
  VariableRateSet vr;
  vr.base = std::move(base);
  vr.scales = cfg.varrate_scales;
  if (vr.scales.empty() || vr.scales.back() != 1.0)
    throw ConfigError("varrate scales must end at 1");
  for (std::size_t w = 1; w < vr.scales.size(); ++w)
    if (vr.scales[w] <= vr.scales[w - 1] || vr.scales[w - 1] <= 0.0)
      throw ConfigError("varrate scales must be positive and strictly increasing");
  // The transform is frozen: cache its latents once.
  std::vector<nn::Mat> latents(train_set.size());
  parallel_for(train_set.size(), cfg.threads, [&](std::size_t i) {
    nn::TransformTape tape;
    latents[i] = nn::transform_forward(vr.base.enc, train_set[i].S, tape);
  });
  vr.priors.resize(vr.scales.size());
  vr.tables.resize(vr.scales.size());
  for (std::size_t w = 0; w + 1 < vr.scales.size(); ++w) {
    train_varrate_prior(cfg, latents, vr.scales[w], vr.priors[w], cfg.varrate_epochs,
                        verbose);
    std::vector<nn::Mat> scaled(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
      scaled[i] = latents[i];
      for (auto& v : scaled[i].a) v *= vr.scales[w];
    }
    vr.tables[w] = build_tables(vr.priors[w], scaled);
  }
  vr.priors.back() = vr.base.prior;
  vr.tables.back() = vr.base.tables;
  return vr;
}

}  // namespace fhc
