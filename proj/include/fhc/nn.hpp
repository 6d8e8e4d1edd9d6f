#pragma once
// Training substrate: two-layer bi-directional GRU transforms with a dense
// head, reverse-mode gradients via explicit tapes, and Adam with
// plateau-driven learning-rate decay.
//
// Weights, gradients and per-frame tapes are separate structures so a batch
// can be evaluated by several workers against shared weights, each writing
// into its own gradient buffer; buffers are merged in a fixed order.
//
// Gate equations (reset gate applied inside the candidate matmul):
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//   u_t = sigmoid(W_u x_t + U_u h_{t-1} + b_u)
//   c_t = tanh(W_n x_t + r_t .* (U_n h_{t-1}) + b_n)
//   h_t = u_t .* h_{t-1} + (1 - u_t) .* c_t,  h_0 = 0.
// Rows of the fused matrices are ordered [r; u; n].

#include <cmath>
#include <functional>

#include "fhc/matrix.hpp"

namespace fhc::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// GRU, one direction

struct GruDirWeights {
  Mat W;  // 3H x in
  Mat U;  // 3H x H
  Mat b;  // 3H x 1
  int in = 0, h = 0;

  void init(int in_dim, int hidden, Rng& rng) {
    in = in_dim;
    h = hidden;
    W = random_uniform(3 * hidden, in_dim, 1.0 / std::sqrt((double)in_dim), rng);
    U = random_uniform(3 * hidden, hidden, 1.0 / std::sqrt((double)hidden), rng);
    b = Mat(3 * hidden, 1);
  }
};

struct GruDirGrads {
  Mat W, U, b;
  void match(const GruDirWeights& w) {
    W = Mat(w.W.rows, w.W.cols);
    U = Mat(w.U.rows, w.U.cols);
    b = Mat(w.b.rows, w.b.cols);
  }
};

// Per-frame forward cache for one direction. All activations are T x H,
// indexed in the direction's own processing order (step s).
struct GruDirTape {
  Mat h, r, u, cand, uhn;
  void resize(int T, int hidden) {
    if (h.rows == T && h.cols == hidden) return;  // reuse buffers across frames
    h = Mat(T, hidden);
    r = Mat(T, hidden);
    u = Mat(T, hidden);
    cand = Mat(T, hidden);
    uhn = Mat(T, hidden);
  }
};

// X is T x in (time-major). If reverse, steps run t = T-1..0 but the tape is
// indexed by processing step s; out rows follow the original time axis and
// are written at column offset out_col of the T x (..) output matrix.
inline void gru_dir_forward(const GruDirWeights& w, const Mat& X, bool reverse,
                            GruDirTape& tape, Mat& out, int out_col) {
  const int T = X.rows;
  const int H = w.h;
  tape.resize(T, H);
  std::vector<double> pre(static_cast<std::size_t>(3) * H);
  std::vector<double> uh(static_cast<std::size_t>(3) * H);
  std::vector<double> hprev(static_cast<std::size_t>(H), 0.0);
  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    const double* xt = X.row(t);
    for (int i = 0; i < 3 * H; ++i) pre[static_cast<std::size_t>(i)] = w.b.a[static_cast<std::size_t>(i)];
    matvec(w.W, xt, pre.data(), true);
    matvec(w.U, hprev.data(), uh.data(), false);
    double* hr = tape.h.row(s);
    double* rr = tape.r.row(s);
    double* ur = tape.u.row(s);
    double* cr = tape.cand.row(s);
    double* nr = tape.uhn.row(s);
    for (int i = 0; i < H; ++i) {
      const double r = sigmoid(pre[static_cast<std::size_t>(i)] + uh[static_cast<std::size_t>(i)]);
      const double u = sigmoid(pre[static_cast<std::size_t>(H + i)] + uh[static_cast<std::size_t>(H + i)]);
      const double un = uh[static_cast<std::size_t>(2 * H + i)];
      const double c = std::tanh(pre[static_cast<std::size_t>(2 * H + i)] + r * un);
      const double h = u * hprev[static_cast<std::size_t>(i)] + (1.0 - u) * c;
      rr[i] = r;
      ur[i] = u;
      cr[i] = c;
      nr[i] = un;
      hr[i] = h;
      if (!std::isfinite(h))
        throw NumericError("non-finite GRU state at step " + std::to_string(t));
    }
    for (int i = 0; i < H; ++i) hprev[static_cast<std::size_t>(i)] = hr[i];
    double* orow = out.row(t);
    for (int i = 0; i < H; ++i) orow[out_col + i] = hr[i];
  }
}

// G_out is T x (..) with this direction's slice at column out_col; gradients
// w.r.t. X are accumulated into GX (T x in).
inline void gru_dir_backward(const GruDirWeights& w, const Mat& X, bool reverse,
                             const GruDirTape& tape, const Mat& g_out, int out_col,
                             GruDirGrads& g, Mat& gx) {
  const int T = X.rows;
  const int H = w.h;
  std::vector<double> carry(static_cast<std::size_t>(H), 0.0);
  std::vector<double> da(static_cast<std::size_t>(3) * H);   // [da_r; da_u; da_n]
  std::vector<double> dub(static_cast<std::size_t>(3) * H);  // [da_r; da_u; d_uhn]
  std::vector<double> dhprev(static_cast<std::size_t>(H));
  for (int s = T - 1; s >= 0; --s) {
    const int t = reverse ? T - 1 - s : s;
    const double* xt = X.row(t);
    const double* gh_ext = g_out.row(t) + out_col;
    const double* rr = tape.r.row(s);
    const double* ur = tape.u.row(s);
    const double* cr = tape.cand.row(s);
    const double* nr = tape.uhn.row(s);
    const double* hprev = s > 0 ? tape.h.row(s - 1) : nullptr;
    for (int i = 0; i < H; ++i) {
      const double hp = hprev ? hprev[i] : 0.0;
      const double dh = gh_ext[i] + carry[static_cast<std::size_t>(i)];
      const double du = dh * (hp - cr[i]);
      const double dcand = dh * (1.0 - ur[i]);
      const double dan = dcand * (1.0 - cr[i] * cr[i]);
      const double dr = dan * nr[i];
      const double duhn = dan * rr[i];
      const double dau = du * ur[i] * (1.0 - ur[i]);
      const double dar = dr * rr[i] * (1.0 - rr[i]);
      da[static_cast<std::size_t>(i)] = dar;
      da[static_cast<std::size_t>(H + i)] = dau;
      da[static_cast<std::size_t>(2 * H + i)] = dan;
      dub[static_cast<std::size_t>(i)] = dar;
      dub[static_cast<std::size_t>(H + i)] = dau;
      dub[static_cast<std::size_t>(2 * H + i)] = duhn;
      dhprev[static_cast<std::size_t>(i)] = dh * ur[i];
    }
    outer_acc(g.W, da.data(), xt);
    for (int i = 0; i < 3 * H; ++i) g.b.a[static_cast<std::size_t>(i)] += da[static_cast<std::size_t>(i)];
    if (s > 0) {
      outer_acc(g.U, dub.data(), hprev);
      matvec_t_acc(w.U, dub.data(), dhprev.data());
    }
    matvec_t_acc(w.W, da.data(), gx.row(t));
    carry.swap(dhprev);
    if (s > 0) std::fill(dhprev.begin(), dhprev.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Bi-directional layer and dense head

struct BiGruWeights {
  GruDirWeights fwd, bwd;
  void init(int in_dim, int hidden, Rng& rng) {
    fwd.init(in_dim, hidden, rng);
    bwd.init(in_dim, hidden, rng);
  }
  int out_dim() const { return 2 * fwd.h; }
};

struct BiGruGrads {
  GruDirGrads fwd, bwd;
  void match(const BiGruWeights& w) {
    fwd.match(w.fwd);
    bwd.match(w.bwd);
  }
};

struct BiGruTape {
  GruDirTape fwd, bwd;
};

inline void ensure_shape(Mat& m, int rows, int cols) {
  if (m.rows != rows || m.cols != cols) m = Mat(rows, cols);
}

inline void bigru_forward_into(const BiGruWeights& w, const Mat& X, BiGruTape& tape,
                               Mat& out) {
  ensure_shape(out, X.rows, w.out_dim());
  gru_dir_forward(w.fwd, X, false, tape.fwd, out, 0);
  gru_dir_forward(w.bwd, X, true, tape.bwd, out, w.fwd.h);
}

inline Mat bigru_forward(const BiGruWeights& w, const Mat& X, BiGruTape& tape) {
  Mat out;
  bigru_forward_into(w, X, tape, out);
  return out;
}

inline Mat bigru_backward(const BiGruWeights& w, const Mat& X, const BiGruTape& tape,
                          const Mat& g_out, BiGruGrads& g) {
  Mat gx(X.rows, X.cols);
  gru_dir_backward(w.fwd, X, false, tape.fwd, g_out, 0, g.fwd, gx);
  gru_dir_backward(w.bwd, X, true, tape.bwd, g_out, w.fwd.h, g.bwd, gx);
  return gx;
}

struct DenseWeights {
  Mat W;  // out x in
  Mat b;  // out x 1
  void init(int in_dim, int out_dim, Rng& rng) {
    W = random_uniform(out_dim, in_dim, 1.0 / std::sqrt((double)in_dim), rng);
    b = Mat(out_dim, 1);
  }
};

struct DenseGrads {
  Mat W, b;
  void match(const DenseWeights& w) {
    W = Mat(w.W.rows, w.W.cols);
    b = Mat(w.b.rows, w.b.cols);
  }
};

// Applies the dense map to every row of X (T x in) -> T x out.
inline Mat dense_forward(const DenseWeights& w, const Mat& X) {
  Mat out(X.rows, w.W.rows);
  for (int t = 0; t < X.rows; ++t) {
    double* orow = out.row(t);
    for (int r = 0; r < w.W.rows; ++r) orow[r] = w.b.a[static_cast<std::size_t>(r)];
    matvec(w.W, X.row(t), orow, true);
  }
  return out;
}

inline Mat dense_backward(const DenseWeights& w, const Mat& X, const Mat& g_out,
                          DenseGrads& g) {
  Mat gx(X.rows, X.cols);
  for (int t = 0; t < X.rows; ++t) {
    const double* go = g_out.row(t);
    outer_acc(g.W, go, X.row(t));
    for (int r = 0; r < w.W.rows; ++r) g.b.a[static_cast<std::size_t>(r)] += go[r];
    matvec_t_acc(w.W, go, gx.row(t));
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Two-layer bi-GRU transform with a dense head (encoder f_s and decoder g_d
// share this structure; only the input/output widths differ).

struct TransformWeights {
  BiGruWeights l1, l2;
  DenseWeights head;
  int in_dim = 0, out_dim = 0, hidden = 0;

  void init(int in, int out, int h, Rng& rng) {
    in_dim = in;
    out_dim = out;
    hidden = h;
    l1.init(in, h, rng);
    l2.init(2 * h, h, rng);
    head.init(2 * h, out, rng);
  }
};

struct TransformGrads {
  BiGruGrads l1, l2;
  DenseGrads head;
  void match(const TransformWeights& w) {
    l1.match(w.l1);
    l2.match(w.l2);
    head.match(w.head);
  }
};

struct TransformTape {
  BiGruTape l1, l2;
  Mat y1, y2;  // layer outputs, kept for the backward pass
};

inline Mat transform_forward(const TransformWeights& w, const Mat& X,
                             TransformTape& tape) {
  if (X.cols != w.in_dim) throw ShapeError("transform input width mismatch");
  bigru_forward_into(w.l1, X, tape.l1, tape.y1);
  bigru_forward_into(w.l2, tape.y1, tape.l2, tape.y2);
  return dense_forward(w.head, tape.y2);
}

inline Mat transform_backward(const TransformWeights& w, const Mat& X,
                              TransformTape& tape, const Mat& g_out,
                              TransformGrads& g) {
  Mat g2 = dense_backward(w.head, tape.y2, g_out, g.head);
  Mat g1 = bigru_backward(w.l2, tape.y1, tape.l2, g2, g.l2);
  return bigru_backward(w.l1, X, tape.l1, g1, g.l1);
}

// ---------------------------------------------------------------------------
// Flat parameter views (fixed ordering shared by grads, Adam state and the
// serialized bundle).

struct ParamRef {
  std::string name;
  Mat* m;
};

inline void collect(GruDirWeights& w, const std::string& p, std::vector<ParamRef>& out) {
  out.push_back({p + ".W", &w.W});
  out.push_back({p + ".U", &w.U});
  out.push_back({p + ".b", &w.b});
}
inline void collect(GruDirGrads& g, const std::string& p, std::vector<ParamRef>& out) {
  out.push_back({p + ".W", &g.W});
  out.push_back({p + ".U", &g.U});
  out.push_back({p + ".b", &g.b});
}
template <typename T>
void collect_bigru(T& w, const std::string& p, std::vector<ParamRef>& out) {
  collect(w.fwd, p + ".f", out);
  collect(w.bwd, p + ".r", out);
}
inline void collect(TransformWeights& w, const std::string& p, std::vector<ParamRef>& out) {
  collect_bigru(w.l1, p + ".l1", out);
  collect_bigru(w.l2, p + ".l2", out);
  out.push_back({p + ".head.W", &w.head.W});
  out.push_back({p + ".head.b", &w.head.b});
}
inline void collect(TransformGrads& g, const std::string& p, std::vector<ParamRef>& out) {
  collect_bigru(g.l1, p + ".l1", out);
  collect_bigru(g.l2, p + ".l2", out);
  out.push_back({p + ".head.W", &g.head.W});
  out.push_back({p + ".head.b", &g.head.b});
}

inline std::size_t param_count(std::vector<ParamRef>& refs) {
  std::size_t n = 0;
  for (auto& r : refs) n += r.m->size();
  return n;
}

inline std::uint64_t params_digest(std::vector<ParamRef>& refs) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto& r : refs) {
    h = fnv1a(r.name.data(), r.name.size(), h);
    h = digest(*r.m, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adam with bias correction plus the plateau learning-rate schedule: the rate
// drops by `decay` whenever the validation loss fails to improve for
// `patience` consecutive epochs.

class Adam {
 public:
  Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads) {
    if (params.size() != grads.size()) throw ShapeError("param/grad list mismatch");
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.m->rows, p.m->cols);
        v_.emplace_back(p.m->rows, p.m->cols);
      }
    }
    if (m_.size() != params.size())
      throw ShapeError("optimizer state does not match the parameter list");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat& p = *params[i].m;
      const Mat& g = *grads[i].m;
      Mat& m = m_[i];
      Mat& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m.a[j] = b1_ * m.a[j] + (1.0 - b1_) * g.a[j];
        v.a[j] = b2_ * v.a[j] + (1.0 - b2_) * g.a[j] * g.a[j];
        p.a[j] -= lr_ * (m.a[j] / c1) / (std::sqrt(v.a[j] / c2) + eps_);
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // Checkpoint access: moment buffers and step counter.
  const std::vector<Mat>& moments1() const { return m_; }
  const std::vector<Mat>& moments2() const { return v_; }
  long steps() const { return t_; }
  void restore(std::vector<Mat> m, std::vector<Mat> v, long t, double lr) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
    lr_ = lr;
  }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

class PlateauScheduler {
 public:
  PlateauScheduler(int patience = 20, double decay = 0.8)
      : patience_(patience), decay_(decay) {}

  // Feed the epoch's validation loss; returns the factor to apply (1 or decay).
  double observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      stall_ = 0;
      return 1.0;
    }
    if (++stall_ >= patience_) {
      stall_ = 0;
      return decay_;
    }
    return 1.0;
  }

  double best() const { return best_; }
  int stall() const { return stall_; }
  void restore(double best, int stall) {
    best_ = best;
    stall_ = stall;
  }

 private:
  int patience_;
  double decay_;
  int stall_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace fhc::nn
