#include <catch2/catch_amalgamated.hpp>

#include "fhc/nn.hpp"

using namespace fhc;
using namespace fhc::nn;

namespace {

// Straight-line scalar reference for one GRU direction, written directly from
// the gate equations with no shared code. Used as the oracle for the kernel
// implementation.
std::vector<std::vector<double>> reference_gru(const GruDirWeights& w,
                                               const Mat& X, bool reverse) {
  const int T = X.rows, H = w.h, in = w.in;
  std::vector<std::vector<double>> hs;
  std::vector<double> h(static_cast<std::size_t>(H), 0.0);
  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    std::vector<double> hn(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) {
      double ar = w.b.at(i, 0), au = w.b.at(H + i, 0), an = w.b.at(2 * H + i, 0);
      double un = 0.0;
      for (int c = 0; c < in; ++c) {
        ar += w.W.at(i, c) * X.at(t, c);
        au += w.W.at(H + i, c) * X.at(t, c);
        an += w.W.at(2 * H + i, c) * X.at(t, c);
      }
      for (int c = 0; c < H; ++c) {
        ar += w.U.at(i, c) * h[static_cast<std::size_t>(c)];
        au += w.U.at(H + i, c) * h[static_cast<std::size_t>(c)];
        un += w.U.at(2 * H + i, c) * h[static_cast<std::size_t>(c)];
      }
      const double r = 1.0 / (1.0 + std::exp(-ar));
      const double u = 1.0 / (1.0 + std::exp(-au));
      const double cand = std::tanh(an + r * un);
      hn[static_cast<std::size_t>(i)] =
          u * h[static_cast<std::size_t>(i)] + (1.0 - u) * cand;
    }
    h = hn;
    hs.push_back(h);
  }
  return hs;  // indexed by processing step
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (auto& v : m.a) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("all-zero parameters and zero state give all-zero GRU output") {
  GruDirWeights w;
  w.in = 2;
  w.h = 4;
  w.W = Mat(12, 2);
  w.U = Mat(12, 4);
  w.b = Mat(12, 1);
  Rng rng(71);
  Mat X = random_mat(7, 2, rng);
  GruDirTape tape;
  Mat out(7, 4);
  gru_dir_forward(w, X, false, tape, out, 0);
  for (const auto v : out.a) REQUIRE(v == 0.0);
}

TEST_CASE("T = 1: forward and backward directions see the same single input") {
  Rng rng(72);
  BiGruWeights w;
  w.init(3, 4, rng);
  Mat X = random_mat(1, 3, rng);
  BiGruTape tape;
  Mat out = bigru_forward(w, X, tape);
  REQUIRE(out.rows == 1);
  REQUIRE(out.cols == 8);
  auto ref_f = reference_gru(w.fwd, X, false);
  auto ref_b = reference_gru(w.bwd, X, true);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(out.at(0, i) == Catch::Approx(ref_f[0][static_cast<std::size_t>(i)]).epsilon(1e-14));
    REQUIRE(out.at(0, 4 + i) == Catch::Approx(ref_b[0][static_cast<std::size_t>(i)]).epsilon(1e-14));
  }
}

TEST_CASE("random small instance matches the scalar reference to 1e-12") {
  Rng rng(73);
  GruDirWeights w;
  w.init(2, 3, rng);
  Mat X = random_mat(5, 2, rng);
  for (bool reverse : {false, true}) {
    GruDirTape tape;
    Mat out(5, 3);
    gru_dir_forward(w, X, reverse, tape, out, 0);
    auto ref = reference_gru(w, X, reverse);
    for (int s = 0; s < 5; ++s) {
      const int t = reverse ? 4 - s : s;
      for (int i = 0; i < 3; ++i)
        REQUIRE(std::abs(out.at(t, i) - ref[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)]) < 1e-12);
    }
  }
}

TEST_CASE("non-finite state reports the failing step") {
  GruDirWeights w;
  Rng rng(74);
  w.init(1, 2, rng);
  Mat X(3, 1);
  X.at(2, 0) = std::numeric_limits<double>::quiet_NaN();
  GruDirTape tape;
  Mat out(3, 2);
  REQUIRE_THROWS_AS(gru_dir_forward(w, X, false, tape, out, 0), NumericError);
}

namespace {

// Quadratic probe loss over the transform output against fixed targets.
double probe_loss(TransformWeights& w, const Mat& X, const Mat& target) {
  TransformTape tape;
  Mat z = transform_forward(w, X, tape);
  double l = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z.a[i] - target.a[i];
    l += d * d;
  }
  return l;
}

}  // namespace

TEST_CASE("quadratic toy loss: gradient is exactly 2(x - a)") {
  Rng rng(75);
  DenseWeights w;
  w.init(1, 1, rng);
  w.W.at(0, 0) = 1.0;
  w.b.at(0, 0) = 0.0;
  Mat X(1, 1);
  X.at(0, 0) = 3.0;
  const double a = 1.25;
  DenseGrads g;
  g.match(w);
  Mat out = dense_forward(w, X);
  Mat gout(1, 1);
  gout.at(0, 0) = 2.0 * (out.at(0, 0) - a);
  Mat gx = dense_backward(w, X, gout, g);
  REQUIRE(gx.at(0, 0) == 2.0 * (3.0 - a));
}

TEST_CASE("full transform gradients match central differences at 1e-5") {
  Rng rng(76);
  TransformWeights w;
  w.init(2, 2, 4, rng);
  Mat X = random_mat(6, 2, rng);
  Mat target = random_mat(6, 2, rng);

  TransformTape tape;
  Mat z = transform_forward(w, X, tape);
  Mat gout(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i) gout.a[i] = 2.0 * (z.a[i] - target.a[i]);
  TransformGrads g;
  g.match(w);
  transform_backward(w, X, tape, gout, g);

  std::vector<ParamRef> prefs, grefs;
  collect(w, "t", prefs);
  collect(g, "t", grefs);
  REQUIRE(prefs.size() == grefs.size());

  // Probe 64 randomly chosen parameters with central differences.
  const double eps = 1e-5;
  Rng pick(77);
  for (int probe = 0; probe < 64; ++probe) {
    const std::size_t pi = pick.below(prefs.size());
    Mat& pm = *prefs[pi].m;
    const std::size_t ei = pick.below(pm.size());
    const double saved = pm.a[ei];
    pm.a[ei] = saved + eps;
    const double lp = probe_loss(w, X, target);
    pm.a[ei] = saved - eps;
    const double lm = probe_loss(w, X, target);
    pm.a[ei] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double analytic = grefs[pi].m->a[ei];
    const double rel = std::abs(numeric - analytic) /
                       std::max({std::abs(numeric), std::abs(analytic), 1e-4});
    REQUIRE(rel < 1e-5);
  }
}

TEST_CASE("input gradients also pass central differences") {
  Rng rng(78);
  TransformWeights w;
  w.init(3, 2, 3, rng);
  Mat X = random_mat(5, 3, rng);
  Mat target = random_mat(5, 2, rng);
  TransformTape tape;
  Mat z = transform_forward(w, X, tape);
  Mat gout(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i) gout.a[i] = 2.0 * (z.a[i] - target.a[i]);
  TransformGrads g;
  g.match(w);
  Mat gx = transform_backward(w, X, tape, gout, g);
  const double eps = 1e-5;
  Rng pick(79);
  for (int probe = 0; probe < 32; ++probe) {
    const std::size_t ei = pick.below(X.size());
    const double saved = X.a[ei];
    X.a[ei] = saved + eps;
    const double lp = probe_loss(w, X, target);
    X.a[ei] = saved - eps;
    const double lm = probe_loss(w, X, target);
    X.a[ei] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double rel = std::abs(numeric - gx.a[ei]) /
                       std::max({std::abs(numeric), std::abs(gx.a[ei]), 1e-4});
    REQUIRE(rel < 1e-5);
  }
}

TEST_CASE("disconnected parameters receive zero gradient") {
  Rng rng(80);
  TransformWeights w;
  w.init(2, 2, 3, rng);
  TransformGrads g;
  g.match(w);
  // Nothing was back-propagated: every gradient buffer reads zero.
  std::vector<ParamRef> grefs;
  collect(g, "t", grefs);
  for (auto& ref : grefs)
    for (double v : ref.m->a) REQUIRE(v == 0.0);
}

TEST_CASE("Adam: zero gradients leave parameters unchanged") {
  Rng rng(81);
  TransformWeights w;
  w.init(2, 2, 3, rng);
  TransformGrads g;
  g.match(w);
  std::vector<ParamRef> prefs, grefs;
  collect(w, "t", prefs);
  collect(g, "t", grefs);
  const std::uint64_t before = params_digest(prefs);
  Adam opt(1e-3);
  for (int i = 0; i < 5; ++i) opt.step(prefs, grefs);
  REQUIRE(params_digest(prefs) == before);
}

TEST_CASE("Adam moves parameters against the gradient") {
  Rng rng(82);
  DenseWeights w;
  w.init(1, 1, rng);
  const double before = w.W.at(0, 0);
  DenseGrads g;
  g.match(w);
  g.W.at(0, 0) = 1.0;
  std::vector<ParamRef> prefs = {{"W", &w.W}, {"b", &w.b}};
  std::vector<ParamRef> grefs = {{"W", &g.W}, {"b", &g.b}};
  Adam opt(1e-2);
  opt.step(prefs, grefs);
  REQUIRE(w.W.at(0, 0) < before);
}

TEST_CASE("plateau schedule: 20 stalled epochs drop the rate from 1e-4 to 8e-5") {
  Adam opt(1e-4);
  PlateauScheduler sched(20, 0.8);
  REQUIRE(sched.observe(1.0) == 1.0);  // first epoch sets the best
  for (int e = 0; e < 19; ++e) REQUIRE(sched.observe(1.0) == 1.0);
  const double f = sched.observe(1.0);  // 20th non-improving epoch
  REQUIRE(f == 0.8);
  opt.set_lr(opt.lr() * f);
  REQUIRE(opt.lr() == Catch::Approx(8e-5).epsilon(1e-12));
}

TEST_CASE("plateau schedule: strictly improving history keeps the rate") {
  PlateauScheduler sched(20, 0.8);
  double loss = 1.0;
  for (int e = 0; e < 100; ++e) {
    REQUIRE(sched.observe(loss) == 1.0);
    loss *= 0.99;
  }
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
  auto run = [] {
    Rng rng(83);
    TransformWeights w;
    w.init(2, 2, 4, rng);
    TransformGrads g;
    g.match(w);
    Mat X = random_mat(6, 2, rng);
    Mat target = random_mat(6, 2, rng);
    std::vector<ParamRef> prefs, grefs;
    collect(w, "t", prefs);
    collect(g, "t", grefs);
    Adam opt(1e-3);
    for (int step = 0; step < 10; ++step) {
      for (auto& ref : grefs) ref.m->zero();
      TransformTape tape;
      Mat z = transform_forward(w, X, tape);
      Mat gout(z.rows, z.cols);
      for (std::size_t i = 0; i < z.size(); ++i)
        gout.a[i] = 2.0 * (z.a[i] - target.a[i]);
      transform_backward(w, X, tape, gout, g);
      opt.step(prefs, grefs);
    }
    return params_digest(prefs);
  };
  REQUIRE(run() == run());
}
