#include <catch2/catch_amalgamated.hpp>

#include "fhc/classical.hpp"

using namespace fhc;

namespace {

RVec uniform_samples(std::size_t n, Rng& rng, double lo, double hi) {
  RVec s(n);
  for (auto& v : s) v = rng.uniform(lo, hi);
  return s;
}

RVec normal_samples(std::size_t n, Rng& rng) {
  RVec s(n);
  for (auto& v : s) v = rng.normal();
  return s;
}

double quantize_mse(const RVec& samples, const RVec& levels) {
  double mse = 0.0;
  for (double x : samples) {
    const double d = x - levels[nearest_level(levels, x)];
    mse += d * d;
  }
  return mse / static_cast<double>(samples.size());
}

// Brute-force oracle for the symmetric 4-level quantizer: thresholds
// {-t, 0, t}, levels are the conditional centroids of each cell. Sweeps t on
// a 1e-3 grid and returns the best empirical MSE.
double grid_search_4level_mse(const RVec& samples) {
  RVec sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  RVec ps(n + 1, 0.0), ps2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i + 1] = ps[i] + sorted[i];
    ps2[i + 1] = ps2[i] + sorted[i] * sorted[i];
  }
  auto cell_sse = [&](std::size_t lo, std::size_t hi) {
    if (hi <= lo) return 0.0;
    const double cnt = static_cast<double>(hi - lo);
    const double c = (ps[hi] - ps[lo]) / cnt;
    return (ps2[hi] - ps2[lo]) - c * (ps[hi] - ps[lo]);
  };
  auto idx_of = [&](double x) {
    return static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
  };
  double best = std::numeric_limits<double>::infinity();
  const std::size_t zero = idx_of(0.0);
  for (double t = 0.001; t < 4.0; t += 0.001) {
    const std::size_t a = idx_of(-t);
    const std::size_t b = idx_of(t);
    const double sse = cell_sse(0, a) + cell_sse(a, zero) + cell_sse(zero, b) +
                       cell_sse(b, n);
    best = std::min(best, sse / static_cast<double>(n));
  }
  return best;
}

}  // namespace

TEST_CASE("Lloyd-Max on uniform(-1,1) at Q=1: levels near ±0.5, MSE near 1/12") {
  Rng rng(41);
  RVec s = uniform_samples(200000, rng, -1.0, 1.0);
  LloydStats st;
  ScalarCodebook cb = train_scalar(s, 1, 200, 1e-12, &st);
  REQUIRE(cb.levels.size() == 2);
  REQUIRE(std::abs(cb.levels[0] + 0.5) < 0.01);
  REQUIRE(std::abs(cb.levels[1] - 0.5) < 0.01);
  // Half-interval variance: (1/12) * 1^2.
  REQUIRE(std::abs(st.distortion - 1.0 / 12.0) < 0.002);
}

TEST_CASE("Lloyd-Max on a two-point source is exact") {
  RVec s;
  for (int i = 0; i < 500; ++i) {
    s.push_back(-1.0);
    s.push_back(1.0);
  }
  LloydStats st;
  ScalarCodebook cb = train_scalar(s, 1, 100, 1e-12, &st);
  REQUIRE(cb.levels[0] == -1.0);
  REQUIRE(cb.levels[1] == 1.0);
  REQUIRE(st.distortion == 0.0);
}

TEST_CASE("Lloyd-Max at Q=2 on Gaussian data is within 2% of the grid-search optimum") {
  Rng rng(42);
  RVec s = normal_samples(120000, rng);
  ScalarCodebook cb = train_scalar(s, 2, 300, 1e-12);
  const double lloyd_mse = quantize_mse(s, cb.levels);
  const double oracle_mse = grid_search_4level_mse(s);
  REQUIRE(lloyd_mse <= oracle_mse * 1.02);
  // Sanity anchor: the 2-bit Gaussian Lloyd-Max distortion is about 0.1175.
  REQUIRE(lloyd_mse == Catch::Approx(0.1175).margin(0.006));
}

TEST_CASE("scalar quantizer: samples on the levels give zero distortion") {
  Rng rng(43);
  RVec s = normal_samples(5000, rng);
  ScalarCodebook cb = train_scalar(s, 3);
  CVec exact(64);
  for (std::size_t i = 0; i < exact.size(); ++i)
    exact[i] = Cpx(cb.levels[i % cb.levels.size()],
                   cb.levels[(i * 3) % cb.levels.size()]);
  ScalarApplyResult r = apply_scalar(exact, cb);
  for (std::size_t i = 0; i < exact.size(); ++i) REQUIRE(r.s_hat[i] == exact[i]);
}

TEST_CASE("scalar payload is exactly 2*Q bits per complex sample and decodes bit-exactly") {
  Rng rng(44);
  RVec train = normal_samples(5000, rng);
  ScalarCodebook cb = train_scalar(train, 4);
  CVec s(321);
  for (auto& v : s) v = Cpx(rng.normal(), rng.normal());
  ScalarApplyResult r = apply_scalar(s, cb);
  REQUIRE(r.payload_bits == 2u * 4u * s.size());
  CVec back = decode_scalar(r.payload, r.payload_bits, s.size(), cb);
  REQUIRE(back == r.s_hat);
}

TEST_CASE("midpoint between two levels picks the lower index") {
  ScalarCodebook cb{{-1.0, 1.0}, 1};
  REQUIRE(nearest_level(cb.levels, 0.0) == 0);        // exact tie
  REQUIRE(nearest_level(cb.levels, 1e-9) == 1);
  REQUIRE(nearest_level(cb.levels, -1e-9) == 0);
  CVec mid = {Cpx(0.0, 0.0)};
  ScalarApplyResult r = apply_scalar(mid, cb);
  REQUIRE(r.s_hat[0] == Cpx(-1.0, -1.0));
}

TEST_CASE("vector training with b=1 tracks scalar training") {
  Rng rng(45);
  RVec s = normal_samples(30000, rng);
  ScalarCodebook scb = train_scalar(s, 2, 300, 1e-12);
  std::vector<RVec> blocks(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) blocks[i] = {s[i]};
  LloydStats st;
  VectorCodebook vcb = train_vector(blocks, 1, 2, 300, 1e-12, 7, &st);
  const double scalar_mse = quantize_mse(s, scb.levels);
  REQUIRE(st.distortion <= scalar_mse * 1.01);
  REQUIRE(st.distortion >= scalar_mse * 0.99);
}

TEST_CASE("VQ recovers a discrete source exactly, alpha = 1 when uniform") {
  // 2^{bQ} = 16 distinct equiprobable block values.
  Rng rng(46);
  std::vector<RVec> atoms;
  for (int i = 0; i < 16; ++i)
    atoms.push_back({rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)});
  std::vector<RVec> blocks;
  for (int rep = 0; rep < 500; ++rep)
    for (int i = 0; i < 16; ++i) blocks.push_back(atoms[static_cast<std::size_t>(i)]);
  LloydStats st;
  VectorCodebook cb = train_vector(blocks, 2, 2, 100, 1e-12, 8, &st);
  REQUIRE(st.distortion < 1e-12);
  REQUIRE(cb.alpha == 1.0);  // uniform Huffman over a power-of-two alphabet
}

TEST_CASE("skewed index distribution yields alpha < 1") {
  Rng rng(47);
  std::vector<RVec> blocks;
  // One dominant cluster (90%), the rest spread.
  for (int i = 0; i < 9000; ++i)
    blocks.push_back({rng.normal() * 0.01, rng.normal() * 0.01});
  for (int i = 0; i < 1000; ++i)
    blocks.push_back({rng.uniform(3.0, 9.0), rng.uniform(3.0, 9.0)});
  VectorCodebook cb = train_vector(blocks, 2, 2, 100, 1e-9, 9);
  REQUIRE(cb.alpha < 1.0);
}

TEST_CASE("vector encode/decode round trip, fixed and entropy coded") {
  Rng rng(48);
  std::vector<RVec> blocks;
  for (int i = 0; i < 4000; ++i) blocks.push_back({rng.normal(), rng.normal()});
  VectorCodebook cb = train_vector(blocks, 2, 2, 60, 1e-9, 10);
  CVec s(320);
  for (auto& v : s) v = Cpx(rng.normal(), rng.normal());
  for (bool entropy : {false, true}) {
    VectorApplyResult r = apply_vector(s, cb, entropy);
    CVec back = decode_vector(r.payload, r.payload_bits, s.size(), cb, entropy);
    REQUIRE(back == r.s_hat);
    if (!entropy) REQUIRE(r.payload_bits == s.size() * 2u * 2u);
  }
}

TEST_CASE("entropy-coded payload beats fixed rate on the training distribution") {
  Rng rng(49);
  std::vector<RVec> blocks;
  for (int i = 0; i < 20000; ++i) {
    const double big = rng.uniform() < 0.85 ? 0.05 : 1.0;
    blocks.push_back({rng.normal() * big, rng.normal() * big});
  }
  VectorCodebook cb = train_vector(blocks, 2, 3, 60, 1e-9, 11);
  CVec s(512);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double big = rng.uniform() < 0.85 ? 0.05 : 1.0;
    s[i] = Cpx(rng.normal() * big, rng.normal() * big);
  }
  VectorApplyResult fixed = apply_vector(s, cb, false);
  VectorApplyResult coded = apply_vector(s, cb, true);
  REQUIRE(coded.payload_bits <= fixed.payload_bits);
}

TEST_CASE("Huffman properties: Kraft holds, decode inverts encode") {
  Rng rng(50);
  std::vector<std::uint64_t> weights(37);
  for (auto& w : weights) w = rng.below(1000);
  auto lengths = huffman_code_lengths(weights);
  REQUIRE(kraft_holds(lengths));
  CanonicalHuffman huff(lengths);
  std::vector<std::uint32_t> syms(5000);
  for (auto& s : syms) s = static_cast<std::uint32_t>(rng.below(weights.size()));
  BitWriter bw;
  for (auto s : syms) huff.encode(s, bw);
  BitReader br(bw.bytes(), bw.bit_count());
  for (auto s : syms) REQUIRE(huff.decode(br) == s);
}

TEST_CASE("Huffman average length is within 1 bit of the empirical entropy") {
  Rng rng(51);
  std::vector<std::uint64_t> weights = {900, 50, 25, 12, 6, 4, 2, 1};
  auto lengths = huffman_code_lengths(weights);
  double total = 0.0, avg = 0.0, entropy = 0.0;
  for (auto w : weights) total += static_cast<double>(w);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double p = static_cast<double>(weights[i]) / total;
    avg += p * lengths[i];
    entropy -= p * std::log2(p);
  }
  REQUIRE(avg >= entropy);
  REQUIRE(avg < entropy + 1.0);
}

TEST_CASE("corrupt Huffman streams raise stream errors") {
  // Truncation mid-codeword exhausts the reader.
  CanonicalHuffman huff({1, 2, 3, 3});
  BitWriter bw;
  huff.encode(3, bw);  // longest codeword
  BitReader truncated(bw.bytes(), bw.bit_count() - 1);
  REQUIRE_THROWS_AS(huff.decode(truncated), StreamError);
  // An incomplete (non-Kraft-tight) length table from a corrupt bundle can
  // leave prefixes that never terminate.
  CanonicalHuffman sparse({2, 2, 2});  // one leaf of the depth-2 tree missing
  std::vector<std::uint8_t> bits = {0xFF};
  BitReader br(bits, 8);
  REQUIRE_THROWS_AS(sparse.decode(br), StreamError);
  // Length tables violating Kraft are rejected outright.
  REQUIRE_THROWS_AS(CanonicalHuffman({1, 1, 1}), StreamError);
}

TEST_CASE("CR formula: the worked §V scalar-quantizer example is exact") {
  // Q=4, alpha=1: payload = 2*4*320 = 2560 bits, q_s*n_t = 8.
  const double cr = compression_ratio(2560.0, 320, 1, 8, 5, 8);
  REQUIRE(cr == 1605.0 / 9600.0);
  REQUIRE(cr == Catch::Approx(0.1672).margin(5e-5));
}

TEST_CASE("CR formula: Q=15 at alpha=1 with k=m approaches 1") {
  const double cr = compression_ratio(2.0 * 15.0 * 320.0, 320, 1, 8, 1, 1);
  REQUIRE(cr == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("CR is linear in the payload term") {
  const double base = compression_ratio(2560.0, 320, 1, 8, 5, 8);
  const double doubled = compression_ratio(5120.0, 320, 1, 8, 5, 8);
  const double overhead = compression_ratio(0.0, 320, 1, 8, 5, 8);
  REQUIRE(std::abs((doubled - overhead) - 2.0 * (base - overhead)) < 1e-15);
}
