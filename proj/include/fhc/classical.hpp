#pragma once
// Baseline quantizers: Lloyd-Max scalar quantization of I/Q components and
// generalized-Lloyd vector quantization of real blocks with an optional
// canonical Huffman stage over the indices.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fhc/bitio.hpp"
#include "fhc/huffman.hpp"
#include "fhc/rng.hpp"
#include "fhc/types.hpp"

namespace fhc {

struct ScalarCodebook {
  RVec levels;  // strictly increasing, 2^q_bits entries
  int q_bits = 0;
};

struct LloydStats {
  int iterations = 0;
  int reseeds = 0;
  double distortion = 0.0;
};

// Lloyd-Max on a scalar sample set: nearest-level partition, centroid update,
// until the distortion change falls below tol. Empty cells are re-seeded by
// splitting the most populated cell.
inline ScalarCodebook train_scalar(const RVec& samples, int q_bits,
                                   int max_iter = 200, double tol = 1e-9,
                                   LloydStats* stats = nullptr) {
  if (q_bits < 1 || q_bits > 20) throw ConfigError("q_bits out of range");
  const std::size_t levels_n = std::size_t{1} << q_bits;
  RVec sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() < levels_n) throw StatsError("fewer samples than levels");

  // Prefix sums over the sorted samples make each Lloyd sweep O(L log n).
  const std::size_t n = sorted.size();
  RVec ps(n + 1, 0.0), ps2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i + 1] = ps[i] + sorted[i];
    ps2[i + 1] = ps2[i] + sorted[i] * sorted[i];
  }

  RVec levels(levels_n);
  for (std::size_t i = 0; i < levels_n; ++i) {
    const std::size_t idx = std::min(
        n - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) *
                                        static_cast<double>(n) / double(levels_n)));
    levels[i] = sorted[idx];
  }
  std::sort(levels.begin(), levels.end());

  double prev_dist = std::numeric_limits<double>::infinity();
  int reseeds = 0;
  int it = 0;
  bool reseeded_last = false;
  for (; it < max_iter; ++it) {
    // Cell j covers sorted indices [edge[j], edge[j+1]).
    std::vector<std::size_t> edge(levels_n + 1, 0);
    edge[levels_n] = n;
    for (std::size_t j = 1; j < levels_n; ++j) {
      const double boundary = 0.5 * (levels[j - 1] + levels[j]);
      edge[j] = static_cast<std::size_t>(
          std::upper_bound(sorted.begin(), sorted.end(), boundary) - sorted.begin());
    }
    double dist = 0.0;
    for (std::size_t j = 0; j < levels_n; ++j) {
      const std::size_t lo = edge[j], hi = edge[j + 1];
      const auto cnt = static_cast<double>(hi - lo);
      if (hi > lo) {
        const double c = levels[j];
        dist += (ps2[hi] - ps2[lo]) - 2.0 * c * (ps[hi] - ps[lo]) + c * c * cnt;
      }
    }
    dist /= static_cast<double>(n);
    if (!reseeded_last && dist > prev_dist + 1e-12 * std::max(1.0, prev_dist))
      throw NumericError("Lloyd distortion increased");
    const bool converged = std::abs(prev_dist - dist) < tol;
    prev_dist = dist;

    // Centroid update; collect empties.
    reseeded_last = false;
    std::size_t most_pop = 0;
    for (std::size_t j = 1; j < levels_n; ++j)
      if (edge[j + 1] - edge[j] > edge[most_pop + 1] - edge[most_pop]) most_pop = j;
    for (std::size_t j = 0; j < levels_n; ++j) {
      const std::size_t lo = edge[j], hi = edge[j + 1];
      if (hi > lo) {
        levels[j] = (ps[hi] - ps[lo]) / static_cast<double>(hi - lo);
      } else {
        // Split the most populated cell at its median sample.
        const std::size_t mlo = edge[most_pop], mhi = edge[most_pop + 1];
        levels[j] = sorted[(mlo + mhi) / 2];
        ++reseeds;
        reseeded_last = true;
      }
    }
    std::sort(levels.begin(), levels.end());
    if (converged && !reseeded_last) break;
  }
  // Collapse accidental duplicates by nudging; strict monotonicity is an
  // invariant of the codebook.
  for (std::size_t j = 1; j < levels_n; ++j)
    if (levels[j] <= levels[j - 1])
      levels[j] = std::nextafter(levels[j - 1], std::numeric_limits<double>::max());
  if (stats) {
    stats->iterations = it;
    stats->reseeds = reseeds;
    stats->distortion = prev_dist;
  }
  return ScalarCodebook{std::move(levels), q_bits};
}

// Nearest level with ties resolved to the lower index; required for
// cross-platform bit-exact streams.
inline std::uint32_t nearest_level(const RVec& levels, double x) {
  const auto it = std::lower_bound(levels.begin(), levels.end(), x);
  if (it == levels.begin()) return 0;
  if (it == levels.end()) return static_cast<std::uint32_t>(levels.size() - 1);
  const auto hi = static_cast<std::uint32_t>(it - levels.begin());
  const std::uint32_t lo = hi - 1;
  const double d_lo = x - levels[lo], d_hi = levels[hi] - x;
  return d_lo <= d_hi ? lo : hi;
}

struct ScalarApplyResult {
  CVec s_hat;
  std::vector<std::uint8_t> payload;
  std::size_t payload_bits = 0;
};

inline ScalarApplyResult apply_scalar(const CVec& s, const ScalarCodebook& cb) {
  ScalarApplyResult out;
  out.s_hat.resize(s.size());
  BitWriter bw;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::uint32_t qi = nearest_level(cb.levels, s[i].real());
    const std::uint32_t qq = nearest_level(cb.levels, s[i].imag());
    bw.put_bits(qi, static_cast<unsigned>(cb.q_bits));
    bw.put_bits(qq, static_cast<unsigned>(cb.q_bits));
    out.s_hat[i] = Cpx(cb.levels[qi], cb.levels[qq]);
  }
  out.payload_bits = bw.bit_count();
  out.payload = bw.take();
  return out;
}

inline CVec decode_scalar(const std::vector<std::uint8_t>& payload,
                          std::size_t payload_bits, std::size_t count,
                          const ScalarCodebook& cb) {
  BitReader br(payload, payload_bits);
  CVec s_hat(count);
  for (auto& v : s_hat) {
    const auto qi = static_cast<std::size_t>(br.get_bits(static_cast<unsigned>(cb.q_bits)));
    const auto qq = static_cast<std::size_t>(br.get_bits(static_cast<unsigned>(cb.q_bits)));
    v = Cpx(cb.levels[qi], cb.levels[qq]);
  }
  return s_hat;
}

struct VectorCodebook {
  std::vector<RVec> vectors;  // 2^{b*q_bits} rows of dimension b
  int block_dim = 0;
  int q_bits = 0;
  std::vector<std::uint8_t> code_lengths;  // canonical Huffman lengths
  double alpha = 1.0;                      // measured entropy-coding efficiency
};

inline std::size_t nearest_vector(const std::vector<RVec>& rows, const double* x,
                                  std::size_t b) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double d = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double diff = rows[r][i] - x[i];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the lower index
      best_d = d;
      best = r;
    }
  }
  return best;
}

// Generalized Lloyd (k-means with k-means++ seeding) over b-dimensional real
// blocks, then canonical Huffman lengths over the empirical index
// frequencies. alpha is average code length divided by the fixed rate b*Q.
inline VectorCodebook train_vector(const std::vector<RVec>& blocks, int b,
                                   int q_bits, int max_iter = 60,
                                   double tol = 1e-7, std::uint64_t seed = 0,
                                   LloydStats* stats = nullptr) {
  if (b < 1) throw ConfigError("block dimension must be positive");
  if (q_bits < 1 || b * q_bits > 20) throw ConfigError("b*q_bits out of range");
  const std::size_t k = std::size_t{1} << (b * q_bits);
  if (blocks.size() < k) throw StatsError("fewer blocks than codewords");
  const auto bs = static_cast<std::size_t>(b);
  for (const auto& blk : blocks)
    if (blk.size() != bs) throw ShapeError("block dimension mismatch");

  Rng rng(seed);
  std::vector<RVec> centers;
  centers.reserve(k);
  // k-means++ seeding.
  centers.push_back(blocks[rng.below(blocks.size())]);
  RVec d2(blocks.size(), 0.0);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) {
        double d = 0.0;
        for (std::size_t j = 0; j < bs; ++j) {
          const double diff = blocks[i][j] - c[j];
          d += diff * diff;
        }
        best = std::min(best, d);
      }
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform() * total;
    std::size_t pick = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
      pick = i;
    }
    centers.push_back(blocks[pick]);
  }

  std::vector<std::size_t> assign(blocks.size(), 0);
  std::vector<std::uint64_t> counts(k, 0);
  double prev_dist = std::numeric_limits<double>::infinity();
  int reseeds = 0;
  int it = 0;
  bool reseeded_last = false;
  for (; it < max_iter; ++it) {
    double dist = 0.0;
    std::fill(counts.begin(), counts.end(), 0);
    std::vector<RVec> sums(k, RVec(bs, 0.0));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::size_t a = nearest_vector(centers, blocks[i].data(), bs);
      assign[i] = a;
      ++counts[a];
      double d = 0.0;
      for (std::size_t j = 0; j < bs; ++j) {
        sums[a][j] += blocks[i][j];
        const double diff = blocks[i][j] - centers[a][j];
        d += diff * diff;
      }
      dist += d;
    }
    dist /= static_cast<double>(blocks.size());
    if (!reseeded_last && dist > prev_dist + 1e-12 * std::max(1.0, prev_dist))
      throw NumericError("generalized Lloyd distortion increased");
    const bool converged = std::abs(prev_dist - dist) < tol;
    prev_dist = dist;

    reseeded_last = false;
    std::size_t most_pop = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (counts[c] > counts[most_pop]) most_pop = c;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < bs; ++j)
          centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      } else {
        // Re-seed at the block farthest from the most populated centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
          if (assign[i] != most_pop) continue;
          double d = 0.0;
          for (std::size_t j = 0; j < bs; ++j) {
            const double diff = blocks[i][j] - centers[most_pop][j];
            d += diff * diff;
          }
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = blocks[far];
        ++reseeds;
        reseeded_last = true;
      }
    }
    if (converged && !reseeded_last) break;
  }

  VectorCodebook cb;
  cb.vectors = std::move(centers);
  cb.block_dim = b;
  cb.q_bits = q_bits;
  cb.code_lengths = huffman_code_lengths(counts);
  std::uint64_t total = 0;
  double weighted = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    total += counts[c];
    weighted += static_cast<double>(counts[c]) * cb.code_lengths[c];
  }
  cb.alpha = weighted / (static_cast<double>(total) * b * q_bits);
  if (stats) {
    stats->iterations = it;
    stats->reseeds = reseeds;
    stats->distortion = prev_dist;
  }
  return cb;
}

// Splits a complex sequence into real-interleaved blocks of dimension b.
inline std::vector<RVec> interleave_blocks(const CVec& s, int b) {
  const std::size_t total = 2 * s.size();
  if (total % static_cast<std::size_t>(b) != 0)
    throw ShapeError("2*N' not divisible by block dimension");
  std::vector<RVec> blocks(total / static_cast<std::size_t>(b),
                           RVec(static_cast<std::size_t>(b)));
  for (std::size_t i = 0; i < total; ++i) {
    const double v = (i % 2 == 0) ? s[i / 2].real() : s[i / 2].imag();
    blocks[i / static_cast<std::size_t>(b)][i % static_cast<std::size_t>(b)] = v;
  }
  return blocks;
}

struct VectorApplyResult {
  CVec s_hat;
  std::vector<std::uint8_t> payload;
  std::size_t payload_bits = 0;
};

inline VectorApplyResult apply_vector(const CVec& s, const VectorCodebook& cb,
                                      bool entropy_coded) {
  const auto blocks = interleave_blocks(s, cb.block_dim);
  const auto bs = static_cast<std::size_t>(cb.block_dim);
  std::vector<std::uint32_t> indices(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    indices[i] = static_cast<std::uint32_t>(
        nearest_vector(cb.vectors, blocks[i].data(), bs));

  BitWriter bw;
  if (entropy_coded) {
    CanonicalHuffman huff(cb.code_lengths);
    for (auto idx : indices) huff.encode(idx, bw);
  } else {
    const auto width = static_cast<unsigned>(cb.block_dim * cb.q_bits);
    for (auto idx : indices) bw.put_bits(idx, width);
  }

  VectorApplyResult out;
  out.s_hat.resize(s.size());
  RVec flat(2 * s.size());
  for (std::size_t i = 0; i < blocks.size(); ++i)
    for (std::size_t j = 0; j < bs; ++j) flat[i * bs + j] = cb.vectors[indices[i]][j];
  for (std::size_t i = 0; i < s.size(); ++i)
    out.s_hat[i] = Cpx(flat[2 * i], flat[2 * i + 1]);
  out.payload_bits = bw.bit_count();
  out.payload = bw.take();
  return out;
}

inline CVec decode_vector(const std::vector<std::uint8_t>& payload,
                          std::size_t payload_bits, std::size_t n_complex,
                          const VectorCodebook& cb, bool entropy_coded) {
  const auto bs = static_cast<std::size_t>(cb.block_dim);
  const std::size_t n_blocks = 2 * n_complex / bs;
  BitReader br(payload, payload_bits);
  RVec flat(2 * n_complex);
  if (entropy_coded) {
    CanonicalHuffman huff(cb.code_lengths);
    for (std::size_t i = 0; i < n_blocks; ++i) {
      const std::uint32_t idx = huff.decode(br);
      for (std::size_t j = 0; j < bs; ++j) flat[i * bs + j] = cb.vectors[idx][j];
    }
  } else {
    const auto width = static_cast<unsigned>(cb.block_dim * cb.q_bits);
    for (std::size_t i = 0; i < n_blocks; ++i) {
      const auto idx = static_cast<std::size_t>(br.get_bits(width));
      if (idx >= cb.vectors.size()) throw StreamError("index out of codebook range");
      for (std::size_t j = 0; j < bs; ++j) flat[i * bs + j] = cb.vectors[idx][j];
    }
  }
  CVec s_hat(n_complex);
  for (std::size_t i = 0; i < n_complex; ++i)
    s_hat[i] = Cpx(flat[2 * i], flat[2 * i + 1]);
  return s_hat;
}

// Compression ratio against 2x15-bit uncompressed I/Q at the original rate:
// CR = K*(payload_bits + q_s*n_t)/M / (30*N').
inline double compression_ratio(double payload_bits, int n_prime, int n_t,
                                int q_s, int k, int m) {
  if (n_prime <= 0 || n_t <= 0 || q_s <= 0 || k <= 0 || m <= 0 || payload_bits < 0)
    throw ConfigError("compression_ratio arguments must be positive");
  return static_cast<double>(k) * (payload_bits + double(q_s) * n_t) /
         static_cast<double>(m) / (30.0 * static_cast<double>(n_prime));
}

}  // namespace fhc
