#pragma once
// Latent quantizers for the learned schemes: uniform scalar quantization on
// the clipped latent (with straight-through gradients handled by the caller)
// and learned-codebook vector quantization over blocks of the flattened
// latent. Latents are time-major T x V, so the row-major flattening equals
// the per-step concatenation [z_1^T, ..., z_T^T]; with b = V the blocks group
// the channels of one time step.

#include <cmath>

#include "fhc/matrix.hpp"

namespace fhc {

// Clip to [0,1], then z_hat = floor((2^Q - 1) z + 1/2) / (2^Q - 1). Training
// uses the straight-through estimator: gradients w.r.t. z_hat are applied to
// the pre-clip latent unchanged.
inline nn::Mat uniform_latent_quantize(const nn::Mat& z, int q_bits) {
  if (q_bits < 1 || q_bits > 16) throw ConfigError("q_bits out of range");
  const double levels = static_cast<double>((1 << q_bits) - 1);
  nn::Mat out(z.rows, z.cols);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double c = std::min(1.0, std::max(0.0, z.a[i]));
    out.a[i] = std::floor(levels * c + 0.5) / levels;
  }
  return out;
}

inline std::vector<std::uint32_t> uniform_latent_indices(const nn::Mat& z, int q_bits) {
  const double levels = static_cast<double>((1 << q_bits) - 1);
  std::vector<std::uint32_t> idx(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double c = std::min(1.0, std::max(0.0, z.a[i]));
    idx[i] = static_cast<std::uint32_t>(std::floor(levels * c + 0.5));
  }
  return idx;
}

inline nn::Mat uniform_latent_from_indices(const std::vector<std::uint32_t>& idx,
                                           int rows, int cols, int q_bits) {
  const double levels = static_cast<double>((1 << q_bits) - 1);
  nn::Mat out(rows, cols);
  if (idx.size() != out.size()) throw ShapeError("index count mismatch");
  for (std::size_t i = 0; i < out.size(); ++i)
    out.a[i] = static_cast<double>(idx[i]) / levels;
  return out;
}

struct LatentVqCodebook {
  nn::Mat e;  // 2^{b*q_bits} x b
  int block_dim = 2;
  int q_bits = 4;
  double beta = 1.0;

  int rows() const { return e.rows; }
};

inline LatentVqCodebook make_latent_vq_codebook(int b, int q_bits, double beta = 1.0) {
  if (b < 1 || q_bits < 1 || b * q_bits > 20) throw ConfigError("bad VQ geometry");
  LatentVqCodebook cb;
  cb.e = nn::Mat(1 << (b * q_bits), b);
  cb.block_dim = b;
  cb.q_bits = q_bits;
  cb.beta = beta;
  return cb;
}

struct VqResult {
  nn::Mat z_hat;
  std::vector<std::uint32_t> indices;
};

// Nearest codebook row per block (ties to the lower index). Gradients pass
// straight through to z; the indices feed the fixed-rate payload.
inline VqResult vq_latent_quantize(const nn::Mat& z, const LatentVqCodebook& cb) {
  const auto b = static_cast<std::size_t>(cb.block_dim);
  if (z.size() % b != 0) throw ShapeError("latent size not divisible by block");
  VqResult res;
  res.z_hat = nn::Mat(z.rows, z.cols);
  const std::size_t n_blocks = z.size() / b;
  res.indices.resize(n_blocks);
  for (std::size_t i = 0; i < n_blocks; ++i) {
    const double* x = z.a.data() + i * b;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cb.e.rows; ++r) {
      const double* er = cb.e.row(r);
      double d = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        const double diff = er[j] - x[j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(r);
      }
    }
    res.indices[i] = static_cast<std::uint32_t>(best);
    const double* er = cb.e.row(static_cast<int>(best));
    for (std::size_t j = 0; j < b; ++j) res.z_hat.a[i * b + j] = er[j];
  }
  return res;
}

inline nn::Mat vq_latent_from_indices(const std::vector<std::uint32_t>& idx,
                                      int rows, int cols, const LatentVqCodebook& cb) {
  nn::Mat out(rows, cols);
  const auto b = static_cast<std::size_t>(cb.block_dim);
  if (idx.size() * b != out.size()) throw ShapeError("index count mismatch");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (static_cast<int>(idx[i]) >= cb.e.rows)
      throw StreamError("VQ index out of codebook range");
    const double* er = cb.e.row(static_cast<int>(idx[i]));
    for (std::size_t j = 0; j < b; ++j) out.a[i * b + j] = er[j];
  }
  return out;
}

// Codebook-fitting term ||sg[z] - z_hat||^2: the value equals the commitment
// term, but the gradient flows only into the assigned codebook rows.
inline double vq_codebook_term_grad(const nn::Mat& z, const VqResult& q,
                                    LatentVqCodebook& cb, nn::Mat& g_codebook) {
  const auto b = static_cast<std::size_t>(cb.block_dim);
  double loss = 0.0;
  for (std::size_t i = 0; i < q.indices.size(); ++i) {
    const int row = static_cast<int>(q.indices[i]);
    double* gr = g_codebook.row(row);
    const double* er = cb.e.row(row);
    for (std::size_t j = 0; j < b; ++j) {
      const double diff = er[j] - z.a[i * b + j];
      loss += diff * diff;
      gr[j] += 2.0 * diff;
    }
  }
  return loss;
}

// Commitment term beta * ||z - sg[z_hat]||^2: gradient flows only to z.
inline double vq_commitment_term_grad(const nn::Mat& z, const VqResult& q,
                                      double beta, nn::Mat& g_z) {
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double diff = z.a[i] - q.z_hat.a[i];
    loss += diff * diff;
    g_z.a[i] += 2.0 * beta * diff;
  }
  return beta * loss;
}

// Normalized squared error over occupied-subcarrier values:
// ||x - x_hat||^2 / ||x||^2. Gradient helper returns d/d(x_hat).
inline double normalized_se(const CVec& x_occ, const CVec& xhat_occ) {
  if (x_occ.size() != xhat_occ.size()) throw ShapeError("length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x_occ.size(); ++i) {
    num += std::norm(xhat_occ[i] - x_occ[i]);
    den += std::norm(x_occ[i]);
  }
  if (den <= 0.0) throw MetricError("zero reference energy");
  return num / den;
}

inline double normalized_se_grad(const CVec& x_occ, const CVec& xhat_occ,
                                 CVec& g_xhat) {
  if (x_occ.size() != xhat_occ.size()) throw ShapeError("length mismatch");
  double den = 0.0;
  for (const auto& v : x_occ) den += std::norm(v);
  if (den <= 0.0) throw MetricError("zero reference energy");
  g_xhat.resize(x_occ.size());
  double num = 0.0;
  for (std::size_t i = 0; i < x_occ.size(); ++i) {
    const Cpx d = xhat_occ[i] - x_occ[i];
    num += std::norm(d);
    g_xhat[i] = 2.0 * d / den;
  }
  return num / den;
}

}  // namespace fhc
