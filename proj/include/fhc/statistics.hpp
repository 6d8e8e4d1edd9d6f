#pragma once
// Second-order statistics of the decimated signal: the analytic covariance of
// the guard-banded spectrum and its empirical estimate from generated frames.

#include <cmath>

#include "fhc/types.hpp"

namespace fhc {

// Dense row-major complex matrix, sized for covariance work.
struct CMat {
  std::size_t n = 0;
  CVec a;

  CMat() = default;
  explicit CMat(std::size_t n_) : n(n_), a(n_ * n_, Cpx(0.0, 0.0)) {}
  Cpx& at(std::size_t r, std::size_t c) { return a[r * n + c]; }
  const Cpx& at(std::size_t r, std::size_t c) const { return a[r * n + c]; }
};

// Covariance of the decimated output: entry (n,m) is
// (P/N') * sum_{k=k*}^{N'-k*-1} exp(j*beta*(n-m)*k) with beta = 2*pi/N'.
// The matrix is circulant, so only the N' lag values are computed.
inline CMat analytic_covariance(int n_prime, int k_star, double power) {
  if (n_prime <= 0 || k_star < 0 || 2 * k_star >= n_prime)
    throw ConfigError("require 0 <= 2*k_star < n_prime");
  const std::size_t n = static_cast<std::size_t>(n_prime);
  const double beta = 2.0 * M_PI / static_cast<double>(n_prime);
  CVec lag(n, Cpx(0.0, 0.0));
  for (std::size_t d = 0; d < n; ++d) {
    Cpx acc(0.0, 0.0);
    for (int k = k_star; k < n_prime - k_star; ++k) {
      const double ph = beta * static_cast<double>(d) * static_cast<double>(k);
      acc += Cpx(std::cos(ph), std::sin(ph));
    }
    lag[d] = acc * (power / static_cast<double>(n_prime));
  }
  CMat c(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col)
      c.at(r, col) = r >= col ? lag[r - col] : std::conj(lag[col - r]);
  return c;
}

// Empirical covariance of a set of equal-length frames. The decimated signal
// is circularly stationary (that is what the analytic result expresses), so
// the estimate is averaged over frames and over circular lags and assembled
// as a circulant matrix; a plain per-entry outer-product average would need
// roughly an order of magnitude more frames for the same accuracy.
inline CMat empirical_covariance(const std::vector<CVec>& frames) {
  if (frames.size() < 2) throw StatsError("need at least two frames");
  const std::size_t n = frames[0].size();
  for (const auto& f : frames)
    if (f.size() != n) throw ShapeError("frames differ in length");
  const double inv_f = 1.0 / static_cast<double>(frames.size());
  CVec mean(n, Cpx(0.0, 0.0));
  for (const auto& f : frames)
    for (std::size_t i = 0; i < n; ++i) mean[i] += f[i];
  for (auto& v : mean) v *= inv_f;

  CVec lag(n, Cpx(0.0, 0.0));
  CVec centered(n);
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < n; ++i) centered[i] = f[i] - mean[i];
    for (std::size_t d = 0; d < n; ++d) {
      Cpx acc(0.0, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i >= d ? i - d : i + n - d;
        acc += centered[i] * std::conj(centered[j]);
      }
      lag[d] += acc;
    }
  }
  const double scale = inv_f / static_cast<double>(n);
  for (auto& v : lag) v *= scale;
  // Enforce Hermitian symmetry between lag d and N'-d.
  for (std::size_t d = 1; d <= n / 2; ++d) {
    const Cpx avg = 0.5 * (lag[d] + std::conj(lag[n - d]));
    lag[d] = avg;
    lag[n - d] = std::conj(avg);
  }
  lag[0] = Cpx(lag[0].real(), 0.0);

  CMat c(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col)
      c.at(r, col) = r >= col ? lag[r - col] : std::conj(lag[col - r]);
  return c;
}

inline double frobenius_norm(const CMat& m) {
  double s = 0.0;
  for (const auto& v : m.a) s += std::norm(v);
  return std::sqrt(s);
}

inline double relative_frobenius_error(const CMat& estimate, const CMat& reference) {
  if (estimate.n != reference.n) throw ShapeError("matrix size mismatch");
  double num = 0.0;
  for (std::size_t i = 0; i < estimate.a.size(); ++i)
    num += std::norm(estimate.a[i] - reference.a[i]);
  const double den = frobenius_norm(reference);
  if (den <= 0.0) throw StatsError("reference matrix has zero norm");
  return std::sqrt(num) / den;
}

inline double max_hermitian_deviation(const CMat& m) {
  double dev = 0.0;
  for (std::size_t r = 0; r < m.n; ++r)
    for (std::size_t c = r; c < m.n; ++c)
      dev = std::max(dev, std::abs(m.at(r, c) - std::conj(m.at(c, r))));
  return dev;
}

// Positive semidefiniteness via Cholesky of C + shift*I: succeeds iff the
// smallest eigenvalue is >= -shift (up to roundoff).
inline bool is_psd_within(const CMat& m, double shift) {
  const std::size_t n = m.n;
  CMat l(n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m.at(j, j).real() + shift;
    for (std::size_t k = 0; k < j; ++k) diag -= std::norm(l.at(j, k));
    if (diag <= 0.0) return false;
    const double dj = std::sqrt(diag);
    l.at(j, j) = dj;
    for (std::size_t i = j + 1; i < n; ++i) {
      Cpx acc = m.at(i, j) + (i == j ? Cpx(shift, 0.0) : Cpx(0.0, 0.0));
      for (std::size_t k = 0; k < j; ++k) acc -= l.at(i, k) * std::conj(l.at(j, k));
      l.at(i, j) = acc / dj;
    }
  }
  return true;
}

struct CovarianceReport {
  CMat analytic;
  CMat empirical;
  double rel_frobenius_error = 0.0;
  Cpx grand_mean{0.0, 0.0};
  double mean_bound = 0.0;  // 3*sqrt(P_eff / (F * N')) per real component
  bool mean_consistent = false;
};

}  // namespace fhc
