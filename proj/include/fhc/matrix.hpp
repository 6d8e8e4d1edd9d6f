#pragma once
// Minimal dense matrix for the training substrate. Row-major doubles; the
// kernels below are the hot path of GRU training and are written as plain
// contiguous loops for the vectorizer.

#include <cstring>
#include <string>
#include <vector>

#include "fhc/rng.hpp"
#include "fhc/types.hpp"

namespace fhc::nn {

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return a.size(); }
  void zero() { std::memset(a.data(), 0, a.size() * sizeof(double)); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Mat random_uniform(int rows, int cols, double limit, Rng& rng) {
  Mat m(rows, cols);
  for (auto& v : m.a) v = rng.uniform(-limit, limit);
  return m;
}

// y (+)= A x. The simd pragma licenses the per-row reduction reorder; the
// summation tree is fixed by the build, keeping runs reproducible.
inline void matvec(const Mat& A, const double* __restrict x, double* __restrict y,
                   bool accumulate) {
  const int cols = A.cols;
  for (int r = 0; r < A.rows; ++r) {
    const double* __restrict ar = A.row(r);
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (int c = 0; c < cols; ++c) acc += ar[c] * x[c];
    y[r] = accumulate ? y[r] + acc : acc;
  }
}

// x += A^T y
inline void matvec_t_acc(const Mat& A, const double* __restrict y,
                         double* __restrict x) {
  for (int r = 0; r < A.rows; ++r) {
    const double* __restrict ar = A.row(r);
    const double yr = y[r];
#pragma omp simd
    for (int c = 0; c < A.cols; ++c) x[c] += ar[c] * yr;
  }
}

// G += y x^T
inline void outer_acc(Mat& G, const double* __restrict y, const double* __restrict x) {
  for (int r = 0; r < G.rows; ++r) {
    double* __restrict gr = G.row(r);
    const double yr = y[r];
#pragma omp simd
    for (int c = 0; c < G.cols; ++c) gr[c] += yr * x[c];
  }
}

inline void axpy(double alpha, const Mat& x, Mat& y) {
  if (!x.same_shape(y)) throw ShapeError("axpy shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y.a[i] += alpha * x.a[i];
}

inline std::uint64_t digest(const Mat& m, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(m.a.data(), m.a.size() * sizeof(double), h);
}

}  // namespace fhc::nn
