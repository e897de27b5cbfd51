#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvsde {

using Span = std::span<const double>;
using MutSpan = std::span<double>;

inline double dot(Span a, Span b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(Span a) {
  if (a.size() == 1) return std::fabs(a[0]);
  return std::sqrt(dot(a, a));
}

// |x|^k with the fixed convention |x|^0 = 1 for every x, including x = 0.
inline double norm_pow(Span x, double k) {
  if (k == 0.0) return 1.0;
  if (k == 1.0) return norm2(x);
  if (k == 2.0) return dot(x, x);
  return std::pow(norm2(x), k);
}

inline double scalar_pow(double r, double k) {
  if (k == 0.0) return 1.0;
  return std::pow(r, k);
}

// y += alpha * x
inline void axpy(double alpha, Span x, MutSpan y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// out = A x, A row-major rows x cols.
inline void matvec(Span a, int rows, int cols, Span x, MutSpan out) {
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    const double* row = a.data() + std::size_t(i) * cols;
    for (int j = 0; j < cols; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

// out += A x
inline void matvec_acc(Span a, int rows, int cols, Span x, MutSpan out) {
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    const double* row = a.data() + std::size_t(i) * cols;
    for (int j = 0; j < cols; ++j) s += row[j] * x[j];
    out[i] += s;
  }
}

inline bool all_finite(Span x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// Solves A u = b for small dense A (row-major n x n) by Gaussian elimination
// with partial pivoting. A and b are overwritten; b holds the solution.
inline void solve_inplace(double* a, int n, double* b) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(a[std::size_t(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[std::size_t(r) * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best == 0.0) throw std::runtime_error("solve_inplace: singular matrix");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a[std::size_t(piv) * n + j], a[std::size_t(col) * n + j]);
      std::swap(b[piv], b[col]);
    }
    const double inv = 1.0 / a[std::size_t(col) * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[std::size_t(r) * n + col] * inv;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) a[std::size_t(r) * n + j] -= f * a[std::size_t(col) * n + j];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j) s -= a[std::size_t(r) * n + j] * b[j];
    b[r] = s / a[std::size_t(r) * n + r];
  }
}

// Chunk-combinable first/second moment accumulator.
struct MomentSums {
  double sum = 0.0;
  double sumsq = 0.0;
  std::int64_t n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  void merge(const MomentSums& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    n += o.n;
  }
  double mean() const { return n > 0 ? sum / double(n) : 0.0; }
  double variance() const {
    if (n < 2) return 0.0;
    const double v = (sumsq - sum * sum / double(n)) / double(n - 1);
    return v > 0.0 ? v : 0.0;
  }
  double std_error() const { return n > 0 ? std::sqrt(variance() / double(n)) : 0.0; }
};

}  // namespace mvsde
