// SPDX-License-Identifier: Apache-2.0

#ifndef FEDSIM_LINALG_HPP
#define FEDSIM_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// Flat 64-bit parameter vector. Every model, gradient and estimate quantity
// in the simulator lives in this one representation. Values are treated as
// immutable once handed to another component; all operations below are pure.
using ParamVector = std::vector<double>;

inline void require_same_dim(const ParamVector& x, const ParamVector& y,
                             const char* op) {
  if (x.size() != y.size()) {
    throw dimension_error(std::string(op) + ": dimension mismatch (" +
                          std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  }
}

inline ParamVector zeros(size_t dim) { return ParamVector(dim, 0.0); }

// result[k] = a * x[k] + y[k]
inline ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "axpy");
  ParamVector r(y.size());
  for (size_t k = 0; k < y.size(); ++k) r[k] = a * x[k] + y[k];
  return r;
}

inline ParamVector add(const ParamVector& x, const ParamVector& y) {
  return axpy(1.0, x, y);
}

// x - y
inline ParamVector sub(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "sub");
  ParamVector r(x.size());
  for (size_t k = 0; k < x.size(); ++k) r[k] = x[k] - y[k];
  return r;
}

inline ParamVector scale(double a, const ParamVector& x) {
  ParamVector r(x.size());
  for (size_t k = 0; k < x.size(); ++k) r[k] = a * x[k];
  return r;
}

// Componentwise mean. Summation runs in input order, so for id-sorted inputs
// the result is bitwise deterministic; permutations agree to ~1e-12.
inline ParamVector mean_of(const std::vector<ParamVector>& vs) {
  if (vs.empty()) throw dimension_error("mean_of: empty list");
  const size_t dim = vs.front().size();
  ParamVector r(dim, 0.0);
  for (const ParamVector& v : vs) {
    require_same_dim(v, r, "mean_of");
    for (size_t k = 0; k < dim; ++k) r[k] += v[k];
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& x : r) x *= inv;
  return r;
}

// Weighted componentwise mean; weights need not be normalized.
inline ParamVector weighted_mean_of(const std::vector<ParamVector>& vs,
                                    const std::vector<double>& weights) {
  if (vs.empty()) throw dimension_error("weighted_mean_of: empty list");
  if (vs.size() != weights.size()) {
    throw dimension_error("weighted_mean_of: weight count mismatch");
  }
  const size_t dim = vs.front().size();
  ParamVector r(dim, 0.0);
  double wsum = 0.0;
  for (size_t i = 0; i < vs.size(); ++i) {
    require_same_dim(vs[i], r, "weighted_mean_of");
    for (size_t k = 0; k < dim; ++k) r[k] += weights[i] * vs[i][k];
    wsum += weights[i];
  }
  if (wsum <= 0.0) throw dimension_error("weighted_mean_of: non-positive weight sum");
  for (double& x : r) x /= wsum;
  return r;
}

inline double dot(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x, y, "dot");
  double s = 0.0;
  for (size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

inline double norm2(const ParamVector& x) { return std::sqrt(dot(x, x)); }

inline double max_abs(const ParamVector& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

// Cosine of the angle between x and y, clamped to [-1, 1] against rounding.
inline double cos_angle(const ParamVector& x, const ParamVector& y) {
  const double nx = norm2(x);
  const double ny = norm2(y);
  if (nx == 0.0 || ny == 0.0) {
    throw dimension_error("cos_angle: zero-norm input");
  }
  return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

inline bool all_finite(const ParamVector& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Small dense row-major matrix. Only what the quadratic testbeds and their
// oracles need: products, SPD assembly and a pivoted solve.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(size_t i, size_t j) { return a[i * cols + j]; }
  double at(size_t i, size_t j) const { return a[i * cols + j]; }

  static Matrix identity(size_t n) {
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

inline Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.cols != y.rows) throw dimension_error("matmul: dimension mismatch");
  Matrix r(x.rows, y.cols);
  for (size_t i = 0; i < x.rows; ++i) {
    for (size_t k = 0; k < x.cols; ++k) {
      const double xv = x.at(i, k);
      if (xv == 0.0) continue;
      for (size_t j = 0; j < y.cols; ++j) r.at(i, j) += xv * y.at(k, j);
    }
  }
  return r;
}

inline ParamVector matvec(const Matrix& m, const ParamVector& v) {
  if (m.cols != v.size()) throw dimension_error("matvec: dimension mismatch");
  ParamVector r(m.rows, 0.0);
  for (size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * v[j];
    r[i] = s;
  }
  return r;
}

inline Matrix matadd(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols) {
    throw dimension_error("matadd: dimension mismatch");
  }
  Matrix r = x;
  for (size_t k = 0; k < r.a.size(); ++k) r.a[k] += y.a[k];
  return r;
}

inline Matrix matscale(double s, const Matrix& x) {
  Matrix r = x;
  for (double& v : r.a) v *= s;
  return r;
}

inline Matrix matpow(const Matrix& m, unsigned p) {
  if (m.rows != m.cols) throw dimension_error("matpow: square required");
  Matrix r = Matrix::identity(m.rows);
  for (unsigned i = 0; i < p; ++i) r = matmul(r, m);
  return r;
}

// Gaussian elimination with partial pivoting; m must be square nonsingular.
inline ParamVector solve(Matrix m, ParamVector b) {
  if (m.rows != m.cols || m.rows != b.size()) {
    throw dimension_error("solve: dimension mismatch");
  }
  const size_t n = m.rows;
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t i = col + 1; i < n; ++i) {
      if (std::abs(m.at(i, col)) > std::abs(m.at(piv, col))) piv = i;
    }
    if (std::abs(m.at(piv, col)) < 1e-300) {
      throw dimension_error("solve: singular matrix");
    }
    if (piv != col) {
      for (size_t j = 0; j < n; ++j) std::swap(m.at(piv, j), m.at(col, j));
      std::swap(b[piv], b[col]);
    }
    const double inv = 1.0 / m.at(col, col);
    for (size_t i = col + 1; i < n; ++i) {
      const double f = m.at(i, col) * inv;
      if (f == 0.0) continue;
      for (size_t j = col; j < n; ++j) m.at(i, j) -= f * m.at(col, j);
      b[i] -= f * b[col];
    }
  }
  ParamVector x(n, 0.0);
  for (size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (size_t j = ii + 1; j < n; ++j) s -= m.at(ii, j) * x[j];
    x[ii] = s / m.at(ii, ii);
  }
  return x;
}

}  // namespace fedsim

#endif  // FEDSIM_LINALG_HPP
