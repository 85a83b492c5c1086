#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <vector>

#include "vigil/error.hpp"

namespace vigil {

// Row-major dense matrix of doubles. The struct owns its storage; the heavy
// products below are delegated to Eigen over mapped views.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(std::size_t(r) * c, fill) {}

  double& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  double operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + std::size_t(r) * cols, std::size_t(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + std::size_t(r) * cols, std::size_t(cols)};
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool empty() const { return rows == 0 || cols == 0; }
};

namespace detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMajor> emap(const Matrix& m) {
  return {m.data.data(), m.rows, m.cols};
}

inline Eigen::Map<EigenRowMajor> emap(Matrix& m) { return {m.data.data(), m.rows, m.cols}; }

}  // namespace detail

// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw Error("matmul: shape mismatch");
  Matrix out(a.rows, b.cols);
  detail::emap(out).noalias() = detail::emap(a) * detail::emap(b);
  return out;
}

// aᵀ * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw Error("matmul_tn: shape mismatch");
  Matrix out(a.cols, b.cols);
  detail::emap(out).noalias() = detail::emap(a).transpose() * detail::emap(b);
  return out;
}

// a * bᵀ
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw Error("matmul_nt: shape mismatch");
  Matrix out(a.rows, b.rows);
  detail::emap(out).noalias() = detail::emap(a) * detail::emap(b).transpose();
  return out;
}

inline void add_row_vector(Matrix& m, std::span<const double> v) {
  for (int r = 0; r < m.rows; ++r) {
    double* p = m.data.data() + std::size_t(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) p[c] += v[c];
  }
}

}  // namespace vigil
