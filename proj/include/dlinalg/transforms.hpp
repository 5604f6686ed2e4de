// Elementwise / structural helpers: triangle masks, symmetrizers, eye, hadamard.
#pragma once

#include "dlinalg/matrix.hpp"

namespace dla {

namespace detail {
template <typename T>
void require_square(ConstMatrixView<T> x, const char* what) {
  if (x.rows != x.cols) {
    throw ShapeError(std::string(what) + ": matrix must be square, got " +
                     std::to_string(x.rows) + "x" + std::to_string(x.cols));
  }
}
}  // namespace detail

// B[i][j] = X[max(i,j)][min(i,j)]  (mirror the lower triangle up)
template <typename T>
void copyltu_inplace(MatrixView<T> x) {
  detail::require_square<T>(x, "copyltu");
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = i + 1; j < x.cols; ++j) x(i, j) = x(j, i);
}

// B[i][j] = X[min(i,j)][max(i,j)]  (mirror the upper triangle down)
template <typename T>
void copyutl_inplace(MatrixView<T> x) {
  detail::require_square<T>(x, "copyutl");
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = i + 1; j < x.cols; ++j) x(j, i) = x(i, j);
}

template <typename T>
Matrix<T> copyltu(const Matrix<T>& x) {
  Matrix<T> b = x;
  copyltu_inplace(b.view());
  return b;
}

template <typename T>
Matrix<T> copyutl(const Matrix<T>& x) {
  Matrix<T> b = x;
  copyutl_inplace(b.view());
  return b;
}

// Zero the strict upper / strict lower triangle.
template <typename T>
void tril_inplace(MatrixView<T> x) {
  detail::require_square<T>(x, "tril");
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = i + 1; j < x.cols; ++j) x(i, j) = T(0);
}

template <typename T>
void triu_inplace(MatrixView<T> x) {
  detail::require_square<T>(x, "triu");
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = 0; j < i; ++j) x(i, j) = T(0);
}

template <typename T>
Matrix<T> tril(const Matrix<T>& x) {
  Matrix<T> b = x;
  tril_inplace(b.view());
  return b;
}

template <typename T>
Matrix<T> triu(const Matrix<T>& x) {
  Matrix<T> b = x;
  triu_inplace(b.view());
  return b;
}

// X <- (X + X^T) / 2. Exactly idempotent: averaging equal values is a no-op.
template <typename T>
void sym_inplace(MatrixView<T> x) {
  detail::require_square<T>(x, "sym");
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = i + 1; j < x.cols; ++j) {
      const T v = (x(i, j) + x(j, i)) / T(2);
      x(i, j) = v;
      x(j, i) = v;
    }
}

template <typename T>
Matrix<T> sym(const Matrix<T>& x) {
  Matrix<T> b = x;
  sym_inplace(b.view());
  return b;
}

template <typename T>
std::vector<T> extract_diag(ConstMatrixView<T> x) {
  detail::require_square<T>(x, "extract_diag");
  std::vector<T> d(static_cast<std::size_t>(x.rows));
  for (index_t i = 0; i < x.rows; ++i) d[static_cast<std::size_t>(i)] = x(i, i);
  return d;
}

template <typename T>
Matrix<T> eye(index_t n) {
  if (n < 1) throw ShapeError("eye: n must be >= 1");
  Matrix<T> m(n, n);
  for (index_t i = 0; i < n; ++i) m(i, i) = T(1);
  return m;
}

template <typename T>
void hadamard_inplace(MatrixView<T> x, ConstMatrixView<T> y) {
  if (x.rows != y.rows || x.cols != y.cols) {
    throw ShapeError("hadamard: shape mismatch");
  }
  for (index_t i = 0; i < x.size(); ++i) x.data[i] *= y.data[i];
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& x, const Matrix<T>& y) {
  Matrix<T> b = x;
  hadamard_inplace(b.view(), y.view());
  return b;
}

template <typename T>
void scale_inplace(MatrixView<T> x, T alpha) {
  for (index_t i = 0; i < x.size(); ++i) x.data[i] *= alpha;
}

// Max relative asymmetry check used by potrf/syevd preconditions.
template <typename T>
T max_asymmetry(ConstMatrixView<T> x) {
  detail::require_square<T>(x, "max_asymmetry");
  T m = T(0);
  for (index_t i = 0; i < x.rows; ++i)
    for (index_t j = i + 1; j < x.cols; ++j)
      m = std::max(m, std::abs(x(i, j) - x(j, i)));
  return m;
}

}  // namespace dla
