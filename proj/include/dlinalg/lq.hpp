// gelqf: Householder LQ for m <= n, A = L Q with Q's m rows orthonormal.
//
// Reflectors act from the right; their tails are stored in the factored buffer
// (LAPACK layout) and Q is formed in place over that storage, back to front.
#pragma once

#include <cmath>

#include "dlinalg/matrix.hpp"

namespace dla {

namespace detail {

template <typename T>
constexpr T lq_rank_rtol() {
  return sizeof(T) == sizeof(double) ? T(1e-12) : T(1e-5);
}

}  // namespace detail

// q: in = A (m x n), out = Q. l: out = L (m x m, lower, positive diagonal).
template <typename T>
void gelqf_inplace(MatrixView<T> q, MatrixView<T> l) {
  const index_t m = q.rows, n = q.cols;
  if (m > n) {
    throw ShapeError("gelqf: need m <= n, got " + std::to_string(m) + "x" +
                     std::to_string(n));
  }
  if (l.rows != m || l.cols != m) {
    throw ShapeError("gelqf: L output must be " + std::to_string(m) + "x" +
                     std::to_string(m));
  }
  const T norm_a = max_abs(ConstMatrixView<T>(q));
  if (norm_a == T(0)) {
    throw SingularError("gelqf: input has rank 0", 0);
  }

  detail::Buffer<T> tau_buf(m);
  T* tau = tau_buf.get();

  // Reduce: row k's tail is annihilated by H_k = I - tau v v^T with v[k] = 1
  // and the tail of v stored where the zeros would be.
  for (index_t k = 0; k < m; ++k) {
    T* xk = q.row(k);
    T sigma = T(0);
    for (index_t j = k + 1; j < n; ++j) sigma += xk[j] * xk[j];
    const T alpha = xk[k];
    if (sigma == T(0)) {
      tau[k] = T(0);
    } else {
      const T norm = std::sqrt(alpha * alpha + sigma);
      const T beta = alpha >= T(0) ? -norm : norm;
      tau[k] = (beta - alpha) / beta;
      const T scale = T(1) / (alpha - beta);
      for (index_t j = k + 1; j < n; ++j) xk[j] *= scale;
      xk[k] = beta;
      for (index_t i = k + 1; i < m; ++i) {
        T* xi = q.row(i);
        T w = xi[k];
        for (index_t j = k + 1; j < n; ++j) w += xi[j] * xk[j];
        w *= tau[k];
        xi[k] -= w;
        for (index_t j = k + 1; j < n; ++j) xi[j] -= w * xk[j];
      }
    }
  }

  // Extract L and check rank before the factor storage is consumed.
  const T rank_tol = detail::lq_rank_rtol<T>() * norm_a;
  for (index_t i = 0; i < m; ++i) {
    for (index_t j = 0; j <= i; ++j) l(i, j) = q(i, j);
    for (index_t j = i + 1; j < m; ++j) l(i, j) = T(0);
    if (std::abs(l(i, i)) < rank_tol) {
      throw SingularError("gelqf: rank deficient at row " + std::to_string(i), i);
    }
  }

  // Form Q in place: process reflectors last to first; H_j with j > i acts as
  // identity on e_i^T, so row k can be emitted once H_k is consumed.
  for (index_t k = m - 1; k >= 0; --k) {
    const T* vk = q.row(k);
    const T tk = tau[k];
    for (index_t i = k + 1; i < m; ++i) {
      T* xi = q.row(i);
      T w = xi[k];
      for (index_t j = k + 1; j < n; ++j) w += xi[j] * vk[j];
      w *= tk;
      xi[k] -= w;
      for (index_t j = k + 1; j < n; ++j) xi[j] -= w * vk[j];
    }
    T* xk = q.row(k);
    for (index_t j = 0; j < k; ++j) xk[j] = T(0);
    for (index_t j = k + 1; j < n; ++j) xk[j] = -tk * xk[j];
    xk[k] = T(1) - tk;
  }

  // Normalize so diag(L) > 0 (flip L's column k and Q's row k together).
  for (index_t k = 0; k < m; ++k) {
    if (l(k, k) < T(0)) {
      for (index_t i = k; i < m; ++i) l(i, k) = -l(i, k);
      T* xk = q.row(k);
      for (index_t j = 0; j < n; ++j) xk[j] = -xk[j];
    }
  }
}

template <typename T>
struct GelqfResult {
  Matrix<T> q;  // m x n, orthonormal rows
  Matrix<T> l;  // m x m, lower triangular, positive diagonal
};

template <typename T>
GelqfResult<T> gelqf(const Matrix<T>& a) {
  GelqfResult<T> r{a, Matrix<T>(a.rows(), a.rows())};
  gelqf_inplace(r.q.view(), r.l.view());
  return r;
}

}  // namespace dla
