// potrf: blocked right-looking Cholesky. potri: SPD inverse from the factor.
#pragma once

#include <cmath>

#include "dlinalg/matrix.hpp"
#include "dlinalg/transforms.hpp"

namespace dla {

namespace detail {

template <typename T>
constexpr T symmetry_check_rtol() {
  return sizeof(T) == sizeof(double) ? T(1e-10) : T(1e-4);
}

template <typename T>
void require_symmetric(ConstMatrixView<T> a, const char* what) {
  require_square<T>(a, what);
  const T scale = max_abs(a);
  if (max_asymmetry(a) > symmetry_check_rtol<T>() * (scale > T(0) ? scale : T(1))) {
    throw ShapeError(std::string(what) + ": input is not symmetric");
  }
}

// In-place square transpose (used to derive the upper-triangular variants).
template <typename T>
void transpose_square_inplace(MatrixView<T> a) {
  for (index_t i = 0; i < a.rows; ++i)
    for (index_t j = i + 1; j < a.cols; ++j) std::swap(a(i, j), a(j, i));
}

template <typename T>
void potrf_lower_inplace(MatrixView<T> a) {
  const index_t n = a.rows;
  constexpr index_t nb = 64;
  for (index_t k0 = 0; k0 < n; k0 += nb) {
    const index_t kend = std::min(k0 + nb, n);
    // factor the panel (columns k0..kend), updating full columns below
    for (index_t j = k0; j < kend; ++j) {
      const T* lj = a.row(j);
      for (index_t i = j; i < n; ++i) {
        T* li = a.row(i);
        T acc = li[j];
        for (index_t p = k0; p < j; ++p) acc -= li[p] * lj[p];
        li[j] = acc;
      }
      const T d = a(j, j);
      if (!(d > T(0))) {
        throw NotPositiveDefiniteError(
            "potrf: pivot " + std::to_string(j) + " is not positive", j);
      }
      const T r = std::sqrt(d);
      a(j, j) = r;
      const T inv = T(1) / r;
      for (index_t i = j + 1; i < n; ++i) a(i, j) *= inv;
    }
    // trailing update: A22 -= A21 A21^T on the lower triangle
    for (index_t i = kend; i < n; ++i) {
      const T* li = a.row(i);
      T* wi = a.row(i);
      for (index_t j = kend; j <= i; ++j) {
        const T* lj = a.row(j);
        T acc = T(0);
        for (index_t p = k0; p < kend; ++p) acc += li[p] * lj[p];
        wi[j] -= acc;
      }
    }
  }
  tril_inplace(a);
}

}  // namespace detail

// Factor a symmetric positive definite A in place: A = L L^T (lower = true,
// L replaces A with zeroed strict upper) or A = R^T R (lower = false).
template <typename T>
void potrf_inplace(MatrixView<T> a, bool lower = true) {
  detail::require_symmetric(ConstMatrixView<T>(a), "potrf");
  if (lower) {
    detail::potrf_lower_inplace(a);
  } else {
    // R is defined as L^T; factor lower, then mirror in place.
    detail::potrf_lower_inplace(a);
    detail::transpose_square_inplace(a);
  }
}

template <typename T>
Matrix<T> potrf(const Matrix<T>& a, bool lower = true) {
  Matrix<T> out = a;
  potrf_inplace(out.view(), lower);
  return out;
}

// ---------------------------------------------------------------------------
// potri: B = A^{-1} from A's Cholesky factor, in place over the factor.
// ---------------------------------------------------------------------------

namespace detail {

// Invert a lower-triangular matrix in place, column by column.
template <typename T>
void trtri_lower_inplace(MatrixView<T> a) {
  const index_t n = a.rows;
  for (index_t j = 0; j < n; ++j) {
    if (a(j, j) == T(0)) {
      throw SingularError("potri: zero diagonal at index " + std::to_string(j), j);
    }
    a(j, j) = T(1) / a(j, j);
    for (index_t i = j + 1; i < n; ++i) {
      const T* ai = a.row(i);
      T acc = T(0);
      for (index_t k = j; k < i; ++k) acc += ai[k] * a(k, j);
      a(i, j) = -acc / a(i, i);
    }
  }
}

// Overwrite lower-triangular W with W^T W (lower triangle), LAPACK lauum style.
template <typename T>
void lauum_lower_inplace(MatrixView<T> a) {
  const index_t n = a.rows;
  for (index_t i = 0; i < n; ++i) {
    const T wii = a(i, i);
    T* bi = a.row(i);
    for (index_t j = 0; j <= i; ++j) {
      T acc = wii * bi[j];  // k = i term, read before overwrite
      for (index_t k = i + 1; k < n; ++k) acc += a(k, i) * a(k, j);
      bi[j] = acc;
    }
  }
}

}  // namespace detail

// Input: the Cholesky factor of A (L if lower, R if not). Output: B = A^{-1},
// full square and exactly symmetric.
template <typename T>
void potri_inplace(MatrixView<T> a, bool lower = true) {
  detail::require_square<T>(ConstMatrixView<T>(a), "potri");
  if (!lower) detail::transpose_square_inplace(a);  // R^T is the L of A = L L^T
  detail::trtri_lower_inplace(a);
  detail::lauum_lower_inplace(a);
  copyltu_inplace(a);
}

template <typename T>
Matrix<T> potri(const Matrix<T>& a, bool lower = true) {
  Matrix<T> out = a;
  potri_inplace(out.view(), lower);
  return out;
}

}  // namespace dla
