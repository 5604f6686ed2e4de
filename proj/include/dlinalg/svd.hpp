// gesvd: thin SVD for m <= n, A = U^T diag(lambda) V with U m x m, V m x n
// (rows of U / V are the left / right singular vectors), lambda ascending,
// entries nonnegative.
//
// Golub-Kahan-Reinsch: Householder bidiagonalization followed by implicit
// -shift QR on the bidiagonal, run on W = A^T (rows >= cols) in a workspace so
// the standard column-pivoting formulation applies unchanged; results are
// transposed back into the row-vector convention.
#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "dlinalg/eigen_sym.hpp"  // fix_row_signs
#include "dlinalg/matrix.hpp"

namespace dla {

namespace detail {

// In-place SVD of a (rows M >= cols N): a becomes the economy left factor
// (M x N, orthonormal columns), w the singular values, v (N x N) the right
// factor with A = a * diag(w) * v^T. Classic Golub-Kahan-Reinsch.
template <typename T>
void svd_gkr(MatrixView<T> a, T* w, MatrixView<T> v) {
  const index_t m = a.rows, n = a.cols;
  const T eps = std::numeric_limits<T>::epsilon();
  std::vector<T> rv1(static_cast<std::size_t>(n));
  T g = T(0), scale = T(0), anorm = T(0);
  index_t l = 0;

  // Householder reduction to bidiagonal form.
  for (index_t i = 0; i < n; ++i) {
    l = i + 1;
    rv1[static_cast<std::size_t>(i)] = scale * g;
    g = scale = T(0);
    if (i < m) {
      for (index_t k = i; k < m; ++k) scale += std::abs(a(k, i));
      if (scale != T(0)) {
        T s = T(0);
        for (index_t k = i; k < m; ++k) {
          a(k, i) /= scale;
          s += a(k, i) * a(k, i);
        }
        T f = a(i, i);
        g = -sign_like(std::sqrt(s), f);
        const T h = f * g - s;
        a(i, i) = f - g;
        for (index_t j = l; j < n; ++j) {
          s = T(0);
          for (index_t k = i; k < m; ++k) s += a(k, i) * a(k, j);
          f = s / h;
          for (index_t k = i; k < m; ++k) a(k, j) += f * a(k, i);
        }
        for (index_t k = i; k < m; ++k) a(k, i) *= scale;
      }
    }
    w[i] = scale * g;
    g = scale = T(0);
    if (i < m && i != n - 1) {
      for (index_t k = l; k < n; ++k) scale += std::abs(a(i, k));
      if (scale != T(0)) {
        T s = T(0);
        for (index_t k = l; k < n; ++k) {
          a(i, k) /= scale;
          s += a(i, k) * a(i, k);
        }
        T f = a(i, l);
        g = -sign_like(std::sqrt(s), f);
        const T h = f * g - s;
        a(i, l) = f - g;
        for (index_t k = l; k < n; ++k) rv1[static_cast<std::size_t>(k)] = a(i, k) / h;
        for (index_t j = l; j < m; ++j) {
          s = T(0);
          for (index_t k = l; k < n; ++k) s += a(j, k) * a(i, k);
          for (index_t k = l; k < n; ++k) a(j, k) += s * rv1[static_cast<std::size_t>(k)];
        }
        for (index_t k = l; k < n; ++k) a(i, k) *= scale;
      }
    }
    anorm = std::max(anorm, std::abs(w[i]) + std::abs(rv1[static_cast<std::size_t>(i)]));
  }

  // Accumulate right-hand transformations into v.
  for (index_t i = n - 1; i >= 0; --i) {
    if (i < n - 1) {
      if (g != T(0)) {
        for (index_t j = l; j < n; ++j) v(j, i) = (a(i, j) / a(i, l)) / g;
        for (index_t j = l; j < n; ++j) {
          T s = T(0);
          for (index_t k = l; k < n; ++k) s += a(i, k) * v(k, j);
          for (index_t k = l; k < n; ++k) v(k, j) += s * v(k, i);
        }
      }
      for (index_t j = l; j < n; ++j) v(i, j) = v(j, i) = T(0);
    }
    v(i, i) = T(1);
    g = rv1[static_cast<std::size_t>(i)];
    l = i;
  }

  // Accumulate left-hand transformations in a.
  for (index_t i = std::min(m, n) - 1; i >= 0; --i) {
    l = i + 1;
    g = w[i];
    for (index_t j = l; j < n; ++j) a(i, j) = T(0);
    if (g != T(0)) {
      g = T(1) / g;
      for (index_t j = l; j < n; ++j) {
        T s = T(0);
        for (index_t k = l; k < m; ++k) s += a(k, i) * a(k, j);
        const T f = (s / a(i, i)) * g;
        for (index_t k = i; k < m; ++k) a(k, j) += f * a(k, i);
      }
      for (index_t j = i; j < m; ++j) a(j, i) *= g;
    } else {
      for (index_t j = i; j < m; ++j) a(j, i) = T(0);
    }
    a(i, i) += T(1);
  }

  // Diagonalize the bidiagonal form: implicit-shift QR, smallest last index
  // first, with explicit cancellation when a diagonal entry underflows.
  index_t total_iter = 0;
  for (index_t k = n - 1; k >= 0; --k) {
    for (index_t its = 1;; ++its) {
      bool flag = true;
      index_t nm = 0;
      for (l = k; l >= 0; --l) {
        nm = l - 1;
        if (std::abs(rv1[static_cast<std::size_t>(l)]) <= eps * anorm) {
          flag = false;
          break;
        }
        if (std::abs(w[nm]) <= eps * anorm) break;
      }
      if (flag) {
        // w[nm] ~ 0: cancel rv1[l] by rotations from the left.
        T c = T(0), s = T(1);
        for (index_t i = l; i <= k; ++i) {
          T f = s * rv1[static_cast<std::size_t>(i)];
          rv1[static_cast<std::size_t>(i)] = c * rv1[static_cast<std::size_t>(i)];
          if (std::abs(f) <= eps * anorm) break;
          g = w[i];
          T h = pythag(f, g);
          w[i] = h;
          h = T(1) / h;
          c = g * h;
          s = -f * h;
          for (index_t j = 0; j < m; ++j) {
            const T y = a(j, nm);
            const T z = a(j, i);
            a(j, nm) = y * c + z * s;
            a(j, i) = z * c - y * s;
          }
        }
      }
      T z = w[k];
      if (l == k) {
        if (z < T(0)) {  // make the singular value nonnegative
          w[k] = -z;
          for (index_t j = 0; j < n; ++j) v(j, k) = -v(j, k);
        }
        break;
      }
      if (its == 30) {
        throw ConvergenceError(
            "gesvd: QR sweep failed to converge after " +
                std::to_string(total_iter) + " total iterations",
            total_iter);
      }
      ++total_iter;
      T x = w[l];
      nm = k - 1;
      T y = w[nm];
      g = rv1[static_cast<std::size_t>(nm)];
      T h = rv1[static_cast<std::size_t>(k)];
      T f = ((y - z) * (y + z) + (g - h) * (g + h)) / (T(2) * h * y);
      g = pythag(f, T(1));
      f = ((x - z) * (x + z) + h * ((y / (f + sign_like(g, f))) - h)) / x;
      T c = T(1), s = T(1);
      for (index_t j = l; j <= nm; ++j) {
        const index_t i = j + 1;
        g = rv1[static_cast<std::size_t>(i)];
        y = w[i];
        h = s * g;
        g = c * g;
        z = pythag(f, h);
        rv1[static_cast<std::size_t>(j)] = z;
        c = f / z;
        s = h / z;
        f = x * c + g * s;
        g = g * c - x * s;
        h = y * s;
        y *= c;
        for (index_t jj = 0; jj < n; ++jj) {
          x = v(jj, j);
          z = v(jj, i);
          v(jj, j) = x * c + z * s;
          v(jj, i) = z * c - x * s;
        }
        z = pythag(f, h);
        w[j] = z;
        if (z != T(0)) {
          z = T(1) / z;
          c = f * z;
          s = h * z;
        }
        f = c * g + s * y;
        x = c * y - s * g;
        for (index_t jj = 0; jj < m; ++jj) {
          y = a(jj, j);
          z = a(jj, i);
          a(jj, j) = y * c + z * s;
          a(jj, i) = z * c - y * s;
        }
      }
      rv1[static_cast<std::size_t>(l)] = T(0);
      rv1[static_cast<std::size_t>(k)] = f;
      w[k] = x;
    }
  }
}

}  // namespace detail

// v: in = A (m x n), out = V. u: out = U (m x m). lambda: out, ascending >= 0.
template <typename T>
void gesvd_inplace(MatrixView<T> v, MatrixView<T> u, T* lambda) {
  const index_t m = v.rows, n = v.cols;
  if (m > n) {
    throw ShapeError("gesvd: need m <= n, got " + std::to_string(m) + "x" +
                     std::to_string(n));
  }
  if (u.rows != m || u.cols != m) {
    throw ShapeError("gesvd: U output must be " + std::to_string(m) + "x" +
                     std::to_string(m));
  }
  // Workspace: the transposed problem W = A^T (n x m) and its right factor.
  Matrix<T> wt(n, m);
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < n; ++j) wt(j, i) = v(i, j);
  Matrix<T> vs(m, m);
  detail::svd_gkr(wt.view(), lambda, vs.view());

  // A^T = wt diag(lambda) vs^T  =>  A = vs diag(lambda) wt^T,
  // so U = vs^T and V = wt^T in the row-vector convention.
  for (index_t i = 0; i < m; ++i)
    for (index_t k = 0; k < m; ++k) u(i, k) = vs(k, i);
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < n; ++j) v(i, j) = wt(j, i);

  // Ascending order: permute lambda together with the rows of U and V.
  std::vector<index_t> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), index_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](index_t a, index_t b) { return lambda[a] < lambda[b]; });
  {
    std::vector<T> lt(static_cast<std::size_t>(m));
    Matrix<T> ut(m, m);
    Matrix<T> vtmp(m, n);
    for (index_t i = 0; i < m; ++i) {
      const index_t s = perm[static_cast<std::size_t>(i)];
      lt[static_cast<std::size_t>(i)] = lambda[s];
      std::copy(u.row(s), u.row(s) + m, ut.row(i));
      std::copy(v.row(s), v.row(s) + n, vtmp.row(i));
    }
    std::copy(lt.begin(), lt.end(), lambda);
    copy_into(ConstMatrixView<T>(ut.view()), u);
    copy_into(ConstMatrixView<T>(vtmp.view()), v);
  }

  // Deterministic signs, keyed off U's rows; V flips in lockstep so the
  // product U^T diag(lambda) V is unchanged.
  std::vector<char> flipped(static_cast<std::size_t>(m), 0);
  detail::fix_row_signs(u, &flipped);
  for (index_t i = 0; i < m; ++i) {
    if (flipped[static_cast<std::size_t>(i)]) {
      T* row = v.row(i);
      for (index_t j = 0; j < n; ++j) row[j] = -row[j];
    }
  }
}

template <typename T>
struct GesvdResult {
  Matrix<T> u;            // m x m, rows are left singular vectors
  std::vector<T> lambda;  // ascending, nonnegative
  Matrix<T> v;            // m x n, rows are right singular vectors
};

template <typename T>
GesvdResult<T> gesvd(const Matrix<T>& a) {
  GesvdResult<T> r{Matrix<T>(a.rows(), a.rows()),
                   std::vector<T>(static_cast<std::size_t>(a.rows())), a};
  gesvd_inplace(r.v.view(), r.u.view(), r.lambda.data());
  return r;
}

}  // namespace dla
