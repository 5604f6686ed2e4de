// syevd: symmetric eigensolver, A = U^T diag(lambda) U with the ROWS of U as
// eigenvectors and lambda ascending.
//
// Classic EISPACK split: Householder tridiagonalization with the reflectors
// kept (tred1), eigenvalues by the QL algorithm with implicit shifts (tql1),
// eigenvectors by inverse iteration on the tridiagonal (tinvit) and a
// reflector back-transform (trbak). Accumulating the QL rotations instead
// would touch every row of U once per rotation — about twice the flops of
// the whole pipeline below.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "dlinalg/cholesky.hpp"  // require_symmetric
#include "dlinalg/matrix.hpp"

namespace dla {

namespace detail {

// Householder reduction to tridiagonal form, reflectors kept. On exit the
// columns of u hold the (scaled) reflector vectors, row i the matching v/h
// row, d/e the tridiagonal (e[n-1] unused) and h[i] the reflector norms
// (0 marks a skipped step).
//
// The reflectors live in the columns of u, but every O(n^3) loop below walks
// rows of the active upper triangle with the reflector staged in v/y —
// column-strided traffic is limited to the O(n^2) copies.
template <typename T>
void tred1_rows(MatrixView<T> u, T* d, T* e, T* h_out, T* v, T* y) {
  const index_t n = u.rows;
  for (index_t i = n - 1; i >= 1; --i) {
    const index_t l = i - 1;
    T h = T(0), scale = T(0);
    if (l > 0) {
      for (index_t k = 0; k <= l; ++k) scale += std::abs(u(k, i));
      if (scale == T(0)) {
        e[i] = u(l, i);
      } else {
        for (index_t k = 0; k <= l; ++k) {
          u(k, i) /= scale;
          v[k] = u(k, i);
          h += v[k] * v[k];
        }
        T f = v[l];
        T g = f >= T(0) ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        u(l, i) = f - g;
        v[l] = f - g;
        // y = A v over the active upper triangle, one contiguous row sweep
        for (index_t k = 0; k <= l; ++k) y[k] = T(0);
        for (index_t r = 0; r <= l; ++r) {
          const T vr = v[r];
          const T* __restrict__ ur = u.row(r);
          const T* __restrict__ vv = v;
          T* __restrict__ yy = y;
          T acc = ur[r] * vr;
          for (index_t c = r + 1; c <= l; ++c) {
            acc += ur[c] * vv[c];
            yy[c] += ur[c] * vr;
          }
          yy[r] += acc;
        }
        f = T(0);
        for (index_t j = 0; j <= l; ++j) {
          u(i, j) = v[j] / h;
          e[j] = y[j] / h;
          f += e[j] * v[j];
        }
        const T hh = f / (h + h);
        for (index_t j = 0; j <= l; ++j) e[j] -= hh * v[j];
        // A -= v e^T + e v^T, rows of the upper triangle
        for (index_t r = 0; r <= l; ++r) {
          const T fr = v[r];
          const T gr = e[r];
          T* __restrict__ ur = u.row(r);
          const T* __restrict__ ee = e;
          const T* __restrict__ vv = v;
          for (index_t c = r; c <= l; ++c) ur[c] -= fr * ee[c] + gr * vv[c];
        }
      }
    } else {
      e[i] = u(l, i);
    }
    h_out[i] = h;
  }
  h_out[0] = T(0);
  e[0] = T(0);
  for (index_t i = 0; i < n; ++i) d[i] = u(i, i);
  for (index_t i = 0; i < n - 1; ++i) e[i] = e[i + 1];
  e[n - 1] = T(0);
}

// QL with implicit shifts on (d, e), eigenvalues only; d returns ascending.
// iter_cap bounds the total iteration count across all eigenvalues.
template <typename T>
void tql1_values(T* d, T* e, index_t n, index_t iter_cap) {
  const T eps = std::numeric_limits<T>::epsilon();
  index_t total_iter = 0;
  for (index_t l = 0; l < n; ++l) {
    index_t m;
    do {
      for (m = l; m < n - 1; ++m) {
        const T dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (++total_iter > iter_cap) {
          throw ConvergenceError(
              "syevd: QL sweep exceeded " + std::to_string(iter_cap) +
                  " iterations",
              total_iter);
        }
        T g = (d[l + 1] - d[l]) / (T(2) * e[l]);
        T r = pythag(g, T(1));
        g = d[m] - d[l] + e[l] / (g + sign_like(r, g));
        T s = T(1), c = T(1), p = T(0);
        index_t i;
        for (i = m - 1; i >= l; --i) {
          T f = s * e[i];
          const T b = c * e[i];
          r = pythag(f, g);
          e[i + 1] = r;
          if (r == T(0)) {
            d[i + 1] -= p;
            e[m] = T(0);
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + T(2) * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (r == T(0) && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = T(0);
      }
    } while (m != l);
  }
  std::sort(d, d + n);
}

// Deterministic start-vector entry for inverse iteration; varies with the
// eigenvalue index (plus restart salt) so exact ties get independent seeds.
template <typename T>
T invit_seed(index_t salt, index_t k) {
  std::uint64_t x = (std::uint64_t(salt) + 1) * 0x9E3779B97F4A7C15ull;
  x ^= (std::uint64_t(k) + 1) * 0xBF58476D1CE4E5B9ull;
  x ^= x >> 31;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 29;
  return T(1) + T(0.5) * T(double(x >> 11) * 0x1.0p-53);
}

// Eigenvectors of the tridiagonal (d, e) by inverse iteration, written to the
// rows of z in the order of the ascending eigenvalues w. Two fixed iterations
// per vector keep the routine branch-deterministic; clustered eigenvalues get
// perturbed shifts, in-group reorthogonalization and fresh start vectors if a
// vector collapses into the span of its predecessors.
template <typename T>
void tinvit_rows(const T* d, const T* e, const T* w, MatrixView<T> z,
                 T* alp, T* bet, T* gam, T* mul, T* swp) {
  const index_t n = z.rows;
  T norm = std::abs(d[0]) + std::abs(e[0]);
  for (index_t i = 1; i < n; ++i) {
    norm = std::max(norm, std::abs(e[i - 1]) + std::abs(d[i]) + std::abs(e[i]));
  }
  if (norm == T(0)) {
    for (index_t i = 0; i < n; ++i) {
      T* zi = z.row(i);
      for (index_t k = 0; k < n; ++k) zi[k] = k == i ? T(1) : T(0);
    }
    return;
  }
  const T eps = std::numeric_limits<T>::epsilon();
  const T eps3 = eps * norm;                              // pivot floor
  const T gtol = T(100) * std::sqrt(eps) * norm;          // grouping gap
  const T piv_min = std::numeric_limits<T>::min() / eps;  // keeps 1/piv finite
  index_t group_start = 0;
  T lam_used = T(0);
  for (index_t idx = 0; idx < n; ++idx) {
    if (idx > 0 && w[idx] - w[idx - 1] > gtol) group_start = idx;
    T lam = w[idx];
    if (idx > group_start && lam < lam_used + eps3) lam = lam_used + eps3;
    lam_used = lam;

    T* x = z.row(idx);
    for (index_t attempt = 0; attempt < 3; ++attempt) {
      // LU of (T - lam I) with partial pivoting; alp holds 1/pivot, bet/gam
      // the two superdiagonals, mul/swp replay the elimination on a rhs.
      T a = d[0] - lam;
      T b = n > 1 ? e[0] : T(0);
      for (index_t i = 0; i + 1 < n; ++i) {
        const T sub = e[i];
        const T dia = d[i + 1] - lam;
        const T sup = i + 2 < n ? e[i + 1] : T(0);
        if (std::abs(sub) > std::abs(a)) {
          swp[i] = T(1);
          bet[i] = dia;
          gam[i] = sup;
          const T m = a / sub;
          mul[i] = m;
          alp[i] = T(1) / sub;
          a = b - m * dia;
          b = -m * sup;
        } else {
          swp[i] = T(0);
          T piv = a;
          if (std::abs(piv) < piv_min) piv = eps3;
          bet[i] = b;
          gam[i] = T(0);
          const T m = sub / piv;
          mul[i] = m;
          alp[i] = T(1) / piv;
          a = dia - m * b;
          b = sup;
        }
      }
      if (std::abs(a) < piv_min) a = eps3;
      alp[n - 1] = T(1) / a;

      for (index_t k = 0; k < n; ++k) {
        x[k] = invit_seed<T>(idx + 131 * attempt, k);
      }
      for (int iter = 0; iter < 2; ++iter) {
        // first pass skips the forward elimination: the rhs is arbitrary
        if (iter > 0) {
          for (index_t i = 0; i + 1 < n; ++i) {
            if (swp[i] != T(0)) std::swap(x[i], x[i + 1]);
            x[i + 1] -= mul[i] * x[i];
          }
        }
        x[n - 1] *= alp[n - 1];
        if (n >= 2) x[n - 2] = (x[n - 2] - bet[n - 2] * x[n - 1]) * alp[n - 2];
        for (index_t i = n - 3; i >= 0; --i) {
          x[i] = (x[i] - bet[i] * x[i + 1] - gam[i] * x[i + 2]) * alp[i];
        }
        T amax = T(0);
        for (index_t k = 0; k < n; ++k) amax = std::max(amax, std::abs(x[k]));
        const T inv = T(1) / amax;
        for (index_t k = 0; k < n; ++k) x[k] *= inv;
      }
      T nrm = T(0);
      for (index_t k = 0; k < n; ++k) nrm += x[k] * x[k];
      nrm = std::sqrt(nrm);
      for (index_t k = 0; k < n; ++k) x[k] /= nrm;
      T drop = T(1);
      for (int pass = 0; pass < 2 && idx > group_start; ++pass) {
        for (index_t j = group_start; j < idx; ++j) {
          const T* zj = z.row(j);
          T dot = T(0);
          for (index_t k = 0; k < n; ++k) dot += x[k] * zj[k];
          for (index_t k = 0; k < n; ++k) x[k] -= dot * zj[k];
        }
        T s = T(0);
        for (index_t k = 0; k < n; ++k) s += x[k] * x[k];
        s = std::sqrt(s);
        if (pass == 0) drop = s;
        if (s > T(0)) {
          for (index_t k = 0; k < n; ++k) x[k] /= s;
        }
      }
      if (drop >= T(0.01)) break;
    }
  }
}

// Back-transform: rows of z (eigenvectors of the tridiagonal) become rows of
// the eigenvectors of A by applying the tred1 reflectors in ascending order.
// refl holds the reflector columns and v/h rows exactly as tred1 left them;
// reflector i is staged into v once, then the row updates stream contiguously.
template <typename T>
void trbak_rows(ConstMatrixView<T> refl, const T* h, MatrixView<T> z, T* v) {
  const index_t n = z.rows;
  for (index_t i = 1; i < n; ++i) {
    if (h[i] == T(0)) continue;
    for (index_t k = 0; k < i; ++k) v[k] = refl(k, i);
    const T* __restrict__ vh = refl.row(i);
    const T* __restrict__ vv = v;
    index_t j = 0;
    for (; j + 1 < n; j += 2) {
      T* __restrict__ z0 = z.row(j);
      T* __restrict__ z1 = z.row(j + 1);
      T g0 = T(0), g1 = T(0);
      for (index_t k = 0; k < i; ++k) {
        g0 += vv[k] * z0[k];
        g1 += vv[k] * z1[k];
      }
      for (index_t k = 0; k < i; ++k) {
        z0[k] -= g0 * vh[k];
        z1[k] -= g1 * vh[k];
      }
    }
    if (j < n) {
      T* __restrict__ zj = z.row(j);
      T g = T(0);
      for (index_t k = 0; k < i; ++k) g += vv[k] * zj[k];
      for (index_t k = 0; k < i; ++k) zj[k] -= g * vh[k];
    }
  }
}

// Deterministic sign fix: flip row i when its largest-magnitude entry
// (smallest index on ties) is negative. Returns a mask of flipped rows so
// gesvd can mirror the flips onto its coupled factor.
template <typename T>
void fix_row_signs(MatrixView<T> u, std::vector<char>* flipped = nullptr) {
  for (index_t i = 0; i < u.rows; ++i) {
    T* row = u.row(i);
    index_t kmax = 0;
    T best = std::abs(row[0]);
    for (index_t k = 1; k < u.cols; ++k) {
      const T v = std::abs(row[k]);
      if (v > best) {
        best = v;
        kmax = k;
      }
    }
    if (row[kmax] < T(0)) {
      for (index_t k = 0; k < u.cols; ++k) row[k] = -row[k];
      if (flipped) (*flipped)[static_cast<std::size_t>(i)] = 1;
    }
  }
}

}  // namespace detail

// u: in = symmetric A, out = U (rows are eigenvectors). lambda: ascending.
template <typename T>
void syevd_inplace(MatrixView<T> u, T* lambda) {
  detail::require_symmetric(ConstMatrixView<T>(u), "syevd");
  const index_t n = u.rows;
  if (n == 1) {
    lambda[0] = u(0, 0);
    u(0, 0) = T(1);
    return;
  }
  detail::Buffer<T> work(n * n + 9 * n);
  T* p = work.get();
  MatrixView<T> refl{p, n, n};
  T* d = p + n * n;
  T* e = d + n;
  T* h = e + n;
  T* v = h + n;
  T* y = v + n;
  T* alp = y + n;
  T* bet = alp + n;
  T* gam = bet + n;
  T* mul = gam + n;
  detail::tred1_rows(u, d, e, h, v, y);
  std::memcpy(refl.data, u.data, sizeof(T) * std::size_t(n) * std::size_t(n));
  std::memcpy(lambda, d, sizeof(T) * std::size_t(n));
  std::memcpy(v, e, sizeof(T) * std::size_t(n));
  detail::tql1_values(lambda, v, n, 30 * n);
  detail::tinvit_rows(d, e, lambda, u, alp, bet, gam, mul, /*swp=*/y);
  detail::trbak_rows(ConstMatrixView<T>(refl), h, u, v);
  detail::fix_row_signs(u);
}

template <typename T>
struct SyevdResult {
  Matrix<T> u;            // n x n, rows are eigenvectors
  std::vector<T> lambda;  // ascending
};

template <typename T>
SyevdResult<T> syevd(const Matrix<T>& a) {
  SyevdResult<T> r{a, std::vector<T>(static_cast<std::size_t>(a.rows()))};
  syevd_inplace(r.u.view(), r.lambda.data());
  return r;
}

}  // namespace dla
