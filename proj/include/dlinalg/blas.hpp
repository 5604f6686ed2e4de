// Level-3 building blocks: gemm2, syrk, trmm, trsm.
//
// All loops are row-major native; transposition is an iteration order, never a
// materialized copy. trmm/trsm transform their dense operand in place.
#pragma once

#include <functional>

#include "dlinalg/matrix.hpp"
#include "dlinalg/transforms.hpp"

namespace dla {

// Optional vendor hook: a registered gemm may take over the inner product
// engine (the only kernel worth delegating). Return false to fall through to
// the reference loops. Mutate only from one thread, before compute starts.
template <typename T>
struct KernelBackend {
  // handled = gemm(C, A, B, ta, tb, alpha, accumulate)
  std::function<bool(MatrixView<T>, ConstMatrixView<T>, ConstMatrixView<T>,
                     bool, bool, T, bool)>
      gemm;
};

template <typename T>
KernelBackend<T>& kernel_backend() {
  static KernelBackend<T> backend;
  return backend;
}

namespace detail {

template <typename T>
void check_no_alias(const T* out, const T* in, const char* what) {
  if (out == in && out != nullptr) {
    throw Error(std::string(what) + ": output must not alias this input");
  }
}

// C (+)= alpha * op(A) * op(B). The four flag cases each get the loop order
// that keeps the inner stride unit where possible.
template <typename T>
void gemm_accum(MatrixView<T> c, ConstMatrixView<T> a, ConstMatrixView<T> b,
                bool ta, bool tb, T alpha, bool accumulate) {
  const index_t m = ta ? a.cols : a.rows;
  const index_t k = ta ? a.rows : a.cols;
  const index_t kb = tb ? b.cols : b.rows;
  const index_t n = tb ? b.rows : b.cols;
  if (k != kb) {
    throw ShapeError("gemm2: inner dimensions disagree (" + std::to_string(k) +
                     " vs " + std::to_string(kb) + ")");
  }
  if (c.rows != m || c.cols != n) {
    throw ShapeError("gemm2: output is " + std::to_string(c.rows) + "x" +
                     std::to_string(c.cols) + ", expected " + std::to_string(m) +
                     "x" + std::to_string(n));
  }
  check_no_alias(c.data, a.data, "gemm2");
  check_no_alias(c.data, b.data, "gemm2");

  if (auto& hook = kernel_backend<T>().gemm) {
    if (hook(c, a, b, ta, tb, alpha, accumulate)) return;
  }

  if (!accumulate) {
    std::fill(c.data, c.data + c.size(), T(0));
  }
  if (!ta && !tb) {
    for (index_t i = 0; i < m; ++i) {
      T* crow = c.row(i);
      const T* arow = a.row(i);
      for (index_t p = 0; p < k; ++p) {
        const T av = alpha * arow[p];
        const T* brow = b.row(p);
        for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (ta && !tb) {
    for (index_t p = 0; p < k; ++p) {
      const T* arow = a.row(p);
      const T* brow = b.row(p);
      for (index_t i = 0; i < m; ++i) {
        const T av = alpha * arow[i];
        T* crow = c.row(i);
        for (index_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (index_t i = 0; i < m; ++i) {
      const T* arow = a.row(i);
      T* crow = c.row(i);
      for (index_t j = 0; j < n; ++j) {
        const T* brow = b.row(j);
        T acc = T(0);
        for (index_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += alpha * acc;
      }
    }
  } else {
    for (index_t i = 0; i < m; ++i) {
      T* crow = c.row(i);
      for (index_t j = 0; j < n; ++j) {
        const T* brow = b.row(j);
        T acc = T(0);
        for (index_t p = 0; p < k; ++p) acc += a(p, i) * brow[p];
        crow[j] += alpha * acc;
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gemm2: C = alpha * op(A) * op(B)
// ---------------------------------------------------------------------------

template <typename T>
void gemm2_into(MatrixView<T> c, ConstMatrixView<T> a, ConstMatrixView<T> b,
                bool ta = false, bool tb = false, T alpha = T(1)) {
  detail::gemm_accum(c, a, b, ta, tb, alpha, /*accumulate=*/false);
}

template <typename T>
Matrix<T> gemm2(const Matrix<T>& a, const Matrix<T>& b, bool ta = false,
                bool tb = false, T alpha = T(1)) {
  Matrix<T> c(ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols());
  gemm2_into<T>(c.view(), a.view(), b.view(), ta, tb, alpha);
  return c;
}

// ---------------------------------------------------------------------------
// syrk: B = alpha * A A^T (ta = false) or alpha * A^T A (ta = true)
// Both triangles are written from one computation, so B is exactly symmetric.
// ---------------------------------------------------------------------------

template <typename T>
void syrk_into(MatrixView<T> b, ConstMatrixView<T> a, bool ta = false,
               T alpha = T(1)) {
  const index_t n = ta ? a.cols : a.rows;
  const index_t k = ta ? a.rows : a.cols;
  if (b.rows != n || b.cols != n) {
    throw ShapeError("syrk: output must be " + std::to_string(n) + "x" +
                     std::to_string(n));
  }
  detail::check_no_alias(b.data, a.data, "syrk");
  std::fill(b.data, b.data + b.size(), T(0));
  if (!ta) {
    for (index_t i = 0; i < n; ++i) {
      const T* ai = a.row(i);
      for (index_t j = 0; j <= i; ++j) {
        const T* aj = a.row(j);
        T acc = T(0);
        for (index_t p = 0; p < k; ++p) acc += ai[p] * aj[p];
        b(i, j) = alpha * acc;
      }
    }
  } else {
    for (index_t p = 0; p < k; ++p) {
      const T* ap = a.row(p);
      for (index_t i = 0; i < n; ++i) {
        const T av = alpha * ap[i];
        T* bi = b.row(i);
        for (index_t j = 0; j <= i; ++j) bi[j] += av * ap[j];
      }
    }
  }
  copyltu_inplace(b);
}

template <typename T>
Matrix<T> syrk(const Matrix<T>& a, bool ta = false, T alpha = T(1)) {
  const index_t n = ta ? a.cols() : a.rows();
  Matrix<T> b(n, n);
  syrk_into<T>(b.view(), a.view(), ta, alpha);
  return b;
}

// ---------------------------------------------------------------------------
// trmm: x <- alpha * op(T) x   (rightside = false)
//       x <- alpha * x op(T)   (rightside = true)
// Only the `lower`-selected triangle of t is referenced.
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
void check_tri_operands(ConstMatrixView<T> t, ConstMatrixView<T> x,
                        bool rightside, const char* what) {
  require_square<T>(t, what);
  const index_t need = rightside ? x.cols : x.rows;
  if (t.rows != need) {
    throw ShapeError(std::string(what) + ": triangular factor is " +
                     std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                     ", dense operand is " + std::to_string(x.rows) + "x" +
                     std::to_string(x.cols));
  }
  check_no_alias(x.data, t.data, what);
}
}  // namespace detail

template <typename T>
void trmm_inplace(ConstMatrixView<T> t, MatrixView<T> x, bool rightside = false,
                  bool transpose = false, bool lower = true, T alpha = T(1)) {
  detail::check_tri_operands<T>(t, x, rightside, "trmm");
  const index_t n = x.cols;
  if (!rightside) {
    const index_t m = x.rows;
    const bool forward = (lower == transpose);  // iterate rows ascending?
    for (index_t step = 0; step < m; ++step) {
      const index_t i = forward ? step : m - 1 - step;
      T* xi = x.row(i);
      const T dii = t(i, i);
      for (index_t j = 0; j < n; ++j) xi[j] *= dii;
      // accumulate the off-diagonal contributions from untouched rows
      if (lower && !transpose) {
        for (index_t p = 0; p < i; ++p) {
          const T tv = t(i, p);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] += tv * xp[j];
        }
      } else if (lower && transpose) {
        for (index_t p = i + 1; p < m; ++p) {
          const T tv = t(p, i);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] += tv * xp[j];
        }
      } else if (!lower && !transpose) {
        for (index_t p = i + 1; p < m; ++p) {
          const T tv = t(i, p);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] += tv * xp[j];
        }
      } else {
        for (index_t p = 0; p < i; ++p) {
          const T tv = t(p, i);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] += tv * xp[j];
        }
      }
      if (alpha != T(1)) {
        for (index_t j = 0; j < n; ++j) xi[j] *= alpha;
      }
    }
    return;
  }
  // rightside: per-row updates, visiting t's rows so inner loops stay packed.
  const index_t m = x.rows;
  for (index_t r = 0; r < m; ++r) {
    T* xr = x.row(r);
    if (lower && !transpose) {
      // y_j = sum_{k >= j} x_k t(k, j); consume x[k] in ascending k
      for (index_t k = 0; k < n; ++k) {
        const T v = xr[k];
        const T* tk = t.row(k);
        for (index_t j = 0; j < k; ++j) xr[j] += v * tk[j];
        xr[k] = v * tk[k];
      }
    } else if (lower && transpose) {
      // y_j = sum_{k <= j} x_k t(j, k); dot rows descending
      for (index_t j = n - 1; j >= 0; --j) {
        const T* tj = t.row(j);
        T acc = T(0);
        for (index_t k = 0; k <= j; ++k) acc += xr[k] * tj[k];
        xr[j] = acc;
      }
    } else if (!lower && !transpose) {
      // y_j = sum_{k <= j} x_k t(k, j); consume x[k] in descending k
      for (index_t k = n - 1; k >= 0; --k) {
        const T v = xr[k];
        const T* tk = t.row(k);
        for (index_t j = k + 1; j < n; ++j) xr[j] += v * tk[j];
        xr[k] = v * tk[k];
      }
    } else {
      // y_j = sum_{k >= j} x_k t(j, k); dot rows ascending
      for (index_t j = 0; j < n; ++j) {
        const T* tj = t.row(j);
        T acc = T(0);
        for (index_t k = j; k < n; ++k) acc += xr[k] * tj[k];
        xr[j] = acc;
      }
    }
    if (alpha != T(1)) {
      for (index_t j = 0; j < n; ++j) xr[j] *= alpha;
    }
  }
}

template <typename T>
Matrix<T> trmm(const Matrix<T>& t, const Matrix<T>& x, bool rightside = false,
               bool transpose = false, bool lower = true, T alpha = T(1)) {
  Matrix<T> b = x;
  trmm_inplace<T>(t.view(), b.view(), rightside, transpose, lower, alpha);
  return b;
}

// ---------------------------------------------------------------------------
// trsm: solve op(T) y = alpha x (rightside = false) or y op(T) = alpha x,
// overwriting x with y.
// ---------------------------------------------------------------------------

template <typename T>
void trsm_inplace(ConstMatrixView<T> t, MatrixView<T> x, bool rightside = false,
                  bool transpose = false, bool lower = true, T alpha = T(1)) {
  detail::check_tri_operands<T>(t, x, rightside, "trsm");
  for (index_t k = 0; k < t.rows; ++k) {
    if (t(k, k) == T(0)) {
      throw SingularError("trsm: zero diagonal at index " + std::to_string(k), k);
    }
  }
  if (alpha != T(1)) scale_inplace(x, alpha);
  const index_t n = x.cols;
  if (!rightside) {
    const index_t m = x.rows;
    // substitution order: forward when the effective factor is lower
    const bool forward = (lower != transpose);
    for (index_t step = 0; step < m; ++step) {
      const index_t i = forward ? step : m - 1 - step;
      T* xi = x.row(i);
      if (lower && !transpose) {
        for (index_t p = 0; p < i; ++p) {
          const T tv = t(i, p);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] -= tv * xp[j];
        }
      } else if (lower && transpose) {
        for (index_t p = i + 1; p < m; ++p) {
          const T tv = t(p, i);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] -= tv * xp[j];
        }
      } else if (!lower && !transpose) {
        for (index_t p = i + 1; p < m; ++p) {
          const T tv = t(i, p);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] -= tv * xp[j];
        }
      } else {
        for (index_t p = 0; p < i; ++p) {
          const T tv = t(p, i);
          if (tv == T(0)) continue;
          const T* xp = x.row(p);
          for (index_t j = 0; j < n; ++j) xi[j] -= tv * xp[j];
        }
      }
      const T inv = T(1) / t(i, i);
      for (index_t j = 0; j < n; ++j) xi[j] *= inv;
    }
    return;
  }
  const index_t m = x.rows;
  for (index_t r = 0; r < m; ++r) {
    T* xr = x.row(r);
    if (lower && !transpose) {
      // y L = x: resolve y_k from the bottom, scatter into smaller j
      for (index_t k = n - 1; k >= 0; --k) {
        const T* tk = t.row(k);
        const T yk = xr[k] / tk[k];
        xr[k] = yk;
        for (index_t j = 0; j < k; ++j) xr[j] -= yk * tk[j];
      }
    } else if (lower && transpose) {
      // y L^T = x: dot rows ascending
      for (index_t j = 0; j < n; ++j) {
        const T* tj = t.row(j);
        T acc = xr[j];
        for (index_t k = 0; k < j; ++k) acc -= xr[k] * tj[k];
        xr[j] = acc / tj[j];
      }
    } else if (!lower && !transpose) {
      // y U = x: resolve y_k from the top, scatter into larger j
      for (index_t k = 0; k < n; ++k) {
        const T* tk = t.row(k);
        const T yk = xr[k] / tk[k];
        xr[k] = yk;
        for (index_t j = k + 1; j < n; ++j) xr[j] -= yk * tk[j];
      }
    } else {
      // y U^T = x: dot rows descending
      for (index_t j = n - 1; j >= 0; --j) {
        const T* tj = t.row(j);
        T acc = xr[j];
        for (index_t k = j + 1; k < n; ++k) acc -= xr[k] * tj[k];
        xr[j] = acc / tj[j];
      }
    }
  }
}

template <typename T>
Matrix<T> trsm(const Matrix<T>& t, const Matrix<T>& x, bool rightside = false,
               bool transpose = false, bool lower = true, T alpha = T(1)) {
  Matrix<T> b = x;
  trsm_inplace<T>(t.view(), b.view(), rightside, transpose, lower, alpha);
  return b;
}

}  // namespace dla
