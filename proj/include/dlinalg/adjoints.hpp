// Reverse-mode pullbacks for the nine operators.
//
// Each op has an `_into` form writing cotangents into caller-provided buffers;
// those forms allocate nothing beyond a documented fixed workspace:
//   gemm2 / syrk / trmm / trsm / potrf / potri : no auxiliary matrix
//   gelqf : one m x m temporary
//   syevd : one n x n temporary
//   gesvd : one m x m temporary plus one length-m vector
// Allocating wrappers are provided for call sites that want fresh outputs.
#pragma once

#include "dlinalg/blas.hpp"
#include "dlinalg/matrix.hpp"
#include "dlinalg/transforms.hpp"

namespace dla {

namespace detail {

template <typename T>
void mask_triangle(MatrixView<T> x, bool lower) {
  if (lower) {
    tril_inplace(x);
  } else {
    triu_inplace(x);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gemm2: C = alpha op(A) op(B).  Reads A and B; Abar is written before Bbar.
// ---------------------------------------------------------------------------

template <typename T>
void gemm2_backward_into(MatrixView<T> abar, MatrixView<T> bbar,
                         ConstMatrixView<T> cbar, ConstMatrixView<T> a,
                         ConstMatrixView<T> b, bool ta, bool tb, T alpha) {
  if (!ta) {
    gemm2_into(abar, cbar, b, false, !tb, alpha);
  } else {
    gemm2_into(abar, b, cbar, tb, true, alpha);
  }
  if (!tb) {
    gemm2_into(bbar, a, cbar, !ta, false, alpha);
  } else {
    gemm2_into(bbar, cbar, a, true, ta, alpha);
  }
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> gemm2_backward(const Matrix<T>& cbar,
                                               const Matrix<T>& a,
                                               const Matrix<T>& b, bool ta,
                                               bool tb, T alpha = T(1)) {
  std::pair<Matrix<T>, Matrix<T>> out{Matrix<T>(a.rows(), a.cols()),
                                      Matrix<T>(b.rows(), b.cols())};
  gemm2_backward_into<T>(out.first.view(), out.second.view(), cbar.view(),
                         a.view(), b.view(), ta, tb, alpha);
  return out;
}

// ---------------------------------------------------------------------------
// syrk: B = alpha A A^T (or alpha A^T A).  Abar = alpha (Bbar + Bbar^T) A
// resp. alpha A (Bbar + Bbar^T), formed as two accumulated products.
// ---------------------------------------------------------------------------

template <typename T>
void syrk_backward_into(MatrixView<T> abar, ConstMatrixView<T> bbar,
                        ConstMatrixView<T> a, bool ta, T alpha) {
  if (!ta) {
    detail::gemm_accum(abar, bbar, a, false, false, alpha, false);
    detail::gemm_accum(abar, bbar, a, true, false, alpha, true);
  } else {
    detail::gemm_accum(abar, a, bbar, false, false, alpha, false);
    detail::gemm_accum(abar, a, bbar, false, true, alpha, true);
  }
}

template <typename T>
Matrix<T> syrk_backward(const Matrix<T>& bbar, const Matrix<T>& a, bool ta,
                        T alpha = T(1)) {
  Matrix<T> abar(a.rows(), a.cols());
  syrk_backward_into<T>(abar.view(), bbar.view(), a.view(), ta, alpha);
  return abar;
}

// ---------------------------------------------------------------------------
// trmm: B = alpha op(T) A / alpha A op(T).  Reads T and the *input* A.
// Tbar is computed first, so abar may alias bbar's buffer.
// ---------------------------------------------------------------------------

template <typename T>
void trmm_backward_into(MatrixView<T> abar, MatrixView<T> tbar,
                        ConstMatrixView<T> bbar, ConstMatrixView<T> t,
                        ConstMatrixView<T> a, bool rightside, bool transpose,
                        bool lower, T alpha) {
  if (!rightside && !transpose) {
    gemm2_into(tbar, bbar, a, false, true, alpha);
  } else if (!rightside && transpose) {
    gemm2_into(tbar, a, bbar, false, true, alpha);
  } else if (rightside && !transpose) {
    gemm2_into(tbar, a, bbar, true, false, alpha);
  } else {
    gemm2_into(tbar, bbar, a, true, false, alpha);
  }
  detail::mask_triangle(tbar, lower);
  copy_into(bbar, abar);
  trmm_inplace(t, abar, rightside, !transpose, lower, alpha);
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> trmm_backward(const Matrix<T>& bbar,
                                              const Matrix<T>& t,
                                              const Matrix<T>& a,
                                              bool rightside, bool transpose,
                                              bool lower, T alpha = T(1)) {
  std::pair<Matrix<T>, Matrix<T>> out{Matrix<T>(a.rows(), a.cols()),
                                      Matrix<T>(t.rows(), t.cols())};
  trmm_backward_into<T>(out.first.view(), out.second.view(), bbar.view(),
                        t.view(), a.view(), rightside, transpose, lower, alpha);
  return out;
}

// ---------------------------------------------------------------------------
// trsm: B = alpha op(T)^{-1} A / alpha A op(T)^{-1}.  Consumes the forward
// *output* B (never re-reads A).  Abar is computed first and may alias bbar.
// ---------------------------------------------------------------------------

template <typename T>
void trsm_backward_into(MatrixView<T> abar, MatrixView<T> tbar,
                        ConstMatrixView<T> bbar, ConstMatrixView<T> t,
                        ConstMatrixView<T> b, bool rightside, bool transpose,
                        bool lower, T alpha) {
  // S = op(T)^{-T} Bbar (the unscaled Abar), formed in place in abar.
  copy_into(bbar, abar);
  trsm_inplace(t, abar, rightside, !transpose, lower, T(1));
  if (!rightside) {
    if (!transpose) {
      gemm2_into(tbar, ConstMatrixView<T>(abar), b, false, true, T(-1));
    } else {
      gemm2_into(tbar, b, ConstMatrixView<T>(abar), false, true, T(-1));
    }
  } else {
    if (!transpose) {
      gemm2_into(tbar, b, ConstMatrixView<T>(abar), true, false, T(-1));
    } else {
      gemm2_into(tbar, ConstMatrixView<T>(abar), b, true, false, T(-1));
    }
  }
  detail::mask_triangle(tbar, lower);
  if (alpha != T(1)) scale_inplace(abar, alpha);
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> trsm_backward(const Matrix<T>& bbar,
                                              const Matrix<T>& t,
                                              const Matrix<T>& b,
                                              bool rightside, bool transpose,
                                              bool lower, T alpha = T(1)) {
  std::pair<Matrix<T>, Matrix<T>> out{Matrix<T>(bbar.rows(), bbar.cols()),
                                      Matrix<T>(t.rows(), t.cols())};
  trsm_backward_into<T>(out.first.view(), out.second.view(), bbar.view(),
                        t.view(), b.view(), rightside, transpose, lower, alpha);
  return out;
}

// ---------------------------------------------------------------------------
// potrf: A = L L^T (lower) or A = R^T R.  Consumes the output factor only.
// Abar = 1/2 L^{-T} copyltu(L^T Lbar) L^{-1}, exactly symmetrized at the end;
// abar may alias lbar.
// ---------------------------------------------------------------------------

template <typename T>
void potrf_backward_into(MatrixView<T> abar, ConstMatrixView<T> lbar,
                         ConstMatrixView<T> l, bool lower) {
  copy_into(lbar, abar);
  if (lower) {
    trmm_inplace(l, abar, false, true, true, T(1));   // L^T Lbar
    copyltu_inplace(abar);
    trsm_inplace(l, abar, false, true, true, T(1));   // L^{-T} *
    trsm_inplace(l, abar, true, false, true, T(1));   // * L^{-1}
  } else {
    trmm_inplace(l, abar, true, true, false, T(1));   // Rbar R^T
    copyutl_inplace(abar);
    trsm_inplace(l, abar, false, false, false, T(1));  // R^{-1} *
    trsm_inplace(l, abar, true, true, false, T(1));    // * R^{-T}
  }
  scale_inplace(abar, T(0.5));
  sym_inplace(abar);
}

template <typename T>
Matrix<T> potrf_backward(const Matrix<T>& lbar, const Matrix<T>& l,
                         bool lower = true) {
  Matrix<T> abar(l.rows(), l.cols());
  potrf_backward_into<T>(abar.view(), lbar.view(), l.view(), lower);
  return abar;
}

// ---------------------------------------------------------------------------
// potri: B = A^{-1} from factor L (or R).  Consumes the factor and the output.
// Lbar = -tril((B Bbar + B Bbar^T) L^{-T});  Rbar = -triu(R^{-T} (...) B).
// ---------------------------------------------------------------------------

template <typename T>
void potri_backward_into(MatrixView<T> lbar_out, ConstMatrixView<T> bbar,
                         ConstMatrixView<T> l, ConstMatrixView<T> b,
                         bool lower) {
  if (lower) {
    gemm2_into(lbar_out, b, bbar, false, false, T(1));
    detail::gemm_accum(lbar_out, b, bbar, false, true, T(1), true);
    trsm_inplace(l, lbar_out, true, true, true, T(1));  // * L^{-T}
    scale_inplace(lbar_out, T(-1));
    tril_inplace(lbar_out);
  } else {
    gemm2_into(lbar_out, bbar, b, false, false, T(1));
    detail::gemm_accum(lbar_out, bbar, b, true, false, T(1), true);
    trsm_inplace(l, lbar_out, false, true, false, T(1));  // R^{-T} *
    scale_inplace(lbar_out, T(-1));
    triu_inplace(lbar_out);
  }
}

template <typename T>
Matrix<T> potri_backward(const Matrix<T>& bbar, const Matrix<T>& l,
                         const Matrix<T>& b, bool lower = true) {
  Matrix<T> lbar(l.rows(), l.cols());
  potri_backward_into<T>(lbar.view(), bbar.view(), l.view(), b.view(), lower);
  return lbar;
}

// ---------------------------------------------------------------------------
// gelqf: A = L Q.  Consumes the outputs; one m x m temporary.
// Abar = L^{-T} (Qbar + copyltu(M) Q),  M = L^T Lbar - Qbar Q^T.
// ---------------------------------------------------------------------------

template <typename T>
void gelqf_backward_into(MatrixView<T> abar, ConstMatrixView<T> qbar,
                         ConstMatrixView<T> lbar, ConstMatrixView<T> q,
                         ConstMatrixView<T> l) {
  const index_t m = q.rows;
  Matrix<T> work(m, m);
  copy_into(lbar, work.view());
  trmm_inplace(l, work.view(), false, true, true, T(1));  // L^T Lbar
  detail::gemm_accum(work.view(), qbar, q, false, true, T(-1), true);
  copyltu_inplace(work.view());
  copy_into(qbar, abar);
  detail::gemm_accum(abar, ConstMatrixView<T>(work.view()), q, false, false,
                     T(1), true);
  trsm_inplace(l, abar, false, true, true, T(1));  // L^{-T} *
}

template <typename T>
Matrix<T> gelqf_backward(const Matrix<T>& qbar, const Matrix<T>& lbar,
                         const Matrix<T>& q, const Matrix<T>& l) {
  Matrix<T> abar(q.rows(), q.cols());
  gelqf_backward_into<T>(abar.view(), qbar.view(), lbar.view(), q.view(),
                         l.view());
  return abar;
}

// ---------------------------------------------------------------------------
// syevd: A = U^T diag(lambda) U.  Consumes the outputs; one n x n temporary.
// Abar = U^T (sym(Ubar U^T . F) + diag(lambdabar)) U with the (i, j) entry of
// the symmetrized product, i > j, equal to
//   (w_ij - w_ji) / (2 max(lambda_i - lambda_j, eps_gap))
// which stays finite across degenerate eigenvalues. Output exactly symmetric.
// ---------------------------------------------------------------------------

template <typename T>
void syevd_backward_into(MatrixView<T> abar, ConstMatrixView<T> ubar,
                         const T* lambdabar, ConstMatrixView<T> u,
                         const T* lambda, const ToleranceConfig<T>& cfg) {
  const index_t n = u.rows;
  Matrix<T> work(n, n);
  gemm2_into(work.view(), ubar, u, false, true, T(1));  // Ubar U^T
  for (index_t i = 0; i < n; ++i) {
    for (index_t j = 0; j < i; ++j) {
      const T gap = std::max(lambda[i] - lambda[j], cfg.eps_gap);
      const T y = (work(i, j) - work(j, i)) / (T(2) * gap);
      work(i, j) = y;
      work(j, i) = y;
    }
    work(i, i) = lambdabar[i];
  }
  gemm2_into(abar, u, ConstMatrixView<T>(work.view()), true, false, T(1));
  gemm2_into(work.view(), ConstMatrixView<T>(abar), u, false, false, T(1));
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j <= i; ++j) {
      const T y = (work(i, j) + work(j, i)) / T(2);
      abar(i, j) = y;
      abar(j, i) = y;
    }
}

template <typename T>
Matrix<T> syevd_backward(const Matrix<T>& ubar, const std::vector<T>& lambdabar,
                         const Matrix<T>& u, const std::vector<T>& lambda,
                         const ToleranceConfig<T>& cfg =
                             ToleranceConfig<T>::defaults()) {
  Matrix<T> abar(u.rows(), u.cols());
  syevd_backward_into<T>(abar.view(), ubar.view(), lambdabar.data(), u.view(),
                         lambda.data(), cfg);
  return abar;
}

// ---------------------------------------------------------------------------
// gesvd: A = U^T diag(lambda) V.  Consumes the outputs; requires a strictly
// positive spectrum (lambda_i > eps_gap).  Workspace: one m x m matrix and one
// length-m vector; the final U^T * product runs in m-column chunks so the m x n
// cotangent never needs a second m x n buffer.
// ---------------------------------------------------------------------------

template <typename T>
void gesvd_backward_into(MatrixView<T> abar, ConstMatrixView<T> ubar,
                         const T* lambdabar, ConstMatrixView<T> vbar,
                         ConstMatrixView<T> u, const T* lambda,
                         ConstMatrixView<T> v, const ToleranceConfig<T>& cfg) {
  const index_t m = u.rows, n = v.cols;
  for (index_t i = 0; i < m; ++i) {
    if (!(lambda[i] > cfg.eps_gap)) {
      throw SingularError(
          "gesvd_backward: singular value " + std::to_string(i) +
              " is not positive enough for a stable pullback",
          i);
    }
  }
  Matrix<T> work(m, m);
  detail::Buffer<T> dvec_buf(m);
  T* dvec = dvec_buf.get();

  // abar <- Lambda^{-1} Vbar
  for (index_t i = 0; i < m; ++i) {
    const T inv = T(1) / lambda[i];
    const T* src = vbar.row(i);
    T* dst = abar.row(i);
    for (index_t j = 0; j < n; ++j) dst[j] = inv * src[j];
  }
  // work <- Lambda^{-1} Vbar V^T; keep its diagonal
  gemm2_into(work.view(), ConstMatrixView<T>(abar), v, false, true, T(1));
  for (index_t i = 0; i < m; ++i) dvec[i] = work(i, i);
  // work <- Ubar U^T + Lambda^{-1} Vbar V^T Lambda
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < m; ++j) work(i, j) *= lambda[j];
  detail::gemm_accum(work.view(), ubar, u, false, true, T(1), true);
  // work <- diag(lambdabar) + 2 sym(work . E) Lambda - diag(dvec)
  for (index_t i = 0; i < m; ++i) {
    for (index_t j = 0; j < i; ++j) {
      const T hd = std::max(lambda[i] - lambda[j], cfg.eps_gap);
      const T hs = std::max(lambda[i] + lambda[j], cfg.eps_gap);
      const T y = (work(i, j) - work(j, i)) / (hd * hs);
      work(i, j) = y * lambda[j];
      work(j, i) = y * lambda[i];
    }
    work(i, i) = lambdabar[i] - dvec[i];
  }
  // abar <- abar + work V
  detail::gemm_accum(abar, ConstMatrixView<T>(work.view()), v, false, false,
                     T(1), true);
  // abar <- U^T abar, in m-column chunks staged through `work`
  for (index_t c0 = 0; c0 < n; c0 += m) {
    const index_t width = std::min(m, n - c0);
    for (index_t i = 0; i < m; ++i) {
      std::copy(abar.row(i) + c0, abar.row(i) + c0 + width,
                work.data() + i * width);
    }
    for (index_t i = 0; i < m; ++i) {
      T* dst = abar.row(i) + c0;
      std::fill(dst, dst + width, T(0));
    }
    for (index_t k = 0; k < m; ++k) {
      const T* urow = u.row(k);
      const T* wrow = work.data() + k * width;
      for (index_t i = 0; i < m; ++i) {
        const T f = urow[i];
        T* dst = abar.row(i) + c0;
        for (index_t j = 0; j < width; ++j) dst[j] += f * wrow[j];
      }
    }
  }
}

template <typename T>
Matrix<T> gesvd_backward(const Matrix<T>& ubar, const std::vector<T>& lambdabar,
                         const Matrix<T>& vbar, const Matrix<T>& u,
                         const std::vector<T>& lambda, const Matrix<T>& v,
                         const ToleranceConfig<T>& cfg =
                             ToleranceConfig<T>::defaults()) {
  Matrix<T> abar(v.rows(), v.cols());
  gesvd_backward_into<T>(abar.view(), ubar.view(), lambdabar.data(),
                         vbar.view(), u.view(), lambda.data(), v.view(), cfg);
  return abar;
}

}  // namespace dla
