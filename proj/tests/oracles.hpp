#pragma once

// Local oracles the suites compare against: a triple-loop gemm nobody has
// optimized, plus small reconstruction helpers.

#include <vector>

#include "dlinalg/matrix.hpp"

namespace oracle {

template <typename T>
dla::Matrix<T> naive_gemm(const dla::Matrix<T>& a, const dla::Matrix<T>& b,
                          bool ta, bool tb, T alpha = T(1)) {
  const dla::index_t m = ta ? a.cols() : a.rows();
  const dla::index_t k = ta ? a.rows() : a.cols();
  const dla::index_t n = tb ? b.rows() : b.cols();
  dla::Matrix<T> c(m, n);
  for (dla::index_t i = 0; i < m; ++i) {
    for (dla::index_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (dla::index_t p = 0; p < k; ++p) {
        const T av = ta ? a(p, i) : a(i, p);
        const T bv = tb ? b(j, p) : b(p, j);
        acc += av * bv;
      }
      c(i, j) = alpha * acc;
    }
  }
  return c;
}

// U^T diag(d) V with rows-are-vectors conventions (V = U reproduces syevd).
template <typename T>
dla::Matrix<T> rows_congruence(const dla::Matrix<T>& u,
                               const std::vector<T>& d,
                               const dla::Matrix<T>& v) {
  dla::Matrix<T> out(u.cols(), v.cols());
  for (dla::index_t i = 0; i < out.rows(); ++i) {
    for (dla::index_t j = 0; j < out.cols(); ++j) {
      T acc = T(0);
      for (dla::index_t k = 0; k < u.rows(); ++k) {
        acc += u(k, i) * d[static_cast<std::size_t>(k)] * v(k, j);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
T rel_diff(const dla::Matrix<T>& got, const dla::Matrix<T>& want) {
  const T scale = std::max(dla::max_abs<T>(want.view()), T(1));
  return dla::max_abs_diff<T>(got.view(), want.view()) / scale;
}

}  // namespace oracle
