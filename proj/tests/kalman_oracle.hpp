#pragma once

// Dense joint-Gaussian NLL for a linear-Gaussian state-space model: stack all
// observations into one vector, build its full covariance explicitly, and
// score with a single cholesky solve. Exponential cost in nothing, cubic in
// T*d -- fine as an oracle, useless as an algorithm.

#include <vector>

#include "dlinalg/blas.hpp"
#include "dlinalg/cholesky.hpp"
#include "dlinalg/matrix.hpp"

namespace oracle {

template <typename T>
T lgssm_joint_nll(const dla::Matrix<T>& a, const dla::Matrix<T>& b,
                  const dla::Matrix<T>& sh, const dla::Matrix<T>& sv,
                  const dla::Matrix<T>& mu0, const dla::Matrix<T>& s0,
                  const std::vector<dla::Matrix<T>>& obs) {
  using dla::index_t;
  using dla::Matrix;
  const index_t h = a.rows();
  const index_t d = b.rows();
  const index_t steps = static_cast<index_t>(obs.size());

  // state means and covariances: x_1 ~ N(mu0, s0), x_{t+1} = A x_t + w
  std::vector<Matrix<T>> mean(steps, Matrix<T>(h, 1));
  std::vector<Matrix<T>> cov(steps, Matrix<T>(h, h));
  mean[0] = mu0;
  cov[0] = s0;
  for (index_t t = 1; t < steps; ++t) {
    mean[t] = dla::gemm2(a, mean[t - 1]);
    Matrix<T> ap = dla::gemm2(a, cov[t - 1]);
    cov[t] = dla::gemm2(ap, a, false, true);
    for (index_t i = 0; i < h; ++i) {
      for (index_t j = 0; j < h; ++j) cov[t](i, j) += sh(i, j);
    }
  }
  // cross covariances of states: C(x_t, x_s) = A^{t-s} cov[s] for t >= s
  std::vector<std::vector<Matrix<T>>> cross(steps);
  for (index_t s = 0; s < steps; ++s) {
    cross[s].reserve(steps - s);
    cross[s].push_back(cov[s]);
    for (index_t t = s + 1; t < steps; ++t) {
      cross[s].push_back(dla::gemm2(a, cross[s].back()));
    }
  }

  Matrix<T> big(steps * d, steps * d);
  Matrix<T> resid(steps * d, 1);
  for (index_t t = 0; t < steps; ++t) {
    Matrix<T> om = dla::gemm2(b, mean[t]);
    for (index_t i = 0; i < d; ++i) resid(t * d + i, 0) = obs[t](i, 0) - om(i, 0);
    for (index_t s = 0; s <= t; ++s) {
      Matrix<T> bc = dla::gemm2(b, cross[s][t - s]);
      Matrix<T> block = dla::gemm2(bc, b, false, true);
      if (s == t) {
        for (index_t i = 0; i < d; ++i)
          for (index_t j = 0; j < d; ++j) block(i, j) += sv(i, j);
      }
      for (index_t i = 0; i < d; ++i) {
        for (index_t j = 0; j < d; ++j) {
          big(t * d + i, s * d + j) = block(i, j);
          big(s * d + j, t * d + i) = block(i, j);
        }
      }
    }
  }

  Matrix<T> l = dla::potrf(dla::sym(big));
  Matrix<T> z = dla::trsm(l, resid, false, false, true);
  T quad = T(0);
  for (index_t i = 0; i < steps * d; ++i) quad += z(i, 0) * z(i, 0);
  T logdet = T(0);
  for (index_t i = 0; i < steps * d; ++i) logdet += std::log(l(i, i));
  const T log2pi = T(1.8378770664093454835606594728112353L);
  return T(0.5) * quad + logdet + T(0.5) * T(steps * d) * log2pi;
}

}  // namespace oracle
