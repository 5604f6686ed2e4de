// Finite-difference validation of the analytic pullbacks.
//
// A check draws random inputs and cotangents, forms the scalar
//   phi(inputs) = sum_k <cotangent_k, output_k(inputs)>
// whose exact gradient w.r.t. an input is what the corresponding backward
// operator returns, and compares that against central differences.
//
// Inputs living on the symmetric manifold (potrf's A, syevd's A) are perturbed
// in coordinated (i,j)/(j,i) pairs; the off-diagonal difference quotient then
// equals twice the symmetrized analytic gradient entry and is halved before
// the comparison.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dlinalg/adjoints.hpp"
#include "dlinalg/cholesky.hpp"
#include "dlinalg/eigen_sym.hpp"
#include "dlinalg/lq.hpp"
#include "dlinalg/matrix.hpp"
#include "dlinalg/svd.hpp"

namespace dla {

enum class PerturbMode { Free, Symmetric };

template <typename T>
struct CheckReport {
  std::string name;
  bool pass = false;
  T max_abs_err = T(0);
  T max_rel_err = T(0);
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace detail

template <typename T>
Matrix<T> random_matrix(index_t rows, index_t cols, std::mt19937_64& rng) {
  std::normal_distribution<T> dist(T(0), T(1));
  Matrix<T> out(rows, cols);
  for (index_t i = 0; i < rows * cols; ++i) out.data()[i] = dist(rng);
  return out;
}

// X X^T + n I: symmetric with eigenvalues >= n, safely factorable.
template <typename T>
Matrix<T> random_spd(index_t n, std::mt19937_64& rng) {
  Matrix<T> x = random_matrix<T>(n, n, rng);
  Matrix<T> a = syrk(x, false, T(1));
  for (index_t i = 0; i < n; ++i) a(i, i) += T(n);
  return a;
}

// Symmetric matrix whose eigengaps all exceed min_gap (resampled as needed).
template <typename T>
Matrix<T> random_symmetric_gapped(index_t n, T min_gap, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix<T> a = sym(random_matrix<T>(n, n, rng));
    scale_inplace(a.view(), std::sqrt(T(n)));
    SyevdResult<T> ed = syevd(a);
    T gap = std::numeric_limits<T>::max();
    for (index_t i = 0; i + 1 < n; ++i)
      gap = std::min(gap, ed.lambda[i + 1] - ed.lambda[i]);
    if (n == 1 || gap >= min_gap) return a;
  }
  throw Error("random_symmetric_gapped: exhausted resampling attempts");
}

// Wide matrix whose singular values are separated and bounded away from zero.
template <typename T>
Matrix<T> random_wide_gapped(index_t m, index_t n, T min_gap,
                             std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix<T> a = random_matrix<T>(m, n, rng);
    GesvdResult<T> sv = gesvd(a);
    T gap = std::numeric_limits<T>::max();
    for (index_t i = 0; i + 1 < m; ++i)
      gap = std::min(gap, sv.lambda[i + 1] - sv.lambda[i]);
    if (sv.lambda[0] >= min_gap && (m == 1 || gap >= min_gap)) return a;
  }
  throw Error("random_wide_gapped: exhausted resampling attempts");
}

// Central-difference gradient of a scalar functional of one matrix argument.
template <typename T>
Matrix<T> finite_diff_grad(const std::function<T(ConstMatrixView<T>)>& f,
                           const Matrix<T>& x0, T h, PerturbMode mode) {
  Matrix<T> x = x0;
  Matrix<T> grad(x0.rows(), x0.cols());
  for (index_t i = 0; i < x0.rows(); ++i) {
    for (index_t j = 0; j < x0.cols(); ++j) {
      if (mode == PerturbMode::Symmetric && j > i) continue;
      const bool paired = mode == PerturbMode::Symmetric && i != j;
      const T saved = x(i, j);
      x(i, j) = saved + h;
      if (paired) x(j, i) = saved + h;
      const T fp = f(x.view());
      x(i, j) = saved - h;
      if (paired) x(j, i) = saved - h;
      const T fm = f(x.view());
      x(i, j) = saved;
      if (paired) x(j, i) = saved;
      T g = (fp - fm) / (T(2) * h);
      if (paired) {
        g /= T(2);
        grad(j, i) = g;
      }
      grad(i, j) = g;
    }
  }
  return grad;
}

// max|analytic - fd|, passing when it is below atol or small relative to the
// finite-difference gradient's own scale.
template <typename T>
CheckReport<T> compare_grads(const std::string& name, const Matrix<T>& analytic,
                             const Matrix<T>& fd, const ToleranceConfig<T>& cfg,
                             std::uint64_t seed) {
  CheckReport<T> rep;
  rep.name = name;
  rep.seed = seed;
  rep.max_abs_err = max_abs_diff(analytic.view(), fd.view());
  const T denom = std::max(max_abs(fd.view()), cfg.grad_atol);
  rep.max_rel_err = rep.max_abs_err / denom;
  rep.pass =
      rep.max_abs_err <= cfg.grad_atol || rep.max_rel_err <= cfg.grad_rtol;
  return rep;
}

namespace detail {

template <typename T>
T dot_all(ConstMatrixView<T> a, ConstMatrixView<T> b) {
  T acc = T(0);
  for (index_t i = 0; i < a.rows * a.cols; ++i) acc += a.data[i] * b.data[i];
  return acc;
}

template <typename T>
T dot_vec(const std::vector<T>& a, const std::vector<T>& b) {
  T acc = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
std::vector<T> random_vector(index_t n, std::mt19937_64& rng) {
  std::normal_distribution<T> dist(T(0), T(1));
  std::vector<T> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = dist(rng);
  return out;
}

// Fold per-input comparisons into one worst-case report.
template <typename T>
CheckReport<T> worst_of(const std::string& name,
                        const std::vector<CheckReport<T>>& parts,
                        std::uint64_t seed) {
  CheckReport<T> rep;
  rep.name = name;
  rep.seed = seed;
  rep.pass = true;
  for (const auto& p : parts) {
    rep.max_abs_err = std::max(rep.max_abs_err, p.max_abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, p.max_rel_err);
    rep.pass = rep.pass && p.pass;
  }
  return rep;
}

}  // namespace detail

// One registry entry: run the check for a given size and seed.
template <typename T>
struct OperatorCheck {
  std::string name;
  std::function<CheckReport<T>(index_t, std::uint64_t,
                               const ToleranceConfig<T>&)>
      run;
};

template <typename T>
std::vector<OperatorCheck<T>> operator_checks() {
  std::vector<OperatorCheck<T>> ops;

  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      std::string name = std::string("gemm2[") + (ta ? "t" : "n") +
                         (tb ? "t" : "n") + "]";
      ops.push_back({name, [ta, tb, name](index_t n, std::uint64_t seed,
                                          const ToleranceConfig<T>& cfg) {
        std::mt19937_64 rng(seed);
        const T alpha = T(1.25);
        const index_t k = n + 1, m = n + 2;
        Matrix<T> a = ta ? random_matrix<T>(k, n, rng)
                         : random_matrix<T>(n, k, rng);
        Matrix<T> b = tb ? random_matrix<T>(m, k, rng)
                         : random_matrix<T>(k, m, rng);
        Matrix<T> cbar = random_matrix<T>(n, m, rng);
        auto [abar, bbar] = gemm2_backward(cbar, a, b, ta, tb, alpha);
        auto phi_a = [&](ConstMatrixView<T> x) {
          return detail::dot_all<T>(cbar.view(),
                                 gemm2(Matrix<T>(x), b, ta, tb, alpha).view());
        };
        auto phi_b = [&](ConstMatrixView<T> x) {
          return detail::dot_all<T>(cbar.view(),
                                 gemm2(a, Matrix<T>(x), ta, tb, alpha).view());
        };
        std::vector<CheckReport<T>> parts{
            compare_grads(name, abar,
                          finite_diff_grad<T>(phi_a, a, cfg.fd_step,
                                              PerturbMode::Free),
                          cfg, seed),
            compare_grads(name, bbar,
                          finite_diff_grad<T>(phi_b, b, cfg.fd_step,
                                              PerturbMode::Free),
                          cfg, seed)};
        return detail::worst_of<T>(name, parts, seed);
      }});
    }

  for (bool ta : {false, true}) {
    std::string name = std::string("syrk[") + (ta ? "t" : "n") + "]";
    ops.push_back({name, [ta, name](index_t n, std::uint64_t seed,
                                    const ToleranceConfig<T>& cfg) {
      std::mt19937_64 rng(seed);
      const T alpha = T(0.75);
      const index_t k = n + 1;
      Matrix<T> a = ta ? random_matrix<T>(k, n, rng)
                       : random_matrix<T>(n, k, rng);
      Matrix<T> bbar = random_matrix<T>(n, n, rng);
      Matrix<T> abar = syrk_backward(bbar, a, ta, alpha);
      auto phi = [&](ConstMatrixView<T> x) {
        return detail::dot_all<T>(bbar.view(),
                               syrk(Matrix<T>(x), ta, alpha).view());
      };
      return detail::worst_of<T>(
          name,
          {compare_grads(name, abar,
                         finite_diff_grad<T>(phi, a, cfg.fd_step,
                                             PerturbMode::Free),
                         cfg, seed)},
          seed);
    }});
  }

  for (bool rightside : {false, true})
    for (bool transpose : {false, true})
      for (bool lower : {false, true}) {
        std::string name = std::string("trmm[") + (rightside ? "r" : "l") +
                           (transpose ? "t" : "n") + (lower ? "lo" : "up") +
                           "]";
        ops.push_back({name, [rightside, transpose, lower, name](
                                 index_t n, std::uint64_t seed,
                                 const ToleranceConfig<T>& cfg) {
          std::mt19937_64 rng(seed);
          const T alpha = T(1.5);
          Matrix<T> t = random_matrix<T>(n, n, rng);
          if (lower) tril_inplace(t.view()); else triu_inplace(t.view());
          Matrix<T> a = rightside ? random_matrix<T>(n + 1, n, rng)
                                  : random_matrix<T>(n, n + 1, rng);
          Matrix<T> bbar = random_matrix<T>(a.rows(), a.cols(), rng);
          auto [abar, tbar] =
              trmm_backward(bbar, t, a, rightside, transpose, lower, alpha);
          auto phi_t = [&](ConstMatrixView<T> x) {
            return detail::dot_all<T>(
                bbar.view(),
                trmm(Matrix<T>(x), a, rightside, transpose, lower, alpha)
                    .view());
          };
          auto phi_a = [&](ConstMatrixView<T> x) {
            return detail::dot_all<T>(
                bbar.view(),
                trmm(t, Matrix<T>(x), rightside, transpose, lower, alpha)
                    .view());
          };
          std::vector<CheckReport<T>> parts{
              compare_grads(name, tbar,
                            finite_diff_grad<T>(phi_t, t, cfg.fd_step,
                                                PerturbMode::Free),
                            cfg, seed),
              compare_grads(name, abar,
                            finite_diff_grad<T>(phi_a, a, cfg.fd_step,
                                                PerturbMode::Free),
                            cfg, seed)};
          return detail::worst_of<T>(name, parts, seed);
        }});
      }

  for (bool rightside : {false, true})
    for (bool transpose : {false, true})
      for (bool lower : {false, true}) {
        std::string name = std::string("trsm[") + (rightside ? "r" : "l") +
                           (transpose ? "t" : "n") + (lower ? "lo" : "up") +
                           "]";
        ops.push_back({name, [rightside, transpose, lower, name](
                                 index_t n, std::uint64_t seed,
                                 const ToleranceConfig<T>& cfg) {
          std::mt19937_64 rng(seed);
          const T alpha = T(0.8);
          // Cholesky factor of an SPD matrix: well conditioned triangle.
          Matrix<T> t = potrf(random_spd<T>(n, rng), lower);
          Matrix<T> a = rightside ? random_matrix<T>(n + 1, n, rng)
                                  : random_matrix<T>(n, n + 1, rng);
          Matrix<T> b = trsm(t, a, rightside, transpose, lower, alpha);
          Matrix<T> bbar = random_matrix<T>(a.rows(), a.cols(), rng);
          auto [abar, tbar] =
              trsm_backward(bbar, t, b, rightside, transpose, lower, alpha);
          auto phi_t = [&](ConstMatrixView<T> x) {
            return detail::dot_all<T>(
                bbar.view(),
                trsm(Matrix<T>(x), a, rightside, transpose, lower, alpha)
                    .view());
          };
          auto phi_a = [&](ConstMatrixView<T> x) {
            return detail::dot_all<T>(
                bbar.view(),
                trsm(t, Matrix<T>(x), rightside, transpose, lower, alpha)
                    .view());
          };
          std::vector<CheckReport<T>> parts{
              compare_grads(name, tbar,
                            finite_diff_grad<T>(phi_t, t, cfg.fd_step,
                                                PerturbMode::Free),
                            cfg, seed),
              compare_grads(name, abar,
                            finite_diff_grad<T>(phi_a, a, cfg.fd_step,
                                                PerturbMode::Free),
                            cfg, seed)};
          return detail::worst_of<T>(name, parts, seed);
        }});
      }

  for (bool lower : {false, true}) {
    std::string name = std::string("potrf[") + (lower ? "lo" : "up") + "]";
    ops.push_back({name, [lower, name](index_t n, std::uint64_t seed,
                                       const ToleranceConfig<T>& cfg) {
      std::mt19937_64 rng(seed);
      Matrix<T> a = random_spd<T>(n, rng);
      Matrix<T> l = potrf(a, lower);
      Matrix<T> lbar = random_matrix<T>(n, n, rng);
      if (lower) tril_inplace(lbar.view()); else triu_inplace(lbar.view());
      Matrix<T> abar = potrf_backward(lbar, l, lower);
      auto phi = [&](ConstMatrixView<T> x) {
        return detail::dot_all<T>(lbar.view(),
                               potrf(Matrix<T>(x), lower).view());
      };
      return detail::worst_of<T>(
          name,
          {compare_grads(name, abar,
                         finite_diff_grad<T>(phi, a, cfg.fd_step,
                                             PerturbMode::Symmetric),
                         cfg, seed)},
          seed);
    }});
  }

  for (bool lower : {false, true}) {
    std::string name = std::string("potri[") + (lower ? "lo" : "up") + "]";
    ops.push_back({name, [lower, name](index_t n, std::uint64_t seed,
                                       const ToleranceConfig<T>& cfg) {
      std::mt19937_64 rng(seed);
      Matrix<T> l = potrf(random_spd<T>(n, rng), lower);
      Matrix<T> b = potri(l, lower);
      Matrix<T> bbar = random_matrix<T>(n, n, rng);
      Matrix<T> lbar = potri_backward(bbar, l, b, lower);
      auto phi = [&](ConstMatrixView<T> x) {
        return detail::dot_all<T>(bbar.view(),
                               potri(Matrix<T>(x), lower).view());
      };
      return detail::worst_of<T>(
          name,
          {compare_grads(name, lbar,
                         finite_diff_grad<T>(phi, l, cfg.fd_step,
                                             PerturbMode::Free),
                         cfg, seed)},
          seed);
    }});
  }

  ops.push_back({"gelqf", [](index_t n, std::uint64_t seed,
                             const ToleranceConfig<T>& cfg) {
    std::mt19937_64 rng(seed);
    const index_t m = n, cols = n + 3;
    Matrix<T> a = random_matrix<T>(m, cols, rng);
    GelqfResult<T> f = gelqf(a);
    Matrix<T> qbar = random_matrix<T>(m, cols, rng);
    Matrix<T> lbar = random_matrix<T>(m, m, rng);
    tril_inplace(lbar.view());
    Matrix<T> abar = gelqf_backward(qbar, lbar, f.q, f.l);
    auto phi = [&](ConstMatrixView<T> x) {
      GelqfResult<T> g = gelqf(Matrix<T>(x));
      return detail::dot_all<T>(qbar.view(), ConstMatrixView<T>(g.q.view())) +
             detail::dot_all<T>(lbar.view(), ConstMatrixView<T>(g.l.view()));
    };
    return detail::worst_of<T>(
        std::string("gelqf"),
        {compare_grads(std::string("gelqf"), abar,
                       finite_diff_grad<T>(phi, a, cfg.fd_step,
                                           PerturbMode::Free),
                       cfg, seed)},
        seed);
  }});

  ops.push_back({"syevd", [](index_t n, std::uint64_t seed,
                             const ToleranceConfig<T>& cfg) {
    std::mt19937_64 rng(seed);
    Matrix<T> a = random_symmetric_gapped<T>(n, cfg.min_gap_resample, rng);
    SyevdResult<T> ed = syevd(a);
    Matrix<T> ubar = random_matrix<T>(n, n, rng);
    std::vector<T> lbar = detail::random_vector<T>(n, rng);
    Matrix<T> abar = syevd_backward(ubar, lbar, ed.u, ed.lambda, cfg);
    auto phi = [&](ConstMatrixView<T> x) {
      SyevdResult<T> e = syevd(Matrix<T>(x));
      return detail::dot_all<T>(ubar.view(), ConstMatrixView<T>(e.u.view())) +
             detail::dot_vec(lbar, e.lambda);
    };
    return detail::worst_of<T>(
        std::string("syevd"),
        {compare_grads(std::string("syevd"), abar,
                       finite_diff_grad<T>(phi, a, cfg.fd_step,
                                           PerturbMode::Symmetric),
                       cfg, seed)},
        seed);
  }});

  ops.push_back({"gesvd", [](index_t n, std::uint64_t seed,
                             const ToleranceConfig<T>& cfg) {
    std::mt19937_64 rng(seed);
    const index_t m = n, cols = n + 3;
    Matrix<T> a = random_wide_gapped<T>(m, cols, cfg.min_gap_resample, rng);
    GesvdResult<T> sv = gesvd(a);
    Matrix<T> ubar = random_matrix<T>(m, m, rng);
    std::vector<T> lbar = detail::random_vector<T>(m, rng);
    Matrix<T> vbar = random_matrix<T>(m, cols, rng);
    Matrix<T> abar =
        gesvd_backward(ubar, lbar, vbar, sv.u, sv.lambda, sv.v, cfg);
    auto phi = [&](ConstMatrixView<T> x) {
      GesvdResult<T> s = gesvd(Matrix<T>(x));
      return detail::dot_all<T>(ubar.view(), ConstMatrixView<T>(s.u.view())) +
             detail::dot_vec(lbar, s.lambda) +
             detail::dot_all<T>(vbar.view(), ConstMatrixView<T>(s.v.view()));
    };
    return detail::worst_of<T>(
        std::string("gesvd"),
        {compare_grads(std::string("gesvd"), abar,
                       finite_diff_grad<T>(phi, a, cfg.fd_step,
                                           PerturbMode::Free),
                       cfg, seed)},
        seed);
  }});

  return ops;
}

template <typename T>
struct GradcheckSummary {
  int checks = 0;
  int failures = 0;
  T worst_rel = T(0);
  std::string worst_name;
  double seconds = 0.0;
};

// Run every registered check over the given sizes and trial count.
// `log`, when set, receives one line per failing check and a per-op summary.
template <typename T>
GradcheckSummary<T> run_operator_checks(
    const std::vector<index_t>& sizes, int trials, std::uint64_t base_seed,
    const ToleranceConfig<T>& cfg, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSummary<T> summary;
  auto ops = operator_checks<T>();
  for (std::size_t oi = 0; oi < ops.size(); ++oi) {
    T op_worst = T(0);
    int op_fail = 0;
    for (index_t n : sizes) {
      for (int trial = 0; trial < trials; ++trial) {
        const std::uint64_t seed = detail::mix_seed(
            detail::mix_seed(base_seed, oi * 1000003ull + n),
            static_cast<std::uint64_t>(trial));
        CheckReport<T> rep = ops[oi].run(n, seed, cfg);
        ++summary.checks;
        op_worst = std::max(op_worst, rep.max_rel_err);
        if (rep.max_rel_err > summary.worst_rel) {
          summary.worst_rel = rep.max_rel_err;
          summary.worst_name = rep.name + " n=" + std::to_string(n);
        }
        if (!rep.pass) {
          ++summary.failures;
          ++op_fail;
          if (log) {
            *log << "FAIL " << rep.name << " n=" << n << " trial=" << trial
                 << " max_abs=" << rep.max_abs_err
                 << " max_rel=" << rep.max_rel_err << " seed=" << rep.seed
                 << '\n';
          }
        }
      }
    }
    if (log) {
      *log << (op_fail == 0 ? "ok   " : "FAIL ") << ops[oi].name
           << "  worst_rel=" << op_worst << '\n';
    }
  }
  summary.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return summary;
}

}  // namespace dla
