#include <cmath>
#include <random>

#include "dlinalg/eigen_sym.hpp"
#include "dlinalg/gradcheck.hpp"
#include "dlinalg/transforms.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dla;

TEST_SUITE_BEGIN("eigen_sym");

TEST_CASE_TEMPLATE("syevd hand value with the sign rule", T, float, double) {
  Matrix<T> a = Matrix<T>::from_rows({{0, 1}, {1, 0}});
  SyevdResult<T> e = syevd(a);
  const T h = T(std::sqrt(0.5));
  CHECK(e.lambda[0] == doctest::Approx(-1.0));
  CHECK(e.lambda[1] == doctest::Approx(1.0));
  // rows are eigenvectors; the largest-|entry| element (ties toward the
  // smaller index) is made positive
  CHECK(e.u(0, 0) == doctest::Approx(h));
  CHECK(e.u(0, 1) == doctest::Approx(-h));
  CHECK(e.u(1, 0) == doctest::Approx(h));
  CHECK(e.u(1, 1) == doctest::Approx(h));
}

TEST_CASE("syevd reconstructs and is orthonormal") {
  std::mt19937_64 rng(43);
  for (index_t n : {1, 2, 3, 8, 16, 25}) {
    Matrix<double> a = sym(random_matrix<double>(n, n, rng));
    SyevdResult<double> e = syevd(a);

    for (index_t i = 0; i + 1 < n; ++i) CHECK(e.lambda[i] <= e.lambda[i + 1]);

    Matrix<double> uut = oracle::naive_gemm(e.u, e.u, false, true, 1.0);
    CHECK(oracle::rel_diff(uut, eye<double>(n)) < 1e-13);

    Matrix<double> back = oracle::rows_congruence(e.u, e.lambda, e.u);
    CHECK(oracle::rel_diff(back, a) < 1e-12);
  }
}

TEST_CASE("syevd on a diagonal matrix sorts the entries") {
  Matrix<double> a = Matrix<double>::from_rows(
      {{3, 0, 0}, {0, -7, 0}, {0, 0, 1}});
  SyevdResult<double> e = syevd(a);
  CHECK(e.lambda[0] == doctest::Approx(-7.0));
  CHECK(e.lambda[1] == doctest::Approx(1.0));
  CHECK(e.lambda[2] == doctest::Approx(3.0));
  CHECK(e.u(0, 1) == doctest::Approx(1.0));  // eigenvector rows follow the sort
  CHECK(e.u(1, 2) == doctest::Approx(1.0));
  CHECK(e.u(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("syevd rejects asymmetric input") {
  Matrix<double> a = Matrix<double>::from_rows({{1, 2}, {0, 1}});
  CHECK_THROWS_AS(syevd(a), Error);
}

namespace {

// max |U U^T - I| and max |U^T diag(w) U - A| / max|A|
std::pair<double, double> factor_quality(const Matrix<double>& a,
                                         const Matrix<double>& u,
                                         const std::vector<double>& w) {
  const index_t n = a.rows();
  double amax = 0.0;
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < n; ++j) amax = std::max(amax, std::abs(a(i, j)));
  if (amax == 0.0) amax = 1.0;
  double ortho = 0.0, recon = 0.0;
  for (index_t i = 0; i < n; ++i) {
    for (index_t j = 0; j < n; ++j) {
      double dot = 0.0, rec = 0.0;
      for (index_t k = 0; k < n; ++k) {
        dot += u(i, k) * u(j, k);
        rec += u(k, i) * w[std::size_t(k)] * u(k, j);
      }
      ortho = std::max(ortho, std::abs(dot - (i == j ? 1.0 : 0.0)));
      recon = std::max(recon, std::abs(rec - a(i, j)) / amax);
    }
  }
  return {ortho, recon};
}

// A = Q^T diag(w) Q for an orthogonal Q taken from a generic eigensolve.
Matrix<double> with_spectrum(const std::vector<double>& w, std::mt19937_64& rng) {
  const index_t n = static_cast<index_t>(w.size());
  Matrix<double> q = syevd(sym(random_matrix<double>(n, n, rng))).u;
  Matrix<double> a(n, n);
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (index_t k = 0; k < n; ++k) s += q(k, i) * w[std::size_t(k)] * q(k, j);
      a(i, j) = a(j, i) = s;
    }
  return a;
}

void check_degenerate(const Matrix<double>& a, double tol) {
  SyevdResult<double> e = syevd(a);
  for (index_t i = 0; i + 1 < a.rows(); ++i) {
    CHECK(e.lambda[std::size_t(i)] <= e.lambda[std::size_t(i) + 1]);
  }
  auto [ortho, recon] = factor_quality(a, e.u, e.lambda);
  CHECK(ortho < tol);
  CHECK(recon < tol);
}

}  // namespace

TEST_CASE("syevd handles degenerate and clustered spectra") {
  std::mt19937_64 rng(77);
  check_degenerate(eye<double>(8), 1e-10);           // all eigenvalues tied
  check_degenerate(Matrix<double>(5, 5), 1e-10);     // zero matrix
  check_degenerate(Matrix<double>::from_rows({{2, 0, 0}, {0, 2, 0}, {0, 0, 1}}),
                   1e-10);
  check_degenerate(with_spectrum({1, 1, 1, 2, 2, 3}, rng), 1e-10);
  check_degenerate(with_spectrum({1.0, 1.0 + 1e-12, 1.0 + 1e-6, 2.0}, rng),
                   1e-9);
  std::vector<double> cascade(20);
  for (int i = 0; i < 20; ++i) cascade[std::size_t(i)] = std::ldexp(1.0, -i);
  check_degenerate(with_spectrum(cascade, rng), 1e-9);
}

TEST_CASE("syevd is scale invariant across the double range") {
  std::mt19937_64 rng(78);
  for (double s : {1e150, 1e-150}) {
    Matrix<double> a = sym(random_matrix<double>(12, 12, rng));
    for (index_t i = 0; i < 12; ++i)
      for (index_t j = 0; j < 12; ++j) a(i, j) *= s;
    check_degenerate(a, 1e-12);
  }
}

TEST_SUITE_END();
