#include <random>

#include "dlinalg/gradcheck.hpp"
#include "dlinalg/svd.hpp"
#include "dlinalg/transforms.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dla;

TEST_SUITE_BEGIN("svd");

TEST_CASE_TEMPLATE("gesvd hand value", T, float, double) {
  Matrix<T> a = Matrix<T>::from_rows({{3, 4}});
  GesvdResult<T> s = gesvd(a);
  CHECK(s.lambda[0] == doctest::Approx(5.0));
  CHECK(s.u(0, 0) == doctest::Approx(1.0));
  CHECK(s.v(0, 0) == doctest::Approx(0.6));
  CHECK(s.v(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("gesvd reconstructs with orthonormal row spaces") {
  std::mt19937_64 rng(47);
  for (auto [m, n] : std::vector<std::pair<index_t, index_t>>{
           {1, 1}, {2, 6}, {5, 5}, {8, 13}, {16, 16}}) {
    Matrix<double> a = random_matrix<double>(m, n, rng);
    GesvdResult<double> s = gesvd(a);

    for (index_t i = 0; i < m; ++i) {
      CHECK(s.lambda[i] >= 0.0);
      if (i + 1 < m) CHECK(s.lambda[i] <= s.lambda[i + 1]);
    }

    Matrix<double> uut = oracle::naive_gemm(s.u, s.u, false, true, 1.0);
    CHECK(oracle::rel_diff(uut, eye<double>(m)) < 1e-13);
    Matrix<double> vvt = oracle::naive_gemm(s.v, s.v, false, true, 1.0);
    CHECK(oracle::rel_diff(vvt, eye<double>(m)) < 1e-13);

    Matrix<double> back = oracle::rows_congruence(s.u, s.lambda, s.v);
    CHECK(oracle::rel_diff(back, a) < 1e-12);
  }
}

TEST_CASE("gesvd singular values match syevd of the gram matrix") {
  std::mt19937_64 rng(53);
  const index_t m = 5, n = 8;
  Matrix<double> a = random_matrix<double>(m, n, rng);
  GesvdResult<double> s = gesvd(a);
  SyevdResult<double> e = syevd(syrk(a));
  for (index_t i = 0; i < m; ++i) {
    CHECK(s.lambda[i] * s.lambda[i] == doctest::Approx(e.lambda[i]).epsilon(1e-10));
  }
}

TEST_CASE("gesvd rejects tall input and survives a zero matrix") {
  Matrix<double> tall(4, 2);
  CHECK_THROWS_AS(gesvd(tall), ShapeError);

  Matrix<double> zero(3, 5);
  GesvdResult<double> s = gesvd(zero);
  for (double v : s.lambda) CHECK(v == 0.0);
  Matrix<double> uut = oracle::naive_gemm(s.u, s.u, false, true, 1.0);
  CHECK(oracle::rel_diff(uut, eye<double>(3)) < 1e-14);
}

TEST_SUITE_END();
