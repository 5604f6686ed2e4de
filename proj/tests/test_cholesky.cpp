#include <random>

#include "dlinalg/cholesky.hpp"
#include "dlinalg/gradcheck.hpp"
#include "dlinalg/transforms.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dla;

TEST_SUITE_BEGIN("cholesky");

TEST_CASE_TEMPLATE("potrf hand value", T, float, double) {
  Matrix<T> a = Matrix<T>::from_rows({{4, 2}, {2, 5}});
  Matrix<T> l = potrf(a);
  CHECK(l(0, 0) == T(2));
  CHECK(l(0, 1) == T(0));
  CHECK(l(1, 0) == T(1));
  CHECK(l(1, 1) == T(2));

  Matrix<T> r = potrf(a, false);
  CHECK(r(0, 0) == T(2));
  CHECK(r(1, 0) == T(0));
  CHECK(r(0, 1) == T(1));
  CHECK(r(1, 1) == T(2));
}

TEST_CASE("potrf reconstructs, including across the blocking boundary") {
  std::mt19937_64 rng(23);
  for (index_t n : {1, 2, 5, 17, 63, 64, 70}) {
    Matrix<double> a = random_spd<double>(n, rng);
    Matrix<double> l = potrf(a);
    for (index_t i = 0; i < n; ++i) {
      for (index_t j = i + 1; j < n; ++j) CHECK(l(i, j) == 0.0);
      CHECK(l(i, i) > 0.0);
    }
    Matrix<double> back = oracle::naive_gemm(l, l, false, true, 1.0);
    CHECK(oracle::rel_diff(back, a) < 1e-12);

    Matrix<double> r = potrf(a, false);
    Matrix<double> back_u = oracle::naive_gemm(r, r, true, false, 1.0);
    CHECK(oracle::rel_diff(back_u, a) < 1e-12);
  }
}

TEST_CASE("potrf failure reports the offending pivot") {
  Matrix<double> bad = Matrix<double>::from_rows(
      {{1, 0, 0}, {0, 1, 0}, {0, 0, -1}});
  try {
    potrf(bad);
    FAIL("expected NotPositiveDefiniteError");
  } catch (const NotPositiveDefiniteError& e) {
    CHECK(e.step == 2);
  }

  Matrix<double> asym = Matrix<double>::from_rows({{1, 2}, {0, 1}});
  CHECK_THROWS_AS(potrf(asym), Error);
}

TEST_CASE_TEMPLATE("potri hand value and inverse property", T, float, double) {
  Matrix<T> l = Matrix<T>::from_rows({{2, 0}, {1, 1}});
  Matrix<T> inv = potri(l);
  CHECK(inv(0, 0) == doctest::Approx(0.5));
  CHECK(inv(0, 1) == doctest::Approx(-0.5));
  CHECK(inv(1, 0) == doctest::Approx(-0.5));
  CHECK(inv(1, 1) == doctest::Approx(1.0));
  CHECK(max_asymmetry<T>(inv.view()) == T(0));
}

TEST_CASE("potri of both factor orientations inverts A") {
  std::mt19937_64 rng(29);
  for (index_t n : {1, 3, 8, 20}) {
    Matrix<double> a = random_spd<double>(n, rng);
    Matrix<double> inv_lo = potri(potrf(a));
    Matrix<double> inv_up = potri(potrf(a, false), false);
    Matrix<double> prod = oracle::naive_gemm(a, inv_lo, false, false, 1.0);
    CHECK(oracle::rel_diff(prod, eye<double>(n)) < 1e-11);
    CHECK(oracle::rel_diff(inv_lo, inv_up) < 1e-12);
  }
}

TEST_CASE("in-place potrf matches the allocating form bitwise") {
  std::mt19937_64 rng(31);
  Matrix<double> a = random_spd<double>(9, rng);
  Matrix<double> l = potrf(a);
  Matrix<double> work{ConstMatrixView<double>(a.view())};
  potrf_inplace<double>(work.view());
  tril_inplace<double>(work.view());
  CHECK(max_abs_diff<double>(work.view(), l.view()) == 0);
}

TEST_SUITE_END();
