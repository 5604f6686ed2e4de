#include <random>

#include "dlinalg/cholesky.hpp"
#include "dlinalg/gradcheck.hpp"
#include "dlinalg/lq.hpp"
#include "dlinalg/transforms.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dla;

TEST_SUITE_BEGIN("lq");

TEST_CASE_TEMPLATE("gelqf hand value", T, float, double) {
  Matrix<T> a = Matrix<T>::from_rows({{3, 4}});
  GelqfResult<T> f = gelqf(a);
  CHECK(f.l(0, 0) == doctest::Approx(5.0));
  CHECK(f.q(0, 0) == doctest::Approx(0.6));
  CHECK(f.q(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("gelqf reconstructs with orthonormal rows and positive diagonal") {
  std::mt19937_64 rng(37);
  for (auto [m, n] : std::vector<std::pair<index_t, index_t>>{
           {1, 1}, {2, 5}, {4, 4}, {7, 11}, {16, 16}}) {
    Matrix<double> a = random_matrix<double>(m, n, rng);
    GelqfResult<double> f = gelqf(a);

    Matrix<double> qqt = oracle::naive_gemm(f.q, f.q, false, true, 1.0);
    CHECK(oracle::rel_diff(qqt, eye<double>(m)) < 1e-13);

    Matrix<double> back = oracle::naive_gemm(f.l, f.q, false, false, 1.0);
    CHECK(oracle::rel_diff(back, a) < 1e-13);

    for (index_t i = 0; i < m; ++i) {
      CHECK(f.l(i, i) > 0.0);
      for (index_t j = i + 1; j < m; ++j) CHECK(f.l(i, j) == 0.0);
    }
  }
}

TEST_CASE("gelqf L is the cholesky factor of A A^T") {
  std::mt19937_64 rng(41);
  const index_t m = 6, n = 9;
  Matrix<double> a = random_matrix<double>(m, n, rng);
  GelqfResult<double> f = gelqf(a);
  Matrix<double> l2 = potrf(syrk(a));
  CHECK(oracle::rel_diff(f.l, l2) < 1e-11);
}

TEST_CASE("gelqf rejects tall and rank-deficient inputs") {
  Matrix<double> tall(3, 2);
  CHECK_THROWS_AS(gelqf(tall), ShapeError);

  Matrix<double> rankdef = Matrix<double>::from_rows({{1, 2, 3}, {2, 4, 6}});
  CHECK_THROWS_AS(gelqf(rankdef), SingularError);
}

TEST_SUITE_END();
