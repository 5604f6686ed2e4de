#include <cmath>
#include <random>
#include <sstream>

#include "dlinalg/eigen_sym.hpp"
#include "dlinalg/gradcheck.hpp"
#include "dlinalg/svd.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dla;

TEST_SUITE_BEGIN("gradcheck");

TEST_CASE("central differences nail smooth scalar fields") {
  Matrix<double> x0 = Matrix<double>::from_rows({{2.0, 1.9}, {2.1, 2.05}});

  auto cubic = [](ConstMatrixView<double> x) {
    double acc = 0;
    for (index_t i = 0; i < x.rows; ++i)
      for (index_t j = 0; j < x.cols; ++j) acc += x(i, j) * x(i, j) * x(i, j);
    return acc;
  };
  Matrix<double> fd = finite_diff_grad<double>(cubic, x0, 1e-6, PerturbMode::Free);
  for (index_t i = 0; i < 2; ++i) {
    for (index_t j = 0; j < 2; ++j) {
      const double want = 3.0 * x0(i, j) * x0(i, j);
      CHECK(std::abs(fd(i, j) - want) / want < 1e-9);
    }
  }
}

TEST_CASE("symmetric perturbation mode returns the symmetrized gradient") {
  Matrix<double> a = Matrix<double>::from_rows({{1, 4}, {2, 3}});
  Matrix<double> x0 = Matrix<double>::from_rows({{0.5, 0.1}, {0.1, 0.8}});
  auto f = [&](ConstMatrixView<double> x) {
    double acc = 0;
    for (index_t i = 0; i < 2; ++i)
      for (index_t j = 0; j < 2; ++j) acc += a(i, j) * x(i, j);
    return acc;
  };
  Matrix<double> fd = finite_diff_grad<double>(f, x0, 1e-6, PerturbMode::Symmetric);
  CHECK(fd(0, 0) == doctest::Approx(1.0));
  CHECK(fd(1, 1) == doctest::Approx(3.0));
  CHECK(fd(0, 1) == doctest::Approx(3.0));  // (4 + 2) / 2
  CHECK(fd(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("compare_grads flags corrupted analytic gradients") {
  auto cfg = ToleranceConfig<double>::defaults();
  Matrix<double> fd = Matrix<double>::from_rows({{1.0, -2.0}, {0.5, 3.0}});
  Matrix<double> ok{ConstMatrixView<double>(fd.view())};
  CheckReport<double> good = compare_grads<double>("probe", ok, fd, cfg, 1);
  CHECK(good.pass);

  Matrix<double> bad{ConstMatrixView<double>(fd.view())};
  bad(1, 0) += 1e-3;
  CheckReport<double> broken = compare_grads<double>("probe", bad, fd, cfg, 1);
  CHECK_FALSE(broken.pass);
  CHECK(broken.max_abs_err == doctest::Approx(1e-3));

  Matrix<double> z1(2, 2), z2(2, 2);
  CHECK(compare_grads<double>("zeros", z1, z2, cfg, 1).pass);
}

TEST_CASE("gapped samplers respect their advertised spectra") {
  std::mt19937_64 rng(73);
  const double gap = 1e-3;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix<double> a = random_symmetric_gapped<double>(5, gap, rng);
    SyevdResult<double> e = syevd(a);
    for (index_t i = 0; i + 1 < 5; ++i) {
      CHECK(e.lambda[i + 1] - e.lambda[i] >= gap);
    }

    Matrix<double> w = random_wide_gapped<double>(4, 7, gap, rng);
    GesvdResult<double> s = gesvd(w);
    CHECK(s.lambda[0] >= gap);
    for (index_t i = 0; i + 1 < 4; ++i) {
      CHECK(s.lambda[i + 1] - s.lambda[i] >= gap);
    }
  }
}

TEST_CASE("operator registry covers all nine operators and passes") {
  auto ops = operator_checks<double>();
  // 4 gemm2 + 2 syrk + 8 trmm + 8 trsm + 2 potrf + 2 potri + gelqf + syevd
  // + gesvd = 29 flag entries
  CHECK(ops.size() == 29);

  std::ostringstream log;
  GradcheckSummary<double> sum = run_operator_checks<double>(
      {3, 4}, 2, 2024, ToleranceConfig<double>::defaults(), &log);
  CHECK(sum.failures == 0);
  CHECK(sum.checks == int(ops.size()) * 2 * 2);
  CHECK(log.str().find("FAIL") == std::string::npos);
}

TEST_CASE_TEMPLATE("registry smoke in both precisions", T, float, double) {
  GradcheckSummary<T> sum = run_operator_checks<T>(
      {3}, 1, 77, ToleranceConfig<T>::defaults(), nullptr);
  CHECK(sum.failures == 0);
  CHECK(sum.worst_rel < ToleranceConfig<T>::defaults().grad_rtol);
}

TEST_SUITE_END();
