#include <atomic>
#include <vector>

#include "dlinalg/common.hpp"
#include "dlinalg/matrix.hpp"
#include "dlinalg/transforms.hpp"
#include "doctest.h"

using namespace dla;

TEST_SUITE_BEGIN("dense_core");

TEST_CASE_TEMPLATE("matrix construction and access", T, float, double) {
  Matrix<T> z(2, 3);
  for (index_t i = 0; i < 2; ++i) {
    for (index_t j = 0; j < 3; ++j) CHECK(z(i, j) == T(0));
  }
  Matrix<T> m = Matrix<T>::from_rows({{1, 2}, {3, 4}});
  CHECK(m(1, 0) == T(3));
  CHECK(m.rows() == 2);
  CHECK(m.row(1)[1] == T(4));

  CHECK_THROWS_AS(Matrix<T>::from_rows({{1, 2}, {3}}), ShapeError);
  CHECK_THROWS_AS(Matrix<T>(-1, 2), ShapeError);
  const T bad = std::numeric_limits<T>::quiet_NaN();
  CHECK_THROWS_AS(Matrix<T>::from_rows({{bad}}), Error);
}

TEST_CASE("views alias, Matrix(view) copies") {
  Matrix<double> m = Matrix<double>::from_rows({{1, 2}, {3, 4}});
  MatrixView<double> v = m.view();
  v(0, 0) = 9;
  CHECK(m(0, 0) == 9);

  Matrix<double> deep{ConstMatrixView<double>(m.view())};
  deep(0, 0) = -1;
  CHECK(m(0, 0) == 9);
}

TEST_CASE("copy_into checks shapes and tolerates self-copy") {
  Matrix<double> a = Matrix<double>::from_rows({{1, 2}, {3, 4}});
  Matrix<double> b(2, 2);
  copy_into<double>(a.view(), b.view());
  CHECK(max_abs_diff<double>(a.view(), b.view()) == 0);
  copy_into<double>(a.view(), a.view());  // no-op, must not UB
  CHECK(a(1, 1) == 4);
  Matrix<double> c(2, 3);
  CHECK_THROWS_AS(copy_into<double>(a.view(), c.view()), ShapeError);
}

TEST_CASE("batch tensor slicing and threaded dispatch") {
  const index_t batch = 7, n = 4;
  BatchTensor<double> t(batch, n, n);
  for (index_t b = 0; b < batch; ++b) {
    MatrixView<double> s = t.slice(b);
    for (index_t i = 0; i < n; ++i) s(i, i) = double(b + 1);
  }
  CHECK_THROWS_AS(t.slice(batch), ShapeError);

  BatchTensor<double> serial(batch, n, n), threaded(batch, n, n);
  for_each_slice(batch, 1, [&](index_t b) {
    for (index_t i = 0; i < n; ++i) serial.slice(b)(i, i) = 3.0 * double(b) + 1.0;
  });
  for_each_slice(batch, 3, [&](index_t b) {
    for (index_t i = 0; i < n; ++i) threaded.slice(b)(i, i) = 3.0 * double(b) + 1.0;
  });
  for (index_t b = 0; b < batch; ++b) {
    CHECK(max_abs_diff<double>(serial.slice(b), threaded.slice(b)) == 0);
  }

  std::atomic<int> calls{0};
  CHECK_THROWS_AS(for_each_slice(batch, 3,
                                 [&](index_t b) {
                                   calls.fetch_add(1);
                                   if (b == 5) throw Error("worker boom");
                                 }),
                  Error);
  CHECK(calls.load() >= 1);
}

TEST_CASE("allocation probe sees counted workspace traffic") {
  AllocationProbe outer;
  CHECK(outer.allocations() == 0);
  double* p = detail::alloc_reals<double>(16);
  CHECK(outer.allocations() == 1);
  CHECK(outer.reals() == 16);
  CHECK(outer.peak_extra_live_reals() == 16);
  detail::free_reals(p, 16);
  AllocationProbe inner;
  CHECK(inner.allocations() == 0);
  CHECK(inner.peak_extra_live_reals() == 0);
}

TEST_CASE_TEMPLATE("triangle transforms", T, float, double) {
  Matrix<T> x = Matrix<T>::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  Matrix<T> lt = copyltu(x);
  CHECK(lt(0, 1) == T(4));
  CHECK(lt(0, 2) == T(7));
  CHECK(lt(1, 2) == T(8));
  CHECK(lt(1, 0) == T(4));
  Matrix<T> ut = copyutl(x);
  CHECK(ut(1, 0) == T(2));
  CHECK(ut(2, 0) == T(3));
  CHECK(ut(2, 1) == T(6));

  Matrix<T> lo = tril(x);
  CHECK(lo(0, 1) == T(0));
  CHECK(lo(2, 1) == T(8));
  Matrix<T> up = triu(x);
  CHECK(up(1, 0) == T(0));
  CHECK(up(0, 2) == T(3));

  Matrix<T> s = sym(x);
  CHECK(s(0, 1) == T(3));
  CHECK(s(1, 0) == T(3));
  CHECK(max_asymmetry<T>(s.view()) == T(0));

  std::vector<T> d = extract_diag<T>(x.view());
  CHECK(d == std::vector<T>{T(1), T(5), T(9)});

  Matrix<T> id = eye<T>(3);
  CHECK(id(1, 1) == T(1));
  CHECK(id(0, 1) == T(0));

  Matrix<T> h = hadamard(x, x);
  CHECK(h(2, 2) == T(81));
  Matrix<T> wrong(2, 3);
  CHECK_THROWS_AS(hadamard(x, wrong), ShapeError);

  Matrix<T> notsquare(2, 3);
  CHECK_THROWS_AS(copyltu(notsquare), ShapeError);
}

TEST_CASE("tolerance config validation") {
  auto cfg = ToleranceConfig<double>::defaults();
  CHECK_NOTHROW(cfg.validate());
  cfg.fd_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_SUITE_END();
