// Dense row-major storage: Matrix<T>, zero-copy views, stacked batches.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dlinalg/common.hpp"

namespace dla {

namespace detail {

// Owning array that reports to the allocation counters.
template <typename T>
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(index_t count)
      : data_(count > 0 ? alloc_reals<T>(count) : nullptr), count_(count) {}
  Buffer(Buffer&& o) noexcept : data_(o.data_), count_(o.count_) {
    o.data_ = nullptr;
    o.count_ = 0;
  }
  Buffer& operator=(Buffer&& o) noexcept {
    if (this != &o) {
      free_reals(data_, count_);
      data_ = o.data_;
      count_ = o.count_;
      o.data_ = nullptr;
      o.count_ = 0;
    }
    return *this;
  }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
  ~Buffer() { free_reals(data_, count_); }

  T* get() { return data_; }
  const T* get() const { return data_; }
  index_t count() const { return count_; }

 private:
  T* data_ = nullptr;
  index_t count_ = 0;
};

inline void check_dims(index_t rows, index_t cols, const char* what) {
  if (rows < 0 || cols < 0) {
    throw ShapeError(std::string(what) + ": negative dimension");
  }
}

}  // namespace detail

// Non-owning descriptor of a packed row-major block. Kernels take views, so
// batch slices and in-place entry points need no copies.
template <typename T>
struct MatrixView {
  T* data = nullptr;
  index_t rows = 0;
  index_t cols = 0;

  T& operator()(index_t i, index_t j) const { return data[i * cols + j]; }
  T* row(index_t i) const { return data + i * cols; }
  index_t size() const { return rows * cols; }
};

template <typename T>
struct ConstMatrixView {
  const T* data = nullptr;
  index_t rows = 0;
  index_t cols = 0;

  ConstMatrixView() = default;
  ConstMatrixView(const T* data, index_t rows, index_t cols)
      : data(data), rows(rows), cols(cols) {}
  ConstMatrixView(MatrixView<T> v) : data(v.data), rows(v.rows), cols(v.cols) {}

  const T& operator()(index_t i, index_t j) const { return data[i * cols + j]; }
  const T* row(index_t i) const { return data + i * cols; }
  index_t size() const { return rows * cols; }
};

template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  // Zero-initialized.
  Matrix(index_t rows, index_t cols) : rows_(rows), cols_(cols), buf_(alloc(rows, cols)) {}
  // Adopt a flat row-major vector (moved; no finiteness check — internal use).
  Matrix(index_t rows, index_t cols, const std::vector<T>& flat)
      : Matrix(rows, cols) {
    if (static_cast<index_t>(flat.size()) != rows * cols) {
      throw ShapeError("Matrix: flat initializer size mismatch");
    }
    std::copy(flat.begin(), flat.end(), data());
  }

  // Deep copy of a view.
  explicit Matrix(ConstMatrixView<T> v) : Matrix(v.rows, v.cols) {
    std::copy(v.data, v.data + v.size(), data());
  }
  explicit Matrix(MatrixView<T> v) : Matrix(ConstMatrixView<T>(v)) {}

  Matrix(const Matrix& o) : rows_(o.rows_), cols_(o.cols_), buf_(alloc(o.rows_, o.cols_)) {
    std::copy(o.data(), o.data() + o.size(), data());
  }
  Matrix& operator=(const Matrix& o) {
    if (this != &o) {
      Matrix tmp(o);
      *this = std::move(tmp);
    }
    return *this;
  }
  Matrix(Matrix&&) noexcept = default;
  Matrix& operator=(Matrix&&) noexcept = default;

  // Entry point for user-provided data: rejects non-finite values and ragged rows.
  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const index_t r = static_cast<index_t>(rows.size());
    const index_t c = r > 0 ? static_cast<index_t>(rows.begin()->size()) : 0;
    Matrix m(r, c);
    index_t i = 0;
    for (const auto& row : rows) {
      if (static_cast<index_t>(row.size()) != c) {
        throw ShapeError("Matrix::from_rows: ragged rows");
      }
      index_t j = 0;
      for (T v : row) {
        if (!std::isfinite(v)) {
          throw Error("Matrix::from_rows: non-finite entry at (" +
                      std::to_string(i) + "," + std::to_string(j) + ")");
        }
        m(i, j) = v;
        ++j;
      }
      ++i;
    }
    return m;
  }

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  index_t size() const { return rows_ * cols_; }
  T* data() { return buf_.get(); }
  const T* data() const { return buf_.get(); }
  T& operator()(index_t i, index_t j) { return buf_.get()[i * cols_ + j]; }
  const T& operator()(index_t i, index_t j) const { return buf_.get()[i * cols_ + j]; }
  T* row(index_t i) { return buf_.get() + i * cols_; }
  const T* row(index_t i) const { return buf_.get() + i * cols_; }

  MatrixView<T> view() { return {data(), rows_, cols_}; }
  ConstMatrixView<T> view() const { return {data(), rows_, cols_}; }
  operator MatrixView<T>() { return view(); }
  operator ConstMatrixView<T>() const { return view(); }

  void fill(T v) { std::fill(data(), data() + size(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  static detail::Buffer<T> alloc(index_t rows, index_t cols) {
    detail::check_dims(rows, cols, "Matrix");
    return detail::Buffer<T>(rows * cols);
  }

  index_t rows_ = 0, cols_ = 0;
  detail::Buffer<T> buf_;
};

// Stacked matrices, one contiguous buffer, slice b at data + b*rows*cols.
template <typename T>
class BatchTensor {
 public:
  BatchTensor() = default;
  BatchTensor(index_t batch, index_t rows, index_t cols)
      : batch_(batch), rows_(rows), cols_(cols), buf_(alloc(batch, rows, cols)) {}

  index_t batch() const { return batch_; }
  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  index_t slice_size() const { return rows_ * cols_; }
  T* data() { return buf_.get(); }
  const T* data() const { return buf_.get(); }

  MatrixView<T> slice(index_t b) {
    if (b < 0 || b >= batch_) throw ShapeError("BatchTensor::slice: index out of range");
    return {buf_.get() + b * slice_size(), rows_, cols_};
  }
  ConstMatrixView<T> slice(index_t b) const {
    if (b < 0 || b >= batch_) throw ShapeError("BatchTensor::slice: index out of range");
    return {buf_.get() + b * slice_size(), rows_, cols_};
  }

 private:
  static detail::Buffer<T> alloc(index_t batch, index_t rows, index_t cols) {
    detail::check_dims(rows, cols, "BatchTensor");
    if (batch < 0) throw ShapeError("BatchTensor: negative batch");
    return detail::Buffer<T>(batch * rows * cols);
  }

  index_t batch_ = 0, rows_ = 0, cols_ = 0;
  detail::Buffer<T> buf_;
};

// Run fn(b) for b in [0, batch), optionally across threads. Slices are
// independent, so the result is bit-identical to the serial loop.
template <typename Fn>
void for_each_slice(index_t batch, int threads, Fn&& fn) {
  if (threads <= 1 || batch <= 1) {
    for (index_t b = 0; b < batch; ++b) fn(b);
    return;
  }
  const int nt = static_cast<int>(std::min<index_t>(threads, batch));
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (index_t b = t; b < batch; b += nt) fn(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// --- small conveniences used across kernels and tests ---

template <typename T>
T max_abs(ConstMatrixView<T> x) {
  T m = T(0);
  for (index_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x.data[i]));
  return m;
}

template <typename T>
T max_abs_diff(ConstMatrixView<T> a, ConstMatrixView<T> b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError("max_abs_diff: shape mismatch");
  }
  T m = T(0);
  for (index_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

template <typename T>
void copy_into(ConstMatrixView<T> src, MatrixView<T> dst) {
  if (src.rows != dst.rows || src.cols != dst.cols) {
    throw ShapeError("copy_into: shape mismatch");
  }
  if (src.data != dst.data) {
    std::memcpy(dst.data, src.data, sizeof(T) * static_cast<std::size_t>(src.size()));
  }
}

}  // namespace dla
