// Shared plumbing: error types, tolerance bundle, allocation accounting.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <new>
#include <stdexcept>
#include <string>

namespace dla {

using index_t = std::int64_t;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Raised by potrf when a pivot fails; `step` is the zero-based global row.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(const std::string& what, index_t step)
      : Error(what), step(step) {}
  index_t step;
};

// Raised by triangular solves / inverses on a zero diagonal, by gesvd_backward
// on a non-positive spectrum, and by gelqf on rank deficiency.
class SingularError : public Error {
 public:
  SingularError(const std::string& what, index_t index)
      : Error(what), index(index) {}
  index_t index;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, index_t iterations)
      : Error(what), iterations(iterations) {}
  index_t iterations;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// ---------------------------------------------------------------------------
// Tolerances
// ---------------------------------------------------------------------------

// One bundle of numeric knobs, validated on construction. Kernels take it by
// const reference; defaults<T>() gives the per-precision values used
// throughout the tests and the CLI.
template <typename T>
struct ToleranceConfig {
  T eps_gap;            // eigengap guard in syevd/gesvd backward
  T fd_step;            // central-difference step
  T grad_rtol;          // gradcheck relative tolerance
  T grad_atol;          // gradcheck absolute floor
  T min_gap_resample;   // resample syevd/gesvd gradcheck inputs below this gap

  static ToleranceConfig defaults() {
    if constexpr (sizeof(T) == sizeof(double)) {
      return ToleranceConfig{T(1e-8), T(1e-6), T(1e-5), T(1e-7), T(1e-3)};
    } else {
      return ToleranceConfig{T(1e-4), T(1e-2), T(1e-2), T(1e-4), T(1e-2)};
    }
  }

  void validate() const {
    if (!(eps_gap > T(0)) || !(fd_step > T(0)) || !(grad_rtol > T(0)) ||
        !(grad_atol > T(0)) || !(min_gap_resample > T(0))) {
      throw Error("ToleranceConfig: all fields must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Allocation accounting
// ---------------------------------------------------------------------------
//
// Every real-array allocation made by the library (Matrix/BatchTensor buffers
// and kernel workspaces) is routed through alloc_reals/free_reals so tests can
// assert workspace budgets. Counters are thread-local: concurrent batch slices
// don't contend, and probes see only their own thread's traffic.

struct AllocStats {
  std::uint64_t allocations = 0;  // number of alloc_reals calls
  std::uint64_t reals = 0;        // scalars allocated, cumulative
  std::int64_t live_reals = 0;
  std::int64_t peak_live_reals = 0;
};

namespace detail {

// sqrt(a^2 + b^2) without destructive under/overflow.
template <typename T>
T pythag(T a, T b) {
  const T absa = std::abs(a), absb = std::abs(b);
  if (absa > absb) {
    const T r = absb / absa;
    return absa * std::sqrt(T(1) + r * r);
  }
  if (absb == T(0)) return T(0);
  const T r = absa / absb;
  return absb * std::sqrt(T(1) + r * r);
}

template <typename T>
T sign_like(T a, T b) {  // |a| carrying b's sign
  return b >= T(0) ? std::abs(a) : -std::abs(a);
}

inline AllocStats& alloc_stats() {
  thread_local AllocStats stats;
  return stats;
}

template <typename T>
T* alloc_reals(index_t count) {
  AllocStats& s = alloc_stats();
  s.allocations += 1;
  s.reals += static_cast<std::uint64_t>(count);
  s.live_reals += count;
  if (s.live_reals > s.peak_live_reals) s.peak_live_reals = s.live_reals;
  return new T[static_cast<std::size_t>(count)]();
}

template <typename T>
void free_reals(T* p, index_t count) {
  if (p == nullptr) return;
  alloc_stats().live_reals -= count;
  delete[] p;
}

}  // namespace detail

// RAII window over the thread's allocation counters. Construction rebases the
// thread's live peak, so peak_extra_live_reals() spans this window only.
class AllocationProbe {
 public:
  AllocationProbe() : start_(detail::alloc_stats()) {
    detail::alloc_stats().peak_live_reals = start_.live_reals;
  }
  std::uint64_t allocations() const {
    return detail::alloc_stats().allocations - start_.allocations;
  }
  std::uint64_t reals() const {
    return detail::alloc_stats().reals - start_.reals;
  }
  std::int64_t peak_extra_live_reals() const {
    return detail::alloc_stats().peak_live_reals - start_.live_reals;
  }

 private:
  AllocStats start_;
};

}  // namespace dla
