// Probabilistic models assembled on the tape: RBF-kernel Gaussian process
// marginal likelihood, its sparse (inducing point) variational bound,
// Bayesian linear regression (Cholesky and LQ routes), and a Kalman filter
// negative log likelihood, plus Adam and small fit drivers.
//
// Positive hyperparameters enter the graphs as exp() of unconstrained 1x1
// leaves, so every fit is plain unconstrained minimization over leaf values.
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dlinalg/matrix.hpp"
#include "dlinalg/tape.hpp"
#include "dlinalg/transforms.hpp"

namespace dla {

namespace detail {

template <typename T>
inline constexpr T log_2pi = static_cast<T>(1.8378770664093454835606594728112353);

template <typename T>
NodeId scalar_leaf(Graph<T>& g, T v, const std::string& name) {
  Matrix<T> m(1, 1);
  m(0, 0) = v;
  return g.leaf(std::move(m), name);
}

template <typename T>
void require_positive(T v, const char* what) {
  if (!(v > T(0)) || !std::isfinite(v)) {
    throw Error(std::string(what) + " must be positive and finite");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RBF kernel: K(x1, x2) = sigma2 * exp(-|x1_i - x2_j|^2 / (2 ell2)).
// When x1 and x2 are the same node the Gram matrix comes from syrk and the
// squared distances on the diagonal cancel exactly, so K_ii == sigma2 bit for
// bit.
// ---------------------------------------------------------------------------

template <typename T>
NodeId rbf_kernel(Graph<T>& g, NodeId x1, NodeId x2, NodeId sigma2,
                  NodeId ell2) {
  const auto sh1 = g.shape(x1);
  const auto sh2 = g.shape(x2);
  if (sh1.second != sh2.second) {
    throw ShapeError("rbf_kernel: feature dimensions differ");
  }
  const bool same = x1 == x2;
  NodeId gram = same ? g.syrk(x1, false) : g.gemm2(x1, x2, false, true);
  NodeId s1 = g.sum_rows(g.square(x1));
  NodeId s2 = same ? s1 : g.sum_rows(g.square(x2));
  NodeId dist = g.sub(g.add(g.tile_cols(s1, sh2.first), g.tile_rows(s2, sh1.first)),
                      g.scale_const(gram, T(2)));
  return g.mul_scalar(g.exp(g.neg(g.div_scalar(dist, g.scale_const(ell2, T(2))))),
                      sigma2);
}

// Plain-matrix RBF kernel for prediction-time use outside the tape.
template <typename T>
Matrix<T> rbf_kernel_matrix(const Matrix<T>& x1, const Matrix<T>& x2, T sigma2,
                            T ell2) {
  if (x1.cols() != x2.cols()) {
    throw ShapeError("rbf_kernel_matrix: feature dimensions differ");
  }
  Matrix<T> k(x1.rows(), x2.rows());
  for (index_t i = 0; i < x1.rows(); ++i) {
    for (index_t j = 0; j < x2.rows(); ++j) {
      T d2 = T(0);
      for (index_t f = 0; f < x1.cols(); ++f) {
        const T d = x1(i, f) - x2(j, f);
        d2 += d * d;
      }
      k(i, j) = sigma2 * std::exp(-d2 / (T(2) * ell2));
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Gaussian process negative log marginal likelihood.
// ---------------------------------------------------------------------------

// phi = 1/2 |z|^2 + sum log diag L + n/2 log 2pi,  L = chol(K + lam I),
// z = L^{-1} y.
template <typename T>
NodeId gp_nll_from_kernel(Graph<T>& g, NodeId kernel, NodeId y, NodeId lam) {
  const index_t n = g.shape(kernel).first;
  NodeId a = g.add(kernel, g.mul_scalar(g.constant(eye<T>(n), "I"), lam));
  NodeId l = g.potrf(a);
  NodeId z = g.trsm(l, y, false, false, true);
  NodeId quad = g.scale_const(g.sum(g.square(z)), T(0.5));
  NodeId logdet = g.sum(g.log(g.extract_diag(l)));
  return g.add_const(g.add(quad, logdet),
                     T(0.5) * T(n) * detail::log_2pi<T>);
}

template <typename T>
struct GpModel {
  NodeId x, y;
  NodeId log_sigma2, log_ell2, log_lam;
  NodeId sigma2, ell2, lam;
  NodeId kernel, loss;
};

template <typename T>
GpModel<T> make_gp(Graph<T>& g, const Matrix<T>& x, const Matrix<T>& y,
                   T sigma2, T ell2, T lam) {
  if (y.cols() != 1 || y.rows() != x.rows()) {
    throw ShapeError("make_gp: y must be a column with one entry per row of x");
  }
  detail::require_positive(sigma2, "make_gp: sigma2");
  detail::require_positive(ell2, "make_gp: ell2");
  detail::require_positive(lam, "make_gp: lam");
  GpModel<T> m;
  m.x = g.leaf(x, "x");
  m.y = g.leaf(y, "y");
  m.log_sigma2 = detail::scalar_leaf(g, std::log(sigma2), "log_sigma2");
  m.log_ell2 = detail::scalar_leaf(g, std::log(ell2), "log_ell2");
  m.log_lam = detail::scalar_leaf(g, std::log(lam), "log_lam");
  m.sigma2 = g.exp(m.log_sigma2);
  m.ell2 = g.exp(m.log_ell2);
  m.lam = g.exp(m.log_lam);
  m.kernel = rbf_kernel(g, m.x, m.x, m.sigma2, m.ell2);
  m.loss = gp_nll_from_kernel(g, m.kernel, m.y, m.lam);
  return m;
}

// Posterior mean at xstar (plain matrices; no differentiation).
template <typename T>
Matrix<T> gp_predict_mean(const Matrix<T>& x, const Matrix<T>& y,
                          const Matrix<T>& xstar, T sigma2, T ell2, T lam) {
  Matrix<T> k = rbf_kernel_matrix(x, x, sigma2, ell2);
  for (index_t i = 0; i < k.rows(); ++i) k(i, i) += lam;
  Matrix<T> l = potrf(k);
  Matrix<T> alpha = trsm(l, trsm(l, y, false, false, true), false, true, true);
  Matrix<T> ks = rbf_kernel_matrix(xstar, x, sigma2, ell2);
  return gemm2(ks, alpha);
}

// ---------------------------------------------------------------------------
// Sparse GP (variational inducing points) criterion.
// ---------------------------------------------------------------------------

template <typename T>
struct SgpModel {
  NodeId x, y, z;
  NodeId log_sigma2, log_ell2, log_lam;
  NodeId sigma2, ell2, lam;
  NodeId loss;
};

template <typename T>
SgpModel<T> make_sgp(Graph<T>& g, const Matrix<T>& x, const Matrix<T>& y,
                     const Matrix<T>& z, T sigma2, T ell2, T lam,
                     bool jitter = false) {
  if (y.cols() != 1 || y.rows() != x.rows()) {
    throw ShapeError("make_sgp: y must be a column with one entry per row of x");
  }
  if (z.cols() != x.cols()) {
    throw ShapeError("make_sgp: inducing points must share x's feature count");
  }
  detail::require_positive(sigma2, "make_sgp: sigma2");
  detail::require_positive(ell2, "make_sgp: ell2");
  detail::require_positive(lam, "make_sgp: lam");
  const index_t n = x.rows();
  const index_t u = z.rows();
  SgpModel<T> m;
  m.x = g.leaf(x, "x");
  m.y = g.leaf(y, "y");
  m.z = g.leaf(z, "z");
  m.log_sigma2 = detail::scalar_leaf(g, std::log(sigma2), "log_sigma2");
  m.log_ell2 = detail::scalar_leaf(g, std::log(ell2), "log_ell2");
  m.log_lam = detail::scalar_leaf(g, std::log(lam), "log_lam");
  m.sigma2 = g.exp(m.log_sigma2);
  m.ell2 = g.exp(m.log_ell2);
  m.lam = g.exp(m.log_lam);

  NodeId kuu = rbf_kernel(g, m.z, m.z, m.sigma2, m.ell2);
  if (jitter) {
    Matrix<T> j = eye<T>(u);
    scale_inplace(j.view(), T(1e-10));
    kuu = g.add(kuu, g.mul_scalar(g.constant(std::move(j), "jitter"), m.sigma2));
  }
  NodeId lu = g.potrf(kuu);
  NodeId kuf = rbf_kernel(g, m.z, m.x, m.sigma2, m.ell2);
  NodeId b = g.trsm(lu, kuf, false, false, true);
  NodeId a = g.add(g.div_scalar(g.syrk(b, false), m.lam),
                   g.constant(eye<T>(u), "I_u"));
  NodeId la = g.potrf(a);
  NodeId w = g.trsm(la, g.gemm2(b, m.y), false, false, true);

  NodeId t1 = g.scale_const(g.add_const(g.log(m.lam), detail::log_2pi<T>),
                            T(0.5) * T(n));
  NodeId t2 = g.sum(g.log(g.extract_diag(la)));
  NodeId t3 = g.div_scalar(g.scale_const(g.sum(g.square(m.y)), T(0.5)), m.lam);
  NodeId t4 = g.div_scalar(
      g.div_scalar(g.scale_const(g.sum(g.square(w)), T(0.5)), m.lam), m.lam);
  NodeId t5 = g.div_scalar(
      g.scale_const(g.sub(g.sum(g.square(b)), g.scale_const(m.sigma2, T(n))),
                    T(0.5)),
      m.lam);
  m.loss = g.sub(g.add(g.add(t1, t2), g.sub(t3, t4)), t5);
  return m;
}

// ---------------------------------------------------------------------------
// Bayesian linear regression evidence. Columns of x are data points (d x n);
// weights have prior variance alpha, observation noise variance lam.
// ---------------------------------------------------------------------------

enum class BlrPath { Cholesky, Lq };

template <typename T>
struct BlrModel {
  NodeId x, y;
  NodeId log_alpha, log_lam;
  NodeId alpha, lam;
  NodeId loss;
};

template <typename T>
BlrModel<T> make_blr(Graph<T>& g, const Matrix<T>& x, const Matrix<T>& y,
                     T alpha, T lam, BlrPath path = BlrPath::Cholesky) {
  if (y.cols() != 1 || y.rows() != x.cols()) {
    throw ShapeError("make_blr: y must be a column with one entry per column of x");
  }
  detail::require_positive(alpha, "make_blr: alpha");
  detail::require_positive(lam, "make_blr: lam");
  const index_t d = x.rows();
  const index_t n = x.cols();
  BlrModel<T> m;
  m.x = g.leaf(x, "x");
  m.y = g.leaf(y, "y");
  m.log_alpha = detail::scalar_leaf(g, std::log(alpha), "log_alpha");
  m.log_lam = detail::scalar_leaf(g, std::log(lam), "log_lam");
  m.alpha = g.exp(m.log_alpha);
  m.lam = g.exp(m.log_lam);

  NodeId ratio = g.div_scalar(m.alpha, m.lam);
  NodeId l;
  if (path == BlrPath::Cholesky) {
    NodeId mmat = g.add(g.constant(eye<T>(d), "I_d"),
                        g.mul_scalar(g.syrk(m.x, false), ratio));
    l = g.potrf(mmat);
  } else {
    NodeId b = g.concat_cols(g.constant(eye<T>(d), "I_d"),
                             g.mul_scalar(m.x, g.sqrt(ratio)));
    GelqfNodes lq = g.gelqf(b);
    l = lq.l;
  }
  NodeId t = g.trsm(l, g.gemm2(m.x, m.y), false, false, true);
  NodeId quad = g.div_scalar(
      g.sub(g.sum(g.square(m.y)), g.mul_scalar(g.sum(g.square(t)), ratio)),
      m.lam);
  NodeId logdet = g.add(g.scale_const(g.sum(g.log(g.abs(g.extract_diag(l)))), T(2)),
                        g.scale_const(g.log(m.lam), T(n)));
  m.loss = g.scale_const(g.add_const(g.add(quad, logdet),
                                     T(n) * detail::log_2pi<T>),
                         T(0.5));
  return m;
}

// ---------------------------------------------------------------------------
// Kalman filter negative log likelihood with Joseph-form covariance updates.
// ---------------------------------------------------------------------------

template <typename T>
struct KalmanNodes {
  NodeId nll;
  std::vector<NodeId> mu_filt, s_filt;
};

// a: h x h transition, b: d x h emission, sh/sv: process/observation noise
// covariances, mu0/s0: prior state, obs: one d x 1 node per step. The first
// observation is scored against the prior (no transition applied before it).
template <typename T>
KalmanNodes<T> build_kalman_nll(Graph<T>& g, NodeId a, NodeId b, NodeId sh,
                                NodeId sv, NodeId mu0, NodeId s0,
                                const std::vector<NodeId>& obs) {
  if (obs.empty()) throw ShapeError("build_kalman_nll: no observations");
  const index_t h = g.shape(a).first;
  const index_t d = g.shape(b).first;
  if (g.shape(a) != std::make_pair(h, h) || g.shape(b).second != h ||
      g.shape(sh) != std::make_pair(h, h) ||
      g.shape(sv) != std::make_pair(d, d) ||
      g.shape(mu0) != std::make_pair(h, index_t(1)) ||
      g.shape(s0) != std::make_pair(h, h)) {
    throw ShapeError("build_kalman_nll: inconsistent system shapes");
  }
  for (const NodeId& v : obs) {
    if (g.shape(v) != std::make_pair(d, index_t(1))) {
      throw ShapeError("build_kalman_nll: observations must be d x 1");
    }
  }
  NodeId eye_h = g.constant(eye<T>(h), "I_h");
  KalmanNodes<T> out;
  NodeId mu_pred = mu0;
  NodeId s_pred = s0;
  NodeId nll;
  const std::size_t steps = obs.size();
  for (std::size_t t = 0; t < steps; ++t) {
    NodeId svv = g.add(g.gemm2(g.gemm2(b, s_pred), b, false, true), sv);
    NodeId lvv = g.potrf(svv);
    NodeId e = g.sub(obs[t], g.gemm2(b, mu_pred));
    NodeId z = g.trsm(lvv, e, false, false, true);
    NodeId term = g.add_const(
        g.add(g.scale_const(g.sum(g.square(z)), T(0.5)),
              g.sum(g.log(g.extract_diag(lvv)))),
        T(0.5) * T(d) * detail::log_2pi<T>);
    nll = (t == 0) ? term : g.add(nll, term);

    NodeId xbt = g.gemm2(s_pred, b, false, true);
    NodeId gain = g.trsm(lvv, g.trsm(lvv, xbt, true, true, true), true, false,
                         true);
    NodeId mu_f = g.add(mu_pred, g.gemm2(gain, e));
    NodeId ikb = g.sub(eye_h, g.gemm2(gain, b));
    NodeId s_f = g.add(g.gemm2(g.gemm2(ikb, s_pred), ikb, false, true),
                       g.gemm2(g.gemm2(gain, sv), gain, false, true));
    out.mu_filt.push_back(mu_f);
    out.s_filt.push_back(s_f);
    if (t + 1 < steps) {
      mu_pred = g.gemm2(a, mu_f);
      s_pred = g.add(g.gemm2(g.gemm2(a, s_f), a, false, true), sh);
    }
  }
  out.nll = nll;
  return out;
}

template <typename T>
struct KalmanModel {
  NodeId a, b, sh, sv, mu0, s0;
  std::vector<NodeId> obs;
  NodeId loss;
  std::vector<NodeId> mu_filt, s_filt;
};

template <typename T>
KalmanModel<T> make_kalman(Graph<T>& g, const Matrix<T>& a, const Matrix<T>& b,
                           const Matrix<T>& sh, const Matrix<T>& sv,
                           const Matrix<T>& mu0, const Matrix<T>& s0,
                           const std::vector<Matrix<T>>& observations) {
  KalmanModel<T> m;
  m.a = g.leaf(a, "A");
  m.b = g.leaf(b, "B");
  m.sh = g.leaf(sh, "S_h");
  m.sv = g.leaf(sv, "S_v");
  m.mu0 = g.leaf(mu0, "mu0");
  m.s0 = g.leaf(s0, "S0");
  for (std::size_t t = 0; t < observations.size(); ++t) {
    m.obs.push_back(g.leaf(observations[t], "v" + std::to_string(t)));
  }
  KalmanNodes<T> nodes =
      build_kalman_nll(g, m.a, m.b, m.sh, m.sv, m.mu0, m.s0, m.obs);
  m.loss = nodes.nll;
  m.mu_filt = std::move(nodes.mu_filt);
  m.s_filt = std::move(nodes.s_filt);
  return m;
}

// SPD matrix from an unconstrained square leaf: F = strict lower part of P
// with exp() applied to the diagonal, result F F^T.
template <typename T>
NodeId spd_factor(Graph<T>& g, NodeId p) {
  NodeId diag = g.extract_diag(p);
  NodeId strict = g.sub(g.tril_mask(p), g.make_diag(diag));
  return g.add(strict, g.make_diag(g.exp(diag)));
}

template <typename T>
NodeId spd_from_unconstrained(Graph<T>& g, NodeId p) {
  return g.syrk(spd_factor(g, p), false);
}

// ---------------------------------------------------------------------------
// Adam and fit drivers.
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  index_t t = 0;
};

template <typename T>
void adam_step(std::vector<T>& theta, const std::vector<T>& grad,
               AdamState<T>& st, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
               T eps = T(1e-8)) {
  if (theta.size() != grad.size()) {
    throw ShapeError("adam_step: parameter/gradient size mismatch");
  }
  if (st.m.size() != theta.size()) {
    st.m.assign(theta.size(), T(0));
    st.v.assign(theta.size(), T(0));
    st.t = 0;
  }
  ++st.t;
  const T b1t = T(1) - std::pow(beta1, T(st.t));
  const T b2t = T(1) - std::pow(beta2, T(st.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (T(1) - beta1) * grad[i];
    st.v[i] = beta2 * st.v[i] + (T(1) - beta2) * grad[i] * grad[i];
    const T mhat = st.m[i] / b1t;
    const T vhat = st.v[i] / b2t;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
struct FitOptions {
  int iterations = 200;
  T lr = T(1e-2);
  bool use_memory_plan = false;
};

template <typename T>
struct FitResult {
  std::vector<T> loss_trace;                              // iterations + 1
  std::vector<std::pair<std::string, Matrix<T>>> leaves;  // final values
};

// Minimize `loss` over the given leaves with Adam. The trace records the loss
// at the current parameters before each step, plus the final loss. Throws if
// the loss ever turns non-finite.
template <typename T>
FitResult<T> fit_leaves(Graph<T>& g, NodeId loss,
                        const std::vector<std::pair<std::string, NodeId>>& params,
                        const FitOptions<T>& opt) {
  g.set_use_memory_plan(opt.use_memory_plan);
  std::vector<T> theta;
  std::vector<std::pair<index_t, index_t>> shapes;
  for (const auto& [name, id] : params) {
    (void)name;
    const auto sh = g.shape(id);
    shapes.push_back(sh);
    const Matrix<T>& v = g.value(id);
    theta.insert(theta.end(), v.data(), v.data() + v.size());
  }
  AdamState<T> adam;
  FitResult<T> result;

  auto bind_and_forward = [&] {
    typename Graph<T>::Bindings binds;
    std::size_t off = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto [r, c] = shapes[k];
      Matrix<T> m(r, c);
      std::copy(theta.begin() + off, theta.begin() + off + r * c, m.data());
      off += static_cast<std::size_t>(r * c);
      binds.emplace_back(params[k].second, std::move(m));
    }
    g.forward(binds);
    return g.value(loss)(0, 0);
  };

  for (int it = 0; it < opt.iterations; ++it) {
    const T lv = bind_and_forward();
    if (!std::isfinite(lv)) {
      throw Error("fit: loss is not finite at iteration " + std::to_string(it));
    }
    result.loss_trace.push_back(lv);
    GradStore<T> grads = g.backward(loss);
    std::vector<T> flat;
    flat.reserve(theta.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto [r, c] = shapes[k];
      if (grads.has(params[k].second)) {
        const Matrix<T>& gm = grads.at(params[k].second);
        flat.insert(flat.end(), gm.data(), gm.data() + gm.size());
      } else {
        flat.insert(flat.end(), static_cast<std::size_t>(r * c), T(0));
      }
    }
    adam_step(theta, flat, adam, opt.lr);
  }
  const T final_loss = bind_and_forward();
  if (!std::isfinite(final_loss)) {
    throw Error("fit: loss is not finite after the last step");
  }
  result.loss_trace.push_back(final_loss);
  // Leave every node value readable for callers inspecting derived nodes.
  if (opt.use_memory_plan) {
    g.set_use_memory_plan(false);
    g.forward();
  }
  for (const auto& [name, id] : params) {
    result.leaves.emplace_back(name, g.value(id));
  }
  return result;
}

template <typename T>
struct GpFitResult {
  T sigma2, ell2, lam;
  std::vector<T> loss_trace;
};

template <typename T>
GpFitResult<T> fit_gp(const Matrix<T>& x, const Matrix<T>& y, T sigma2, T ell2,
                      T lam, const FitOptions<T>& opt = {}) {
  Graph<T> g;
  GpModel<T> m = make_gp(g, x, y, sigma2, ell2, lam);
  FitResult<T> r = fit_leaves(g, m.loss,
                              {{"log_sigma2", m.log_sigma2},
                               {"log_ell2", m.log_ell2},
                               {"log_lam", m.log_lam}},
                              opt);
  GpFitResult<T> out;
  out.sigma2 = g.value(m.sigma2)(0, 0);
  out.ell2 = g.value(m.ell2)(0, 0);
  out.lam = g.value(m.lam)(0, 0);
  out.loss_trace = std::move(r.loss_trace);
  return out;
}

template <typename T>
GpFitResult<T> fit_sgp(const Matrix<T>& x, const Matrix<T>& y,
                       const Matrix<T>& z, T sigma2, T ell2, T lam,
                       const FitOptions<T>& opt = {}, bool jitter = true) {
  Graph<T> g;
  SgpModel<T> m = make_sgp(g, x, y, z, sigma2, ell2, lam, jitter);
  FitResult<T> r = fit_leaves(g, m.loss,
                              {{"log_sigma2", m.log_sigma2},
                               {"log_ell2", m.log_ell2},
                               {"log_lam", m.log_lam}},
                              opt);
  GpFitResult<T> out;
  out.sigma2 = g.value(m.sigma2)(0, 0);
  out.ell2 = g.value(m.ell2)(0, 0);
  out.lam = g.value(m.lam)(0, 0);
  out.loss_trace = std::move(r.loss_trace);
  return out;
}

template <typename T>
struct BlrFitResult {
  T alpha, lam;
  std::vector<T> loss_trace;
};

template <typename T>
BlrFitResult<T> fit_blr(const Matrix<T>& x, const Matrix<T>& y, T alpha, T lam,
                        BlrPath path = BlrPath::Cholesky,
                        const FitOptions<T>& opt = {}) {
  Graph<T> g;
  BlrModel<T> m = make_blr(g, x, y, alpha, lam, path);
  FitResult<T> r = fit_leaves(
      g, m.loss, {{"log_alpha", m.log_alpha}, {"log_lam", m.log_lam}}, opt);
  BlrFitResult<T> out;
  out.alpha = g.value(m.alpha)(0, 0);
  out.lam = g.value(m.lam)(0, 0);
  out.loss_trace = std::move(r.loss_trace);
  return out;
}

template <typename T>
struct KalmanFitResult {
  Matrix<T> sh, sv;
  std::vector<T> loss_trace;
};

// Fit the two noise covariances of a known-(A, B) system; both are
// parameterized through unconstrained Cholesky-factor leaves.
template <typename T>
KalmanFitResult<T> fit_kalman(const Matrix<T>& a, const Matrix<T>& b,
                              const Matrix<T>& mu0, const Matrix<T>& s0,
                              const std::vector<Matrix<T>>& observations,
                              const Matrix<T>& p_h0, const Matrix<T>& p_v0,
                              const FitOptions<T>& opt = {}) {
  Graph<T> g;
  NodeId an = g.constant(a, "A");
  NodeId bn = g.constant(b, "B");
  NodeId mu0n = g.constant(mu0, "mu0");
  NodeId s0n = g.constant(s0, "S0");
  NodeId ph = g.leaf(p_h0, "P_h");
  NodeId pv = g.leaf(p_v0, "P_v");
  NodeId sh = spd_from_unconstrained(g, ph);
  NodeId sv = spd_from_unconstrained(g, pv);
  std::vector<NodeId> obs;
  for (std::size_t t = 0; t < observations.size(); ++t) {
    obs.push_back(g.constant(observations[t], "v" + std::to_string(t)));
  }
  KalmanNodes<T> nodes = build_kalman_nll(g, an, bn, sh, sv, mu0n, s0n, obs);
  FitResult<T> r =
      fit_leaves(g, nodes.nll, {{"P_h", ph}, {"P_v", pv}}, opt);
  KalmanFitResult<T> out{g.value(sh), g.value(sv), std::move(r.loss_trace)};
  return out;
}

}  // namespace dla
