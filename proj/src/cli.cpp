#include "dlinalg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dlinalg/adjoints.hpp"
#include "dlinalg/gradcheck.hpp"
#include "dlinalg/io.hpp"
#include "dlinalg/models.hpp"
#include "json.hpp"

namespace dla {
namespace {

using nlohmann::json;

// --------------------------------------------------------------------------
// gradcheck
// --------------------------------------------------------------------------

struct GradcheckArgs {
  std::vector<index_t> sizes{2, 3, 5, 8, 16};
  int trials = 10;
};

template <typename T>
int cmd_gradcheck(const GradcheckArgs& ga, std::uint64_t seed,
                  std::ostream& out) {
  const auto cfg = ToleranceConfig<T>::defaults();
  GradcheckSummary<T> sum =
      run_operator_checks<T>(ga.sizes, ga.trials, seed, cfg, &out);
  out << (sum.failures == 0 ? "PASS" : "FAIL") << " gradcheck: " << sum.checks
      << " checks, " << sum.failures << " failures, worst rel "
      << sum.worst_rel << " (" << sum.worst_name << "), " << sum.seconds
      << "s\n";
  return sum.failures == 0 ? 0 : 1;
}

// --------------------------------------------------------------------------
// bench
// --------------------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> ops{"potrf", "gelqf", "syevd"};
  std::vector<index_t> sizes{128, 256, 512};
  int reps = 10;
  int warmup = 2;
  index_t batch = 0;
  std::string output;
};

double time_mean(int reps, int warmup, const std::function<void()>& fn) {
  for (int i = 0; i < warmup; ++i) fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

struct BenchCase {
  std::function<void()> forward, backward;
};

// Timed closures own their buffers; forward phases include the O(n^2) copy
// into scratch (negligible against the O(n^3) kernels at benched sizes).
template <typename T>
BenchCase make_bench_case(const std::string& op, index_t n,
                          std::mt19937_64& rng) {
  BenchCase c;
  const auto cfg = ToleranceConfig<T>::defaults();
  if (op == "gemm2") {
    auto a = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto b = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto cbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto out = std::make_shared<Matrix<T>>(n, n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    auto bbar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      gemm2_into<T>(out->view(), a->view(), b->view(), false, false, T(1));
    };
    c.backward = [=] {
      gemm2_backward_into<T>(abar->view(), bbar->view(), cbar->view(),
                             a->view(), b->view(), false, false, T(1));
    };
  } else if (op == "syrk") {
    auto a = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto bbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto out = std::make_shared<Matrix<T>>(n, n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] { syrk_into<T>(out->view(), a->view(), false, T(1)); };
    c.backward = [=] {
      syrk_backward_into<T>(abar->view(), bbar->view(), a->view(), false,
                            T(1));
    };
  } else if (op == "trmm" || op == "trsm") {
    auto t = std::make_shared<Matrix<T>>(potrf(random_spd<T>(n, rng)));
    auto x = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto bbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto work = std::make_shared<Matrix<T>>(n, n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    auto tbar = std::make_shared<Matrix<T>>(n, n);
    if (op == "trmm") {
      c.forward = [=] {
        copy_into<T>(x->view(), work->view());
        trmm_inplace<T>(t->view(), work->view(), false, false, true, T(1));
      };
      c.backward = [=] {
        trmm_backward_into<T>(abar->view(), tbar->view(), bbar->view(),
                              t->view(), x->view(), false, false, true, T(1));
      };
    } else {
      auto b = std::make_shared<Matrix<T>>(
          trsm(*t, *x, false, false, true, T(1)));
      c.forward = [=] {
        copy_into<T>(x->view(), work->view());
        trsm_inplace<T>(t->view(), work->view(), false, false, true, T(1));
      };
      c.backward = [=] {
        trsm_backward_into<T>(abar->view(), tbar->view(), bbar->view(),
                              t->view(), b->view(), false, false, true, T(1));
      };
    }
  } else if (op == "potrf") {
    auto a = std::make_shared<Matrix<T>>(random_spd<T>(n, rng));
    auto l = std::make_shared<Matrix<T>>(potrf(*a));
    auto lbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    tril_inplace<T>(lbar->view());
    auto work = std::make_shared<Matrix<T>>(n, n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      copy_into<T>(a->view(), work->view());
      potrf_inplace<T>(work->view());
    };
    c.backward = [=] {
      potrf_backward_into<T>(abar->view(), lbar->view(), l->view(), true);
    };
  } else if (op == "potri") {
    auto l = std::make_shared<Matrix<T>>(potrf(random_spd<T>(n, rng)));
    auto b = std::make_shared<Matrix<T>>(potri(*l));
    auto bbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto work = std::make_shared<Matrix<T>>(n, n);
    auto lbar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      copy_into<T>(l->view(), work->view());
      potri_inplace<T>(work->view());
    };
    c.backward = [=] {
      potri_backward_into<T>(lbar->view(), bbar->view(), l->view(), b->view(),
                             true);
    };
  } else if (op == "gelqf") {
    auto a = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto fact = std::make_shared<GelqfResult<T>>(gelqf(*a));
    auto qbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto lbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    tril_inplace<T>(lbar->view());
    auto q = std::make_shared<Matrix<T>>(n, n);
    auto l = std::make_shared<Matrix<T>>(n, n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      copy_into<T>(a->view(), q->view());
      gelqf_inplace<T>(q->view(), l->view());
    };
    c.backward = [=] {
      gelqf_backward_into<T>(abar->view(), qbar->view(), lbar->view(),
                             fact->q.view(), fact->l.view());
    };
  } else if (op == "syevd") {
    auto a = std::make_shared<Matrix<T>>(sym(random_matrix<T>(n, n, rng)));
    auto ed = std::make_shared<SyevdResult<T>>(syevd(*a));
    auto ubar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto lambdabar = std::make_shared<std::vector<T>>(n);
    {
      Matrix<T> lb = random_matrix<T>(n, 1, rng);
      std::copy(lb.data(), lb.data() + n, lambdabar->begin());
    }
    auto u = std::make_shared<Matrix<T>>(n, n);
    auto lambda = std::make_shared<std::vector<T>>(n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      copy_into<T>(a->view(), u->view());
      syevd_inplace<T>(u->view(), lambda->data());
    };
    c.backward = [=] {
      syevd_backward_into<T>(abar->view(), ubar->view(), lambdabar->data(),
                             ed->u.view(), ed->lambda.data(), cfg);
    };
  } else if (op == "gesvd") {
    auto a = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto sv = std::make_shared<GesvdResult<T>>(gesvd(*a));
    auto ubar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto vbar = std::make_shared<Matrix<T>>(random_matrix<T>(n, n, rng));
    auto lambdabar = std::make_shared<std::vector<T>>(n);
    {
      Matrix<T> lb = random_matrix<T>(n, 1, rng);
      std::copy(lb.data(), lb.data() + n, lambdabar->begin());
    }
    auto v = std::make_shared<Matrix<T>>(n, n);
    auto u = std::make_shared<Matrix<T>>(n, n);
    auto lambda = std::make_shared<std::vector<T>>(n);
    auto abar = std::make_shared<Matrix<T>>(n, n);
    c.forward = [=] {
      copy_into<T>(a->view(), v->view());
      gesvd_inplace<T>(v->view(), u->view(), lambda->data());
    };
    c.backward = [=] {
      gesvd_backward_into<T>(abar->view(), ubar->view(), lambdabar->data(),
                             vbar->view(), sv->u.view(), sv->lambda.data(),
                             sv->v.view(), cfg);
    };
  } else {
    throw Error("bench: unknown op '" + op + "'");
  }
  return c;
}

template <typename T>
void bench_batched(index_t n, index_t batch, int threads, int reps, int warmup,
                   std::uint64_t seed, const std::string& prec,
                   std::ostream& out) {
  std::mt19937_64 rng(seed);
  BatchTensor<T> a(batch, n, n);
  for (index_t s = 0; s < batch; ++s) {
    Matrix<T> spd = random_spd<T>(n, rng);
    copy_into<T>(spd.view(), a.slice(s));
  }
  BatchTensor<T> work(batch, n, n);
  const double fwd = time_mean(reps, warmup, [&] {
    for_each_slice(batch, threads, [&](index_t s) {
      copy_into<T>(a.slice(s), work.slice(s));
      potrf_inplace<T>(work.slice(s));
    });
  });
  json rec{{"op", "potrf"},
           {"phase", "forward"},
           {"n", n},
           {"precision", prec},
           {"reps", reps},
           {"mean_seconds", fwd},
           {"seconds_per_n3", fwd / (double(batch) * double(n) * double(n) *
                                     double(n))},
           {"batch", batch},
           {"threads", threads}};
  out << rec.dump() << '\n';
}

template <typename T>
int cmd_bench(const BenchArgs& ba, std::uint64_t seed, int threads,
              const std::string& prec, std::ostream& out, std::ostream& err) {
  std::ofstream file;
  if (!ba.output.empty()) {
    file.open(ba.output);
    if (!file) {
      throw IoError("bench: cannot open '" + ba.output + "' for writing");
    }
  }
  std::ostream& sink = ba.output.empty() ? out : file;
  static const std::vector<std::string> known{
      "gemm2", "syrk", "trmm", "trsm", "potrf",
      "potri", "gelqf", "syevd", "gesvd"};
  for (const auto& op : ba.ops) {
    if (std::find(known.begin(), known.end(), op) == known.end()) {
      err << "bench: unknown op '" << op << "'\n";
      return 2;
    }
  }
  std::mt19937_64 rng(seed);
  for (const auto& op : ba.ops) {
    for (index_t n : ba.sizes) {
      if (ba.batch > 0) {
        if (op == "potrf") {
          bench_batched<T>(n, ba.batch, threads, ba.reps, ba.warmup, rng(),
                           prec, sink);
        }
        continue;
      }
      BenchCase c = make_bench_case<T>(op, n, rng);
      const double n3 = double(n) * double(n) * double(n);
      for (const char* phase : {"forward", "backward"}) {
        const auto& fn =
            phase[0] == 'f' ? c.forward : c.backward;
        const double mean = time_mean(ba.reps, ba.warmup, fn);
        json rec{{"op", op},           {"phase", phase},
                 {"n", n},             {"precision", prec},
                 {"reps", ba.reps},    {"mean_seconds", mean},
                 {"seconds_per_n3", mean / n3}};
        sink << rec.dump() << '\n';
      }
    }
  }
  return 0;
}

// --------------------------------------------------------------------------
// fit
// --------------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string data;
  std::string trace;
  int iterations = 200;
  double lr = 1e-2;
  double sigma2 = 1.0, ell2 = 1.0, lam = 0.1;
  double alpha = 1.0;
  index_t inducing = 10;
  std::string blr_path = "chol";
  bool standardize = false;
  bool plan = false;
};

template <typename T>
void write_trace(const std::string& path, const std::vector<T>& trace) {
  if (path.empty()) return;
  Matrix<T> m(static_cast<index_t>(trace.size()), 1);
  std::copy(trace.begin(), trace.end(), m.data());
  save_csv<T>(path, m.view(), "loss");
}

// Splits a table whose last column is the target into (features, target).
template <typename T>
std::pair<Matrix<T>, Matrix<T>> split_xy(const Matrix<T>& raw) {
  if (raw.cols() < 2) {
    throw IoError("fit: need at least one feature column plus a target");
  }
  Matrix<T> x(raw.rows(), raw.cols() - 1);
  Matrix<T> y(raw.rows(), 1);
  for (index_t i = 0; i < raw.rows(); ++i) {
    for (index_t j = 0; j + 1 < raw.cols(); ++j) x(i, j) = raw(i, j);
    y(i, 0) = raw(i, raw.cols() - 1);
  }
  return {std::move(x), std::move(y)};
}

template <typename T>
int cmd_fit(const FitArgs& fa, std::uint64_t seed, const std::string& prec,
            std::ostream& out) {
  Matrix<T> raw = load_csv<T>(fa.data);
  FitOptions<T> opt;
  opt.iterations = fa.iterations;
  opt.lr = T(fa.lr);
  opt.use_memory_plan = fa.plan;
  json rec{{"model", fa.model}, {"precision", prec},
           {"iterations", fa.iterations}};

  if (fa.model == "kalman") {
    const index_t d = raw.cols();
    Matrix<T> eye_d = eye<T>(d);
    Matrix<T> mu0(d, 1);
    std::vector<Matrix<T>> obs;
    for (index_t t = 0; t < raw.rows(); ++t) {
      Matrix<T> v(d, 1);
      for (index_t j = 0; j < d; ++j) v(j, 0) = raw(t, j);
      obs.push_back(std::move(v));
    }
    KalmanFitResult<T> r =
        fit_kalman<T>(eye_d, eye_d, mu0, eye_d, obs, eye_d, eye_d, opt);
    rec["final_loss"] = r.loss_trace.back();
    rec["initial_loss"] = r.loss_trace.front();
    rec["sh_diag"] = json::array();
    rec["sv_diag"] = json::array();
    for (index_t j = 0; j < d; ++j) {
      rec["sh_diag"].push_back(r.sh(j, j));
      rec["sv_diag"].push_back(r.sv(j, j));
    }
    write_trace(fa.trace, r.loss_trace);
    out << rec.dump() << '\n';
    return 0;
  }

  auto [x, y] = split_xy<T>(raw);
  if (fa.standardize) standardize_columns<T>(x.view());

  if (fa.model == "gp" || fa.model == "sgp") {
    GpFitResult<T> r;
    if (fa.model == "gp") {
      r = fit_gp<T>(x, y, T(fa.sigma2), T(fa.ell2), T(fa.lam), opt);
    } else {
      const index_t m = std::min<index_t>(fa.inducing, x.rows());
      std::vector<index_t> idx(x.rows());
      std::iota(idx.begin(), idx.end(), index_t(0));
      std::mt19937_64 rng(seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      Matrix<T> z(m, x.cols());
      for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < x.cols(); ++j) z(i, j) = x(idx[i], j);
      }
      r = fit_sgp<T>(x, y, z, T(fa.sigma2), T(fa.ell2), T(fa.lam), opt);
      rec["inducing"] = m;
    }
    rec["final_loss"] = r.loss_trace.back();
    rec["initial_loss"] = r.loss_trace.front();
    rec["sigma2"] = r.sigma2;
    rec["ell2"] = r.ell2;
    rec["lam"] = r.lam;
    write_trace(fa.trace, r.loss_trace);
    out << rec.dump() << '\n';
    return 0;
  }

  // blr: the model wants d x n with datapoints as columns.
  Matrix<T> xt(x.cols(), x.rows());
  for (index_t i = 0; i < x.rows(); ++i) {
    for (index_t j = 0; j < x.cols(); ++j) xt(j, i) = x(i, j);
  }
  const BlrPath path =
      fa.blr_path == "lq" ? BlrPath::Lq : BlrPath::Cholesky;
  BlrFitResult<T> r =
      fit_blr<T>(xt, y, T(fa.alpha), T(fa.lam), path, opt);
  rec["final_loss"] = r.loss_trace.back();
  rec["initial_loss"] = r.loss_trace.front();
  rec["alpha"] = r.alpha;
  rec["lam"] = r.lam;
  rec["path"] = fa.blr_path;
  write_trace(fa.trace, r.loss_trace);
  out << rec.dump() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"dlinalg: differentiable dense linear algebra"};
  app.require_subcommand(1);

  std::string precision;
  app.add_option("--precision", precision,
                 "float or double (default: $DLINALG_PRECISION or double)")
      ->check(CLI::IsMember({"float", "double"}));
  std::uint64_t seed = 1234;
  app.add_option("--seed", seed, "base RNG seed");
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for batched phases")
      ->check(CLI::PositiveNumber);

  GradcheckArgs ga;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "compare every operator pullback against finite differences");
  gc->add_option("--sizes", ga.sizes, "matrix sizes")->delimiter(',');
  gc->add_option("--trials", ga.trials, "trials per op and size")
      ->check(CLI::PositiveNumber);

  BenchArgs ba;
  CLI::App* be = app.add_subcommand(
      "bench", "time forward and backward kernels; JSON record per line");
  be->add_option("--ops", ba.ops, "ops to bench")->delimiter(',');
  be->add_option("--sizes", ba.sizes, "matrix sizes")->delimiter(',');
  be->add_option("--reps", ba.reps, "timed repetitions")
      ->check(CLI::PositiveNumber);
  be->add_option("--warmup", ba.warmup, "untimed repetitions");
  be->add_option("--batch", ba.batch,
                 "bench a batched potrf forward over this many slices");
  be->add_option("--output", ba.output, "write records to a file");

  FitArgs fa;
  CLI::App* fi = app.add_subcommand(
      "fit", "fit a criterion's hyperparameters on a CSV dataset");
  fi->add_option("model", fa.model, "gp | sgp | blr | kalman")
      ->required()
      ->check(CLI::IsMember({"gp", "sgp", "blr", "kalman"}));
  fi->add_option("--data", fa.data,
                 "CSV; last column is the target (kalman: all columns are "
                 "the observation)")
      ->required();
  fi->add_option("--iters", fa.iterations, "Adam iterations")
      ->check(CLI::PositiveNumber);
  fi->add_option("--lr", fa.lr, "Adam learning rate");
  fi->add_option("--sigma2", fa.sigma2, "initial kernel variance");
  fi->add_option("--ell2", fa.ell2, "initial squared lengthscale");
  fi->add_option("--lam", fa.lam, "initial noise variance");
  fi->add_option("--alpha", fa.alpha, "initial weight precision (blr)");
  fi->add_option("--inducing", fa.inducing, "inducing point count (sgp)")
      ->check(CLI::PositiveNumber);
  fi->add_option("--blr-path", fa.blr_path, "chol | lq")
      ->check(CLI::IsMember({"chol", "lq"}));
  fi->add_flag("--standardize", fa.standardize,
               "standardize feature columns before fitting");
  fi->add_flag("--plan", fa.plan, "enable the tape's buffer-reuse plan");
  fi->add_option("--trace", fa.trace, "write the loss trace to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  if (precision.empty()) {
    const char* env = std::getenv("DLINALG_PRECISION");
    precision = env != nullptr ? env : "double";
    if (precision != "float" && precision != "double") {
      err << "DLINALG_PRECISION must be 'float' or 'double', got '"
          << precision << "'\n";
      return 2;
    }
  }
  const bool use_float = precision == "float";

  try {
    if (gc->parsed()) {
      return use_float ? cmd_gradcheck<float>(ga, seed, out)
                       : cmd_gradcheck<double>(ga, seed, out);
    }
    if (be->parsed()) {
      return use_float
                 ? cmd_bench<float>(ba, seed, threads, precision, out, err)
                 : cmd_bench<double>(ba, seed, threads, precision, out, err);
    }
    return use_float ? cmd_fit<float>(fa, seed, precision, out)
                     : cmd_fit<double>(fa, seed, precision, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace dla
