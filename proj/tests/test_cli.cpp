#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dlinalg/cli.hpp"
#include "dlinalg/io.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace dla;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(const std::vector<std::string>& args) {
  std::vector<std::string> full{"dlinalg"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : full) argv.push_back(s.c_str());
  std::ostringstream out, err;
  const int code =
      run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dlinalg_cli_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  f << content;
  REQUIRE(bool(f));
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> ls;
  std::stringstream ss(s);
  std::string l;
  while (std::getline(ss, l))
    if (!l.empty()) ls.push_back(l);
  return ls;
}

// y = sin(x) samples, one "x,y" row per point.
std::string make_xy_csv(int n) {
  std::ostringstream ss;
  ss.precision(17);
  for (int i = 0; i < n; ++i) {
    const double x = 0.4 * i;
    ss << x << "," << std::sin(x) << "\n";
  }
  return ss.str();
}

}  // namespace

TEST_CASE("io: load_csv parses and skips blanks and comments") {
  const std::string p = temp_path("basic.csv");
  write_file(p,
             "# header comment\n"
             "1, 2.5, -3\n"
             "\n"
             "   \t\n"
             "4,5e-1,6\n"
             "# trailing comment\n");
  Matrix<double> m = load_csv<double>(p);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  CHECK(m(0, 1) == 2.5);
  CHECK(m(0, 2) == -3.0);
  CHECK(m(1, 1) == 0.5);
}

TEST_CASE("io: load_csv rejects bad input") {
  const std::string bad = temp_path("bad.csv");
  write_file(bad, "1,2\n3,oops\n");
  CHECK_THROWS_WITH_AS(load_csv<double>(bad),
                       doctest::Contains("line 2"), IoError);

  const std::string ragged = temp_path("ragged.csv");
  write_file(ragged, "1,2\n1,2,3\n");
  CHECK_THROWS_WITH_AS(load_csv<double>(ragged),
                       doctest::Contains("expected 2 fields, got 3"), IoError);

  const std::string empty = temp_path("empty.csv");
  write_file(empty, "# nothing here\n\n");
  CHECK_THROWS_WITH_AS(load_csv<double>(empty),
                       doctest::Contains("no data rows"), IoError);

  CHECK_THROWS_AS(load_csv<double>(temp_path("does_not_exist.csv")), IoError);
}

TEST_CASE("io: save_csv roundtrip and standardize_columns") {
  Matrix<double> m = Matrix<double>::from_rows({{1.0, 7.0}, {3.0, 7.0},
                                                {5.0, 7.0}});
  const std::string p = temp_path("roundtrip.csv");
  save_csv<double>(p, m.view(), "a,b");
  Matrix<double> back = load_csv<double>(p);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 2);
  CHECK(max_abs_diff<double>(back.view(), m.view()) == 0.0);

  auto [mean, sd] = standardize_columns<double>(m.view());
  CHECK(mean[0] == doctest::Approx(3.0));
  CHECK(sd[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(sd[1] == 0.0);  // constant column: centered only
  double s0 = 0, s1 = 0;
  for (index_t i = 0; i < 3; ++i) {
    s0 += m(i, 0);
    s1 += m(i, 1);
  }
  CHECK(s0 == doctest::Approx(0.0));
  CHECK(s1 == doctest::Approx(0.0));
  CHECK(m(2, 0) == doctest::Approx(2.0 / std::sqrt(8.0 / 3.0)));
}

TEST_CASE("cli: help and parse errors") {
  CliResult help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("gradcheck") != std::string::npos);
  CHECK(help.out.find("bench") != std::string::npos);
  CHECK(help.out.find("fit") != std::string::npos);

  CHECK(run({}).code == 2);                    // subcommand required
  CHECK(run({"frobnicate"}).code == 2);        // unknown subcommand
  CHECK(run({"--precision", "half", "gradcheck"}).code == 2);
  CHECK(run({"fit", "gp"}).code == 2);         // --data required
}

TEST_CASE("cli: gradcheck smoke") {
  CliResult r = run({"gradcheck", "--sizes", "2,3", "--trials", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS gradcheck:") != std::string::npos);
  CHECK(r.out.find("ok   gemm2[nn]") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);

  CliResult rf = run({"--precision", "float", "gradcheck", "--sizes", "2,3",
                      "--trials", "1"});
  CHECK(rf.code == 0);
  CHECK(rf.out.find("PASS gradcheck:") != std::string::npos);
}

TEST_CASE("cli: precision from environment") {
  setenv("DLINALG_PRECISION", "half", 1);
  CliResult bad = run({"gradcheck", "--sizes", "2", "--trials", "1"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("DLINALG_PRECISION") != std::string::npos);

  setenv("DLINALG_PRECISION", "float", 1);
  CliResult ok = run({"gradcheck", "--sizes", "2", "--trials", "1"});
  CHECK(ok.code == 0);
  unsetenv("DLINALG_PRECISION");
}

TEST_CASE("cli: bench emits one json record per phase") {
  CliResult r = run({"bench", "--ops", "potrf", "--sizes", "8", "--reps", "1",
                     "--warmup", "0"});
  REQUIRE(r.code == 0);
  const auto ls = lines_of(r.out);
  REQUIRE(ls.size() == 2);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    json j = json::parse(ls[i]);
    CHECK(j["op"] == "potrf");
    CHECK(j["phase"] == (i == 0 ? "forward" : "backward"));
    CHECK(j["n"] == 8);
    CHECK(j["precision"] == "double");
    CHECK(j["reps"] == 1);
    CHECK(j["mean_seconds"].get<double>() >= 0.0);
    CHECK(j["seconds_per_n3"].get<double>() >= 0.0);
  }

  CHECK(run({"bench", "--ops", "bogus", "--sizes", "8"}).code == 2);

  const std::string outfile = temp_path("bench.jsonl");
  CliResult to_file = run({"bench", "--ops", "syevd,gesvd", "--sizes", "6",
                           "--reps", "1", "--warmup", "0", "--output",
                           outfile});
  REQUIRE(to_file.code == 0);
  CHECK(to_file.out.empty());
  std::ifstream f(outfile);
  std::string content((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
  const auto fl = lines_of(content);
  REQUIRE(fl.size() == 4);
  CHECK(json::parse(fl[0])["op"] == "syevd");
  CHECK(json::parse(fl[2])["op"] == "gesvd");
}

TEST_CASE("cli: bench batched potrf") {
  CliResult r = run({"--threads", "2", "bench", "--ops", "potrf", "--sizes",
                     "6", "--reps", "1", "--warmup", "0", "--batch", "5"});
  REQUIRE(r.code == 0);
  const auto ls = lines_of(r.out);
  REQUIRE(ls.size() == 1);  // batched mode: forward only
  json j = json::parse(ls[0]);
  CHECK(j["batch"] == 5);
  CHECK(j["threads"] == 2);
  CHECK(j["phase"] == "forward");
}

TEST_CASE("cli: fit gp writes a result record and a trace") {
  const std::string data = temp_path("gp.csv");
  write_file(data, make_xy_csv(8));
  const std::string trace = temp_path("gp_trace.csv");
  CliResult r = run({"fit", "gp", "--data", data, "--iters", "3", "--lr",
                     "0.05", "--trace", trace, "--plan"});
  REQUIRE(r.code == 0);
  const auto ls = lines_of(r.out);
  REQUIRE(ls.size() == 1);
  json j = json::parse(ls[0]);
  CHECK(j["model"] == "gp");
  CHECK(j["precision"] == "double");
  CHECK(j["iterations"] == 3);
  CHECK(std::isfinite(j["final_loss"].get<double>()));
  CHECK(std::isfinite(j["initial_loss"].get<double>()));
  CHECK(j["sigma2"].get<double>() > 0.0);
  CHECK(j["ell2"].get<double>() > 0.0);
  CHECK(j["lam"].get<double>() > 0.0);

  Matrix<double> tr = load_csv<double>(trace);
  CHECK(tr.rows() == 4);  // iters + 1
  CHECK(tr.cols() == 1);
  CHECK(tr(0, 0) == doctest::Approx(j["initial_loss"].get<double>()));
  CHECK(tr(3, 0) == doctest::Approx(j["final_loss"].get<double>()));
}

TEST_CASE("cli: fit sgp, blr, kalman") {
  const std::string data = temp_path("fit_misc.csv");
  write_file(data, make_xy_csv(8));

  CliResult sgp = run({"fit", "sgp", "--data", data, "--iters", "2",
                       "--inducing", "3"});
  REQUIRE(sgp.code == 0);
  json js = json::parse(lines_of(sgp.out)[0]);
  CHECK(js["model"] == "sgp");
  CHECK(js["inducing"] == 3);
  CHECK(std::isfinite(js["final_loss"].get<double>()));

  CliResult blr = run({"fit", "blr", "--data", data, "--iters", "2",
                       "--blr-path", "lq", "--standardize"});
  REQUIRE(blr.code == 0);
  json jb = json::parse(lines_of(blr.out)[0]);
  CHECK(jb["model"] == "blr");
  CHECK(jb["path"] == "lq");
  CHECK(jb["alpha"].get<double>() > 0.0);
  CHECK(std::isfinite(jb["final_loss"].get<double>()));

  const std::string kdata = temp_path("kalman.csv");
  write_file(kdata, "0.1,0.2\n0.0,0.3\n-0.1,0.1\n");
  CliResult kal = run({"fit", "kalman", "--data", kdata, "--iters", "2",
                       "--lr", "0.05"});
  REQUIRE(kal.code == 0);
  json jk = json::parse(lines_of(kal.out)[0]);
  CHECK(jk["model"] == "kalman");
  REQUIRE(jk["sh_diag"].size() == 2);
  REQUIRE(jk["sv_diag"].size() == 2);
  CHECK(jk["sh_diag"][0].get<double>() > 0.0);
  CHECK(jk["sv_diag"][1].get<double>() > 0.0);
}

TEST_CASE("cli: fit input errors") {
  CHECK(run({"fit", "gp", "--data", temp_path("missing.csv")}).code == 2);

  const std::string onecol = temp_path("onecol.csv");
  write_file(onecol, "1\n2\n3\n");
  CliResult r = run({"fit", "gp", "--data", onecol, "--iters", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("target") != std::string::npos);
}
