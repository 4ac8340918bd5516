#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lrvb_app/app.hpp"
#include "lrvb_app/config.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using lrvb::app::Json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = lrvb::app::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("lrvb_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch_dir() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Json without_timings(Json j) {
  j.erase("timings");
  return j;
}

bool all_finite(const Json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_structured())
    for (const auto& v : j) if (!all_finite(v)) return false;
  return true;
}

const Json* find_row(const Json& rows, const std::string& key, const std::string& name) {
  for (const auto& r : rows)
    if (r[key] == name) return &r;
  return nullptr;
}

const std::string kFixture = oracle::data_path("microcredit_k7.csv");
const std::string kConjData = oracle::data_path("conjugate.csv");
const std::string kConjConfig = oracle::data_path("conjugate_config.json");

}  // namespace

TEST_CASE("fit on the bundled fixture") {
  const Result r = cli({"fit", kFixture});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j["command"] == "fit");
  CHECK(j["converged"] == true);
  CHECK(j["data"]["sites"] == 7);
  CHECK(j["parameters"].size() == 26);
  CHECK(j["sensitivity"]["directions"].size() == 10);
  CHECK(all_finite(j));
  for (const char* key : {"fit_seconds", "lrvb_seconds", "total_seconds"}) CHECK(j["timings"].contains(key));
}

TEST_CASE("fit is deterministic and its config echo reproduces the run") {
  const Result a = cli({"fit", kFixture});
  const Result b = cli({"fit", kFixture});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const Json ja = Json::parse(a.out);
  CHECK(without_timings(ja).dump() == without_timings(Json::parse(b.out)).dump());
  const std::string echo = write_file("echo.json", ja["config"].dump(2));
  const Result c = cli({"fit", kFixture, "--config", echo});
  REQUIRE(c.code == 0);
  CHECK(without_timings(Json::parse(c.out)).dump() == without_timings(ja).dump());
}

TEST_CASE("invalid treatment is reported with its line number") {
  std::string csv = "site,treatment,outcome\n";
  for (int i = 2; i < 17; ++i) csv += std::to_string(1 + i % 2) + "," + std::to_string(i % 2) + ",0.5\n";
  csv += "1,2,0.5\n";
  const std::string path = write_file("bad.csv", csv);
  const Result r = cli({"fit", path});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 17") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("the installed binary maps errors to exit codes") {
  const char* exe = std::getenv("LRVB_CLI");
  if (!exe) return;
  std::string csv = "site,treatment,outcome\n1,0,1\n1,3,2\n";
  const std::string path = write_file("bad_bin.csv", csv);
  const std::string cmd = std::string(exe) + " fit " + path + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
  const int help = std::system((std::string(exe) + " --help > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(help) == 0);
}

TEST_CASE("unknown config keys and prior names are rejected") {
  const std::string cfg = write_file("unknown.json", R"({"model": "microcredit", "priors": {}})");
  const Result r = cli({"fit", kFixture, "--config", cfg});
  CHECK(r.code == 2);
  CHECK(r.err.find("priors") != std::string::npos);

  const std::string bad_prior = write_file("bad_prior.json", R"({"prior": {"lambda_11": -1.0}})");
  CHECK(cli({"fit", kFixture, "--config", bad_prior}).code == 2);

  const Result s = cli({"sensitivity", kFixture, "--param", "lambda_33"});
  CHECK(s.code == 2);
  CHECK(s.err.find("lambda_11") != std::string::npos);
  CHECK(cli({"fit", kFixture, "--format", "xml"}).code == 2);
}

TEST_CASE("non-convergence exits with code 3 and still reports") {
  const std::string cfg = write_file("cap.json", R"({"optimizer": {"max_iterations": 1}})");
  const Result r = cli({"fit", kFixture, "--config", cfg});
  CHECK(r.code == 3);
  const Json j = Json::parse(r.out);
  CHECK(j["converged"] == false);
  CHECK(all_finite(j));
}

TEST_CASE("sensitivity on the conjugate fixture") {
  const Result r = cli({"sensitivity", kConjData, "--config", kConjConfig, "--param", "all"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  const Json* row = find_row(j["rows"], "parameter", "prior_precision");
  REQUIRE(row != nullptr);
  CHECK(std::abs((*row)["raw"].get<double>() + 0.25) <= 1e-8);
  const double sd = j["target_lrvb_sd"].get<double>();
  for (const auto& rw : j["rows"])
    CHECK(std::abs(rw["normalized"].get<double>() * sd - rw["raw"].get<double>()) <= 1e-12);
}

TEST_CASE("sensitivity rows for the microcredit prior") {
  const Result r = cli({"sensitivity", kFixture, "--param", "all"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j["target"] == "tau");
  CHECK(j["rows"].size() == 10);
  for (const char* name : {"lambda_11", "lambda_12", "lambda_22", "mu0", "tau0", "lkj_eta", "scale_shape",
                           "scale_rate", "sigma_shape", "sigma_rate"})
    CHECK(find_row(j["rows"], "parameter", name) != nullptr);
  const double sd = j["target_lrvb_sd"].get<double>();
  for (const auto& rw : j["rows"])
    CHECK(std::abs(rw["normalized"].get<double>() * sd - rw["raw"].get<double>()) <= 1e-12);

  const Result csv = cli({"sensitivity", kFixture, "--param", "lambda_11", "--format", "csv"});
  REQUIRE(csv.code == 0);
  CHECK(csv.out.rfind("parameter,raw,normalized\nlambda_11,", 0) == 0);
}

TEST_CASE("a zero direction gives a zero row") {
  const std::string cfg =
      write_file("zero_dir.json", R"({"directions": [{"name": "nothing", "weights": {}}, "lambda_11"]})");
  const Result r = cli({"sensitivity", kFixture, "--config", cfg});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  const Json* row = find_row(j["rows"], "parameter", "nothing");
  REQUIRE(row != nullptr);
  CHECK((*row)["raw"].get<double>() == 0.0);
  CHECK((*row)["normalized"].get<double>() == 0.0);
}

TEST_CASE("manual perturbation of lambda_11 agrees with the prediction") {
  const Result r = cli({"manual-perturb", kFixture, "--param", "lambda_11", "--delta", "0.01"});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  int checked = 0;
  for (const auto& row : j["rows"]) {
    if (row["relative_error"].is_null()) continue;
    ++checked;
    CHECK(row["relative_error"].get<double>() <= 0.02);
  }
  CHECK(checked > 0);
  CHECK(j["summary"]["max_relative_error"].get<double>() <= 0.02);
}

TEST_CASE("manual perturbation with zero delta") {
  const Result r = cli({"manual-perturb", kFixture, "--param", "mu0", "--delta", "0"});
  REQUIRE(r.code == 0);
  for (const auto& row : Json::parse(r.out)["rows"]) {
    CHECK(row["actual_shift"].get<double>() == 0.0);
    CHECK(row["predicted_shift"].get<double>() == 0.0);
  }
}

TEST_CASE("manual perturbation on the conjugate fixture") {
  const Result r =
      cli({"manual-perturb", kConjData, "--config", kConjConfig, "--param", "prior_precision", "--delta", "0.01"});
  REQUIRE(r.code == 0);
  const Json report = Json::parse(r.out);
  const Json& row = report["rows"][0];
  CHECK(std::abs(row["actual_shift"].get<double>() - (1.0 / 2.01 - 0.5)) <= 1e-10);
  CHECK(std::abs(row["predicted_shift"].get<double>() + 0.0025) <= 1e-10);
}

TEST_CASE("check-mcmc on an exact gaussian target") {
  const std::string cfg = write_file("target.json", R"({
    "model": "gaussian_target",
    "gaussian_target": {"mean": [0.5, -1.0], "cov": [[1.0, 0.6], [0.6, 2.0]]},
    "mcmc": {"draws": 10000, "warmup": 2000, "thin": 10},
    "seed": 3
  })");
  const std::string draws = (scratch_dir() / "draws.csv").string();
  const Result r = cli({"check-mcmc", "--config", cfg, "--save-draws", draws});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(r.out);
  CHECK(j["summary"]["max_abs_mean_z"].get<double>() <= 3.0);
  CHECK(j["summary"]["max_rel_lrvb_sd_error"].get<double>() <= 0.05);
  CHECK(j["timings"].contains("speed_ratio"));
  const std::string text = read_file(draws);
  CHECK(std::count(text.begin(), text.end(), '\n') == 10001);

  const Result again = cli({"check-mcmc", "--config", cfg});
  CHECK(without_timings(Json::parse(again.out)).dump() == without_timings(j).dump());
}

TEST_CASE("simulate is deterministic and its truth file round-trips") {
  const std::string a = (scratch_dir() / "sim_a.csv").string();
  const std::string b = (scratch_dir() / "sim_b.csv").string();
  const std::string truth = (scratch_dir() / "truth.json").string();
  REQUIRE(cli({"simulate", "--sites", "7", "--per-site", "200", "--seed", "42", "--out", a, "--truth-out", truth})
              .code == 0);
  REQUIRE(cli({"simulate", "--sites", "7", "--per-site", "200", "--seed", "42", "--out", b}).code == 0);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(a) == read_file(kFixture));

  const lrvb::app::RunConfig cfg = lrvb::app::load_config(truth);
  REQUIRE(cfg.truth.has_value());
  CHECK(cfg.truth->num_sites() == 7);
  CHECK(cfg.seed == 42);
  // Re-simulating from the recorded truth with fixed site effects reproduces the data.
  const std::string c = (scratch_dir() / "sim_c.csv").string();
  REQUIRE(cli({"simulate", "--sites", "7", "--per-site", "200", "--seed", "42", "--truth", truth, "--out", c}).code == 0);
  const auto da = lrvb::read_dataset_csv_file(a);
  const auto dc = lrvb::read_dataset_csv_file(c);
  REQUIRE(da.size() == dc.size());
  for (std::size_t k = 0; k < 7; ++k) {
    const double ta = da.summaries()[k].treated.mean - da.summaries()[k].control.mean;
    const double tc = dc.summaries()[k].treated.mean - dc.summaries()[k].control.mean;
    CHECK(std::abs(ta - tc) <= 1.0);
  }
  CHECK(cli({"simulate", "--sites", "3", "--truth", truth}).code == 2);
}

TEST_CASE("csv output and --out") {
  const std::string path = (scratch_dir() / "fit.csv").string();
  const Result r = cli({"fit", kConjData, "--config", kConjConfig, "--format", "csv", "--out", path});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  CHECK(r.err.empty());
  const std::string text = read_file(path);
  CHECK(text.rfind("name,mean,mfvb_sd,lrvb_sd\ntheta,0.5", 0) == 0);
}

TEST_CASE("help and missing subcommands") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 2);
  CHECK(cli({"fit"}).code == 2);
}
