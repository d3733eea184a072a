// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "identikit.h"

namespace {

std::string out_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / "identikit_test_capi" / name;
  std::filesystem::remove_all(d);
  return d.string();
}

ik_config* parse(const char* text) {
  ik_config* c = nullptr;
  REQUIRE(ik_config_parse(text, &c) == IK_OK);
  return c;
}

}  // namespace

TEST_CASE("errors carry status, exit code and message") {
  ik_config* c = nullptr;
  CHECK(ik_config_parse("{\"schema_version\": 1, \"model\": \"wtp\", \"bogus\": 0}", &c) == IK_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(ik_last_error()) == "config field 'bogus': unknown field");
  CHECK(ik_exit_code(IK_ERR_CONFIG) == 2);
  CHECK(ik_exit_code(IK_ERR_IDENTIFICATION) == 3);
  CHECK(ik_exit_code(IK_ERR_NUMERICAL) == 4);
  CHECK(ik_exit_code(IK_OK) == 0);
  CHECK(ik_config_parse(nullptr, &c) == IK_ERR_ARGUMENT);
  CHECK(ik_config_load("/nonexistent/config.json", &c) == IK_ERR_CONFIG);

  ik_config* unid = parse(R"({"schema_version": 1, "model": "circle_rc", "grid": {"coarse": 16, "fine": 32},
                              "functionals": ["cos2"]})");
  ik_run_options o;
  ik_run_options_init(&o);
  const std::string dir = out_dir("unid");
  o.out_dir = dir.c_str();
  o.simulate = 100;
  CHECK(ik_run("estimate", unid, &o) == IK_ERR_IDENTIFICATION);
  CHECK(std::string(ik_last_error()) == "functional not identified under this model");
  CHECK(ik_run("frobnicate", unid, &o) == IK_ERR_CONFIG);
  ik_config_free(unid);
}

TEST_CASE("operators through the C interface") {
  ik_config* c = parse(R"({"schema_version": 1, "model": "circle_rc", "grid": {"coarse": 16, "fine": 32}})");
  CHECK(std::string(ik_config_resolved(c)).find("\"model\": \"circle_rc\"") != std::string::npos);
  ik_operator* op = nullptr;
  REQUIRE(ik_operator_build(c, 1, &op) == IK_OK);
  size_t rows = 0, cols = 0;
  REQUIRE(ik_operator_shape(op, &rows, &cols) == IK_OK);
  CHECK(rows == 64);
  CHECK(cols == 32);

  std::vector<double> wd(cols), wc(rows);
  REQUIRE(ik_operator_weights(op, 0, wd.data(), cols) == IK_OK);
  REQUIRE(ik_operator_weights(op, 1, wc.data(), rows) == IK_OK);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> b(cols), g(rows), sb(rows), sg(cols);
  for (auto& v : b) v = z(rng);
  for (auto& v : g) v = z(rng);
  REQUIRE(ik_operator_apply(op, b.data(), cols, sb.data(), rows) == IK_OK);
  REQUIRE(ik_operator_apply_adjoint(op, g.data(), rows, sg.data(), cols) == IK_OK);
  double lhs = 0, rhs = 0, nsb = 0, ng = 0;
  for (size_t i = 0; i < rows; ++i) lhs += wc[i] * sb[i] * g[i], nsb += wc[i] * sb[i] * sb[i], ng += wc[i] * g[i] * g[i];
  for (size_t j = 0; j < cols; ++j) rhs += wd[j] * b[j] * sg[j];
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::sqrt(nsb * ng));
  CHECK(ik_operator_apply(op, b.data(), cols - 1, sb.data(), rows) == IK_ERR_ARGUMENT);

  size_t count = 0;
  std::vector<double> sv(4);
  REQUIRE(ik_operator_singular_values(op, sv.data(), sv.size(), &count) == IK_OK);
  CHECK(count == 32);
  CHECK(sv[0] == doctest::Approx(1.0));
  CHECK(sv[1] <= sv[0]);

  const std::string dir = out_dir("op");
  std::filesystem::create_directories(dir);
  const std::string file = dir + "/op.ikop";
  REQUIRE(ik_operator_save(op, file.c_str()) == IK_OK);
  ik_operator* back = nullptr;
  REQUIRE(ik_operator_load(file.c_str(), &back) == IK_OK);
  std::vector<double> sb2(rows);
  REQUIRE(ik_operator_apply(back, b.data(), cols, sb2.data(), rows) == IK_OK);
  CHECK(sb2 == sb);
  CHECK(ik_operator_load((dir + "/missing.ikop").c_str(), &back) == IK_ERR_IO);
  ik_operator_free(back);
  ik_operator_free(op);
  ik_config_free(c);
}

TEST_CASE("commands write their files") {
  ik_config* c = parse(R"({"schema_version": 1, "model": "wtp", "grid": {"coarse": 16, "fine": 32},
                           "functionals": ["mean"], "rates": {"ns": [100, 400, 1600], "reps": 1},
                           "estimate": {"simulate": 2000}, "seed": 5})");
  ik_run_options o;
  ik_run_options_init(&o);
  o.threads = 2;
  for (const char* cmd : {"diagnose", "estimate", "rates", "dump-operator"}) {
    const std::string dir = out_dir(cmd);
    o.out_dir = dir.c_str();
    INFO(std::string(cmd));
    const ik_status st = ik_run(cmd, c, &o);
    INFO(std::string(ik_last_error()));
    REQUIRE(st == IK_OK);
    const std::string res = ik_last_result();
    CHECK(res.find("\"files\"") != std::string::npos);
    CHECK_FALSE(std::filesystem::is_empty(dir));
  }
  // A single replication leaves the RMSE standard errors unavailable.
  std::ifstream f(std::filesystem::path(out_dir("probe")).parent_path() / "rates" / "rates.csv");
  std::string header, first;
  std::getline(f, header);
  std::getline(f, first);
  CHECK(first.find("NA") != std::string::npos);

  // The WTP mean mode needs a perturbation too large to stay a density.
  const std::string pdir = out_dir("wtp_path");
  o.out_dir = pdir.c_str();
  CHECK(ik_run("path", c, &o) == IK_ERR_NUMERICAL);
  CHECK(std::string(ik_last_error()) == "path leaves the model");
  ik_config_free(c);

  ik_config* s = parse(R"({"schema_version": 1, "model": "synthetic_sequence", "functionals": ["matched"],
                           "path": {"functional": "matched", "ts": [0.5, 0.25]}})");
  const std::string sdir = out_dir("path");
  o.out_dir = sdir.c_str();
  REQUIRE(ik_run("path", s, &o) == IK_OK);
  CHECK(std::filesystem::exists(sdir + "/path.json"));
  CHECK(std::string(ik_last_result()).find("path.csv") != std::string::npos);
  ik_config_free(s);
}
