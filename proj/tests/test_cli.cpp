/*
 Copyright 2026 The steer Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "steer/cli/app.hpp"
#include "test_helpers.hpp"

namespace steer::cli {
namespace {

namespace fs = std::filesystem;

const fs::path kConfigs = fs::path(STEER_SOURCE_DIR) / "configs";

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("steer_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

int run(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "steer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

const char* kMinimal = R"(
[problem]
A = [[0.0]]
B = [[1.0]]
Sigma0 = [[2.0]]
SigmaT = [[0.25]]
T = 1
)";

TEST(ConfigTest, ParsesReferenceConfig) {
  const auto cfg = parse_config((kConfigs / "inertial_s1.toml").string());
  EXPECT_EQ(cfg.problem.A, testing::mat({{0, 1}, {0, 0}}));
  EXPECT_EQ(cfg.problem.B, testing::mat({{0}, {1}}));
  EXPECT_EQ(cfg.problem.Sigma0, 2.0 * testing::eye(2));
  EXPECT_EQ(cfg.problem.T, 1.0);
  EXPECT_EQ(cfg.numeric.N, 100u);
  EXPECT_EQ(cfg.method, "sdp");
  const auto p = cfg.make_problem();
  EXPECT_EQ(p.S(0.0), testing::eye(2));
}

TEST(ConfigTest, DefaultsAndIntegerNumbers) {
  const auto cfg = parse_config_string(kMinimal);
  EXPECT_EQ(cfg.problem.T, 1.0);
  EXPECT_EQ(cfg.problem.S.size(), 0);
  EXPECT_EQ(cfg.make_problem().S(0.0), testing::mat({{0}}));
  EXPECT_EQ(cfg.output.directory, "out");
  EXPECT_FALSE(cfg.numeric.max_iters.has_value());
}

TEST(ConfigTest, StrictParsing) {
  const std::string base = kMinimal;
  EXPECT_THROW(parse_config_string(base + "Q = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[extra]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[numeric]\nsteps = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[numeric]\nN = 2.5\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[numeric]\nN = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[method]\nname = \"newton\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[output]\nformats = [\"xml\"]\n"), ConfigError);
  EXPECT_THROW(parse_config_string(base + "[pde]\nstencil = \"central\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[problem]\nA = [[0, 1], [0]]\nB = [[1]]\nSigma0 = [[1]]\n"
                                   "SigmaT = [[1]]\nT = 1\n"),
               ConfigError);
  EXPECT_THROW(parse_config_string("[problem]\nA = [[0]]\nB = [[1]]\nSigma0 = [[1]]\nT = 1\n"),
               ConfigError);
  EXPECT_THROW(parse_config_string("[problem]\nA = [[\"a\"]]\nB = [[1]]\nSigma0 = [[1]]\n"
                                   "SigmaT = [[1]]\nT = 1\n"),
               ConfigError);
  EXPECT_THROW(parse_config_string("[problem\n"), ConfigError);
  EXPECT_THROW(parse_config("/nonexistent/steer.toml"), ConfigError);
}

TEST(IoTest, DoubleFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    const std::string s = format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(format_double(1.0), "1");
}

TEST(IoTest, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(IoTest, AtomicWriteReplacesWithoutLeftovers) {
  TempDir dir;
  const auto p = dir.path() / "a.txt";
  write_atomic(p, "one\n");
  write_atomic(p, "two\n");
  EXPECT_EQ(slurp(p), "two\n");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path())) (void)e, ++files;
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(write_atomic(dir.path() / "missing" / "b.txt", "x"), IoError);
}

TEST(IoTest, GainScheduleRoundTripIsBitwise) {
  TempDir dir;
  const auto p = testing::inertial_problem(1.0);
  const auto gains = sdp::solve(sdp::discretize(p, 100)).gains();
  write_atomic(dir.path() / "gains.csv", gains_table(gains).str());
  const auto back = gains_from_table(read_csv(dir.path() / "gains.csv"), 1, 2, 1.0);
  EXPECT_TRUE(back.grid == gains.grid);
  ASSERT_EQ(back.K.size(), gains.K.size());
  for (std::size_t k = 0; k < gains.K.size(); ++k) EXPECT_EQ(back.K[k], gains.K[k]);
  EXPECT_THROW(gains_from_table(read_csv(dir.path() / "gains.csv"), 1, 3, 1.0), IoError);
}

TEST(IoTest, ReadCsvRejectsMalformedRows) {
  TempDir dir;
  EXPECT_THROW(read_csv(write_file(dir.path(), "a.csv", "t,k1\n0,1,2\n")), IoError);
  EXPECT_THROW(read_csv(write_file(dir.path(), "b.csv", "t,k1\n0,abc\n")), IoError);
  EXPECT_THROW(read_csv(write_file(dir.path(), "c.csv", "")), IoError);
}

TEST(CliTest, SdpWritesSchemasAndManifest) {
  TempDir dir;
  const auto out = dir.path() / "run";
  ASSERT_EQ(run({"steer-sdp", "--config", (kConfigs / "inertial_s1.toml").string(), "--out",
                 out.string()}),
            0);
  const auto gains = read_csv(out / "gains.csv");
  EXPECT_EQ(gains.header, (std::vector<std::string>{"t", "k1", "k2"}));
  EXPECT_EQ(gains.rows.size(), 100u);
  const auto cov = read_csv(out / "covariance.csv");
  EXPECT_EQ(cov.header, (std::vector<std::string>{"t", "sigma11", "sigma12", "sigma22"}));
  EXPECT_EQ(cov.rows.size(), 101u);
  EXPECT_EQ(cov.rows.back()[1], 0.25);
  EXPECT_EQ(slurp(out / "gains.csv").find('\r'), std::string::npos);

  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  std::set<std::string> keys;
  for (const auto& [k, v] : m.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"config_sha256", "method", "n", "m", "N", "tol",
                                         "iterations", "residuals", "objective", "wall_ms",
                                         "status"}));
  EXPECT_EQ(m["status"], "converged");
  EXPECT_EQ(m["method"], "sdp");
  EXPECT_EQ(m["N"], 100);
  EXPECT_EQ(m["config_sha256"], sha256_hex(slurp(kConfigs / "inertial_s1.toml")));
  EXPECT_NEAR(m["objective"].get<double>(), 9.227331568769, 1e-4);
}

TEST(CliTest, StructuralErrorWritesNothing) {
  TempDir dir;
  const auto out = dir.path() / "bad";
  EXPECT_EQ(run({"validate", "--config", (kConfigs / "bad_dims.toml").string(), "--out", out.string()}), 1);
  EXPECT_EQ(run({"steer-sdp", "--config", (kConfigs / "bad_dims.toml").string(), "--out", out.string()}), 1);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run({"steer-sdp", "--config", (dir.path() / "none.toml").string(), "--out", out.string()}), 1);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run({"steer-sdp"}), 1);
  EXPECT_EQ(run({"frobnicate", "--config", "x"}), 1);
}

TEST(CliTest, ValidateReportsChecks) {
  std::string text;
  EXPECT_EQ(run({"validate", "--config", (kConfigs / "inertial_s1.toml").string()}, &text), 0);
  EXPECT_NE(text.find("pass controllability_rank"), std::string::npos);
  TempDir dir;
  const auto cfg = write_file(dir.path(), "unctrl.toml",
                              "[problem]\nA = [[0.0]]\nB = [[0.0]]\nSigma0 = [[2.0]]\n"
                              "SigmaT = [[0.25]]\nT = 1\n");
  EXPECT_EQ(run({"validate", "--config", cfg.string()}, &text), 1);
  EXPECT_NE(text.find("FAIL controllability_rank"), std::string::npos);
}

TEST(CliTest, NonConvergenceExitsTwoWithManifest) {
  TempDir dir;
  const auto cfg = write_file(dir.path(), "cap.toml",
                              std::string(kMinimal) + "[numeric]\nN = 50\nmax_iters = 3\n");
  const auto out = dir.path() / "cap";
  EXPECT_EQ(run({"steer-sdp", "--config", cfg.string(), "--out", out.string()}), 2);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["status"], "iteration-cap");
  EXPECT_EQ(m["iterations"], 3);
  EXPECT_GT(m["residuals"]["primal"].get<double>(), 0.0);

  const auto out2 = dir.path() / "cap2";
  EXPECT_EQ(run({"steer-riccati", "--config", cfg.string(), "--out", out2.string(), "--tol", "1e-300"}), 2);
  const auto m2 = nlohmann::json::parse(slurp(out2 / "manifest.json"));
  EXPECT_EQ(m2["status"], "not-converged");
  EXPECT_FALSE(fs::exists(out2 / "gains.csv"));
}

TEST(CliTest, SimulateFromGainsFile) {
  TempDir dir;
  const auto cfg = (kConfigs / "inertial_s1.toml").string();
  const auto sdp_out = dir.path() / "sdp";
  ASSERT_EQ(run({"steer-sdp", "--config", cfg, "--out", sdp_out.string()}), 0);
  const auto sim_out = dir.path() / "sim";
  ASSERT_EQ(run({"simulate", "--config", cfg, "--gains", (sdp_out / "gains.csv").string(), "--paths",
                 "100", "--seed", "7", "--out", sim_out.string()}),
            0);
  const auto paths = read_csv(sim_out / "paths.csv");
  EXPECT_EQ(paths.header, (std::vector<std::string>{"path_id", "t", "x1", "x2", "u1"}));
  EXPECT_EQ(paths.rows.size(), 100u * 101u);
  EXPECT_EQ(paths.rows.back()[0], 99.0);
  EXPECT_EQ(paths.rows.back()[1], 1.0);

  const auto again = dir.path() / "sim2";
  ASSERT_EQ(run({"simulate", "--config", cfg, "--gains", (sdp_out / "gains.csv").string(), "--paths",
                 "100", "--seed", "7", "--out", again.string()}),
            0);
  EXPECT_EQ(slurp(sim_out / "paths.csv"), slurp(again / "paths.csv"));
  EXPECT_EQ(run({"simulate", "--config", cfg, "--gains", (dir.path() / "nope.csv").string(), "--out",
                 (dir.path() / "sim3").string()}),
            1);
  EXPECT_FALSE(fs::exists(dir.path() / "sim3"));
}

TEST(CliTest, RiccatiAndPdeRuns) {
  TempDir dir;
  const auto cfg = (kConfigs / "scalar_bridge.toml").string();
  const auto ric = dir.path() / "ric";
  ASSERT_EQ(run({"steer-riccati", "--config", cfg, "--out", ric.string()}), 0);
  const auto table = read_csv(ric / "riccati.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"t", "pi11", "h11", "c", "chat"}));
  EXPECT_NEAR(table.rows.front()[1], (10.0 - std::sqrt(12.0)) / 8.0, 1e-6);
  const auto cov = read_csv(ric / "covariance.csv");
  EXPECT_NEAR(cov.rows.back()[1], 0.25, 1e-6);

  const auto pde_out = dir.path() / "pde";
  ASSERT_EQ(run({"steer-pde", "--config", cfg, "--out", pde_out.string()}), 0);
  const auto m = nlohmann::json::parse(slurp(pde_out / "manifest.json"));
  EXPECT_EQ(m["status"], "converged");
  EXPECT_LE(m["residuals"]["terminal_l1"].get<double>(), 5e-2);
  EXPECT_NEAR(m["objective"].get<double>(), 1.1080744558667275, 0.02);
  EXPECT_EQ(read_csv(pde_out / "control.csv").rows.size(), 200u * 201u);
}

TEST(CliTest, JsonFormatMirrorsTables) {
  TempDir dir;
  const auto cfg = write_file(dir.path(), "j.toml",
                              std::string(kMinimal) + "[numeric]\nN = 20\n[output]\nformats = [\"json\"]\n");
  const auto out = dir.path() / "j";
  ASSERT_EQ(run({"steer-sdp", "--config", cfg.string(), "--out", out.string()}), 0);
  EXPECT_FALSE(fs::exists(out / "gains.csv"));
  const auto j = nlohmann::json::parse(slurp(out / "results.json"));
  EXPECT_EQ(j["gains"]["rows"].size(), 20u);
  EXPECT_EQ(j["covariance"]["columns"][1], "sigma11");
}

}  // namespace
}  // namespace steer::cli
