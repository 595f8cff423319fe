#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "h2coord/cli.hpp"

using namespace h2coord::cli;
namespace fs = std::filesystem;

namespace {

const char* kScalar = R"({
  "A": [[-1]], "Bw": [[1]], "Bu": [[1]], "Cz": [[1], [0]], "Dzu": [[0], [1]],
  "nu": 3, "mu": [1, 1, 1],
  "constraint": {"kind": "delay", "h": 0.5},
  "sim": {"dt": 0.01, "T": 40, "disturbance": {"kind": "impulse", "agent": 1, "channel": 1}}
})";

const char* kPlatoon = R"({
  "sim": {"dt": 0.01, "T": 10, "disturbance": {"kind": "none"}},
  "platoon": {"nu": 4, "kappa0": 1, "kappa1": 2, "q1": 1, "q2": 0.5, "delta": [-3, -1, 1, 3],
              "h": 0.2, "reference": {"kind": "sinusoid", "amplitude": 2, "frequency": 0.7},
              "p0": [-3.5, -0.2, 1.3, 2.7]}
})";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("h2coord_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  int call(std::vector<std::string> args) {
    std::vector<const char*> argv{"h2coord"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str({});
    err_.str({});
    return run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  std::string read(const std::string& name) {
    std::ifstream in(dir_ / "out" / name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::vector<std::string> data_lines(const std::string& name) {
    std::istringstream is(read(name));
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && line[0] != '#') lines.push_back(line);
    }
    return lines;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

nlohmann::json doc(const char* text) { return nlohmann::json::parse(text); }

double column(const std::string& row, int k) {
  std::istringstream is(row);
  std::string cell;
  for (int i = 0; i <= k; ++i) std::getline(is, cell, ',');
  return std::stod(cell);
}

}  // namespace

TEST(Config, RoundTrip) {
  ProblemConfig c = parse_config(doc(kScalar));
  c.sweep_h = std::vector<double>{0.1, 0.5, 1.0 / 3.0};
  c.sim.disturbance.kind = "waveform";
  c.sim.disturbance.samples = {{{0.1, 0.2, 0.3}}, {{0.4, 0.5, 0.6}}};
  c.platoon = parse_config(doc(kPlatoon)).platoon;
  const ProblemConfig back = parse_config(to_json(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.allow_singular_Bw = true;
  EXPECT_NE(config_hash(back), config_hash(c));
}

TEST(Config, Diagnostics) {
  try {
    parse_config_text("{\n  \"A\": [[-1]],\n  \"nu\": 3,,\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  auto j = doc(kScalar);
  j["sim"]["dtt"] = 1;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = doc(kScalar);
  j["mu"] = {1, 1};
  try {
    parse_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.where(), "mu");
  }
  j = doc(kScalar);
  j["constraint"]["kind"] = "bandwidth";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = doc(kScalar);
  j["Cz"] = {{1, 2}, {0}};
  EXPECT_THROW(parse_config(j), ConfigError);
  j = doc(kScalar);
  j.erase("Bu");
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST_F(CliTest, ValidatePassesForScalar) {
  const auto cfg = write("s1.json", kScalar);
  EXPECT_EQ(call({"validate", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 0);
  const std::string csv = read("validate.csv");
  EXPECT_EQ(csv.rfind("# h2coord ", 0), 0u);
  EXPECT_NE(csv.find("config="), std::string::npos);
  EXPECT_NE(csv.find("assumption,required,passed,diagnostic"), std::string::npos);
}

TEST_F(CliTest, ValidateZeroWeightCitesA3) {
  auto j = doc(kScalar);
  j["mu"] = {1, 0, 1};
  const auto cfg = write("zero.json", j.dump());
  EXPECT_EQ(call({"validate", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 1);
  EXPECT_NE(out_.str().find("A3"), std::string::npos);
}

TEST_F(CliTest, UsageAndParseFailuresExitTwo) {
  const auto bad = write("bad.json", "{ \"A\": [[-1]] ");
  EXPECT_EQ(call({"validate", "--config", bad.string()}), 2);
  EXPECT_EQ(call({"validate"}), 2);
  EXPECT_EQ(call({"frobnicate"}), 2);
  EXPECT_EQ(call({"analyze", "--config", (dir_ / "missing.json").string()}), 2);
}

TEST_F(CliTest, AnalyzeDelaySweepIncreases) {
  auto j = doc(kScalar);
  j["sweep"] = {{"h_values", {0.1, 0.5, 1.0}}};
  const auto cfg = write("sweep.json", j.dump());
  ASSERT_EQ(call({"analyze", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 0);
  const auto rows = data_lines("costs.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("h,gamma0_sq,gamma_opt_sq,gamma_alpha_sq,total_sq,agent1_sq", 0), 0u);
  double prev = 0.0;
  for (int k = 1; k <= 3; ++k) {
    const double g = column(rows[k], 3);
    EXPECT_GT(g, prev);
    EXPECT_LT(g, 0.5);
    prev = g;
  }
}

TEST_F(CliTest, AnalyzeOptHoldBeatsZoh) {
  auto j = doc(kScalar);
  double values[2];
  const char* kinds[] = {"zoh", "opthold"};
  for (int k = 0; k < 2; ++k) {
    j["constraint"] = {{"kind", kinds[k]}, {"h", 0.7}};
    j["sweep"] = {{"h_values", nlohmann::json::array()}};
    const auto cfg = write(std::string(kinds[k]) + ".json", j.dump());
    ASSERT_EQ(call({"analyze", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 0);
    const auto rows = data_lines("costs.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(column(rows[1], 0), 0.7);
    values[k] = column(rows[1], 3);
  }
  EXPECT_LE(values[1], values[0]);
}

TEST_F(CliTest, AnalyzeDomainFailureExitsOne) {
  auto j = doc(kScalar);
  j["A"] = {{1.0}};
  const auto cfg = write("unstable.json", j.dump());
  EXPECT_EQ(call({"analyze", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 1);
  EXPECT_NE(err_.str().find("A1"), std::string::npos);
}

TEST_F(CliTest, SimulateSummaryAndDeterminism) {
  auto j = doc(kScalar);
  j["constraint"] = {{"kind", "none"}, {"h", 0}};
  const auto cfg = write("sim.json", j.dump());
  ASSERT_EQ(call({"simulate", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 0);
  const auto rows = data_lines("summary.csv");
  ASSERT_GE(rows.size(), 5u);
  EXPECT_LE(column(rows[3], 1), 0.01);   // relative_error
  EXPECT_LE(column(rows[4], 1), 1e-9);   // constraint_residual
  EXPECT_EQ(read("trajectory.csv").find("t,agent,x1,u1,z1,z2,ubar1"),
            read("trajectory.csv").find('\n') + 1);

  j["sim"]["disturbance"] = {{"kind", "noise"}, {"seed", 5}, {"intensity", 1.0}};
  const auto noisy = write("noise.json", j.dump());
  ASSERT_EQ(call({"simulate", "--config", noisy.string(), "--out", (dir_ / "out").string(), "--seed", "11"}), 0);
  const std::string first = read("trajectory.csv");
  ASSERT_EQ(call({"simulate", "--config", noisy.string(), "--out", (dir_ / "out").string(), "--seed", "11"}), 0);
  EXPECT_EQ(first, read("trajectory.csv"));
  ASSERT_EQ(call({"simulate", "--config", noisy.string(), "--out", (dir_ / "out").string(), "--seed", "12"}), 0);
  EXPECT_NE(first, read("trajectory.csv"));
}

TEST_F(CliTest, PlatoonDemo) {
  const auto cfg = write("platoon.json", kPlatoon);
  ASSERT_EQ(call({"platoon", "--config", cfg.string(), "--out", (dir_ / "out").string()}), 0)
      << err_.str() << out_.str();
  const auto rows = data_lines("platoon_report.csv");
  EXPECT_EQ(rows[0], "t,eps_bar,max_formation_err,mean_thrust,u_residual");
  EXPECT_EQ(rows.size(), 1002u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "platoon_trajectory.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "platoon_summary.csv"));

  auto j = doc(kPlatoon);
  j["platoon"]["delta"] = {-3, -1, 1, 4};
  EXPECT_EQ(call({"platoon", "--config", write("bad.json", j.dump()).string(), "--out",
                  (dir_ / "out").string()}),
            1);

  j = doc(kPlatoon);
  j["platoon"]["nu"] = 2;
  j["platoon"]["delta"] = {-1, 1};
  j["platoon"].erase("p0");
  EXPECT_EQ(call({"platoon", "--config", write("two.json", j.dump()).string(), "--out",
                  (dir_ / "out").string()}),
            0);
}

TEST(Binary, ExitCodes) {
  const std::string bin = H2COORD_BINARY;
  int status = std::system((bin + " > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  status = std::system((bin + " --help > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(H2COORD_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().string());
    const ProblemConfig c = load_config(entry.path().string());
    EXPECT_TRUE(parse_config(to_json(c)) == c);
  }
}
