#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(LITSIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / ("litsim_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TEST(Cli, SimulateEvaluateAndRerun) {
  const auto d = fresh_dir("pipeline");
  const std::string s = (d / "scenario").string();
  ASSERT_EQ(run("synth cut-in --out-dir " + s), 0);
  const std::string common = " --log " + s + "/log.csv --map " + s + "/map.json";
  ASSERT_EQ(run("simulate --config " + s + "/scenario.cfg" + common + " --out-dir " + (d / "run").string()), 0);
  ASSERT_TRUE(fs::exists(d / "run" / "seg_000" / "trace.csv"));
  ASSERT_TRUE(fs::exists(d / "run" / "manifest.json"));

  ASSERT_EQ(run("rerun --manifest " + (d / "run" / "manifest.json").string() + " --out " + (d / "again").string()), 0);
  EXPECT_EQ(slurp(d / "run" / "seg_000" / "trace.csv"), slurp(d / "again" / "seg_000" / "trace.csv"));
  EXPECT_EQ(slurp(d / "run" / "seg_000" / "audit.csv"), slurp(d / "again" / "seg_000" / "audit.csv"));

  ASSERT_EQ(run("evaluate --traces " + (d / "run").string() + common + " --out " + (d / "report.json").string()), 0);
  const auto report = nlohmann::json::parse(slurp(d / "report.json"));
  EXPECT_EQ(report.at("metrics").at("collision_rate").get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(d / "report_scenarios.csv"));
}

TEST(Cli, DisableTakeoverReproducesTheCollision) {
  const auto d = fresh_dir("baseline");
  const std::string s = (d / "scenario").string();
  ASSERT_EQ(run("synth cut-in --out-dir " + s), 0);
  const std::string common = " --log " + s + "/log.csv --map " + s + "/map.json";
  ASSERT_EQ(run("simulate --config " + s + "/scenario.cfg --disable-takeover" + common + " --out-dir " + (d / "run").string()), 0);
  ASSERT_EQ(run("evaluate --traces " + (d / "run").string() + common + " --out " + (d / "report.json").string()), 0);
  const auto report = nlohmann::json::parse(slurp(d / "report.json"));
  EXPECT_GT(report.at("metrics").at("collision_rate").get<double>(), 0.0);
}

TEST(Cli, ExitCodes) {
  const auto d = fresh_dir("errors");
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("simulate --no-such-flag"), 3);
  EXPECT_EQ(run("simulate --out-dir " + d.string()), 3);

  std::ofstream(d / "bad.csv") << "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Length,v_Width,v_Vel,Lane_ID\n"
                               << "1,5,0,6,15,6,30,1\n1,4,3,6,15,6,30,1\n";
  ASSERT_EQ(run("synth cut-in --out-dir " + (d / "s").string()), 0);
  EXPECT_EQ(run("import --ngsim " + (d / "bad.csv").string() + " --map " + (d / "s" / "map.json").string() +
                " --out " + (d / "out.csv").string()),
            2);
  std::ofstream(d / "nocol.csv") << "Vehicle_ID,Frame_ID,Local_X\n1,1,0\n";
  EXPECT_EQ(run("import --ngsim " + (d / "nocol.csv").string() + " --map " + (d / "s" / "map.json").string() +
                " --out " + (d / "out.csv").string()),
            2);
}

}  // namespace
