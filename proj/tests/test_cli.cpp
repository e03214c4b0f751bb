// End-to-end checks of the drmww binary: exit codes, messages, outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Run {
  int status;
  std::string out;  // stdout and stderr merged
};

Run run(const std::string& args, bool merge_stderr = true) {
  std::string cmd = std::string(DRMWW_CLI_PATH) + " " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  Run r{-1, {}};
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t k;
  while ((k = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, k);
  int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(DRMWW_DATA_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_file(const std::string& name, const std::string& content) {
  auto p = fs::temp_directory_path() / ("drmww_cli_" + std::to_string(::getpid()) + "_" + name);
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST(Cli, FourRowMww) {
  auto r = run("estimate -i " + data("four_rows.csv") + " --estimator mww", false);
  ASSERT_EQ(r.status, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["n"], 4);
  EXPECT_DOUBLE_EQ(j["estimates"][0]["delta"].get<double>(), 0.75);
}

TEST(Cli, SingleArmIsEstimabilityError) {
  auto r = run("estimate -i " + data("single_arm.csv") + " --w w --estimator dr");
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.out.find("error[estimability]"), std::string::npos) << r.out;
}

TEST(Cli, BadTreatmentNamesRow) {
  auto r = run("estimate -i " + data("bad_z.csv"));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("row 3"), std::string::npos) << r.out;
}

TEST(Cli, MissingFileIsIoError) {
  auto r = run("estimate -i /nonexistent/nowhere.csv");
  EXPECT_EQ(r.status, 5);
  EXPECT_NE(r.out.find("error[io]"), std::string::npos) << r.out;
}

TEST(Cli, SimulateRequiresSeed) {
  auto r = run("simulate --table2 --n 20 --reps 2");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("seed"), std::string::npos) << r.out;
}

TEST(Cli, ZeroRepsRejected) {
  auto r = run("simulate --table2 --n 20 --reps 0 --seed 1");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("reps"), std::string::npos) << r.out;
}

TEST(Cli, UnknownScenarioFieldNamed) {
  auto p = temp_file("typo.json", R"({"seed": 3, "n": 30, "reps": 2, "sigma_2": 1.0})");
  auto r = run("simulate --scenario " + p.string());
  fs::remove(p);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("sigma_2"), std::string::npos) << r.out;
}

TEST(Cli, ScenarioWithoutSeedNeedsFlag) {
  auto p = temp_file("noseed.json", R"({"n": 30, "reps": 3, "estimators": ["mww"]})");
  auto bad = run("simulate --scenario " + p.string());
  auto good = run("simulate --scenario " + p.string() + " --seed 9", false);
  fs::remove(p);
  EXPECT_EQ(bad.status, 2);
  EXPECT_EQ(good.status, 0) << good.out;
}

TEST(Cli, SimulateDeterministic) {
  const std::string args = "simulate --table3 --n 40 --reps 12 --seed 5 --threads ";
  auto a = run(args + "1", false);
  auto b = run(args + "1", false);
  auto c = run(args + "4", false);
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
  auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["studies"].size(), 2u);
}

TEST(Cli, TableFormat) {
  auto r = run("simulate --table2 --n 30 --reps 5 --seed 2 --format table", false);
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("estimator"), std::string::npos);
  EXPECT_NE(r.out.find("%bias"), std::string::npos);
}

TEST(Cli, FixtureAllEstimators) {
  const fs::path in = data("confounded_rct.csv");
  const std::string before = slurp(in);
  auto r = run("estimate -i " + in.string() +
                   " --z treated --y outcome --w age,severity,comorbid,site --id id",
               false);
  ASSERT_EQ(r.status, 0) << r.out;
  auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["estimates"].size(), 4u);
  for (const auto& e : j["estimates"]) {
    EXPECT_GT(e["se"].get<double>(), 0.0);
    if (e["estimator"] != "mww") {
      const auto& cov = e["fit"]["covariance"];
      EXPECT_EQ(cov.size(), e["fit"]["parameters"].size());
    }
  }
  EXPECT_LT(j["estimates"][0]["test"]["p_value"].get<double>(), 0.05);  // mww, confounded
  EXPECT_GT(j["estimates"][3]["test"]["p_value"].get<double>(), 0.5);   // dr
  EXPECT_EQ(slurp(in), before);
}

TEST(Cli, OutputFile) {
  auto out = fs::temp_directory_path() / ("drmww_cli_out_" + std::to_string(::getpid()) + ".json");
  auto r = run("estimate -i " + data("four_rows.csv") + " --estimator mww -o " + out.string());
  ASSERT_EQ(r.status, 0) << r.out;
  auto j = nlohmann::json::parse(slurp(out));
  fs::remove(out);
  EXPECT_DOUBLE_EQ(j["estimates"][0]["delta"].get<double>(), 0.75);
}

TEST(Cli, BadOptionIsUsageError) {
  auto r = run("estimate -i " + data("four_rows.csv") + " --estimator nonsense");
  EXPECT_EQ(r.status, 2);
}
