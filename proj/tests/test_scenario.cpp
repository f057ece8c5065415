#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "tfm/scenario.hpp"

using namespace tfm;
using namespace tfm::scenario;

namespace {

const std::string kScenarioDir = std::string(TFM_SOURCE_DIR) + "/scenarios/";

// The failing member sits on line 7 of this text.
const char* kBadAlpha = R"({
  "name": "bad",
  "space": {"kind": "euclidean", "dim": 1},
  "transform": {
    "kind": "power",
    "params": {
      "alpha": 3.5
    }
  },
  "distribution": {"atoms": [{"point": [0], "weight": 1}]},
  "probes": {"points": [[1]]}
})";

std::string minimal(const std::string& checks, const std::string& probes = R"({"points": [[1], [-0.5]]})") {
  return R"({"name": "m", "seed": 3, "space": {"kind": "euclidean", "dim": 1},
    "transform": {"kind": "huber", "params": {"delta": 1}},
    "distribution": {"atoms": [{"point": [2], "weight": 0.5}, {"point": [-2], "weight": 0.5}]},
    "reference": [0], "probes": )" +
         probes + R"(, "checks": )" + checks + "}";
}

int line_of_error(const std::string& text) {
  try {
    const auto scs = parse_scenarios(text);
    for (const auto& sc : scs) run_scenario(sc);
  } catch (const io::SchemaError& e) {
    return e.line();
  }
  return -1;
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "tfm_test_scenario";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TFM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Row of the transform-curve figure at x, keyed by column name.
std::map<std::string, double> curve_row(double x) {
  std::ostringstream os;
  emit_figure_data(Figure::TransformCurves, os);
  std::istringstream in(os.str());
  std::string header, line;
  std::getline(in, header);
  std::vector<std::string> cols;
  std::stringstream hs(header);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::vector<double> vals;
    for (std::string c; std::getline(ls, c, ',');) vals.push_back(std::stod(c));
    if (vals.front() == x) {
      std::map<std::string, double> row;
      for (std::size_t i = 0; i < cols.size(); ++i) row[cols[i]] = vals[i];
      return row;
    }
  }
  return {};
}

}  // namespace

TEST(Scenario, BundledFilesLoadAndVerify) {
  for (const char* f : {"huber_example.json", "stickfigure_medians.json", "inequality_suite.json"}) {
    const auto scs = load_scenarios(kScenarioDir + f);
    ASSERT_FALSE(scs.empty()) << f;
    for (const auto& sc : scs) {
      const auto res = run_scenario(sc);
      EXPECT_FALSE(res.reports.empty()) << sc.name;
      EXPECT_TRUE(res.all_satisfied()) << sc.name;
    }
  }
}

TEST(Scenario, SerializationRoundTrips) {
  for (const char* f : {"huber_example.json", "stickfigure_medians.json", "inequality_suite.json"}) {
    const auto scs = load_scenarios(kScenarioDir + f);
    const std::string text = serialize(scs);
    const auto again = parse_scenarios(text);
    EXPECT_EQ(again, scs) << f;
    EXPECT_EQ(serialize(again), text) << f;
  }
}

TEST(Scenario, ErrorsPointAtTheOffendingLine) {
  EXPECT_EQ(line_of_error(kBadAlpha), 7);
  // unknown check id on line 3
  EXPECT_EQ(line_of_error("{\"name\": \"x\", \"space\": {\"kind\": \"euclidean\", \"dim\": 1},\n"
                          "\"transform\": {\"kind\": \"linear\"}, \"distribution\": {\"atoms\": [{\"point\": [0], \"weight\": 1}]},\n"
                          "\"probes\": {\"points\": [[1]]}, \"checks\": [\"nonsense\"]}"),
            3);
  // wrong coordinate count, found when the scenario is built
  EXPECT_EQ(line_of_error("{\"name\": \"x\", \"space\": {\"kind\": \"euclidean\", \"dim\": 2},\n"
                          "\"transform\": {\"kind\": \"linear\"},\n"
                          "\"distribution\": {\"atoms\": [{\"point\": [0], \"weight\": 1}]},\n"
                          "\"probes\": {\"points\": [[1, 2]]}}"),
            3);
  // unknown vertex name in a tree edge
  EXPECT_EQ(line_of_error("{\"name\": \"x\",\n\"space\": {\"kind\": \"tree\", \"vertices\": [\"a\", \"b\"],\n"
                          "\"edges\": [[\"a\", \"z\", 1]]},\n"
                          "\"transform\": {\"kind\": \"linear\"}, \"distribution\": {\"atoms\": [{\"point\": \"a\", \"weight\": 1}]},\n"
                          "\"probes\": {\"points\": [\"b\"]}}"),
            3);
  // malformed JSON
  EXPECT_EQ(line_of_error("{\n\"name\": \"x\",\n\"space\": {,\n}"), 3);
  try {
    parse_scenarios(kBadAlpha, "bad.json");
    FAIL();
  } catch (const io::SchemaError& e) {
    EXPECT_EQ(e.pointer(), "/transform/params/alpha");
    EXPECT_NE(std::string(e.what()).find("bad.json:7:"), std::string::npos) << e.what();
  }
}

TEST(Scenario, RunsAreDeterministicGivenTheSeed) {
  const auto sc = parse_scenarios(minimal(R"(["transformed_mean", "general_bounds"])", R"({"random": {"count": 12}})")).front();
  const auto a = run_scenario(sc), b = run_scenario(sc);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].lhs, b.reports[i].lhs);
    EXPECT_EQ(a.reports[i].rhs, b.reports[i].rhs);
    EXPECT_EQ(a.reports[i].digest, b.reports[i].digest);
  }
  RunOptions other;
  other.seed = 4;
  const auto c = run_scenario(sc, other);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_NE(c.instance.probes.front().coords()[0], a.instance.probes.front().coords()[0]);
}

TEST(Scenario, NoChecksMeansAProfile) {
  const auto res = run_scenario(parse_scenarios(minimal("[]")).front());
  EXPECT_TRUE(res.reports.empty());
  ASSERT_EQ(res.profile.size(), 2u);
  // Huber(1), atoms at +-2, reference 0: F(1) - F(0) = (0.5 + 2.5) / 2 - 1.5 = 0
  EXPECT_NEAR(res.profile[0].objective, 0.0, 1e-15);
  EXPECT_EQ(res.profile[0].distance_to_reference, 1.0);
}

TEST(Scenario, ViolatedExpectationIsReported) {
  const auto res = run_scenario(parse_scenarios(minimal(R"([{"id": "mean_set", "params": {"expect": {"point": [0]}}}])")).front());
  ASSERT_EQ(res.reports.size(), 1u);
  EXPECT_FALSE(res.reports.front().satisfied);  // the mean set is [-1, 1]
  EXPECT_FALSE(res.all_satisfied());
}

TEST(Scenario, TransformCurveRows) {
  const auto one = curve_row(1.0);
  ASSERT_FALSE(one.empty());
  EXPECT_EQ(one.at("huber1"), 0.5);
  EXPECT_EQ(one.at("d_huber1"), 1.0);
  EXPECT_NEAR(one.at("tau1.5"), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(one.at("tau2"), 0.5);
  EXPECT_EQ(one.at("tau1"), 1.0);
  const auto zero = curve_row(0.0);
  ASSERT_FALSE(zero.empty());
  for (const char* k : {"tau1", "tau1.5", "tau2", "huber1", "pseudo_huber1"}) EXPECT_EQ(zero.at(k), 0.0) << k;
}

TEST(Scenario, OutputsCarryTheReportColumns) {
  const auto res = run_scenario(load_scenarios(kScenarioDir + "huber_example.json").front());
  std::ostringstream os;
  write_reports_csv(os, {res});
  std::string header;
  std::getline(std::istringstream(os.str()) >> std::ws, header);
  EXPECT_EQ(header, "theorem_id,space_kind,tau_kind,lhs,rhs,margin,satisfied,seed");
  const auto j = result_json(res);
  EXPECT_EQ(j.at("name"), "huber_z0.5_delta1");
  EXPECT_TRUE(j.at("satisfied").get<bool>());
  EXPECT_FALSE(j.at("reports").empty());
}

TEST(ScenarioCli, ExitCodes) {
  EXPECT_EQ(run_cli("verify --scenario " + kScenarioDir + "huber_example.json --out -"), 0);
  EXPECT_EQ(run_cli("figure-data --which stickfigure --out -"), 0);
  const auto bad = temp_file("bad.json", kBadAlpha);
  EXPECT_EQ(run_cli("verify --scenario " + bad.string()), 1);
  EXPECT_EQ(run_cli("verify --scenario /nonexistent/x.json"), 1);
  EXPECT_EQ(run_cli("verify"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  const auto violated = temp_file("violated.json", minimal(R"([{"id": "mean_set", "params": {"expect": {"point": [0]}}}])"));
  EXPECT_EQ(run_cli("verify --scenario " + violated.string() + " --out -"), 2);
  // profile and mean report but never fail on margins
  EXPECT_EQ(run_cli("mean --scenario " + violated.string() + " --out -"), 0);
}

TEST(ScenarioCli, OutputIsIdenticalAcrossJobCounts) {
  const auto dir = std::filesystem::temp_directory_path() / "tfm_test_scenario";
  std::filesystem::create_directories(dir);
  const std::string in = kScenarioDir + "inequality_suite.json";
  ASSERT_EQ(run_cli("verify --scenario " + in + " --jobs 1 --format json --out " + (dir / "j1.json").string()), 0);
  ASSERT_EQ(run_cli("verify --scenario " + in + " --jobs 3 --format json --out " + (dir / "j3.json").string()), 0);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string a = slurp(dir / "j1.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "j3.json"));
}
