/**
 * Copyright 2026, The twolane Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License"); you may not
 * use this file except in compliance with the License. You may obtain a copy of
 * the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
 * WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
 * License for the specific language governing permissions and limitations under
 * the License.
 */

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"

using namespace twolane;
using namespace twolane::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("twolane_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

ComparisonTable synthetic(const std::vector<std::pair<std::string, double>>& delays) {
  std::stringstream csv;
  csv << kSummaryHeader << '\n';
  for (const auto& [label, d] : delays) {
    KpiSummary k;
    k.avg_delay_s = d;
    k.avg_stops = d / 100.0;
    write_summary_row(csv, "s", "h", label, k);
  }
  const fs::path dir = scratch("synthetic_" + delays.front().first);
  fs::create_directories(dir);
  std::ofstream(dir / "summary.csv") << csv.str();
  return load_comparison({dir / "summary.csv"});
}

}  // namespace

TEST(Harness, EmptyFixedTimeRunIsAllZero) {
  const auto sc = parse_scenario(isolated_intersection());
  RunOptions opt;
  opt.controllers = {"fixed_time"};
  opt.steps = 1;
  const auto res = run_scenario(sc, opt);
  ASSERT_EQ(res.runs.size(), 1u);
  const auto& k = res.runs[0].summary;
  EXPECT_EQ(k.steps, 1u);
  EXPECT_EQ(k.avg_delay_s, 0.0);
  EXPECT_EQ(k.avg_stops, 0.0);
  EXPECT_EQ(k.total_travel_time_min, 0.0);
  EXPECT_EQ(k.avg_density, 0.0);
  EXPECT_EQ(k.vehicles_served, 0.0);
}

TEST(Harness, GridRunWritesOneRowPerController) {
  const auto sc = load("grid_2x3");
  RunOptions opt;
  opt.steps = 6;
  opt.out = scratch("grid");
  opt.solver_trace = true;
  const auto res = run_scenario(sc, opt);
  ASSERT_EQ(res.runs.size(), 5u);
  std::ifstream in(opt.out / "summary.csv");
  const auto rows = read_summary(in);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.scenario, sc.name);
    EXPECT_EQ(r.config_hash, res.hash);
    EXPECT_EQ(r.get("steps"), 6.0);
    EXPECT_TRUE(fs::exists(opt.out / r.controller / "flows.csv"));
    EXPECT_EQ(line_count(opt.out / r.controller / "steps.csv"), 7u);
  }
  EXPECT_GT(line_count(opt.out / "dmpc_admm" / "solver_trace.csv"), 1u);
  EXPECT_TRUE(fs::exists(opt.out / "manifest.json"));
  for (const auto& run : res.runs) {
    EXPECT_LT(run.max_cycle_gap, 1e-9);
    EXPECT_EQ(run.max_box_violation, 0.0);
    EXPECT_LT(run.summary.max_conservation_error, 1e-9);
  }
}

TEST(Harness, RepeatedRunsAreByteIdentical) {
  const auto sc = load("grid_2x3");
  RunOptions opt;
  opt.steps = 8;
  opt.controllers = {"max_pressure", "dmpc_admm"};
  opt.estimator_log = true;
  opt.out = scratch("repeat_a");
  run_scenario(sc, opt);
  const fs::path a = opt.out;
  opt.out = scratch("repeat_b");
  run_scenario(sc, opt);
  const fs::path b = opt.out;
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.rfind("timing", 0) == 0) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << name;
    ++compared;
  }
  EXPECT_GE(compared, 9u);
}

TEST(Harness, ManifestReproducesTheRun) {
  const auto sc = load("corridor_1x2");
  RunOptions opt;
  opt.steps = 5;
  opt.seed = 11;
  opt.controllers = {"dmpc_admm"};
  const auto first = run_scenario(sc, opt);
  const auto again = scenario_from_document(first.manifest);
  EXPECT_EQ(again.seed, 11u);
  EXPECT_EQ(again.steps, 5u);
  const auto second = run_scenario(again, RunOptions{{"dmpc_admm"}, {}, {}, {}, false, false});
  EXPECT_EQ(second.hash, first.hash);
  EXPECT_EQ(second.runs[0].summary.avg_delay_s, first.runs[0].summary.avg_delay_s);
  auto tampered = first.manifest;
  tampered["config"]["simulation"]["seed"] = 12;
  EXPECT_THROW(scenario_from_document(tampered), MalformedConfig);
}

TEST(Harness, ControllerSelection) {
  const auto sc = load("grid_2x3");
  const auto dm = select_controllers(sc, {"dmpc"});
  ASSERT_EQ(dm.size(), 1u);
  EXPECT_EQ(dm[0].label, "dmpc_admm");
  EXPECT_EQ(select_controllers(sc, {}).size(), 5u);
  EXPECT_THROW(select_controllers(sc, {"nonexistent"}), MalformedConfig);
  const auto bare = select_controllers(parse_scenario(isolated_intersection()), {"max_pressure"});
  ASSERT_EQ(bare.size(), 1u);
  EXPECT_EQ(bare[0].type, "max_pressure");
}

TEST(Compare, IdenticalSummariesTieAndFailStrictOrder) {
  const auto sc = load("corridor_1x2");
  RunOptions opt;
  opt.steps = 3;
  opt.controllers = {"fixed_time"};
  opt.out = scratch("tie_a");
  run_scenario(sc, opt);
  const fs::path a = opt.out / "summary.csv";
  opt.out = scratch("tie_b");
  run_scenario(sc, opt);
  // Wall-clock columns never tie; compare the KPIs alone.
  fs::remove(a.parent_path() / "timing_summary.csv");
  fs::remove(opt.out / "timing_summary.csv");
  const auto table = load_comparison({a, opt.out / "summary.csv"});
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[1].controller, "fixed_time#2");
  std::ostringstream printed;
  print_comparison(printed, table);
  EXPECT_EQ(printed.str().find("2. "), std::string::npos);
  const auto checks = check_ordering(table, "fixed_time < fixed_time#2");
  ASSERT_EQ(checks.size(), 1u);
  EXPECT_FALSE(checks[0].ok);
}

TEST(Compare, DifferentScenariosAreRejected) {
  const auto sc = load("corridor_1x2");
  RunOptions opt;
  opt.steps = 3;
  opt.controllers = {"fixed_time"};
  opt.out = scratch("mismatch_a");
  run_scenario(sc, opt);
  const fs::path a = opt.out / "summary.csv";
  opt.seed = 99;
  opt.out = scratch("mismatch_b");
  run_scenario(sc, opt);
  EXPECT_THROW(load_comparison({a, opt.out / "summary.csv"}), MismatchedScenario);
}

TEST(Compare, OrderingSpecifications) {
  const auto t = synthetic({{"dmpc_admm", 100.0}, {"max_pressure", 150.0}, {"fixed_time", 230.0}});
  const auto ok = check_ordering(t, "dmpc < max_pressure < fixed_time; avg_stops: dmpc < fixed");
  ASSERT_EQ(ok.size(), 2u);
  EXPECT_TRUE(ok[0].ok);
  EXPECT_TRUE(ok[1].ok);
  const auto bad = check_ordering(t, "fixed_time < dmpc");
  EXPECT_FALSE(bad[0].ok);
  EXPECT_NE(bad[0].detail.find("fixed_time"), std::string::npos);
  EXPECT_THROW(check_ordering(t, "nobody < dmpc"), MalformedConfig);
  EXPECT_THROW(check_ordering(t, "speed: dmpc < fixed_time"), MalformedConfig);
  EXPECT_THROW(check_ordering(t, "dmpc"), MalformedConfig);
  EXPECT_THROW(check_ordering(t, " ; "), MalformedConfig);
  const auto amb = synthetic({{"mpc_a", 1.0}, {"mpc_b", 2.0}});
  EXPECT_THROW(check_ordering(amb, "mpc < mpc_b"), MalformedConfig);
}

TEST(Config, ErrorsAreReported) {
  auto doc = scenario_json("grid_2x3");
  doc["simulation"]["cylce"] = 100;
  EXPECT_THROW(parse_scenario(doc), MalformedConfig);
  doc = scenario_json("grid_2x3");
  doc["controllers"].push_back({{"type", "telepathy"}});
  EXPECT_THROW(parse_scenario(doc), MalformedConfig);
  doc = scenario_json("grid_2x3");
  doc["simulation"]["u_min"] = 29;
  EXPECT_THROW(parse_scenario(doc), InfeasibleBox);
  doc = scenario_json("grid_2x3");
  doc["controllers"][3]["params"] = {{"rho_admm", -1.0}};
  EXPECT_THROW(parse_scenario(doc), InconsistentGraph);
  doc["controllers"][3]["params"] = {{"rho", 1.0}};
  EXPECT_THROW(parse_scenario(doc), MalformedConfig);
  EXPECT_THROW(load_scenario(scenario_path("does_not_exist")), MalformedConfig);
}
