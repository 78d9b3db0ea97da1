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

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "twolane.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAssertion = 3;

void print_summary(const twolane::RunResult& res) {
  std::cout << "scenario " << res.scenario << " (" << res.hash << ")\n";
  for (const auto& r : res.runs)
    std::cout << "  " << r.label << ": delay " << r.summary.avg_delay_s << " s/veh, stops " << r.summary.avg_stops
              << ", travel time " << r.summary.total_travel_time_min << " min, solve "
              << r.mean_solve_ms / 1000.0 << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-lane store-and-forward traffic signal control"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> controllers;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::string out;
  bool trace = false, estimator = false;
  auto* run = app.add_subcommand("run", "simulate a scenario (or a manifest) with one or more controllers");
  run->add_option("config", config, "scenario or manifest JSON")->required();
  run->add_option("--controller", controllers, "controller label or type, repeatable");
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  auto* steps_opt = run->add_option("--steps", steps, "override the number of steps");
  run->add_option("--out", out, "output directory");
  run->add_flag("--solver-trace", trace, "write per-iteration solver residuals");
  run->add_flag("--estimator-log", estimator, "write coupling-estimate errors against the plant");

  std::vector<std::string> files;
  std::string ordering;
  auto* compare = app.add_subcommand("compare", "rank controllers across summary files");
  compare->add_option("files", files, "summary.csv files")->required();
  compare->add_option("--assert-ordering", ordering, "e.g. \"dmpc < max_pressure < fixed_time; avg_stops: dmpc < fixed\"");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a scenario without running it");
  validate->add_option("config", validate_path, "scenario JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto scenario = twolane::scenario_from_document(twolane::load_json_file(config));
      twolane::RunOptions opt;
      opt.controllers = controllers;
      if (*seed_opt) opt.seed = seed;
      if (*steps_opt) opt.steps = steps;
      opt.out = out;
      opt.solver_trace = trace;
      opt.estimator_log = estimator;
      print_summary(twolane::run_scenario(scenario, opt));
    } else if (*compare) {
      std::vector<std::filesystem::path> paths(files.begin(), files.end());
      const auto table = twolane::load_comparison(paths);
      twolane::print_comparison(std::cout, table);
      if (!ordering.empty()) {
        bool ok = true;
        for (const auto& c : twolane::check_ordering(table, ordering)) {
          std::cout << (c.ok ? "ok    " : "FAIL  ") << c.clause;
          if (!c.ok) std::cout << ": " << c.detail;
          std::cout << '\n';
          ok = ok && c.ok;
        }
        if (!ok) return kExitAssertion;
      }
    } else if (*validate) {
      const auto sc = twolane::load_scenario(validate_path);
      std::cout << sc.name << ": " << sc.topology.size() << " intersections, " << sc.topology.edges().size()
                << " edges, " << sc.topology.boundary_lanes().size() << " boundary lanes, "
                << sc.controllers.size() << " controllers\n";
    }
  } catch (const twolane::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
