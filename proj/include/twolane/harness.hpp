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

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twolane/config.hpp"
#include "twolane/controllers/baselines.hpp"
#include "twolane/controllers/centralized.hpp"
#include "twolane/controllers/controller.hpp"
#include "twolane/controllers/mpc.hpp"
#include "twolane/errors.hpp"
#include "twolane/metrics.hpp"
#include "twolane/plant.hpp"

namespace twolane {

inline constexpr const char* kVersion = "0.1.0";

/// FNV-1a over the canonical dump (object keys sorted).
inline std::string config_hash(const json& doc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct RunOptions {
  std::vector<std::string> controllers;  // labels or types; empty runs every declared controller
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::filesystem::path out;  // empty: nothing is written
  bool solver_trace = false;
  bool estimator_log = false;
};

/// Everything recorded while one controller drove one plant.
struct ControllerRun {
  std::string label;
  std::string type;
  KpiSummary summary;
  std::vector<StepKpis> steps;
  std::vector<FlowRecord> records;
  std::vector<std::vector<ControllerOutput>> outputs;  // [step][intersection]
  std::vector<TraceRow> trace;
  double mean_step_ms = 0.0;   // controller wall time per step
  double mean_agent_ms = 0.0;  // per intersection and step
  double mean_solve_ms = 0.0;  // per intersection and step
  double max_cycle_gap = 0.0;  // max |Σu + Q − S|
  double max_box_violation = 0.0;
  std::size_t forecast_fallbacks = 0;
};

struct RunResult {
  std::string scenario;
  std::string hash;
  json manifest;
  std::vector<ControllerRun> runs;
};

inline std::unique_ptr<Controller> make_controller(const ControllerSpec& spec, const Scenario& sc, const Plant& plant) {
  TransferOracle oracle = [&plant](std::size_t i, std::size_t k) { return plant.true_transfer_matrix(i, k); };
  if (spec.type == "fixed_time") return std::make_unique<FixedTimeController>(sc.topology, sc.timing);
  if (spec.type == "max_pressure") {
    std::vector<std::vector<double>> sat;
    for (const auto& row : sc.plant.saturation) sat.emplace_back(row.begin(), row.end());
    return std::make_unique<MaxPressureController>(sc.topology, sc.timing, std::move(sat));
  }
  if (spec.type == "dmpc_admm")
    return std::make_unique<DistributedMpcController>(sc.topology, sc.timing, spec.params, ModelKind::lane,
                                                      spec.label, spec.params.oracle_coupling ? oracle : nullptr);
  if (spec.type == "mpc_road")
    return std::make_unique<DistributedMpcController>(sc.topology, sc.timing, spec.params, ModelKind::road,
                                                      spec.label, spec.params.oracle_coupling ? oracle : nullptr);
  if (spec.type == "centralized_ref")
    return std::make_unique<CentralizedController>(sc.topology, sc.timing, spec.params, oracle);
  throw MalformedConfig("unknown controller type '" + spec.type + "'");
}

/// Controllers selected by `wanted` (label, type or unique label prefix).
inline std::vector<ControllerSpec> select_controllers(const Scenario& sc, const std::vector<std::string>& wanted) {
  std::vector<ControllerSpec> all = sc.controllers;
  if (all.empty())
    for (const auto& t : controller_types()) all.push_back({t, t, MpcParams{}});
  if (wanted.empty()) return all;
  std::vector<ControllerSpec> out;
  for (const auto& w : wanted) {
    std::vector<const ControllerSpec*> hits;
    for (const auto& c : all)
      if (c.label == w) hits = {&c};
    if (hits.empty())
      for (const auto& c : all)
        if (c.type == w || c.label.rfind(w, 0) == 0) hits.push_back(&c);
    if (hits.empty()) {
      // A bare type not declared in the scenario runs with default parameters.
      const auto& types = controller_types();
      if (std::find(types.begin(), types.end(), w) == types.end())
        throw MalformedConfig("no controller matches '" + w + "'");
      out.push_back({w, w, MpcParams{}});
      continue;
    }
    for (const auto* h : hits)
      if (std::none_of(out.begin(), out.end(), [&](const auto& o) { return o.label == h->label; }))
        out.push_back(*h);
  }
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

}  // namespace detail

/// Drives one fresh plant with one controller for the configured horizon.
inline ControllerRun run_controller(const Scenario& sc, const ControllerSpec& spec, std::uint64_t seed,
                                    std::size_t steps, const RunOptions& opt = {}) {
  Plant plant(sc.topology, sc.plant, sc.timing, sc.demand, seed);
  ControllerSpec effective = spec;
  if (opt.solver_trace) effective.params.record_trace = true;
  auto ctrl = make_controller(effective, sc, plant);
  KpiAccumulator acc(sc.topology, sc.timing.cycle, sc.free_flow_kmh);
  ControllerRun run;
  run.label = spec.label;
  run.type = spec.type;
  const std::size_t n = sc.topology.size();
  std::vector<std::string> estimator_rows;
  auto* dmpc = dynamic_cast<DistributedMpcController*>(ctrl.get());

  double step_ms = 0.0, agent_ms = 0.0, solve_ms = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    Measurement meas;
    meas.step = plant.step();
    meas.counts = plant.state().counts;
    for (std::size_t i = 0; i < n; ++i) meas.outflow.push_back(plant.true_outflow_matrix(i, meas.step));

    const auto t0 = std::chrono::steady_clock::now();
    auto outs = ctrl->control(meas);
    step_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (outs.size() != n) throw ShapeMismatch(spec.label + " returned the wrong number of controls");

    std::vector<PhaseVector> controls;
    for (const auto& o : outs) {
      controls.push_back(o.u);
      run.max_cycle_gap = std::max(run.max_cycle_gap, std::abs(o.u.sum() + sc.timing.yellow - sc.timing.cycle));
      const double below = (sc.timing.u_min - o.u.array()).maxCoeff();
      const double above = (o.u.array() - sc.timing.u_max).maxCoeff();
      run.max_box_violation = std::max({run.max_box_violation, below, above});
      agent_ms += o.diag.agent_ms;
      solve_ms += o.diag.solve_ms;
      if (o.diag.forecast_fallback) ++run.forecast_fallbacks;
    }
    if (opt.estimator_log && dmpc)
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = dmpc->agent(i);
        const Matrix truth = a.model().aggregate * plant.true_transfer_matrix(i, meas.step);
        const Matrix& est = a.estimate().c_hat;
        const double tn = truth.norm();
        const auto [eb, ec] = a.ar_errors();
        std::ostringstream row;
        row << meas.step << ',' << i + 1 << ',' << format_double(est.norm()) << ',' << format_double(tn) << ','
            << format_double(tn > 0.0 ? (est - truth).norm() / tn : 0.0) << ',' << format_double(eb) << ','
            << format_double(ec);
        estimator_rows.push_back(row.str());
      }
    run.outputs.push_back(std::move(outs));
    for (auto& t : ctrl->take_trace()) run.trace.push_back(t);

    FlowRecord rec = plant.step(controls);
    run.steps.push_back(acc.add(rec));
    run.records.push_back(std::move(rec));
  }
  run.summary = acc.summary();
  const double ns = static_cast<double>(steps);
  run.mean_step_ms = step_ms / ns;
  run.mean_agent_ms = agent_ms / (ns * static_cast<double>(n));
  run.mean_solve_ms = solve_ms / (ns * static_cast<double>(n));

  if (!opt.out.empty()) {
    const auto dir = opt.out / run.label;
    std::filesystem::create_directories(dir);
    {
      auto os = detail::open_out(dir / "flows.csv");
      os << kFlowsHeader << '\n';
      for (const auto& r : run.records) write_flow_rows(os, r);
    }
    {
      auto os = detail::open_out(dir / "steps.csv");
      os << kStepsHeader << '\n';
      for (const auto& s : run.steps) write_step_row(os, s);
    }
    {
      auto os = detail::open_out(dir / "controls.csv");
      os << "step,intersection,u1,u2,u3,u4,sweeps,stop,forecast_fallback\n";
      for (std::size_t k = 0; k < run.outputs.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) {
          const auto& o = run.outputs[k][i];
          os << k << ',' << i + 1;
          for (std::size_t m = 0; m < kPhases; ++m) os << ',' << format_double(o.u(static_cast<Eigen::Index>(m)));
          os << ',' << o.diag.sweeps << ',' << to_string(o.diag.stop) << ',' << (o.diag.forecast_fallback ? 1 : 0)
             << '\n';
        }
    }
    {
      // Wall-clock numbers live only here so every other file is reproducible.
      auto os = detail::open_out(dir / "timing.csv");
      os << "step,intersection,agent_ms,solve_ms\n";
      for (std::size_t k = 0; k < run.outputs.size(); ++k)
        for (std::size_t i = 0; i < n; ++i)
          os << k << ',' << i + 1 << ',' << format_double(run.outputs[k][i].diag.agent_ms) << ','
             << format_double(run.outputs[k][i].diag.solve_ms) << '\n';
    }
    if (opt.solver_trace) {
      auto os = detail::open_out(dir / "solver_trace.csv");
      os << "step,intersection,iteration,primal_residual,dual_residual,objective\n";
      for (const auto& t : run.trace)
        os << t.step << ',' << t.intersection + 1 << ',' << t.entry.iteration << ','
           << format_double(t.entry.primal) << ',' << format_double(t.entry.dual) << ','
           << format_double(t.entry.objective) << '\n';
    }
    if (opt.estimator_log && dmpc) {
      auto os = detail::open_out(dir / "estimator.csv");
      os << "step,intersection,c_hat_norm,c_true_norm,relative_error,ar_error_b,ar_error_c\n";
      for (const auto& r : estimator_rows) os << r << '\n';
    }
  }
  return run;
}

/// Runs every selected controller on its own plant and writes results.
inline RunResult run_scenario(const Scenario& sc, const RunOptions& opt) {
  const std::uint64_t seed = opt.seed.value_or(sc.seed);
  const std::size_t steps = opt.steps.value_or(sc.steps);
  if (steps < 1) throw InconsistentGraph("run horizon must be at least 1 step");
  const auto specs = select_controllers(sc, opt.controllers);
  if (specs.empty()) throw MalformedConfig("no controllers to run");

  RunResult res;
  res.scenario = sc.name;
  json effective = sc.document;
  effective["simulation"]["seed"] = seed;
  effective["simulation"]["steps"] = steps;
  res.hash = config_hash(effective);
  res.manifest = {{"tool", "twolane"},
                  {"version", kVersion},
                  {"scenario", sc.name},
                  {"config_hash", res.hash},
                  {"seed", seed},
                  {"steps", steps},
                  {"controllers", json::array()},
                  {"config", effective}};
  for (const auto& s : specs) res.manifest["controllers"].push_back(s.label);

  for (const auto& spec : specs) {
    try {
      res.runs.push_back(run_controller(sc, spec, seed, steps, opt));
    } catch (const Error& e) {
      throw Error(sc.name + "/" + spec.label + ": " + e.what());
    }
  }

  if (!opt.out.empty()) {
    std::filesystem::create_directories(opt.out);
    {
      auto os = detail::open_out(opt.out / "summary.csv");
      os << kSummaryHeader << '\n';
      for (const auto& r : res.runs) write_summary_row(os, sc.name, res.hash, r.label, r.summary);
    }
    {
      auto os = detail::open_out(opt.out / "timing_summary.csv");
      os << "controller,mean_step_s,mean_agent_s,mean_solve_s\n";
      for (const auto& r : res.runs)
        os << r.label << ',' << format_double(r.mean_step_ms / 1000.0) << ','
           << format_double(r.mean_agent_ms / 1000.0) << ',' << format_double(r.mean_solve_ms / 1000.0) << '\n';
    }
    auto os = detail::open_out(opt.out / "manifest.json");
    os << res.manifest.dump(2) << '\n';
  }
  return res;
}

/// A scenario document, or a manifest that embeds one.
inline Scenario scenario_from_document(const json& doc) {
  if (doc.is_object() && doc.contains("config") && doc.contains("config_hash")) {
    const json& cfg = doc.at("config");
    if (config_hash(cfg) != doc.at("config_hash").get<std::string>())
      throw MalformedConfig("manifest config does not match its hash");
    return parse_scenario(cfg);
  }
  return parse_scenario(doc);
}

// ---- compare ----

/// Summary rows from several files with unique labels (name#2, name#3, …).
struct ComparisonTable {
  std::vector<SummaryRow> rows;
  std::vector<std::string> metrics;
};

inline ComparisonTable load_comparison(const std::vector<std::filesystem::path>& files) {
  ComparisonTable t;
  std::map<std::string, int> uses;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw MalformedConfig("cannot open " + f.string());
    auto rows = read_summary(in);
    std::map<std::string, double> timing;
    std::ifstream tin(f.parent_path() / "timing_summary.csv");
    std::string line;
    if (tin && std::getline(tin, line))
      while (std::getline(tin, line)) {
        const auto cells = split_csv_line(line);
        if (cells.size() == 4) timing[cells[0]] = std::stod(cells[1]);
      }
    for (auto& r : rows) {
      if (auto it = timing.find(r.controller); it != timing.end()) r.values.emplace_back("avg_computation_s", it->second);
      const int n = ++uses[r.controller];
      if (n > 1) r.controller += "#" + std::to_string(n);
      t.rows.push_back(std::move(r));
    }
  }
  if (t.rows.size() < 2) throw MalformedConfig("compare needs at least two summary rows");
  for (const auto& r : t.rows)
    if (r.scenario != t.rows.front().scenario || r.config_hash != t.rows.front().config_hash)
      throw MismatchedScenario("summaries come from different scenarios: " + t.rows.front().scenario + "@" +
                               t.rows.front().config_hash + " vs " + r.scenario + "@" + r.config_hash);
  for (const auto& [k, v] : t.rows.front().values) {
    (void)v;
    if (std::all_of(t.rows.begin(), t.rows.end(), [&](const SummaryRow& r) {
          return std::any_of(r.values.begin(), r.values.end(), [&](const auto& kv) { return kv.first == k; });
        }))
      t.metrics.push_back(k);
  }
  return t;
}

inline bool higher_is_better(const std::string& metric) {
  return metric == "avg_flow_veh_per_s" || metric == "avg_speed_proxy_kmh";
}

/// Ranked table per metric; equal values share a rank.
inline void print_comparison(std::ostream& os, const ComparisonTable& t) {
  for (const auto& metric : t.metrics) {
    if (metric == "steps" || metric == "max_conservation_error") continue;
    std::vector<std::pair<double, std::string>> col;
    for (const auto& r : t.rows) col.emplace_back(r.get(metric), r.controller);
    std::stable_sort(col.begin(), col.end(), [&](const auto& a, const auto& b) {
      return higher_is_better(metric) ? a.first > b.first : a.first < b.first;
    });
    os << metric << (higher_is_better(metric) ? " (higher is better)" : " (lower is better)") << '\n';
    std::size_t rank = 1;
    for (std::size_t p = 0; p < col.size(); ++p) {
      if (p > 0 && col[p].first != col[p - 1].first) rank = p + 1;
      os << "  " << rank << ". " << std::left << std::setw(20) << col[p].second << ' ' << format_double(col[p].first)
         << '\n';
    }
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

struct OrderingCheck {
  std::string clause;
  bool ok = false;
  std::string detail;
};

/// Checks clauses like "dmpc < max_pressure < fixed_time" separated by ';'.
/// A clause may start with "metric:" (default avg_delay_s). Names match a
/// label exactly or as a unique prefix. Every '<' is strict.
inline std::vector<OrderingCheck> check_ordering(const ComparisonTable& t, const std::string& spec) {
  std::vector<OrderingCheck> out;
  std::stringstream clauses(spec);
  std::string clause;
  while (std::getline(clauses, clause, ';')) {
    clause = trim(clause);
    if (clause.empty()) continue;
    std::string metric = "avg_delay_s";
    std::string chain = clause;
    if (auto colon = clause.find(':'); colon != std::string::npos) {
      metric = trim(clause.substr(0, colon));
      chain = clause.substr(colon + 1);
    }
    if (std::find(t.metrics.begin(), t.metrics.end(), metric) == t.metrics.end())
      throw MalformedConfig("ordering names unknown metric '" + metric + "'");
    std::vector<const SummaryRow*> seq;
    std::stringstream parts(chain);
    std::string name;
    while (std::getline(parts, name, '<')) {
      name = trim(name);
      const SummaryRow* hit = nullptr;
      for (const auto& r : t.rows)
        if (r.controller == name) hit = &r;
      if (!hit) {
        for (const auto& r : t.rows)
          if (r.controller.rfind(name, 0) == 0) {
            if (hit) throw MalformedConfig("ordering name '" + name + "' is ambiguous");
            hit = &r;
          }
      }
      if (!hit) throw MalformedConfig("ordering names unknown controller '" + name + "'");
      seq.push_back(hit);
    }
    if (seq.size() < 2) throw MalformedConfig("ordering clause '" + clause + "' needs at least two names");
    OrderingCheck c{clause, true, ""};
    for (std::size_t p = 0; p + 1 < seq.size(); ++p) {
      const double a = seq[p]->get(metric), b = seq[p + 1]->get(metric);
      if (!(a < b)) {
        c.ok = false;
        c.detail = seq[p]->controller + " (" + format_double(a) + ") is not below " + seq[p + 1]->controller + " (" +
                   format_double(b) + ") on " + metric;
        break;
      }
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw MalformedConfig("empty ordering");
  return out;
}

}  // namespace twolane
