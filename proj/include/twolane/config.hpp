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
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "twolane/controllers/controller.hpp"
#include "twolane/errors.hpp"
#include "twolane/plant.hpp"
#include "twolane/topology.hpp"

namespace twolane {

inline const std::vector<std::string>& controller_types() {
  static const std::vector<std::string> types{"fixed_time", "max_pressure", "mpc_road", "dmpc_admm",
                                              "centralized_ref"};
  return types;
}

struct ControllerSpec {
  std::string type;
  std::string label;  // defaults to type
  MpcParams params;
};

/// Everything one run needs, parsed and validated.
struct Scenario {
  explicit Scenario(NetworkTopology topo) : topology(std::move(topo)) {}

  std::string name = "scenario";
  json document;  // as loaded, for manifests
  NetworkTopology topology;
  PlantConfig plant;
  DemandProfile demand;
  SignalTiming timing;
  std::size_t steps = 60;
  std::uint64_t seed = 1;
  double free_flow_kmh = 50.0;
  std::vector<ControllerSpec> controllers;
};

namespace detail {

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw MalformedConfig(where + "." + key + " has the wrong type");
  }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw MalformedConfig(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw MalformedConfig(where + ": unknown field '" + key + "'");
  }
}

inline double positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw InconsistentGraph(what + " must be positive");
  return v;
}

template <class E>
E parse_enum(const json& obj, const char* key, E fallback, std::initializer_list<std::pair<const char*, E>> names,
             const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto s = get_or<std::string>(obj, key, "", where);
  for (const auto& [n, e] : names)
    if (s == n) return e;
  throw MalformedConfig(where + "." + key + ": unknown value '" + s + "'");
}

}  // namespace detail

inline MpcParams parse_mpc_params(const json& p, const std::string& where) {
  using detail::get_or;
  detail::reject_unknown(p,
                         {"horizon", "r", "rho_admm", "max_sweeps", "eps_stop", "t_max", "stop_rule",
                          "skip_first_cycle_row", "warm_start_lambda", "mu", "delta", "ar_order", "ar_normalization",
                          "density_scale", "sink_policy", "coupling_pattern", "schedule", "oracle_coupling",
                          "record_trace", "qp_tol"},
                         where);
  MpcParams m;
  m.horizon = get_or<std::size_t>(p, "horizon", m.horizon, where);
  if (m.horizon < 1) throw InconsistentGraph(where + ".horizon must be at least 1");
  if (p.contains("r")) {
    const json& r = p.at("r");
    if (r.is_number()) {
      m.r = PhaseVector::Constant(r.get<double>());
    } else if (r.is_array() && r.size() == kPhases) {
      for (std::size_t q = 0; q < kPhases; ++q) m.r(static_cast<Eigen::Index>(q)) = r[q].get<double>();
    } else {
      throw MalformedConfig(where + ".r must be a number or four numbers");
    }
    if ((m.r.array() < 0.0).any()) throw InconsistentGraph(where + ".r must be non-negative");
  }
  m.rho_admm = detail::positive(get_or(p, "rho_admm", m.rho_admm, where), where + ".rho_admm");
  m.max_sweeps = get_or<std::size_t>(p, "max_sweeps", m.max_sweeps, where);
  m.eps_stop = detail::positive(get_or(p, "eps_stop", m.eps_stop, where), where + ".eps_stop");
  m.t_max = detail::positive(get_or(p, "t_max", m.t_max, where), where + ".t_max");
  m.stop_rule = detail::parse_enum(
      p, "stop_rule", m.stop_rule,
      {{"multiplier", StopRule::multiplier}, {"residual", StopRule::residual}, {"either", StopRule::either}}, where);
  m.skip_first_cycle_row = get_or(p, "skip_first_cycle_row", m.skip_first_cycle_row, where);
  m.warm_start_lambda = get_or(p, "warm_start_lambda", m.warm_start_lambda, where);
  m.mu = detail::positive(get_or(p, "mu", m.mu, where), where + ".mu");
  m.delta = detail::positive(get_or(p, "delta", m.delta, where), where + ".delta");
  m.ar_order = get_or<std::size_t>(p, "ar_order", m.ar_order, where);
  if (m.ar_order < 1) throw InconsistentGraph(where + ".ar_order must be at least 1");
  m.ar_normalization = detail::parse_enum(
      p, "ar_normalization", m.ar_normalization,
      {{"norm", ArNormalization::norm}, {"squared_norm", ArNormalization::squared_norm}}, where);
  m.density_scale = detail::positive(get_or(p, "density_scale", m.density_scale, where), where + ".density_scale");
  m.sink_policy = detail::parse_enum(
      p, "sink_policy", m.sink_policy,
      {{"exclude", SinkLanePolicy::exclude}, {"zero_target", SinkLanePolicy::zero_target}}, where);
  m.coupling_pattern = detail::parse_enum(
      p, "coupling_pattern", m.coupling_pattern,
      {{"topology", CouplingPattern::topology}, {"dense", CouplingPattern::dense}}, where);
  m.schedule = detail::parse_enum(p, "schedule", m.schedule,
                                  {{"forward", AgentSchedule::forward},
                                   {"reverse", AgentSchedule::reverse},
                                   {"parallel", AgentSchedule::parallel}},
                                  where);
  m.oracle_coupling = get_or(p, "oracle_coupling", m.oracle_coupling, where);
  m.record_trace = get_or(p, "record_trace", m.record_trace, where);
  m.qp_tol = detail::positive(get_or(p, "qp_tol", m.qp_tol, where), where + ".qp_tol");
  return m;
}

inline ControllerSpec parse_controller(const json& c, const std::string& where) {
  ControllerSpec spec;
  if (c.is_string()) {
    spec.type = c.get<std::string>();
  } else {
    detail::reject_unknown(c, {"type", "label", "params"}, where);
    detail::require(c, "type", where);
    spec.type = detail::get_or<std::string>(c, "type", "", where);
    spec.label = detail::get_or<std::string>(c, "label", "", where);
    if (c.contains("params")) spec.params = parse_mpc_params(c.at("params"), where + ".params");
  }
  const auto& types = controller_types();
  if (std::find(types.begin(), types.end(), spec.type) == types.end())
    throw MalformedConfig(where + ": unknown controller type '" + spec.type + "'");
  if (spec.label.empty()) spec.label = spec.type;
  if (spec.label.find(',') != std::string::npos) throw MalformedConfig(where + ".label must not contain commas");
  return spec;
}

namespace detail {

inline SplitProfile parse_split_profile(const json& s) {
  const std::string where = "simulation.split_profile";
  reject_unknown(s, {"kind", "amplitude", "period", "pieces"}, where);
  SplitProfile p;
  p.kind = parse_enum(s, "kind", p.kind,
                      {{"constant", SplitProfile::Kind::constant},
                       {"sinusoidal", SplitProfile::Kind::sinusoidal},
                       {"piecewise", SplitProfile::Kind::piecewise}},
                      where);
  p.amplitude = get_or(s, "amplitude", p.amplitude, where);
  p.period = get_or(s, "period", p.period, where);
  if (s.contains("pieces")) {
    for (const auto& piece : s.at("pieces")) {
      reject_unknown(piece, {"from_step", "tilt"}, where + ".pieces[]");
      p.pieces.push_back({get_or<std::size_t>(piece, "from_step", 0, where), get_or(piece, "tilt", 0.0, where)});
    }
    std::sort(p.pieces.begin(), p.pieces.end(), [](const auto& a, const auto& b) { return a.from_step < b.from_step; });
  }
  return p;
}

inline std::vector<DemandProfile::Segment> parse_segments(const json& d, const std::string& where) {
  std::vector<DemandProfile::Segment> segs;
  if (d.contains("segments")) {
    for (const auto& s : d.at("segments")) {
      reject_unknown(s, {"from_step", "veh_per_hour"}, where + ".segments[]");
      segs.push_back({get_or<std::size_t>(s, "from_step", 0, where), get_or(s, "veh_per_hour", 0.0, where)});
    }
  } else {
    require(d, "veh_per_hour", where);
    segs.push_back({0, get_or(d, "veh_per_hour", 0.0, where)});
  }
  std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.from_step < b.from_step; });
  return segs;
}

}  // namespace detail

/// Parses and validates a scenario document. Controller list may be given
/// as "controller" (one entry or an array) or "controllers".
inline Scenario parse_scenario(const json& doc) {
  using detail::get_or;
  if (!doc.is_object()) throw MalformedConfig("scenario must be a JSON object");
  detail::reject_unknown(doc, {"name", "description", "network", "demand", "controller", "controllers", "simulation"},
                         "scenario");
  Scenario sc(build_network(doc));
  sc.document = doc;
  sc.name = get_or<std::string>(doc, "name", sc.name, "scenario");
  if (sc.name.empty() || sc.name.find(',') != std::string::npos)
    throw MalformedConfig("scenario.name must be non-empty and contain no commas");
  const std::size_t n = sc.topology.size();

  const json sim = doc.value("simulation", json::object());
  detail::reject_unknown(sim,
                         {"steps", "seed", "cycle", "yellow", "u_min", "u_max", "free_flow_speed_kmh",
                          "split_profile", "spillback", "initial_count"},
                         "simulation");
  sc.steps = get_or<std::size_t>(sim, "steps", sc.steps, "simulation");
  if (sc.steps < 1) throw InconsistentGraph("simulation.steps must be at least 1");
  sc.seed = get_or<std::uint64_t>(sim, "seed", sc.seed, "simulation");
  sc.timing.cycle = detail::positive(get_or(sim, "cycle", sc.timing.cycle, "simulation"), "simulation.cycle");
  sc.timing.yellow = get_or(sim, "yellow", sc.timing.yellow, "simulation");
  sc.timing.u_min = get_or(sim, "u_min", sc.timing.u_min, "simulation");
  sc.timing.u_max = get_or(sim, "u_max", sc.timing.u_max, "simulation");
  if (sc.timing.yellow < 0.0 || sc.timing.u_min < 0.0 || sc.timing.u_min > sc.timing.u_max)
    throw InconsistentGraph("simulation: need 0 <= yellow and 0 <= u_min <= u_max");
  check_cycle_box(sc.timing.usable(), sc.timing.u_min, sc.timing.u_max);
  sc.free_flow_kmh = detail::positive(get_or(sim, "free_flow_speed_kmh", sc.free_flow_kmh, "simulation"),
                                      "simulation.free_flow_speed_kmh");
  if (sim.contains("split_profile")) sc.plant.split_profile = detail::parse_split_profile(sim.at("split_profile"));
  if (sim.contains("spillback")) {
    const json& s = sim.at("spillback");
    detail::reject_unknown(s, {"enabled", "jam_density"}, "simulation.spillback");
    sc.plant.spillback.enabled = get_or(s, "enabled", false, "simulation.spillback");
    sc.plant.spillback.jam_density = detail::positive(
        get_or(s, "jam_density", sc.plant.spillback.jam_density, "simulation.spillback"), "spillback.jam_density");
  }
  const double initial = get_or(sim, "initial_count", 0.0, "simulation");

  // Per-lane plant data lives next to the lane declarations.
  sc.plant.saturation.assign(n, {});
  sc.plant.base_split.assign(n, {});
  sc.plant.initial_counts.assign(n, {});
  for (auto& row : sc.plant.saturation) row.fill(0.5);
  for (auto& row : sc.plant.initial_counts) row.fill(initial);
  for (const auto& lane : doc.at("network").at("lanes")) {
    const LaneId id = detail::parse_lane_id(lane.at("id"), "network.lanes[].id");
    const std::string lw = "network.lanes" + to_string(id);
    detail::reject_unknown(lane, {"id", "length", "downstream", "sink", "saturation_rate", "split", "initial_count"},
                           lw);
    sc.plant.saturation[id.intersection][id.lane] = get_or(lane, "saturation_rate", 0.5, lw);
    sc.plant.initial_counts[id.intersection][id.lane] = get_or(lane, "initial_count", initial, lw);

    // Declared order of downstream lanes, sink share last; re-ordered to
    // match the topology's sorted sets.
    std::vector<LaneId> declared;
    if (lane.contains("downstream"))
      for (const auto& d : lane.at("downstream")) declared.push_back(detail::parse_lane_id(d, lw + ".downstream"));
    const bool sink = get_or(lane, "sink", false, lw);
    const std::size_t targets = declared.size() + (sink ? 1 : 0);
    std::vector<double> split(targets, 1.0 / static_cast<double>(std::max<std::size_t>(targets, 1)));
    if (lane.contains("split")) {
      split = get_or<std::vector<double>>(lane, "split", {}, lw);
      if (split.size() != targets)
        throw InconsistentGraph(lw + ".split needs one entry per downstream lane plus one for the sink");
    }
    std::vector<std::pair<LaneId, double>> pairs;
    for (std::size_t t = 0; t < declared.size(); ++t) pairs.emplace_back(declared[t], split[t]);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& out = sc.plant.base_split[id.intersection][id.lane];
    for (const auto& pr : pairs) out.push_back(pr.second);
    if (sink) out.push_back(split.back());
  }

  if (doc.contains("demand")) {
    const json& d = doc.at("demand");
    detail::reject_unknown(d, {"noise", "lanes"}, "demand");
    sc.demand.noise = get_or(d, "noise", 0.0, "demand");
    std::set<LaneId> seen;
    for (const auto& ld : d.value("lanes", json::array())) {
      detail::reject_unknown(ld, {"lane", "veh_per_hour", "segments"}, "demand.lanes[]");
      DemandProfile::LaneDemand entry;
      entry.lane = detail::parse_lane_id(detail::require(ld, "lane", "demand.lanes[]"), "demand.lanes[].lane");
      if (!sc.topology.contains(entry.lane))
        throw InconsistentGraph("demand names unknown lane " + to_string(entry.lane));
      if (!seen.insert(entry.lane).second) throw InconsistentGraph("duplicate demand for lane " + to_string(entry.lane));
      entry.segments = detail::parse_segments(ld, "demand.lanes" + to_string(entry.lane));
      sc.demand.lanes.push_back(std::move(entry));
    }
  }

  json ctrl = json::array();
  if (doc.contains("controllers") && doc.contains("controller"))
    throw MalformedConfig("scenario: give either 'controller' or 'controllers', not both");
  if (doc.contains("controllers")) ctrl = doc.at("controllers");
  if (doc.contains("controller")) ctrl = doc.at("controller");
  if (!ctrl.is_array()) ctrl = json::array({ctrl});
  std::set<std::string> labels;
  for (std::size_t c = 0; c < ctrl.size(); ++c) {
    auto spec = parse_controller(ctrl[c], "controllers[" + std::to_string(c) + "]");
    if (!labels.insert(spec.label).second) throw MalformedConfig("duplicate controller label '" + spec.label + "'");
    sc.controllers.push_back(std::move(spec));
  }

  // The plant validates splits, rates and demand against the topology.
  try {
    Plant probe(sc.topology, sc.plant, sc.timing, sc.demand, sc.seed);
  } catch (const ShapeMismatch& e) {
    throw InconsistentGraph(e.what());
  }
  return sc;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedConfig("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw MalformedConfig(path + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(load_json_file(path)); }

}  // namespace twolane
