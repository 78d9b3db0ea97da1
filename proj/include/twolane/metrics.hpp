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
#include <cstddef>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "twolane/errors.hpp"
#include "twolane/plant.hpp"
#include "twolane/topology.hpp"

namespace twolane {

/// Shortest decimal text that round-trips a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// KPIs of one step. `relative_loss_time` is cumulative up to this step.
struct StepKpis {
  std::size_t step = 0;
  double avg_density = 0.0;  // veh/m over all lanes
  double avg_flow = 0.0;     // veh/s per lane
  double speed_proxy = 0.0;  // km/h, flow / density, capped at free-flow speed
  double relative_loss_time = 0.0;
  double present = 0.0;     // vehicles at the start of the step
  double discharged = 0.0;  // vehicles that left their lane
  double waiting = 0.0;     // vehicles held over to the next step
  double injected = 0.0;
  double exited = 0.0;
  double conservation_error = 0.0;
};

struct KpiSummary {
  std::size_t steps = 0;
  double avg_delay_s = 0.0;
  double avg_stops = 0.0;
  double total_travel_time_min = 0.0;
  double free_flow_time_min = 0.0;
  double total_delay_min = 0.0;
  double relative_loss_time = 0.0;
  double avg_density = 0.0;
  double avg_flow = 0.0;
  double avg_speed_proxy = 0.0;
  double vehicles_served = 0.0;
  double max_conservation_error = 0.0;
};

/// Folds flow records into per-step and run KPIs. Every quantity is a plain
/// sum over records taken in step order, so a fold over records read back
/// from CSV reproduces the summary exactly.
///
/// Flow-model conventions: a vehicle still in its lane at the end of a step
/// has waited S seconds and made one stop; each discharged vehicle-step is
/// S seconds of free travel, so travel time = free-flow time + delay.
class KpiAccumulator {
 public:
  KpiAccumulator(const NetworkTopology& topo, double cycle_seconds, double free_flow_kmh = 50.0)
      : topo_(&topo), cycle_(cycle_seconds), v_ff_(free_flow_kmh) {
    if (!(cycle_ > 0.0) || !(v_ff_ > 0.0)) throw ShapeMismatch("KPI fold needs a positive cycle and free-flow speed");
  }

  const StepKpis& add(const FlowRecord& rec) {
    const std::size_t lanes = topo_->lane_count();
    if (rec.lanes() != lanes || rec.outflow.size() != lanes || rec.demand.size() != lanes ||
        rec.exits.size() != lanes || rec.inflow.size() != lanes)
      throw ShapeMismatch("flow record does not match the topology");
    StepKpis s;
    s.step = rec.step;
    double density_sum = 0.0;
    for (std::size_t idx = 0; idx < lanes; ++idx) {
      density_sum += rec.count[idx] / topo_->length({idx / kLanes, idx % kLanes});
      s.present += rec.count[idx];
      s.discharged += rec.outflow[idx];
      s.waiting += rec.count[idx] - rec.outflow[idx];
      s.injected += rec.demand[idx];
      s.exited += rec.exits[idx];
    }
    const double nl = static_cast<double>(lanes);
    s.avg_density = density_sum / nl;
    s.avg_flow = s.discharged / (nl * cycle_);
    s.speed_proxy = s.avg_density > 0.0 ? std::min(v_ff_, 3.6 * s.avg_flow / s.avg_density) : 0.0;
    s.conservation_error = rec.conservation_error;

    if (rows_.empty()) initial_ += s.present;
    present_ += s.present;
    discharged_ += s.discharged;
    waiting_ += s.waiting;
    injected_ += s.injected;
    density_ += s.avg_density;
    flow_ += s.avg_flow;
    speed_weighted_ += s.speed_proxy * s.discharged;
    max_cons_ = std::max(max_cons_, std::abs(s.conservation_error));
    s.relative_loss_time = discharged_ > 0.0 ? waiting_ / discharged_ : 0.0;
    rows_.push_back(s);
    return rows_.back();
  }

  const std::vector<StepKpis>& steps() const { return rows_; }

  KpiSummary summary() const {
    if (rows_.empty()) throw EmptyRun("no steps were recorded");
    KpiSummary k;
    k.steps = rows_.size();
    k.vehicles_served = initial_ + injected_;
    k.avg_delay_s = k.vehicles_served > 0.0 ? waiting_ * cycle_ / k.vehicles_served : 0.0;
    k.avg_stops = k.vehicles_served > 0.0 ? waiting_ / k.vehicles_served : 0.0;
    k.total_travel_time_min = present_ * cycle_ / 60.0;
    k.free_flow_time_min = discharged_ * cycle_ / 60.0;
    k.total_delay_min = waiting_ * cycle_ / 60.0;
    k.relative_loss_time = discharged_ > 0.0 ? waiting_ / discharged_ : 0.0;
    const double ns = static_cast<double>(rows_.size());
    k.avg_density = density_ / ns;
    k.avg_flow = flow_ / ns;
    k.avg_speed_proxy = discharged_ > 0.0 ? speed_weighted_ / discharged_ : 0.0;
    k.max_conservation_error = max_cons_;
    return k;
  }

 private:
  const NetworkTopology* topo_;
  double cycle_;
  double v_ff_;
  std::vector<StepKpis> rows_;
  double initial_ = 0.0, present_ = 0.0, discharged_ = 0.0, waiting_ = 0.0, injected_ = 0.0;
  double density_ = 0.0, flow_ = 0.0, speed_weighted_ = 0.0, max_cons_ = 0.0;
};

// CSV i/o. Doubles use %.17g so values survive a round trip.

inline const char* kFlowsHeader = "step,intersection,lane,count,inflow,outflow,demand,exits";
inline const char* kStepsHeader =
    "step,avg_density_veh_per_m,avg_flow_veh_per_s,speed_proxy_kmh,relative_loss_time,present,discharged,"
    "waiting,injected,exited,conservation_error";
inline const char* kSummaryHeader =
    "scenario,config_hash,controller,steps,avg_delay_s,avg_stops,total_travel_time_min,free_flow_time_min,total_delay_min,"
    "relative_loss_time,avg_density_veh_per_m,avg_flow_veh_per_s,avg_speed_proxy_kmh,vehicles_served,"
    "max_conservation_error";

inline void write_flow_rows(std::ostream& os, const FlowRecord& rec) {
  for (std::size_t idx = 0; idx < rec.lanes(); ++idx)
    os << rec.step << ',' << idx / kLanes + 1 << ',' << idx % kLanes + 1 << ',' << format_double(rec.count[idx])
       << ',' << format_double(rec.inflow[idx]) << ',' << format_double(rec.outflow[idx]) << ','
       << format_double(rec.demand[idx]) << ',' << format_double(rec.exits[idx]) << '\n';
}

inline void write_step_row(std::ostream& os, const StepKpis& s) {
  os << s.step << ',' << format_double(s.avg_density) << ',' << format_double(s.avg_flow) << ','
     << format_double(s.speed_proxy) << ',' << format_double(s.relative_loss_time) << ','
     << format_double(s.present) << ',' << format_double(s.discharged) << ',' << format_double(s.waiting) << ','
     << format_double(s.injected) << ',' << format_double(s.exited) << ',' << format_double(s.conservation_error)
     << '\n';
}

inline void write_summary_row(std::ostream& os, const std::string& scenario, const std::string& config_hash,
                              const std::string& controller, const KpiSummary& k) {
  os << scenario << ',' << config_hash << ',' << controller << ',' << k.steps << ',' << format_double(k.avg_delay_s) << ','
     << format_double(k.avg_stops) << ',' << format_double(k.total_travel_time_min) << ','
     << format_double(k.free_flow_time_min) << ',' << format_double(k.total_delay_min) << ','
     << format_double(k.relative_loss_time) << ',' << format_double(k.avg_density) << ','
     << format_double(k.avg_flow) << ',' << format_double(k.avg_speed_proxy) << ','
     << format_double(k.vehicles_served) << ',' << format_double(k.max_conservation_error) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads flows.csv back into records (conservation error is not stored there).
inline std::vector<FlowRecord> read_flows(std::istream& is, const NetworkTopology& topo) {
  std::string line;
  if (!std::getline(is, line) || line != kFlowsHeader) throw MalformedConfig("flows file has an unexpected header");
  const std::size_t lanes = topo.lane_count();
  std::vector<FlowRecord> recs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) throw MalformedConfig("flows row has " + std::to_string(cells.size()) + " cells");
    const std::size_t step = std::stoul(cells[0]);
    const std::size_t i = std::stoul(cells[1]) - 1;
    const std::size_t m = std::stoul(cells[2]) - 1;
    const std::size_t idx = i * kLanes + m;
    if (i >= topo.size() || m >= kLanes) throw UnknownLane("flows row names lane " + cells[1] + "," + cells[2]);
    if (recs.empty() || recs.back().step != step) {
      FlowRecord r;
      r.step = step;
      r.count.assign(lanes, 0.0);
      r.inflow.assign(lanes, 0.0);
      r.outflow.assign(lanes, 0.0);
      r.demand.assign(lanes, 0.0);
      r.exits.assign(lanes, 0.0);
      recs.push_back(std::move(r));
    }
    auto& r = recs.back();
    r.count[idx] = std::stod(cells[3]);
    r.inflow[idx] = std::stod(cells[4]);
    r.outflow[idx] = std::stod(cells[5]);
    r.demand[idx] = std::stod(cells[6]);
    r.exits[idx] = std::stod(cells[7]);
  }
  return recs;
}

/// One row of a summary file.
struct SummaryRow {
  std::string scenario;
  std::string config_hash;
  std::string controller;
  std::vector<std::pair<std::string, double>> values;  // numeric columns in file order

  double get(const std::string& key) const {
    for (const auto& [k, v] : values)
      if (k == key) return v;
    throw MalformedConfig("summary has no column '" + key + "'");
  }
};

inline std::vector<SummaryRow> read_summary(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw MalformedConfig("summary file is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "scenario" || header[1] != "config_hash" || header[2] != "controller")
    throw MalformedConfig("summary file has an unexpected header");
  std::vector<SummaryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw MalformedConfig("summary row width does not match its header");
    SummaryRow r{cells[0], cells[1], cells[2], {}};
    for (std::size_t c = 3; c < cells.size(); ++c) r.values.emplace_back(header[c], std::stod(cells[c]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace twolane
