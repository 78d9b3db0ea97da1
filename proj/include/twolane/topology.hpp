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
#include <array>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "twolane/errors.hpp"
#include "twolane/types.hpp"

namespace twolane {

using json = nlohmann::json;

/// Receiving lanes of one lane. `sink` marks that part (or all) of the
/// discharge leaves the network.
struct DownstreamSet {
  std::vector<LaneId> lanes;
  bool sink = false;

  bool sink_only() const { return lanes.empty(); }
  bool operator==(const DownstreamSet&) const = default;
};

/// Plain description of a network, before validation.
struct NetworkSpec {
  std::size_t intersections = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (from, to), zero-based
  std::vector<std::array<double, kLanes>> lane_lengths;
  std::vector<std::array<DownstreamSet, kLanes>> downstream;
  std::vector<LaneId> boundary_lanes;
  std::size_t exit_roads = 0;
};

/// Validated, immutable intersection graph.
class NetworkTopology {
 public:
  explicit NetworkTopology(NetworkSpec spec) : spec_(std::move(spec)) { validate(); }

  std::size_t size() const { return spec_.intersections; }

  /// 𝒩_i: intersections j with (j,i) an edge, ascending.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return in_.at(i); }
  /// Intersections fed by i, ascending.
  const std::vector<std::size_t>& out_neighbors(std::size_t i) const { return out_.at(i); }

  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return spec_.edges; }

  double length(const LaneId& id) const {
    check(id);
    return spec_.lane_lengths[id.intersection][id.lane];
  }

  /// N_im^+ sorted by (intersection, lane).
  const DownstreamSet& downstream(const LaneId& id) const {
    check(id);
    return spec_.downstream[id.intersection][id.lane];
  }

  /// Lanes whose downstream set contains `id`, sorted.
  const std::vector<LaneId>& feeders(const LaneId& id) const {
    check(id);
    return feeders_[id.intersection][id.lane];
  }

  bool is_boundary(const LaneId& id) const {
    check(id);
    return boundary_[id.intersection][id.lane];
  }

  const std::vector<LaneId>& boundary_lanes() const { return spec_.boundary_lanes; }

  /// Incoming roads plus declared exit roads.
  std::size_t road_count() const { return kRoads * size() + spec_.exit_roads; }
  std::size_t lane_count() const { return kLanes * size(); }

  bool contains(const LaneId& id) const {
    return id.intersection < size() && id.lane < kLanes;
  }

  const NetworkSpec& spec() const { return spec_; }

 private:
  void check(const LaneId& id) const {
    if (!contains(id)) throw UnknownLane("unknown lane " + to_string(id));
  }

  void validate();

  NetworkSpec spec_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::array<std::vector<LaneId>, kLanes>> feeders_;
  std::vector<std::array<bool, kLanes>> boundary_;
};

inline void NetworkTopology::validate() {
  const std::size_t n = spec_.intersections;
  if (n == 0) throw InconsistentGraph("network must contain at least one intersection");
  if (spec_.lane_lengths.size() != n || spec_.downstream.size() != n)
    throw InconsistentGraph("lane tables must have one row per intersection");

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < kLanes; ++m) {
      const LaneId id{i, m};
      if (!(spec_.lane_lengths[i][m] > 0.0))
        throw InconsistentGraph("lane_lengths strictly positive: lane " + to_string(id));
      auto& ds = spec_.downstream[i][m];
      if (ds.lanes.empty() && !ds.sink)
        throw InconsistentGraph("downstream set of lane " + to_string(id) +
                                " is empty and has no sink marker");
      for (const auto& d : ds.lanes) {
        if (!contains(d))
          throw InconsistentGraph("downstream lane " + to_string(d) + " of lane " +
                                  to_string(id) + " is out of range");
        if (d.intersection == i)
          throw InconsistentGraph("lane " + to_string(id) + " cannot feed its own intersection");
      }
      std::sort(ds.lanes.begin(), ds.lanes.end());
      if (std::adjacent_find(ds.lanes.begin(), ds.lanes.end()) != ds.lanes.end())
        throw InconsistentGraph("duplicate downstream lane for " + to_string(id));
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> declared;
  for (const auto& [from, to] : spec_.edges) {
    if (from >= n || to >= n)
      throw InconsistentGraph("edge (" + std::to_string(from + 1) + "," + std::to_string(to + 1) +
                              ") references an unknown intersection");
    if (from == to) throw InconsistentGraph("self-loop edges are not allowed");
    if (!declared.insert({from, to}).second) throw InconsistentGraph("duplicate edge");
  }
  spec_.edges.assign(declared.begin(), declared.end());

  std::set<std::pair<std::size_t, std::size_t>> implied;
  feeders_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < kLanes; ++m)
      for (const auto& d : spec_.downstream[i][m].lanes) {
        implied.insert({i, d.intersection});
        feeders_[d.intersection][d.lane].push_back({i, m});
      }
  if (implied != declared)
    throw InconsistentGraph(
        "neighbor_sets consistent with edges: declared edges differ from the lane-level "
        "downstream relations");

  in_.assign(n, {});
  out_.assign(n, {});
  for (const auto& [from, to] : spec_.edges) {
    in_[to].push_back(from);
    out_[from].push_back(to);
  }

  boundary_.assign(n, {});
  std::sort(spec_.boundary_lanes.begin(), spec_.boundary_lanes.end());
  for (const auto& b : spec_.boundary_lanes) {
    if (!contains(b)) throw InconsistentGraph("boundary lane " + to_string(b) + " is out of range");
    if (boundary_[b.intersection][b.lane])
      throw InconsistentGraph("duplicate boundary lane " + to_string(b));
    boundary_[b.intersection][b.lane] = true;
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < kLanes; ++m)
      if (!boundary_[i][m] && feeders_[i][m].empty())
        throw InconsistentGraph("every non-boundary lane has an upstream feeder: lane " +
                                to_string({i, m}) + " has none");
}

/// N_im^+ for `lane`; throws UnknownLane.
inline const DownstreamSet& downstream_lanes(const NetworkTopology& topology, const LaneId& lane) {
  return topology.downstream(lane);
}

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw MalformedConfig(where + ": missing field '" + key + "'");
  return obj.at(key);
}

inline LaneId parse_lane_id(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw MalformedConfig(where + ": lane ids are [intersection, lane] integer pairs");
  const auto i = j[0].get<long long>();
  const auto m = j[1].get<long long>();
  if (i < 1 || m < 1)
    throw InconsistentGraph(where + ": lane indices are one-based, got [" + std::to_string(i) +
                            "," + std::to_string(m) + "]");
  return {static_cast<std::size_t>(i - 1), static_cast<std::size_t>(m - 1)};
}

}  // namespace detail

/// Parses the "network" block of a scenario document (or a bare network
/// block) into a validated topology.
inline NetworkTopology build_network(const json& scenario) {
  const json& net = scenario.contains("network") ? scenario.at("network") : scenario;
  const std::string where = "network";
  const json& n_json = detail::require(net, "intersections", where);
  if (!n_json.is_number_integer() || n_json.get<long long>() < 1)
    throw MalformedConfig("network.intersections must be a positive integer");
  NetworkSpec spec;
  spec.intersections = n_json.get<std::size_t>();
  const std::size_t n = spec.intersections;

  const json& edges = detail::require(net, "edges", where);
  if (!edges.is_array()) throw MalformedConfig("network.edges must be an array");
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw MalformedConfig("network.edges entries are [from, to] integer pairs");
    const auto from = e[0].get<long long>();
    const auto to = e[1].get<long long>();
    if (from < 1 || to < 1 || static_cast<std::size_t>(from) > n || static_cast<std::size_t>(to) > n)
      throw InconsistentGraph("edge [" + std::to_string(from) + "," + std::to_string(to) +
                              "] references an unknown intersection");
    spec.edges.emplace_back(from - 1, to - 1);
  }

  spec.lane_lengths.assign(n, {});
  spec.downstream.assign(n, {});
  std::vector<std::array<bool, kLanes>> seen(n, std::array<bool, kLanes>{});
  const json& lanes = detail::require(net, "lanes", where);
  if (!lanes.is_array()) throw MalformedConfig("network.lanes must be an array");
  for (const auto& lane : lanes) {
    const LaneId id = detail::parse_lane_id(detail::require(lane, "id", "network.lanes[]"),
                                            "network.lanes[].id");
    if (id.intersection >= n || id.lane >= kLanes)
      throw InconsistentGraph("lane " + to_string(id) + " is out of range");
    if (seen[id.intersection][id.lane]) throw InconsistentGraph("duplicate lane " + to_string(id));
    seen[id.intersection][id.lane] = true;
    const std::string lw = "network.lanes" + to_string(id);
    const json& len = detail::require(lane, "length", lw);
    if (!len.is_number()) throw MalformedConfig(lw + ".length must be a number");
    spec.lane_lengths[id.intersection][id.lane] = len.get<double>();
    DownstreamSet ds;
    if (lane.contains("downstream")) {
      if (!lane["downstream"].is_array()) throw MalformedConfig(lw + ".downstream must be an array");
      for (const auto& d : lane["downstream"])
        ds.lanes.push_back(detail::parse_lane_id(d, lw + ".downstream"));
    }
    if (lane.contains("sink")) {
      if (!lane["sink"].is_boolean()) throw MalformedConfig(lw + ".sink must be a boolean");
      ds.sink = lane["sink"].get<bool>();
    }
    if (!lane.contains("downstream") && !lane.contains("sink"))
      throw MalformedConfig(lw + ": missing field 'downstream' (or 'sink')");
    spec.downstream[id.intersection][id.lane] = std::move(ds);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < kLanes; ++m)
      if (!seen[i][m]) throw MalformedConfig("network.lanes: missing lane " + to_string({i, m}));

  if (net.contains("boundary_lanes")) {
    if (!net["boundary_lanes"].is_array())
      throw MalformedConfig("network.boundary_lanes must be an array");
    for (const auto& b : net["boundary_lanes"])
      spec.boundary_lanes.push_back(detail::parse_lane_id(b, "network.boundary_lanes"));
  } else {
    throw MalformedConfig("network: missing field 'boundary_lanes'");
  }
  if (net.contains("exit_roads")) {
    if (!net["exit_roads"].is_number_integer() || net["exit_roads"].get<long long>() < 0)
      throw MalformedConfig("network.exit_roads must be a non-negative integer");
    spec.exit_roads = net["exit_roads"].get<std::size_t>();
  }
  return NetworkTopology(std::move(spec));
}

}  // namespace twolane
