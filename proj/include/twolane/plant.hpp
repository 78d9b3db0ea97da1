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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "twolane/errors.hpp"
#include "twolane/topology.hpp"
#include "twolane/types.hpp"

namespace twolane {

/// Time variation applied to every lane's base split distribution.
struct SplitProfile {
  enum class Kind { constant, sinusoidal, piecewise };
  struct Piece {
    std::size_t from_step = 0;
    double tilt = 0.0;
  };

  Kind kind = Kind::constant;
  double amplitude = 0.0;  // |tilt| < 1 keeps every weight positive
  double period = 24.0;    // steps
  std::vector<Piece> pieces;

  double tilt(std::size_t k, double phase_offset) const {
    switch (kind) {
      case Kind::constant:
        return 0.0;
      case Kind::sinusoidal:
        return amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period +
                                    phase_offset);
      case Kind::piecewise: {
        double t = 0.0;
        for (const auto& p : pieces)
          if (p.from_step <= k) t = p.tilt;
        return t;
      }
    }
    return 0.0;
  }
};

/// Piecewise-constant boundary demand with optional seeded jitter.
struct DemandProfile {
  struct Segment {
    std::size_t from_step = 0;
    double veh_per_hour = 0.0;
  };
  struct LaneDemand {
    LaneId lane;
    std::vector<Segment> segments;  // ascending from_step
  };

  std::vector<LaneDemand> lanes;
  double noise = 0.0;  // relative half-width of uniform multiplicative jitter
};

struct SpillbackConfig {
  bool enabled = false;
  double jam_density = 0.15;  // veh/m
};

/// Ground-truth plant parameters. Split entries align with
/// topology.downstream(lane).lanes, followed by the sink share when the lane
/// has a sink marker.
struct PlantConfig {
  std::vector<std::array<double, kLanes>> saturation;  // veh per second of green
  std::vector<std::array<std::vector<double>, kLanes>> base_split;
  std::vector<std::array<double, kLanes>> initial_counts;
  SplitProfile split_profile;
  SpillbackConfig spillback;
};

/// Per-step flow bookkeeping, one entry per lane (row-major by intersection).
struct FlowRecord {
  std::size_t step = 0;
  std::vector<double> count;    // x(k) at the start of the step
  std::vector<double> inflow;   // from upstream lanes
  std::vector<double> outflow;  // actual discharge
  std::vector<double> demand;   // injected at boundary lanes
  std::vector<double> exits;    // portion of outflow that left the network
  double conservation_error = 0.0;

  std::size_t lanes() const { return count.size(); }
  double count_after(std::size_t idx) const {
    return ((count[idx] - outflow[idx]) + inflow[idx]) + demand[idx];
  }
};

struct PlantState {
  std::size_t step = 0;
  std::vector<Vector> counts;  // x_i(k), one 8-vector per intersection
  double entered = 0.0;
  double exited = 0.0;
  double waiting_vehicle_steps = 0.0;

  double total() const {
    double t = 0.0;
    for (const auto& x : counts) t += x.sum();
    return t;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stateless uniform draw in [0,1) keyed by (seed, step, lane).
inline double hashed_uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t lane) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ step) ^ (lane * 0x632be59bd9b4e019ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Discrete-time store-and-forward simulator. Owns the hidden transfer rates.
class Plant {
 public:
  Plant(const NetworkTopology& topology, PlantConfig config, SignalTiming timing,
        DemandProfile demand, std::uint64_t seed)
      : topo_(&topology),
        cfg_(std::move(config)),
        timing_(timing),
        demand_(std::move(demand)),
        seed_(seed) {
    validate();
    state_.counts.assign(topo_->size(), Vector::Zero(kLanes));
    for (std::size_t i = 0; i < topo_->size(); ++i)
      for (std::size_t m = 0; m < kLanes; ++m) state_.counts[i](m) = cfg_.initial_counts[i][m];
  }

  const PlantState& state() const { return state_; }
  const NetworkTopology& topology() const { return *topo_; }
  const SignalTiming& timing() const { return timing_; }
  const PlantConfig& config() const { return cfg_; }
  std::size_t step() const { return state_.step; }

  double saturation(const LaneId& id) const { return cfg_.saturation[id.intersection][id.lane]; }

  /// B_i(k): 8x4, entry (lane, phase) = s_lane when the phase serves the lane.
  Matrix true_outflow_matrix(std::size_t i, std::size_t /*k*/) const {
    Matrix b = Matrix::Zero(kLanes, kPhases);
    for (std::size_t m = 0; m < kLanes; ++m) b(m, phase_of_lane(m)) = cfg_.saturation[i][m];
    return b;
  }

  /// Split fractions of `lane` at step k over its downstream lanes, with the
  /// sink share last when present.
  std::vector<double> split(const LaneId& lane, std::size_t k) const {
    const auto& base = cfg_.base_split[lane.intersection][lane.lane];
    const std::size_t n = base.size();
    std::vector<double> w(base);
    if (n < 2) return w;
    const double offset = 2.0 * std::numbers::pi *
                          static_cast<double>(lane.intersection * kLanes + lane.lane) /
                          static_cast<double>(topo_->lane_count());
    const double a = cfg_.split_profile.tilt(k, offset);
    double total = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      w[t] *= 1.0 + a * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n));
      total += w[t];
    }
    for (auto& v : w) v /= total;
    return w;
  }

  /// C_i(k): 8 x 4N_i, block l for neighbor j_l (ascending). Hidden from
  /// controllers; only the plant itself and oracles call this.
  Matrix true_transfer_matrix(std::size_t i, std::size_t k) const {
    const auto& nbrs = topo_->neighbors(i);
    Matrix c = Matrix::Zero(kLanes, kPhases * nbrs.size());
    for (std::size_t l = 0; l < nbrs.size(); ++l) {
      const std::size_t j = nbrs[l];
      for (std::size_t g = 0; g < kLanes; ++g) {
        const LaneId sender{j, g};
        const auto& targets = topo_->downstream(sender).lanes;
        const auto fractions = split(sender, k);
        for (std::size_t t = 0; t < targets.size(); ++t) {
          if (targets[t].intersection != i) continue;
          c(targets[t].lane, l * kPhases + phase_of_lane(g)) += cfg_.saturation[j][g] * fractions[t];
        }
      }
    }
    return c;
  }

  /// Boundary arrivals of step k in vehicles, indexed like FlowRecord.
  std::vector<double> demand(std::size_t k) const {
    std::vector<double> d(topo_->lane_count(), 0.0);
    for (const auto& ld : demand_.lanes) {
      double rate = 0.0;
      for (const auto& s : ld.segments)
        if (s.from_step <= k) rate = s.veh_per_hour;
      const std::size_t idx = ld.lane.intersection * kLanes + ld.lane.lane;
      double jitter = 1.0;
      if (demand_.noise > 0.0)
        jitter += demand_.noise * (2.0 * detail::hashed_uniform(seed_, k, idx) - 1.0);
      d[idx] += rate * timing_.cycle / 3600.0 * jitter;
    }
    return d;
  }

  /// Throws InfeasibleControl when u violates the box or the cycle identity.
  void check_control(std::size_t i, const PhaseVector& u) const {
    constexpr double tol = 1e-9;
    for (std::size_t p = 0; p < kPhases; ++p)
      if (!(u(p) >= timing_.u_min - tol && u(p) <= timing_.u_max + tol))
        throw InfeasibleControl("intersection " + std::to_string(i + 1) + " phase " +
                                std::to_string(p + 1) + " green " + std::to_string(u(p)) +
                                " outside [u_min, u_max]");
    const double cycle_gap = u.sum() + timing_.yellow - timing_.cycle;
    if (!(std::abs(cycle_gap) <= tol))
      throw InfeasibleControl("intersection " + std::to_string(i + 1) +
                              " violates the cycle identity by " + std::to_string(cycle_gap));
  }

  /// Advances one cycle. Outflow is clamped at the vehicles present and split
  /// proportionally downstream.
  FlowRecord step(const std::vector<PhaseVector>& controls) {
    const std::size_t n = topo_->size();
    if (controls.size() != n) throw ShapeMismatch("one control vector per intersection required");
    for (std::size_t i = 0; i < n; ++i) check_control(i, controls[i]);

    const std::size_t k = state_.step;
    const std::size_t lanes = topo_->lane_count();
    FlowRecord rec;
    rec.step = k;
    rec.count.resize(lanes);
    rec.inflow.assign(lanes, 0.0);
    rec.outflow.assign(lanes, 0.0);
    rec.exits.assign(lanes, 0.0);
    rec.demand = demand(k);

    std::vector<std::vector<double>> fractions(lanes);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < kLanes; ++m) {
        const std::size_t idx = i * kLanes + m;
        rec.count[idx] = state_.counts[i](m);
        const double requested = cfg_.saturation[i][m] * controls[i](phase_of_lane(m));
        rec.outflow[idx] = std::min(requested, rec.count[idx]);
        fractions[idx] = split({i, m}, k);
      }

    if (cfg_.spillback.enabled) apply_spillback(rec, fractions);

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < kLanes; ++m) {
        const std::size_t idx = i * kLanes + m;
        const auto& ds = topo_->downstream({i, m});
        const auto& f = fractions[idx];
        for (std::size_t t = 0; t < ds.lanes.size(); ++t)
          rec.inflow[ds.lanes[t].intersection * kLanes + ds.lanes[t].lane] += rec.outflow[idx] * f[t];
        if (ds.sink) {
          // The sink takes whatever the lane targets did not, so exits are
          // exact in floating point.
          double routed = 0.0;
          for (std::size_t t = 0; t < ds.lanes.size(); ++t) routed += rec.outflow[idx] * f[t];
          rec.exits[idx] = rec.outflow[idx] - routed;
        }
      }

    const double before = state_.total();
    double injected = 0.0, exited = 0.0, waiting = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < kLanes; ++m) {
        const std::size_t idx = i * kLanes + m;
        state_.counts[i](m) = rec.count_after(idx);
        injected += rec.demand[idx];
        exited += rec.exits[idx];
        waiting += rec.count[idx] - rec.outflow[idx];
      }
    rec.conservation_error = state_.total() - (before + injected - exited);
    state_.entered += injected;
    state_.exited += exited;
    state_.waiting_vehicle_steps += waiting;
    ++state_.step;
    return rec;
  }

 private:
  void apply_spillback(FlowRecord& rec, const std::vector<std::vector<double>>& fractions) const {
    const std::size_t lanes = topo_->lane_count();
    std::vector<double> requested_in(lanes, 0.0);
    for (std::size_t idx = 0; idx < lanes; ++idx) {
      const auto& ds = topo_->downstream({idx / kLanes, idx % kLanes});
      for (std::size_t t = 0; t < ds.lanes.size(); ++t)
        requested_in[ds.lanes[t].intersection * kLanes + ds.lanes[t].lane] +=
            rec.outflow[idx] * fractions[idx][t];
    }
    std::vector<double> factor(lanes, 1.0);
    for (std::size_t idx = 0; idx < lanes; ++idx) {
      const LaneId id{idx / kLanes, idx % kLanes};
      const double space = std::max(0.0, topo_->length(id) * cfg_.spillback.jam_density - rec.count[idx]);
      if (requested_in[idx] > space) factor[idx] = space / requested_in[idx];
    }
    for (std::size_t idx = 0; idx < lanes; ++idx) {
      double throttle = 1.0;
      for (const auto& t : topo_->downstream({idx / kLanes, idx % kLanes}).lanes)
        throttle = std::min(throttle, factor[t.intersection * kLanes + t.lane]);
      rec.outflow[idx] *= throttle;
    }
  }

  void validate() const {
    const std::size_t n = topo_->size();
    if (cfg_.saturation.size() != n || cfg_.base_split.size() != n || cfg_.initial_counts.size() != n)
      throw ShapeMismatch("plant tables must have one row per intersection");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t m = 0; m < kLanes; ++m) {
        const LaneId id{i, m};
        if (!(cfg_.saturation[i][m] > 0.0))
          throw InconsistentGraph("saturation rate of lane " + to_string(id) + " must be positive");
        if (!(cfg_.initial_counts[i][m] >= 0.0))
          throw InconsistentGraph("initial count of lane " + to_string(id) + " must be non-negative");
        const auto& ds = topo_->downstream(id);
        const auto& s = cfg_.base_split[i][m];
        if (s.size() != ds.lanes.size() + (ds.sink ? 1 : 0))
          throw InconsistentGraph("split of lane " + to_string(id) +
                                  " must have one entry per downstream target");
        double total = 0.0;
        for (double v : s) {
          if (!(v >= 0.0 && v <= 1.0))
            throw InconsistentGraph("split fractions of lane " + to_string(id) + " must lie in [0,1]");
          total += v;
        }
        if (std::abs(total - 1.0) > 1e-9)
          throw InconsistentGraph("split fractions of lane " + to_string(id) + " must sum to 1");
      }
    if (std::abs(cfg_.split_profile.amplitude) >= 1.0)
      throw InconsistentGraph("split profile amplitude must satisfy |a| < 1");
    for (const auto& p : cfg_.split_profile.pieces)
      if (std::abs(p.tilt) >= 1.0) throw InconsistentGraph("split profile tilt must satisfy |a| < 1");
    if (!(cfg_.split_profile.period > 0.0))
      throw InconsistentGraph("split profile period must be positive");
    for (const auto& ld : demand_.lanes) {
      if (!topo_->is_boundary(ld.lane))
        throw InconsistentGraph("demand declared on non-boundary lane " + to_string(ld.lane));
      for (const auto& s : ld.segments)
        if (!(s.veh_per_hour >= 0.0)) throw InconsistentGraph("demand must be non-negative");
    }
    if (!(demand_.noise >= 0.0 && demand_.noise < 1.0))
      throw InconsistentGraph("demand noise must lie in [0,1)");
  }

  const NetworkTopology* topo_;
  PlantConfig cfg_;
  SignalTiming timing_;
  DemandProfile demand_;
  std::uint64_t seed_;
  PlantState state_;
};

}  // namespace twolane
