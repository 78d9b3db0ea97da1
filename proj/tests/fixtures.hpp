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

#include <cstdint>
#include <random>
#include <string>

#include "twolane.hpp"

namespace twolane::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(TWOLANE_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

inline json scenario_json(const std::string& name) { return load_json_file(scenario_path(name)); }

inline Scenario load(const std::string& name) { return load_scenario(scenario_path(name)); }

/// Scenario document with every lane drained to a sink and no controllers.
inline json isolated_intersection(double length = 500.0) {
  json lanes = json::array();
  json boundary = json::array();
  for (int m = 1; m <= 8; ++m) {
    lanes.push_back({{"id", {1, m}}, {"length", length}, {"sink", true}});
    boundary.push_back({1, m});
  }
  return {{"name", "isolated"},
          {"network", {{"intersections", 1}, {"edges", json::array()}, {"lanes", lanes}, {"boundary_lanes", boundary}}}};
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

/// Random green times satisfying the box and the cycle identity.
inline PhaseVector random_control(std::mt19937_64& rng, const SignalTiming& t) {
  Vector u = random_vector(rng, kPhases, t.u_min, t.u_max);
  project_capped_simplex(u, t.usable(), t.u_min, t.u_max);
  return u;
}

inline std::vector<PhaseVector> random_controls(std::mt19937_64& rng, const SignalTiming& t, std::size_t n) {
  std::vector<PhaseVector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_control(rng, t));
  return out;
}

inline std::vector<PhaseVector> equal_controls(const SignalTiming& t, std::size_t n) {
  return std::vector<PhaseVector>(n, equal_split(t));
}

/// Scenario document for two intersections where lane (1,2) feeds lane
/// (2,1) only; everything else drains to a sink.
inline json feeder_pair() {
  json lanes = json::array();
  json boundary = json::array();
  for (int i = 1; i <= 2; ++i)
    for (int m = 1; m <= 8; ++m) {
      json lane{{"id", {i, m}}, {"length", 500.0}};
      if (i == 1 && m == 2)
        lane["downstream"] = json::array({json{2, 1}});
      else
        lane["sink"] = true;
      lanes.push_back(lane);
      if (!(i == 2 && m == 1)) boundary.push_back({i, m});
    }
  return {{"name", "pair"},
          {"network",
           {{"intersections", 2}, {"edges", json::array({json{1, 2}})}, {"lanes", lanes}, {"boundary_lanes", boundary}}}};
}


inline Measurement measure(const Plant& plant) {
  Measurement meas;
  meas.step = plant.step();
  meas.counts = plant.state().counts;
  for (std::size_t i = 0; i < meas.counts.size(); ++i) meas.outflow.push_back(plant.true_outflow_matrix(i, meas.step));
  return meas;
}

/// One intersection's MPC problem in both forms: the four-block ADMM problem
/// and the equivalent dense QP with one cycle group per step.
struct MpcInstance {
  QuadraticCost cost;
  AugmentedProblem problem;
  BoxedQp dense;
  Matrix warm;
};

/// Isolated intersection with random lengths, saturation rates, counts and
/// downstream density targets.
inline MpcInstance random_mpc_instance(std::mt19937_64& rng, std::size_t horizon, const SignalTiming& timing,
                                       double rho = 1.0, double density_scale = 1000.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto doc = isolated_intersection();
  for (auto& lane : doc["network"]["lanes"]) {
    lane["length"] = 300.0 + 400.0 * unit(rng);
    lane["saturation_rate"] = 0.3 + 0.4 * unit(rng);
  }
  const auto sc = parse_scenario(doc);
  const Plant plant(sc.topology, sc.plant, sc.timing, sc.demand, 1);
  const std::vector<Matrix> b(horizon, plant.true_outflow_matrix(0, 0)), c(horizon, Matrix::Zero(kLanes, 0));
  const auto model = assemble_stacked(b, c);
  const auto M = static_cast<Eigen::Index>(horizon);

  DensityCostInputs in;
  in.model = &model;
  in.x0 = random_vector(rng, kLanes, 5.0, 50.0);
  in.Z = Vector(0);
  for (std::size_t m = 0; m < kLanes; ++m) in.length.push_back(sc.topology.length(LaneId{0, m}));
  in.rho_bar = random_matrix(rng, kLanes, M, 0.0, 0.03);
  in.in_cost.assign(kLanes, true);
  in.scale = density_scale;
  in.r = PhaseVector::Constant(1e-4);

  MpcInstance out;
  out.cost = build_density_cost(in);
  auto& p = out.problem;
  p.blocks = phase_blocks(out.cost, horizon);
  p.horizon = horizon;
  p.cycle_rows.assign(horizon, true);
  p.cycle_target = timing.usable();
  p.rho = rho;
  p.u_min = timing.u_min;
  p.u_max = timing.u_max;
  p.lambda = Vector::Zero(M);
  out.dense.H = out.cost.H;
  out.dense.g = out.cost.g;
  out.dense.lo = timing.u_min;
  out.dense.hi = timing.u_max;
  for (std::size_t h = 0; h < horizon; ++h) {
    SumGroup grp;
    grp.total = timing.usable();
    for (std::size_t m = 0; m < kPhases; ++m) grp.indices.push_back(static_cast<Eigen::Index>(h * kPhases + m));
    out.dense.groups.push_back(std::move(grp));
  }
  out.warm = Matrix::Constant(static_cast<Eigen::Index>(kPhases), M, timing.usable() / kPhases);
  return out;
}

}  // namespace twolane::testing
