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

#include <cstddef>
#include <string>
#include <vector>

#include "twolane/admm.hpp"
#include "twolane/controllers/controller.hpp"
#include "twolane/controllers/mpc.hpp"
#include "twolane/errors.hpp"
#include "twolane/qp.hpp"
#include "twolane/topology.hpp"

namespace twolane {

/// Quarter of the usable cycle to every phase, every step.
class FixedTimeController : public Controller {
 public:
  FixedTimeController(const NetworkTopology& topo, SignalTiming timing)
      : n_(topo.size()), u_(equal_split(timing)) {}

  std::string name() const override { return "fixed_time"; }

  std::vector<ControllerOutput> control(const Measurement&) override {
    std::vector<ControllerOutput> out(n_);
    for (auto& o : out) o.u = u_;
    return out;
  }

 private:
  std::size_t n_;
  PhaseVector u_;
};

/// Phase pressures Σ s·(x/L − mean downstream density) over the phase's lanes.
/// Sink lanes see a downstream density of zero.
inline PhaseVector phase_pressures(const NetworkTopology& topo, std::size_t i, const std::vector<Vector>& counts,
                                   const std::vector<double>& saturation) {
  if (counts.size() != topo.size() || saturation.size() != kLanes)
    throw ShapeMismatch("max-pressure: inconsistent measurement shape");
  PhaseVector p = PhaseVector::Zero();
  for (std::size_t m = 0; m < kLanes; ++m) {
    const LaneId lane{i, m};
    const double own = counts[i](static_cast<Eigen::Index>(m)) / topo.length(lane);
    double down = 0.0;
    const auto& ds = topo.downstream(lane).lanes;
    for (const auto& d : ds) down += counts[d.intersection](static_cast<Eigen::Index>(d.lane)) / topo.length(d);
    if (!ds.empty()) down /= static_cast<double>(ds.size());
    p(static_cast<Eigen::Index>(phase_of_lane(m))) += saturation[m] * (own - down);
  }
  return p;
}

/// Green split proportional to the positive part of the pressures, projected
/// onto the cycle box. All pressures ≤ 0 gives the equal split.
inline PhaseVector pressure_allocation(const PhaseVector& pressure, const SignalTiming& timing) {
  check_cycle_box(timing.usable(), timing.u_min, timing.u_max);
  const PhaseVector pos = pressure.cwiseMax(0.0);
  const double total = pos.sum();
  if (!(total > 0.0)) return equal_split(timing);
  Vector u = pos * (timing.usable() / total);
  project_capped_simplex(u, timing.usable(), timing.u_min, timing.u_max);
  return u;
}

class MaxPressureController : public Controller {
 public:
  /// `saturation[i][m]` is the discharge rate of lane m at intersection i.
  MaxPressureController(const NetworkTopology& topo, SignalTiming timing, std::vector<std::vector<double>> saturation)
      : topo_(&topo), timing_(timing), saturation_(std::move(saturation)) {
    if (saturation_.size() != topo.size()) throw ShapeMismatch("max-pressure: one saturation row per intersection");
    check_cycle_box(timing_.usable(), timing_.u_min, timing_.u_max);
  }

  std::string name() const override { return "max_pressure"; }

  std::vector<ControllerOutput> control(const Measurement& meas) override {
    std::vector<ControllerOutput> out(topo_->size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].u = pressure_allocation(phase_pressures(*topo_, i, meas.counts, saturation_[i]), timing_);
    return out;
  }

 private:
  const NetworkTopology* topo_;
  SignalTiming timing_;
  std::vector<std::vector<double>> saturation_;
};

}  // namespace twolane
