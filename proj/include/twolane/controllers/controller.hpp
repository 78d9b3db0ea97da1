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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "twolane/admm.hpp"
#include "twolane/estimation.hpp"
#include "twolane/types.hpp"

namespace twolane {

/// What every controller sees at step k: x_i(k) and B_i(k) for all i.
struct Measurement {
  std::size_t step = 0;
  std::vector<Vector> counts;   // 8-vectors
  std::vector<Matrix> outflow;  // 8x4
};

struct ControlDiagnostics {
  double agent_ms = 0.0;  // whole per-intersection pipeline
  double solve_ms = 0.0;  // optimizer call only
  std::size_t sweeps = 0;
  double primal = 0.0;
  double dual = 0.0;
  bool forecast_fallback = false;
  StopReason stop = StopReason::tolerance;
};

struct ControllerOutput {
  PhaseVector u = PhaseVector::Zero();
  ControlDiagnostics diag;
};

/// Trace rows emitted by optimizing controllers when tracing is on.
struct TraceRow {
  std::size_t step = 0;
  std::size_t intersection = 0;
  SolverTrace::Entry entry;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ControllerOutput> control(const Measurement& measurement) = 0;
  /// Drains solver trace rows collected since the last call.
  virtual std::vector<TraceRow> take_trace() { return {}; }
};

/// True C_i(k) lookup, only handed to oracle-based controllers.
using TransferOracle = std::function<Matrix(std::size_t, std::size_t)>;

enum class SinkLanePolicy { exclude, zero_target };
enum class CouplingPattern { topology, dense };
enum class AgentSchedule { forward, reverse, parallel };

struct MpcParams {
  std::size_t horizon = 5;
  PhaseVector r = PhaseVector::Constant(1e-4);
  double rho_admm = 1.0;
  std::size_t max_sweeps = 50;
  double eps_stop = 1e-3;
  double t_max = 2.0;
  StopRule stop_rule = StopRule::either;
  bool skip_first_cycle_row = false;  // ϑ over h = 1..M−1 only
  bool warm_start_lambda = true;
  double mu = 1.0;
  double delta = 0.5;
  std::size_t ar_order = 3;
  ArNormalization ar_normalization = ArNormalization::norm;
  double density_scale = 1000.0;  // deviations in veh/km inside the cost
  SinkLanePolicy sink_policy = SinkLanePolicy::zero_target;  // exit lanes aim at an empty world
  CouplingPattern coupling_pattern = CouplingPattern::topology;
  AgentSchedule schedule = AgentSchedule::forward;
  bool oracle_coupling = false;   // use true C instead of the estimate
  bool record_trace = false;
  double qp_tol = 1e-8;
};

}  // namespace twolane
