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
#include <cstddef>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "twolane/admm.hpp"
#include "twolane/controllers/controller.hpp"
#include "twolane/errors.hpp"
#include "twolane/estimation.hpp"
#include "twolane/prediction.hpp"
#include "twolane/qp.hpp"
#include "twolane/topology.hpp"

namespace twolane {

/// Lane-level (8 states) or road-level (4 states, two lanes summed) model.
enum class ModelKind { lane, road };

inline std::size_t model_states(ModelKind kind) { return kind == ModelKind::lane ? kLanes : kRoads; }

struct StateRef {
  std::size_t intersection = 0;
  std::size_t state = 0;
  friend auto operator<=>(const StateRef&, const StateRef&) = default;
};

/// Length used to turn a state count into a density. A road's two lanes
/// share its count, so the road divides by their combined length.
inline double state_length(const NetworkTopology& topo, ModelKind kind, std::size_t j, std::size_t s) {
  if (kind == ModelKind::lane) return topo.length({j, s});
  return topo.length({j, 2 * s}) + topo.length({j, 2 * s + 1});
}

/// Static per-intersection model data derived from the topology.
struct AgentModel {
  ModelKind kind = ModelKind::lane;
  std::size_t intersection = 0;
  std::size_t states = kLanes;
  Matrix aggregate;  // states x 8
  std::vector<double> length;
  std::vector<std::vector<StateRef>> downstream;
  std::vector<bool> in_cost;
  SparsityPattern b_pattern;
  SparsityPattern c_pattern;
};

inline AgentModel make_agent_model(const NetworkTopology& topo, std::size_t i, ModelKind kind,
                                   SinkLanePolicy sink_policy, CouplingPattern coupling) {
  AgentModel model;
  model.kind = kind;
  model.intersection = i;
  model.states = model_states(kind);
  const auto n = static_cast<Eigen::Index>(model.states);
  model.aggregate = Matrix::Zero(n, kLanes);
  for (std::size_t m = 0; m < kLanes; ++m) {
    const std::size_t s = kind == ModelKind::lane ? m : road_of_lane(m);
    model.aggregate(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m)) = 1.0;
  }
  model.length.resize(model.states);
  model.downstream.resize(model.states);
  model.in_cost.resize(model.states);
  for (std::size_t s = 0; s < model.states; ++s) {
    model.length[s] = state_length(topo, kind, i, s);
    std::set<StateRef> targets;
    for (std::size_t m = 0; m < kLanes; ++m) {
      if (model.aggregate(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m)) == 0.0) continue;
      for (const auto& d : topo.downstream({i, m}).lanes)
        targets.insert({d.intersection, kind == ModelKind::lane ? d.lane : road_of_lane(d.lane)});
    }
    model.downstream[s].assign(targets.begin(), targets.end());
    model.in_cost[s] = !targets.empty() || sink_policy == SinkLanePolicy::zero_target;
  }

  Matrix incidence = Matrix::Zero(kLanes, kPhases);
  for (std::size_t m = 0; m < kLanes; ++m) incidence(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(phase_of_lane(m))) = 1.0;
  model.b_pattern = SparsityPattern::of(model.aggregate * incidence);

  const auto& nbrs = topo.neighbors(i);
  const auto q = static_cast<Eigen::Index>(kPhases * nbrs.size());
  if (coupling == CouplingPattern::dense) {
    model.c_pattern = SparsityPattern::dense(model.states, static_cast<std::size_t>(q));
  } else {
    Matrix structural = Matrix::Zero(kLanes, q);
    for (std::size_t l = 0; l < nbrs.size(); ++l)
      for (std::size_t g = 0; g < kLanes; ++g)
        for (const auto& d : topo.downstream({nbrs[l], g}).lanes)
          if (d.intersection == i)
            structural(static_cast<Eigen::Index>(d.lane), static_cast<Eigen::Index>(l * kPhases + phase_of_lane(g))) = 1.0;
    model.c_pattern = SparsityPattern::of(model.aggregate * structural);
  }
  return model;
}

/// f(U) = ½UᵀHU + gᵀU + constant.
struct QuadraticCost {
  Matrix H;
  Vector g;
  double constant = 0.0;

  double value(const Vector& U) const { return quadratic_value(H, g, U) + constant; }
};

/// Inputs of the density-balancing cost of one subsystem.
struct DensityCostInputs {
  const StackedModel* model = nullptr;
  Vector x0;                   // states
  Vector Z;                    // neighbor plans, stacked
  std::vector<double> length;  // per state
  Matrix rho_bar;              // states x M, veh/m
  std::vector<bool> in_cost;
  double scale = 1.0;
  PhaseVector r = PhaseVector::Zero();
};

/// Σ_h Σ_s (scale·(ρ_s(k+h) − ρ̄_s(k+h)))² + Σ_h u(k+h)ᵀ R u(k+h) as a
/// quadratic in U = [u(k); …; u(k+M−1)].
inline QuadraticCost build_density_cost(const DensityCostInputs& in) {
  const StackedModel& model = *in.model;
  const auto n = static_cast<Eigen::Index>(model.states);
  const auto M = static_cast<Eigen::Index>(model.horizon);
  const auto nu = model.b_stack.cols();
  if (in.x0.size() != n || static_cast<Eigen::Index>(in.length.size()) != n ||
      in.rho_bar.rows() != n || in.rho_bar.cols() != M || static_cast<Eigen::Index>(in.in_cost.size()) != n ||
      static_cast<std::size_t>(nu) != kPhases * model.horizon)
    throw ShapeMismatch("density cost: inconsistent shapes");
  Vector base = replicate(in.x0, model.horizon);
  if (in.Z.size() > 0) base += model.c_stack * in.Z;

  std::vector<Eigen::Index> rows;
  for (Eigen::Index h = 0; h < M; ++h)
    for (Eigen::Index s = 0; s < n; ++s)
      if (in.in_cost[static_cast<std::size_t>(s)]) rows.push_back(h * n + s);
  const auto nr = static_cast<Eigen::Index>(rows.size());
  Matrix G(nr, nu);
  Vector a(nr);
  for (Eigen::Index r = 0; r < nr; ++r) {
    const Eigen::Index row = rows[static_cast<std::size_t>(r)];
    const Eigen::Index s = row % n;
    const Eigen::Index h = row / n;
    const double w = in.scale / in.length[static_cast<std::size_t>(s)];
    G.row(r) = -w * model.b_stack.row(row);
    a(r) = w * base(row) - in.scale * in.rho_bar(s, h);
  }
  QuadraticCost cost;
  Vector rdiag(nu);
  for (Eigen::Index c = 0; c < nu; ++c) rdiag(c) = in.r(c % static_cast<Eigen::Index>(kPhases));
  cost.H = 2.0 * (G.transpose() * G);
  cost.H.diagonal() += 2.0 * rdiag;
  cost.g = 2.0 * G.transpose() * a;
  cost.constant = a.squaredNorm();
  return cost;
}

/// Splits a lane-level cost into its four phase blocks. The lane model's
/// Hessian has no cross-phase terms, so nothing is dropped.
inline std::array<PhaseBlock, kPhases> phase_blocks(const QuadraticCost& cost, std::size_t horizon) {
  const auto M = static_cast<Eigen::Index>(horizon);
  const auto P = static_cast<Eigen::Index>(kPhases);
  std::array<PhaseBlock, kPhases> blocks;
  for (Eigen::Index m = 0; m < P; ++m) {
    auto& b = blocks[static_cast<std::size_t>(m)];
    b.H.resize(M, M);
    b.g.resize(M);
    for (Eigen::Index h1 = 0; h1 < M; ++h1) {
      b.g(h1) = cost.g(h1 * P + m);
      for (Eigen::Index h2 = 0; h2 < M; ++h2) b.H(h1, h2) = cost.H(h1 * P + m, h2 * P + m);
    }
  }
  return blocks;
}

/// U as a 4 x M matrix (row m = U_m) from the stacked h-major vector.
inline Matrix plan_matrix(const Vector& U, std::size_t horizon) {
  return Eigen::Map<const Matrix>(U.data(), kPhases, static_cast<Eigen::Index>(horizon));
}

inline Vector plan_vector(const Matrix& U) {
  return Eigen::Map<const Vector>(U.data(), U.size());
}

/// Equal split of the usable cycle, projected onto the box.
inline PhaseVector equal_split(const SignalTiming& timing) {
  check_cycle_box(timing.usable(), timing.u_min, timing.u_max);
  Vector u = Vector::Constant(kPhases, timing.usable() / static_cast<double>(kPhases));
  project_capped_simplex(u, timing.usable(), timing.u_min, timing.u_max);
  return u;
}

/// Shift a 4 x M plan one step forward, repeating the last column.
inline Matrix shift_plan(const Matrix& U) {
  Matrix out = U;
  const auto M = U.cols();
  if (M > 1) out.leftCols(M - 1) = U.rightCols(M - 1);
  return out;
}

/// What one agent broadcasts after a control step.
struct NeighborMessage {
  std::size_t sender = 0;
  std::size_t step = 0;
  bool bootstrap = false;  // round-0 placeholder built from the first measurement
  Vector plan;             // U_j, h-major, 4M
  Vector trajectory;       // y_j = [x_j(k+1); …; x_j(k+M)], states·M
};

/// One intersection's controller: estimator, forecasters, stacked model and
/// optimizer. Mutated only by its own step() call.
class MpcAgent {
 public:
  struct StepResult {
    ControllerOutput output;
    NeighborMessage message;
    std::vector<SolverTrace::Entry> trace;
  };

  MpcAgent(const NetworkTopology& topo, std::size_t i, ModelKind kind, const MpcParams& params,
           const SignalTiming& timing, TransferOracle oracle = {})
      : topo_(&topo),
        params_(params),
        timing_(timing),
        oracle_(std::move(oracle)),
        model_(make_agent_model(topo, i, kind, params.sink_policy, params.coupling_pattern)),
        phi_(params.ar_order, params.delta, params.ar_normalization),
        theta_(params.ar_order, params.delta, params.ar_normalization) {
    if (params_.horizon < 1) throw ShapeMismatch("MPC horizon must be at least 1");
    if (params_.oracle_coupling && !oracle_) throw ShapeMismatch("oracle coupling requested without an oracle");
    check_cycle_box(timing_.usable(), timing_.u_min, timing_.u_max);
    est_.mu = params_.mu;
    est_.c_hat = Matrix::Zero(static_cast<Eigen::Index>(model_.states),
                              static_cast<Eigen::Index>(kPhases * topo.neighbors(i).size()));
    const PhaseVector eq = equal_split(timing_);
    plan_ = eq.replicate(1, static_cast<Eigen::Index>(params_.horizon));
    lambda_ = Vector::Zero(static_cast<Eigen::Index>(params_.horizon));
  }

  std::size_t id() const { return model_.intersection; }
  const AgentModel& model() const { return model_; }
  const CouplingEstimate& estimate() const { return est_; }
  const Vector& last_trajectory() const { return trajectory_; }
  const ArForecaster& b_forecaster() const { return phi_; }
  const ArForecaster& c_forecaster() const { return theta_; }
  /// Last one-step AR prediction errors (b, c).
  std::pair<double, double> ar_errors() const { return ar_err_; }

  /// Senders whose message this agent needs each round.
  std::vector<std::size_t> required_senders() const {
    std::set<std::size_t> s(topo_->neighbors(id()).begin(), topo_->neighbors(id()).end());
    s.insert(topo_->out_neighbors(id()).begin(), topo_->out_neighbors(id()).end());
    return {s.begin(), s.end()};
  }

  NeighborMessage bootstrap(const Measurement& meas) const {
    NeighborMessage msg;
    msg.sender = id();
    msg.step = meas.step;
    msg.bootstrap = true;
    msg.plan = plan_vector(plan_);
    msg.trajectory = replicate(model_.aggregate * meas.counts.at(id()), params_.horizon);
    return msg;
  }

  StepResult step(const Measurement& meas, const std::map<std::size_t, NeighborMessage>& inbox) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t i = id();
    const std::size_t k = meas.step;
    const std::size_t M = params_.horizon;
    const auto Mi = static_cast<Eigen::Index>(M);
    const auto n = static_cast<Eigen::Index>(model_.states);
    const auto& nbrs = topo_->neighbors(i);

    bool all_fresh = true;
    for (std::size_t j : required_senders()) {
      auto it = inbox.find(j);
      if (it == inbox.end())
        throw MissingMessage("intersection " + std::to_string(i + 1) + " has no message from " +
                             std::to_string(j + 1) + " at step " + std::to_string(k));
      const auto& msg = it->second;
      const bool valid = msg.bootstrap ? msg.step == k : msg.step + 1 == k;
      if (!valid || msg.plan.size() != static_cast<Eigen::Index>(kPhases * M) ||
          msg.trajectory.size() != n * Mi)
        throw MissingMessage("intersection " + std::to_string(i + 1) + " received a stale or malformed message from " +
                             std::to_string(j + 1));
      if (msg.bootstrap) all_fresh = false;
    }

    const Vector x = model_.aggregate * meas.counts.at(i);
    const Matrix B = model_.aggregate * meas.outflow.at(i);

    // (a) coupling estimate from the last applied controls.
    if (prev_ && all_fresh) {
      Vector z_prev(static_cast<Eigen::Index>(kPhases * nbrs.size()));
      for (std::size_t l = 0; l < nbrs.size(); ++l)
        z_prev.segment(static_cast<Eigen::Index>(l * kPhases), kPhases) = inbox.at(nbrs[l]).plan.head(kPhases);
      est_ = update_transfer_estimate(est_, x, prev_->x, prev_->B, prev_->u, z_prev);
    }

    // (b) AR forecasts of the nonzero coefficients.
    std::vector<Matrix> b_seq{B}, c_seq;
    bool fallback = false;
    ar_err_.first = update_ar_weights(phi_, model_.b_pattern.flatten(B));
    const auto b_fc = forecast_coefficients(phi_, M);
    for (const auto& v : b_fc.values) b_seq.push_back(model_.b_pattern.unflatten(v));
    fallback |= b_fc.fallback && M > 1;
    if (params_.oracle_coupling) {
      for (std::size_t h = 0; h < M; ++h) c_seq.push_back(model_.aggregate * oracle_(i, k + h));
    } else {
      const Matrix c_now = params_.coupling_pattern == CouplingPattern::dense
                               ? est_.c_hat
                               : model_.c_pattern.unflatten(model_.c_pattern.flatten(est_.c_hat));
      c_seq.push_back(c_now);
      ar_err_.second = update_ar_weights(theta_, model_.c_pattern.flatten(est_.c_hat));
      const auto c_fc = forecast_coefficients(theta_, M);
      for (const auto& v : c_fc.values) c_seq.push_back(model_.c_pattern.unflatten(v));
      fallback |= c_fc.fallback && M > 1;
    }

    // (c) stacked model, neighbor plans shifted by one step.
    const StackedModel model = assemble_stacked(b_seq, c_seq);
    Vector Z(static_cast<Eigen::Index>(kPhases * nbrs.size() * M));
    for (std::size_t h = 0; h < M; ++h)
      for (std::size_t l = 0; l < nbrs.size(); ++l) {
        const auto& msg = inbox.at(nbrs[l]);
        const std::size_t src = msg.bootstrap ? h : std::min(h + 1, M - 1);
        Z.segment(static_cast<Eigen::Index>((h * nbrs.size() + l) * kPhases), kPhases) =
            msg.plan.segment(static_cast<Eigen::Index>(src * kPhases), kPhases);
      }

    // (d) downstream targets from neighbors' broadcast trajectories.
    Matrix rho_bar = Matrix::Zero(n, Mi);
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto& targets = model_.downstream[static_cast<std::size_t>(s)];
      if (targets.empty()) continue;
      for (Eigen::Index h = 0; h < Mi; ++h) {
        double sum = 0.0;
        for (const auto& t : targets) {
          auto it = inbox.find(t.intersection);
          if (it == inbox.end())
            throw MissingNeighborTrajectory("intersection " + std::to_string(i + 1) +
                                            " lacks the trajectory of " + std::to_string(t.intersection + 1));
          const auto& msg = it->second;
          // Message y_j(k−1) holds x_j(k..k+M−1); x_j(k+h+1) sits at block
          // h+1, the final step holds the last block.
          const Eigen::Index blk = msg.bootstrap ? 0 : std::min<Eigen::Index>(h + 1, Mi - 1);
          sum += msg.trajectory(blk * n + static_cast<Eigen::Index>(t.state)) /
                 state_length(*topo_, model_.kind, t.intersection, t.state);
        }
        rho_bar(s, h) = sum / static_cast<double>(targets.size());
      }
    }

    DensityCostInputs ci;
    ci.model = &model;
    ci.x0 = x;
    ci.Z = Z;
    ci.length = model_.length;
    ci.rho_bar = rho_bar;
    ci.in_cost = model_.in_cost;
    ci.scale = params_.density_scale;
    ci.r = params_.r;
    const QuadraticCost cost = build_density_cost(ci);

    // (e) solve.
    StepResult result;
    const Matrix warm = shift_plan(plan_);
    const auto ts = std::chrono::steady_clock::now();
    if (model_.kind == ModelKind::lane) {
      AugmentedProblem prob;
      prob.blocks = phase_blocks(cost, M);
      prob.horizon = M;
      prob.cycle_rows.assign(M, true);
      if (params_.skip_first_cycle_row && M > 1) prob.cycle_rows[0] = false;
      prob.cycle_target = timing_.usable();
      prob.rho = params_.rho_admm;
      prob.u_min = timing_.u_min;
      prob.u_max = timing_.u_max;
      prob.lambda = Vector::Zero(Mi);
      if (params_.warm_start_lambda) {
        prob.lambda = lambda_;
        if (Mi > 1) prob.lambda.head(Mi - 1) = lambda_.tail(Mi - 1).eval();
      }
      BlockAdmmOptions opt;
      opt.eps_stop = params_.eps_stop;
      opt.t_max = params_.t_max;
      opt.max_sweeps = params_.max_sweeps;
      opt.rule = params_.stop_rule;
      const BlockAdmmResult sol = solve_block_admm(prob, warm, opt);
      plan_ = sol.U;
      lambda_ = sol.lambda;
      result.output.diag.sweeps = sol.sweeps;
      result.output.diag.primal = sol.trace.entries.back().primal;
      result.output.diag.dual = sol.trace.entries.back().dual;
      result.output.diag.stop = sol.trace.stop;
      if (params_.record_trace) result.trace = sol.trace.entries;
    } else {
      BoxedQp qp;
      qp.H = cost.H;
      qp.g = cost.g;
      qp.lo = timing_.u_min;
      qp.hi = timing_.u_max;
      for (std::size_t h = 0; h < M; ++h) {
        SumGroup grp;
        grp.total = timing_.usable();
        for (std::size_t m = 0; m < kPhases; ++m) grp.indices.push_back(static_cast<Eigen::Index>(h * kPhases + m));
        qp.groups.push_back(std::move(grp));
      }
      QpOptions qo;
      qo.tol = params_.qp_tol;
      const QpResult sol = solve_dense_qp(qp, plan_vector(warm), qo);
      plan_ = project_cycle(plan_matrix(sol.x, M), timing_.usable(), timing_.u_min, timing_.u_max);
      result.output.diag.sweeps = sol.iterations;
      result.output.diag.stop = sol.converged ? StopReason::tolerance : StopReason::max_iter;
    }
    const auto te = std::chrono::steady_clock::now();

    // (f) apply the first control and broadcast.
    const Vector U = plan_vector(plan_);
    trajectory_ = predict_trajectory(model, x, U, Z);
    result.output.u = plan_.col(0);
    result.output.diag.forecast_fallback = fallback;
    result.output.diag.solve_ms = std::chrono::duration<double, std::milli>(te - ts).count();
    result.message.sender = i;
    result.message.step = k;
    result.message.plan = U;
    result.message.trajectory = trajectory_;
    prev_ = Previous{x, B, result.output.u};
    result.output.diag.agent_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

 private:
  struct Previous {
    Vector x;
    Matrix B;
    Vector u;
  };

  const NetworkTopology* topo_;
  MpcParams params_;
  SignalTiming timing_;
  TransferOracle oracle_;
  AgentModel model_;
  CouplingEstimate est_;
  ArForecaster phi_;
  ArForecaster theta_;
  Matrix plan_;
  Vector lambda_;
  Vector trajectory_;
  std::optional<Previous> prev_;
  std::pair<double, double> ar_err_{0.0, 0.0};
};

/// Runs one MpcAgent per intersection in synchronous rounds: every agent
/// reads only the messages of the previous round, so the result does not
/// depend on execution order.
class DistributedMpcController : public Controller {
 public:
  DistributedMpcController(const NetworkTopology& topo, SignalTiming timing, MpcParams params,
                           ModelKind kind, std::string name, TransferOracle oracle = {})
      : topo_(&topo), params_(params), name_(std::move(name)) {
    agents_.reserve(topo.size());
    for (std::size_t i = 0; i < topo.size(); ++i) agents_.emplace_back(topo, i, kind, params, timing, oracle);
  }

  std::string name() const override { return name_; }

  const MpcAgent& agent(std::size_t i) const { return agents_.at(i); }
  const std::map<std::size_t, NeighborMessage>& last_messages() const { return outbox_; }

  std::vector<ControllerOutput> control(const Measurement& meas) override {
    const std::size_t n = agents_.size();
    if (outbox_.empty())
      for (const auto& a : agents_) outbox_[a.id()] = a.bootstrap(meas);
    const std::map<std::size_t, NeighborMessage> round = std::move(outbox_);
    outbox_.clear();

    std::vector<std::optional<MpcAgent::StepResult>> results(n);
    auto run = [&](std::size_t i) {
      std::map<std::size_t, NeighborMessage> inbox;
      for (std::size_t j : agents_[i].required_senders()) {
        auto it = round.find(j);
        if (it != round.end()) inbox.emplace(j, it->second);
      }
      results[i] = agents_[i].step(meas, inbox);
    };
    switch (params_.schedule) {
      case AgentSchedule::forward:
        for (std::size_t i = 0; i < n; ++i) run(i);
        break;
      case AgentSchedule::reverse:
        for (std::size_t i = n; i-- > 0;) run(i);
        break;
      case AgentSchedule::parallel: {
        std::vector<std::exception_ptr> errors(n);
        std::vector<std::thread> workers;
        workers.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
          workers.emplace_back([&, i] {
            try {
              run(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          });
        for (auto& w : workers) w.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
        break;
      }
    }

    std::vector<ControllerOutput> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = results[i]->output;
      outbox_[i] = results[i]->message;
      for (const auto& e : results[i]->trace) trace_.push_back({meas.step, i, e});
    }
    return out;
  }

  std::vector<TraceRow> take_trace() override { return std::exchange(trace_, {}); }

 private:
  const NetworkTopology* topo_;
  MpcParams params_;
  std::string name_;
  std::vector<MpcAgent> agents_;
  std::map<std::size_t, NeighborMessage> outbox_;
  std::vector<TraceRow> trace_;
};

}  // namespace twolane
