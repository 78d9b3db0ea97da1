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

#include <chrono>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "twolane/admm.hpp"
#include "twolane/controllers/controller.hpp"
#include "twolane/controllers/mpc.hpp"
#include "twolane/errors.hpp"
#include "twolane/prediction.hpp"
#include "twolane/qp.hpp"
#include "twolane/topology.hpp"

namespace twolane {

/// Network-wide quadratic program: every intersection's lane-level density
/// cost, with neighbor couplings taken from the true transfer matrices and
/// downstream densities predicted jointly instead of exchanged.
struct NetworkQp {
  std::size_t intersections = 0;
  std::size_t horizon = 0;
  QuadraticCost cost;
  Matrix prediction;  // (8·N·M) x (4·N·M): lane trajectories y = offset + prediction·U
  Vector offset;

  /// Index of u_im(k+h) in the stacked decision vector.
  Eigen::Index index(std::size_t i, std::size_t h, std::size_t m) const {
    return static_cast<Eigen::Index>((i * horizon + h) * kPhases + m);
  }
};

inline NetworkQp build_network_qp(const NetworkTopology& topo, const Measurement& meas, const TransferOracle& oracle,
                                  const MpcParams& params) {
  if (!oracle) throw ShapeMismatch("centralized reference needs the true transfer matrices");
  const std::size_t N = topo.size();
  const std::size_t M = params.horizon;
  if (M < 1) throw ShapeMismatch("MPC horizon must be at least 1");
  if (meas.counts.size() != N || meas.outflow.size() != N) throw ShapeMismatch("centralized reference: bad measurement");
  NetworkQp net;
  net.intersections = N;
  net.horizon = M;
  const auto nu = static_cast<Eigen::Index>(kPhases * N * M);
  const auto ny = static_cast<Eigen::Index>(kLanes * N * M);
  net.prediction = Matrix::Zero(ny, nu);
  net.offset = Vector::Zero(ny);
  auto yrow = [&](std::size_t i, std::size_t h, std::size_t s) {
    return static_cast<Eigen::Index>((i * M + h) * kLanes + s);
  };

  for (std::size_t i = 0; i < N; ++i) {
    const auto& nbrs = topo.neighbors(i);
    std::vector<Matrix> b_seq(M, meas.outflow[i]);
    std::vector<Matrix> c_seq;
    for (std::size_t h = 0; h < M; ++h) c_seq.push_back(oracle(i, meas.step + h));
    const StackedModel model = assemble_stacked(b_seq, c_seq);
    const Vector base = replicate(meas.counts[i], M);
    for (std::size_t r = 0; r < kLanes * M; ++r) {
      const std::size_t h = r / kLanes;
      const std::size_t s = r % kLanes;
      const Eigen::Index row = yrow(i, h, s);
      net.offset(row) = base(static_cast<Eigen::Index>(r));
      for (std::size_t hh = 0; hh < M; ++hh)
        for (std::size_t m = 0; m < kPhases; ++m)
          net.prediction(row, net.index(i, hh, m)) -=
              model.b_stack(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(hh * kPhases + m));
      for (std::size_t hh = 0; hh < M; ++hh)
        for (std::size_t l = 0; l < nbrs.size(); ++l)
          for (std::size_t m = 0; m < kPhases; ++m)
            net.prediction(row, net.index(nbrs[l], hh, m)) += model.c_stack(
                static_cast<Eigen::Index>(r), static_cast<Eigen::Index>((hh * nbrs.size() + l) * kPhases + m));
    }
  }

  std::vector<std::vector<std::pair<Eigen::Index, double>>> rows;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t s = 0; s < kLanes; ++s) {
      const LaneId lane{i, s};
      const auto& ds = topo.downstream(lane).lanes;
      if (ds.empty() && params.sink_policy == SinkLanePolicy::exclude) continue;
      for (std::size_t h = 0; h < M; ++h) {
        std::vector<std::pair<Eigen::Index, double>> terms{{yrow(i, h, s), params.density_scale / topo.length(lane)}};
        for (const auto& d : ds)
          terms.emplace_back(yrow(d.intersection, h, d.lane),
                             -params.density_scale / (topo.length(d) * static_cast<double>(ds.size())));
        rows.push_back(std::move(terms));
      }
    }
  const auto nr = static_cast<Eigen::Index>(rows.size());
  Matrix G = Matrix::Zero(nr, nu);
  Vector a = Vector::Zero(nr);
  for (Eigen::Index r = 0; r < nr; ++r)
    for (const auto& [row, w] : rows[static_cast<std::size_t>(r)]) {
      G.row(r) += w * net.prediction.row(row);
      a(r) += w * net.offset(row);
    }
  Vector rdiag(nu);
  for (Eigen::Index c = 0; c < nu; ++c) rdiag(c) = params.r(c % static_cast<Eigen::Index>(kPhases));
  net.cost.H = 2.0 * (G.transpose() * G);
  net.cost.H.diagonal() += 2.0 * rdiag;
  net.cost.g = 2.0 * G.transpose() * a;
  net.cost.constant = a.squaredNorm();
  return net;
}

/// Solves the network-wide problem in one place with the dense QP solver.
class CentralizedController : public Controller {
 public:
  CentralizedController(const NetworkTopology& topo, SignalTiming timing, MpcParams params, TransferOracle oracle)
      : topo_(&topo), timing_(timing), params_(params), oracle_(std::move(oracle)) {
    check_cycle_box(timing_.usable(), timing_.u_min, timing_.u_max);
    const PhaseVector eq = equal_split(timing_);
    plan_ = Vector(static_cast<Eigen::Index>(kPhases * topo.size() * params_.horizon));
    for (Eigen::Index c = 0; c < plan_.size(); ++c) plan_(c) = eq(c % static_cast<Eigen::Index>(kPhases));
  }

  std::string name() const override { return "centralized_ref"; }

  const QpResult& last_result() const { return last_; }

  std::vector<ControllerOutput> control(const Measurement& meas) override {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t N = topo_->size();
    const std::size_t M = params_.horizon;
    const NetworkQp net = build_network_qp(*topo_, meas, oracle_, params_);
    BoxedQp qp;
    qp.H = net.cost.H;
    qp.g = net.cost.g;
    qp.lo = timing_.u_min;
    qp.hi = timing_.u_max;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t h = 0; h < M; ++h) {
        SumGroup grp;
        grp.total = timing_.usable();
        for (std::size_t m = 0; m < kPhases; ++m) grp.indices.push_back(net.index(i, h, m));
        qp.groups.push_back(std::move(grp));
      }
    Vector warm = plan_;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t h = 0; h + 1 < M; ++h)
        warm.segment(net.index(i, h, 0), kPhases) = plan_.segment(net.index(i, h + 1, 0), kPhases);
    QpOptions qo;
    qo.tol = params_.qp_tol;
    const auto ts = std::chrono::steady_clock::now();
    last_ = solve_dense_qp(qp, warm, qo);
    const double solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - ts).count();
    plan_ = last_.x;

    std::vector<ControllerOutput> out(N);
    const double total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t i = 0; i < N; ++i) {
      Vector u = plan_.segment(net.index(i, 0, 0), kPhases);
      project_capped_simplex(u, timing_.usable(), timing_.u_min, timing_.u_max);
      out[i].u = u;
      // One solve serves every intersection; each row reports the whole cost.
      out[i].diag.solve_ms = solve_ms;
      out[i].diag.agent_ms = total_ms;
      out[i].diag.sweeps = last_.iterations;
      out[i].diag.stop = last_.converged ? StopReason::tolerance : StopReason::max_iter;
    }
    return out;
  }

 private:
  const NetworkTopology* topo_;
  SignalTiming timing_;
  MpcParams params_;
  TransferOracle oracle_;
  Vector plan_;
  QpResult last_;
};

}  // namespace twolane
