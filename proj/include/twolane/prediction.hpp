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

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "twolane/errors.hpp"
#include "twolane/topology.hpp"
#include "twolane/types.hpp"

namespace twolane {

/// Block lower-triangular M-step predictor of one subsystem.
struct StackedModel {
  std::size_t horizon = 0;
  std::size_t states = 0;
  std::size_t inputs = 0;    // columns of each B block
  std::size_t coupling = 0;  // columns of each C block
  Matrix b_stack;            // (states·M) x (inputs·M)
  Matrix c_stack;            // (states·M) x (coupling·M)
};

/// Block (r, c) = B(k+c) for c ≤ r, zero above the diagonal; same for C.
inline StackedModel assemble_stacked(std::span<const Matrix> b_seq, std::span<const Matrix> c_seq) {
  if (b_seq.empty() || b_seq.size() != c_seq.size())
    throw ShapeMismatch("stacked model needs M >= 1 matrices of each kind");
  StackedModel model;
  model.horizon = b_seq.size();
  model.states = static_cast<std::size_t>(b_seq[0].rows());
  model.inputs = static_cast<std::size_t>(b_seq[0].cols());
  model.coupling = static_cast<std::size_t>(c_seq[0].cols());
  const auto M = static_cast<Eigen::Index>(model.horizon);
  const auto n = static_cast<Eigen::Index>(model.states);
  const auto m = static_cast<Eigen::Index>(model.inputs);
  const auto q = static_cast<Eigen::Index>(model.coupling);
  for (std::size_t h = 0; h < model.horizon; ++h) {
    if (b_seq[h].rows() != n || b_seq[h].cols() != m || c_seq[h].rows() != n || c_seq[h].cols() != q)
      throw ShapeMismatch("stacked model: matrix " + std::to_string(h) + " has the wrong shape");
  }
  model.b_stack = Matrix::Zero(n * M, m * M);
  model.c_stack = Matrix::Zero(n * M, q * M);
  for (Eigen::Index r = 0; r < M; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) {
      model.b_stack.block(r * n, c * m, n, m) = b_seq[static_cast<std::size_t>(c)];
      if (q > 0) model.c_stack.block(r * n, c * q, n, q) = c_seq[static_cast<std::size_t>(c)];
    }
  return model;
}

/// E·x = (1_M ⊗ I) x.
inline Vector replicate(const Vector& x, std::size_t horizon) {
  Vector out(x.size() * static_cast<Eigen::Index>(horizon));
  for (std::size_t h = 0; h < horizon; ++h) out.segment(static_cast<Eigen::Index>(h) * x.size(), x.size()) = x;
  return out;
}

/// y = E x(k) − 𝓑 U + 𝓒 Z = [x(k+1); …; x(k+M)].
inline Vector predict_trajectory(const StackedModel& model, const Vector& x0, const Vector& U,
                                 const Vector& Z) {
  if (static_cast<std::size_t>(x0.size()) != model.states || U.size() != model.b_stack.cols() ||
      Z.size() != model.c_stack.cols())
    throw ShapeMismatch("predict_trajectory: inconsistent shapes");
  Vector y = replicate(x0, model.horizon) - model.b_stack * U;
  if (Z.size() > 0) y += model.c_stack * Z;
  return y;
}

/// State h (0-based, meaning step k+h+1) of a stacked trajectory.
inline Vector trajectory_block(const Vector& y, std::size_t states, std::size_t h) {
  return y.segment(static_cast<Eigen::Index>(h * states), static_cast<Eigen::Index>(states));
}

/// ρ_im(k+h) and downstream averages ρ̄_im(k+h), columns h = 1..M.
struct DensityForecast {
  Matrix rho;      // 8 x M, veh/m
  Matrix rho_bar;  // 8 x M, veh/m; zero for sink-only lanes
  std::array<bool, kLanes> has_downstream{};
};

/// `trajectories` maps intersection → stacked 8M trajectory. Needs entries
/// for i and every intersection owning a lane downstream of i.
inline DensityForecast predicted_densities(const NetworkTopology& topology, std::size_t i,
                                           std::size_t horizon,
                                           const std::map<std::size_t, Vector>& trajectories) {
  auto fetch = [&](std::size_t j) -> const Vector& {
    auto it = trajectories.find(j);
    if (it == trajectories.end())
      throw MissingNeighborTrajectory("no predicted trajectory for intersection " + std::to_string(j + 1));
    if (static_cast<std::size_t>(it->second.size()) != kLanes * horizon)
      throw ShapeMismatch("trajectory of intersection " + std::to_string(j + 1) + " has the wrong length");
    return it->second;
  };
  const auto M = static_cast<Eigen::Index>(horizon);
  DensityForecast out;
  out.rho = Matrix::Zero(kLanes, M);
  out.rho_bar = Matrix::Zero(kLanes, M);
  const Vector& own = fetch(i);
  for (std::size_t m = 0; m < kLanes; ++m) {
    const LaneId id{i, m};
    const double len = topology.length(id);
    const auto& ds = topology.downstream(id);
    out.has_downstream[m] = !ds.lanes.empty();
    for (Eigen::Index h = 0; h < M; ++h) {
      out.rho(static_cast<Eigen::Index>(m), h) = own(h * kLanes + static_cast<Eigen::Index>(m)) / len;
      if (ds.lanes.empty()) continue;
      double sum = 0.0;
      for (const auto& d : ds.lanes)
        sum += fetch(d.intersection)(h * kLanes + static_cast<Eigen::Index>(d.lane)) / topology.length(d);
      out.rho_bar(static_cast<Eigen::Index>(m), h) = sum / static_cast<double>(ds.lanes.size());
    }
  }
  return out;
}

}  // namespace twolane
