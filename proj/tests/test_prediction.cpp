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

#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace twolane;
using namespace twolane::testing;

namespace {

std::vector<Matrix> random_mats(std::mt19937_64& rng, std::size_t count, Eigen::Index r, Eigen::Index c) {
  std::vector<Matrix> out;
  for (std::size_t h = 0; h < count; ++h) out.push_back(random_matrix(rng, r, c, -1, 1));
  return out;
}

// x(k+1) = x(k) − B u + C z, iterated.
Vector recursive_oracle(const std::vector<Matrix>& b, const std::vector<Matrix>& c, Vector x, const Vector& U,
                        const Vector& Z) {
  const Eigen::Index m = b[0].cols(), q = c[0].cols();
  Vector out(x.size() * static_cast<Eigen::Index>(b.size()));
  for (std::size_t h = 0; h < b.size(); ++h) {
    const auto hh = static_cast<Eigen::Index>(h);
    x = x - b[h] * U.segment(hh * m, m) + c[h] * Z.segment(hh * q, q);
    out.segment(hh * x.size(), x.size()) = x;
  }
  return out;
}

// Lane (1,2) feeds `targets` at intersection 2; everything else exits.
NetworkTopology chain(const std::vector<int>& targets, double up_len, double down_len) {
  auto doc = feeder_pair();
  json ds = json::array();
  for (int t : targets) ds.push_back(json{2, t});
  json boundary = json::array();
  for (auto& lane : doc["network"]["lanes"]) {
    const int i = lane["id"][0], m = lane["id"][1];
    if (i == 1 && m == 2) {
      lane["downstream"] = ds;
      lane["length"] = up_len;
    }
    bool fed = false;
    for (int t : targets) fed = fed || (i == 2 && m == t);
    if (fed)
      lane["length"] = down_len;
    else
      boundary.push_back({i, m});
  }
  doc["network"]["boundary_lanes"] = boundary;
  return parse_scenario(doc).topology;
}

}  // namespace

TEST(StackedModel, HorizonOneIsTheSingleStepModel) {
  std::mt19937_64 rng(1);
  const auto b = random_mats(rng, 1, 8, 4);
  const auto c = random_mats(rng, 1, 8, 12);
  const auto model = assemble_stacked(b, c);
  EXPECT_EQ(model.b_stack, b[0]);
  EXPECT_EQ(model.c_stack, c[0]);
  const Vector x = random_vector(rng, 8, 0, 20), u = random_vector(rng, 4, 10, 70), z = random_vector(rng, 12, 10, 70);
  EXPECT_EQ(predict_trajectory(model, x, u, z), Vector(x - b[0] * u + c[0] * z));
}

TEST(StackedModel, HorizonTwoBlockStructure) {
  std::mt19937_64 rng(2);
  const auto b = random_mats(rng, 2, 8, 4);
  const auto c = random_mats(rng, 2, 8, 8);
  const auto model = assemble_stacked(b, c);
  ASSERT_EQ(model.b_stack.rows(), 16);
  ASSERT_EQ(model.b_stack.cols(), 8);
  EXPECT_EQ(Matrix(model.b_stack.block(0, 0, 8, 4)), b[0]);
  EXPECT_TRUE(model.b_stack.block(0, 4, 8, 4).isZero(0));
  EXPECT_EQ(Matrix(model.b_stack.block(8, 0, 8, 4)), b[0]);
  EXPECT_EQ(Matrix(model.b_stack.block(8, 4, 8, 4)), b[1]);
  EXPECT_EQ(Matrix(model.c_stack.block(8, 0, 8, 8)), c[0]);
  EXPECT_EQ(Matrix(model.c_stack.block(8, 8, 8, 8)), c[1]);
  EXPECT_TRUE(model.c_stack.block(0, 8, 8, 8).isZero(0));
}

TEST(StackedModel, ZeroMatricesGiveZeroStacks) {
  const std::vector<Matrix> b(3, Matrix::Zero(8, 4)), c(3, Matrix::Zero(8, 0));
  const auto model = assemble_stacked(b, c);
  EXPECT_EQ(model.b_stack.rows(), 24);
  EXPECT_EQ(model.b_stack.cols(), 12);
  EXPECT_EQ(model.c_stack.cols(), 0);
  EXPECT_TRUE(model.b_stack.isZero(0));
}

TEST(StackedModel, ShapeErrors) {
  std::mt19937_64 rng(3);
  const std::vector<Matrix> none;
  EXPECT_THROW(assemble_stacked(none, none), ShapeMismatch);
  auto b = random_mats(rng, 2, 8, 4);
  auto c = random_mats(rng, 2, 8, 8);
  c[1] = Matrix::Zero(8, 4);
  EXPECT_THROW(assemble_stacked(b, c), ShapeMismatch);
  const auto model = assemble_stacked(b, random_mats(rng, 2, 8, 8));
  EXPECT_THROW(predict_trajectory(model, Vector::Zero(8), Vector::Zero(7), Vector::Zero(16)), ShapeMismatch);
}

TEST(PredictTrajectory, NoInputsHoldsTheState) {
  std::mt19937_64 rng(4);
  const auto model = assemble_stacked(random_mats(rng, 4, 8, 4), random_mats(rng, 4, 8, 8));
  const Vector x = random_vector(rng, 8, 0, 30);
  const Vector y = predict_trajectory(model, x, Vector::Zero(16), Vector::Zero(32));
  for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(trajectory_block(y, 8, h), x);
}

TEST(PredictTrajectory, MatchesRecursionForRandomHorizons) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t M = 1 + static_cast<std::size_t>(trial % 6);
    const Eigen::Index q = 4 * (trial % 4);
    const auto b = random_mats(rng, M, 8, 4);
    const auto c = random_mats(rng, M, 8, q);
    const auto model = assemble_stacked(b, c);
    const Vector x = random_vector(rng, 8, 0, 40);
    const Vector U = random_vector(rng, 4 * static_cast<Eigen::Index>(M), 10, 70);
    const Vector Z = random_vector(rng, q * static_cast<Eigen::Index>(M), 10, 70);
    const Vector err = predict_trajectory(model, x, U, Z) - recursive_oracle(b, c, x, U, Z);
    EXPECT_LT(err.cwiseAbs().maxCoeff(), 1e-10) << "M=" << M;
  }
}

TEST(PredictTrajectory, IsAffineInInputs) {
  std::mt19937_64 rng(6);
  const auto model = assemble_stacked(random_mats(rng, 5, 8, 4), random_mats(rng, 5, 8, 8));
  const Vector x = random_vector(rng, 8, 0, 40);
  const Vector U1 = random_vector(rng, 20, 10, 70), U2 = random_vector(rng, 20, 10, 70);
  const Vector Z1 = random_vector(rng, 40, 10, 70), Z2 = random_vector(rng, 40, 10, 70);
  const double a = 0.3;
  const Vector lhs = predict_trajectory(model, x, a * U1 + (1 - a) * U2, a * Z1 + (1 - a) * Z2);
  const Vector rhs =
      a * predict_trajectory(model, x, U1, Z1) + (1 - a) * predict_trajectory(model, x, U2, Z2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PredictedDensities, EqualCountsAndLengthsGiveNoDeviation) {
  auto doc = scenario_json("grid_2x3");
  for (auto& lane : doc["network"]["lanes"]) lane["length"] = 400.0;
  const auto sc = parse_scenario(doc);
  std::map<std::size_t, Vector> traj;
  for (std::size_t i = 0; i < sc.topology.size(); ++i) traj[i] = Vector::Constant(8 * 3, 12.0);
  for (std::size_t i = 0; i < sc.topology.size(); ++i) {
    const auto d = predicted_densities(sc.topology, i, 3, traj);
    for (std::size_t m = 0; m < 8; ++m) {
      if (!d.has_downstream[m]) continue;
      for (Eigen::Index h = 0; h < 3; ++h)
        EXPECT_DOUBLE_EQ(d.rho(static_cast<Eigen::Index>(m), h), d.rho_bar(static_cast<Eigen::Index>(m), h));
    }
  }
}

TEST(PredictedDensities, SingleDownstreamHandEvaluation) {
  const auto topo = chain({1}, 500.0, 250.0);
  std::map<std::size_t, Vector> traj{{0, Vector::Zero(8)}, {1, Vector::Zero(8)}};
  traj[0](1) = 10.0;
  traj[1](0) = 10.0;
  const auto d = predicted_densities(topo, 0, 1, traj);
  EXPECT_DOUBLE_EQ(d.rho(1, 0), 0.02);
  EXPECT_DOUBLE_EQ(d.rho_bar(1, 0), 0.04);
  EXPECT_FALSE(d.has_downstream[0]);
  EXPECT_EQ(d.rho_bar(0, 0), 0.0);
}

TEST(PredictedDensities, AverageOverDownstreamLanes) {
  const auto topo = chain({1, 2}, 500.0, 500.0);
  std::map<std::size_t, Vector> traj{{0, Vector::Zero(8)}, {1, Vector::Zero(8)}};
  traj[1](0) = 5.0;
  traj[1](1) = 15.0;
  const auto d = predicted_densities(topo, 0, 1, traj);
  EXPECT_DOUBLE_EQ(d.rho_bar(1, 0), 0.02);
}

TEST(PredictedDensities, MissingTrajectoryIsReported) {
  const auto topo = chain({1}, 500.0, 500.0);
  const std::map<std::size_t, Vector> traj{{0, Vector::Zero(8)}};
  EXPECT_THROW(predicted_densities(topo, 0, 1, traj), MissingNeighborTrajectory);
  EXPECT_NO_THROW(predicted_densities(topo, 1, 1, {{1, Vector::Zero(8)}}));
}
