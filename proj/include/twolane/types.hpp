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
#include <compare>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

namespace twolane {

/// Lanes per intersection (four roads of two lanes each).
inline constexpr std::size_t kLanes = 8;
/// Signal phases per intersection.
inline constexpr std::size_t kPhases = 4;
/// Incoming roads per intersection.
inline constexpr std::size_t kRoads = 4;

/// Zero-based lane address. Config files and CSV output use one-based
/// indices; conversion happens at the I/O boundary only.
struct LaneId {
  std::size_t intersection = 0;
  std::size_t lane = 0;

  friend auto operator<=>(const LaneId&, const LaneId&) = default;
};

inline std::string to_string(const LaneId& id) {
  return "(" + std::to_string(id.intersection + 1) + "," + std::to_string(id.lane + 1) + ")";
}

// Phase m serves two lanes: 1 -> {2,6}, 2 -> {3,7}, 3 -> {4,8}, 4 -> {1,5}
// (one-based). Odd lanes are left-turn lanes, even lanes carry straight and
// right-turn traffic; road r holds lanes {2r-1, 2r}.
inline constexpr std::array<std::array<std::size_t, 2>, kPhases> kPhaseLanes{{
    {1, 5},
    {2, 6},
    {3, 7},
    {0, 4},
}};

inline constexpr std::array<std::size_t, kLanes> kLanePhase{3, 0, 1, 2, 3, 0, 1, 2};

constexpr std::size_t phase_of_lane(std::size_t lane) { return kLanePhase[lane]; }
constexpr std::size_t road_of_lane(std::size_t lane) { return lane / 2; }
constexpr bool is_left_turn_lane(std::size_t lane) { return lane % 2 == 0; }

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Green times of the four phases of one intersection, seconds.
using PhaseVector = Eigen::Matrix<double, 4, 1>;

/// Cycle structure shared by every intersection.
struct SignalTiming {
  double cycle = 120.0;   // S, seconds; also the sampling period
  double yellow = 8.0;    // Q_i, seconds of non-green per cycle
  double u_min = 10.0;
  double u_max = 70.0;

  double usable() const { return cycle - yellow; }
};

}  // namespace twolane
