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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "twolane/errors.hpp"
#include "twolane/qp.hpp"
#include "twolane/types.hpp"

namespace twolane {

enum class StopReason { tolerance, max_iter, time_budget };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance:
      return "tolerance";
    case StopReason::max_iter:
      return "max_iter";
    case StopReason::time_budget:
      return "time_budget";
  }
  return "?";
}

struct SolverTrace {
  struct Entry {
    std::size_t iteration = 0;
    double primal = 0.0;     // r
    double dual = 0.0;       // s
    double objective = 0.0;
    double ms = 0.0;         // elapsed since the solve started
  };
  std::vector<Entry> entries;
  StopReason stop = StopReason::max_iter;
};

/// ½xᵀPx + qᵀx.
struct Quadratic {
  Matrix P;
  Vector q;

  double operator()(const Vector& x) const { return quadratic_value(P, q, x); }
};

struct TwoBlockOptions {
  double rho = 1.0;
  double primal_tol = 1e-8;
  double dual_tol = 1e-8;
  std::size_t max_iter = 10000;
};

struct TwoBlockResult {
  Vector x;
  Vector z;
  Vector lambda;
  SolverTrace trace;
};

/// Classic ADMM for min f(x) + g(z) s.t. Ax + Bz = d with quadratic f, g.
/// Starts from z0 (zero when empty) and λ = 0.
inline TwoBlockResult solve_two_block(const Quadratic& f, const Quadratic& g, const Matrix& A,
                                      const Matrix& B, const Vector& d, const TwoBlockOptions& opt,
                                      const Vector& z0 = Vector()) {
  const auto nx = f.q.size(), nz = g.q.size(), p = d.size();
  if (f.P.rows() != nx || f.P.cols() != nx || g.P.rows() != nz || g.P.cols() != nz ||
      A.rows() != p || A.cols() != nx || B.rows() != p || B.cols() != nz)
    throw ShapeMismatch("two-block ADMM: inconsistent shapes");
  if (!(opt.rho > 0.0)) throw ShapeMismatch("two-block ADMM: rho must be positive");
  const auto start = std::chrono::steady_clock::now();
  const double rho = opt.rho;
  const Eigen::LDLT<Matrix> x_sys(f.P + rho * A.transpose() * A);
  const Eigen::LDLT<Matrix> z_sys(g.P + rho * B.transpose() * B);

  TwoBlockResult res;
  res.z = z0.size() == nz ? z0 : Vector::Zero(nz);
  res.lambda = Vector::Zero(p);
  res.x = Vector::Zero(nx);
  double reference = 0.0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    res.x = x_sys.solve(-(f.q + A.transpose() * res.lambda + rho * A.transpose() * (B * res.z - d)));
    const Vector z_prev = res.z;
    res.z = z_sys.solve(-(g.q + B.transpose() * res.lambda + rho * B.transpose() * (A * res.x - d)));
    const Vector r = A * res.x + B * res.z - d;
    res.lambda += rho * r;
    const Vector s = rho * A.transpose() * B * (res.z - z_prev);
    SolverTrace::Entry e;
    e.iteration = it;
    e.primal = r.norm();
    e.dual = s.norm();
    e.objective = f(res.x) + g(res.z);
    e.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    res.trace.entries.push_back(e);
    if (!std::isfinite(e.primal) || !std::isfinite(e.dual))
      throw Divergence("two-block ADMM produced non-finite residuals");
    if (it == 1) reference = std::max({e.primal, e.dual, 1e-8});
    if (std::max(e.primal, e.dual) > 1e6 * reference)
      throw Divergence("two-block ADMM residuals grew beyond 1e6x their initial size; check rho");
    if (e.primal <= opt.primal_tol && e.dual <= opt.dual_tol) {
      res.trace.stop = StopReason::tolerance;
      return res;
    }
  }
  res.trace.stop = StopReason::max_iter;
  return res;
}

/// f_m(U_m) = ½U_mᵀ H U_m + gᵀU_m over the M green times of phase m.
struct PhaseBlock {
  Matrix H;
  Vector g;
};

/// Four phase blocks coupled by the stacked cycle residual ϑ.
struct AugmentedProblem {
  std::array<PhaseBlock, kPhases> blocks;
  std::size_t horizon = 0;
  std::vector<bool> cycle_rows;  // ϑ covers step h when cycle_rows[h]
  double cycle_target = 0.0;     // S − Q
  double rho = 1.0;
  double u_min = 0.0;
  double u_max = 0.0;
  Vector lambda;                 // one multiplier per step; uncovered rows stay 0

  double objective(const Matrix& U) const {
    double v = 0.0;
    for (std::size_t m = 0; m < kPhases; ++m) {
      const Vector row = U.row(static_cast<Eigen::Index>(m)).transpose();
      v += quadratic_value(blocks[m].H, blocks[m].g, row);
    }
    return v;
  }

  /// ϑ per step (zero on uncovered rows).
  Vector cycle_residual(const Matrix& U) const {
    Vector theta = Vector::Zero(static_cast<Eigen::Index>(horizon));
    for (std::size_t h = 0; h < horizon; ++h)
      if (cycle_rows[h]) theta(static_cast<Eigen::Index>(h)) = U.col(static_cast<Eigen::Index>(h)).sum() - cycle_target;
    return theta;
  }
};

/// Which test ends the sweeps. `multiplier` is ‖λ − ϑ‖∞ < ε_stop; `residual` is
/// ‖r‖ < ε_stop and ‖s‖ < ε_stop; `either` stops on whichever fires first.
enum class StopRule { multiplier, residual, either };

struct BlockAdmmOptions {
  double eps_stop = 1e-3;
  double t_max = 2.0;  // seconds
  std::size_t max_sweeps = 50;
  StopRule rule = StopRule::either;
  bool record_iterates = false;
  /// Called after every block solve with (sweep, block, current U).
  std::function<void(std::size_t, std::size_t, const Matrix&)> on_block_update;
};

struct BlockAdmmResult {
  Matrix U;             // 4 x M, projected onto the exact cycle
  Matrix U_admm;        // last ADMM iterate before projection
  Vector lambda;
  SolverTrace trace;
  std::size_t sweeps = 0;
  double theta_first = 0.0;  // ‖ϑ‖₂ after sweep 1
  double theta_final = 0.0;  // ‖ϑ‖₂ after the last sweep
  std::vector<Vector> lambda_history;  // λ^(0), λ^(1), … when recorded
  std::vector<Vector> theta_history;   // ϑ^(1), ϑ^(2), … when recorded
};

inline void check_cycle_box(double cycle_target, double u_min, double u_max) {
  if (kPhases * u_min > cycle_target + 1e-12 || kPhases * u_max < cycle_target - 1e-12)
    throw InfeasibleBox("green-time box [" + std::to_string(u_min) + ", " + std::to_string(u_max) +
                        "] cannot meet the usable cycle " + std::to_string(cycle_target));
}

/// Projects every column (one per step) onto {Σ u = target, box}.
inline Matrix project_cycle(Matrix U, double cycle_target, double u_min, double u_max) {
  for (Eigen::Index h = 0; h < U.cols(); ++h) {
    Vector col = U.col(h);
    project_capped_simplex(col, cycle_target, u_min, u_max);
    U.col(h) = col;
  }
  return U;
}

/// Gauss–Seidel sweeps over the four phase blocks followed by dual ascent on
/// the cycle multipliers. The returned U is projected onto the exact cycle.
inline BlockAdmmResult solve_block_admm(const AugmentedProblem& prob, const Matrix& warm_start,
                                        const BlockAdmmOptions& opt) {
  check_cycle_box(prob.cycle_target, prob.u_min, prob.u_max);
  const auto M = static_cast<Eigen::Index>(prob.horizon);
  if (warm_start.rows() != static_cast<Eigen::Index>(kPhases) || warm_start.cols() != M ||
      static_cast<Eigen::Index>(prob.cycle_rows.size()) != M || prob.lambda.size() != M)
    throw ShapeMismatch("block ADMM: inconsistent horizon");
  for (const auto& b : prob.blocks)
    if (b.H.rows() != M || b.H.cols() != M || b.g.size() != M)
      throw ShapeMismatch("block ADMM: block cost has the wrong size");
  if (!(prob.rho > 0.0)) throw ShapeMismatch("block ADMM: rho must be positive");
  if (!(opt.eps_stop > 0.0) || !(opt.t_max > 0.0))
    throw ShapeMismatch("block ADMM: eps_stop and t_max must be positive");

  const auto start = std::chrono::steady_clock::now();
  Vector cover = Vector::Zero(M);
  for (Eigen::Index h = 0; h < M; ++h) cover(h) = prob.cycle_rows[static_cast<std::size_t>(h)] ? 1.0 : 0.0;

  BlockAdmmResult res;
  Matrix U = warm_start.cwiseMax(prob.u_min).cwiseMin(prob.u_max);
  Vector lambda = prob.lambda.cwiseProduct(cover);
  if (opt.record_iterates) res.lambda_history.push_back(lambda);

  std::array<Matrix, kPhases> block_hessian;
  for (std::size_t m = 0; m < kPhases; ++m) {
    block_hessian[m] = prob.blocks[m].H;
    block_hessian[m].diagonal() += prob.rho * cover;
  }

  for (std::size_t sweep = 1;; ++sweep) {
    const Matrix U_prev = U;
    for (std::size_t m = 0; m < kPhases; ++m) {
      const auto row = static_cast<Eigen::Index>(m);
      const Vector others = U.colwise().sum().transpose() - U.row(row).transpose();
      const Vector lin = prob.blocks[m].g +
                         cover.cwiseProduct(lambda + prob.rho * (others.array() - prob.cycle_target).matrix());
      U.row(row) = solve_box_qp(block_hessian[m], lin, prob.u_min, prob.u_max, U.row(row).transpose()).transpose();
      if (opt.on_block_update) opt.on_block_update(sweep, m, U);
    }
    const Vector theta = prob.cycle_residual(U);
    lambda += prob.rho * theta;
    const double eps_multiplier = (lambda - theta).cwiseProduct(cover).cwiseAbs().maxCoeff();

    SolverTrace::Entry e;
    e.iteration = sweep;
    e.primal = theta.norm();
    e.dual = prob.rho * (U - U_prev).norm();
    e.objective = prob.objective(U);
    e.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    res.trace.entries.push_back(e);
    if (opt.record_iterates) {
      res.lambda_history.push_back(lambda);
      res.theta_history.push_back(theta);
    }
    if (sweep == 1) res.theta_first = e.primal;
    res.theta_final = e.primal;
    res.sweeps = sweep;

    const bool multiplier_ok = eps_multiplier < opt.eps_stop;
    const bool residual_ok = e.primal < opt.eps_stop && e.dual < opt.eps_stop;
    bool done = false;
    switch (opt.rule) {
      case StopRule::multiplier:
        done = multiplier_ok;
        break;
      case StopRule::residual:
        done = residual_ok;
        break;
      case StopRule::either:
        done = multiplier_ok || residual_ok;
        break;
    }
    if (done) {
      res.trace.stop = StopReason::tolerance;
      break;
    }
    if (e.ms > opt.t_max * 1000.0) {
      res.trace.stop = StopReason::time_budget;
      break;
    }
    if (sweep >= opt.max_sweeps) {
      res.trace.stop = StopReason::max_iter;
      break;
    }
  }
  res.U_admm = U;
  res.lambda = lambda;
  res.U = project_cycle(U, prob.cycle_target, prob.u_min, prob.u_max);
  return res;
}

}  // namespace twolane
