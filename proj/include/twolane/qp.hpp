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
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "twolane/errors.hpp"
#include "twolane/types.hpp"

namespace twolane {

/// Euclidean projection of `v` onto {x : Σx = total, lo ≤ x ≤ hi}.
/// Throws InfeasibleBox when n·lo > total or n·hi < total.
inline void project_capped_simplex(Eigen::Ref<Vector> v, double total, double lo, double hi) {
  const auto n = v.size();
  if (n == 0) return;
  const double dn = static_cast<double>(n);
  if (dn * lo > total + 1e-12 || dn * hi < total - 1e-12)
    throw InfeasibleBox("cycle target " + std::to_string(total) + " unreachable within [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
  // g(τ) = Σ clamp(v_i − τ, lo, hi) is non-increasing and piecewise linear
  // with breakpoints v_i − hi and v_i − lo.
  std::vector<double> bp;
  bp.reserve(static_cast<std::size_t>(2 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    bp.push_back(v(i) - hi);
    bp.push_back(v(i) - lo);
  }
  std::sort(bp.begin(), bp.end());
  auto g = [&](double tau) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::clamp(v(i) - tau, lo, hi);
    return s;
  };
  // Locate adjacent breakpoints with g(a) ≥ total ≥ g(b); g is linear between.
  std::size_t lo_idx = 0, hi_idx = bp.size() - 1;
  while (hi_idx - lo_idx > 1) {
    const std::size_t mid = (lo_idx + hi_idx) / 2;
    if (g(bp[mid]) >= total)
      lo_idx = mid;
    else
      hi_idx = mid;
  }
  const double a = bp[lo_idx], b = bp[hi_idx];
  const double ga = g(a), gb = g(b);
  double tau = a;
  if (ga <= total) {
    tau = a;
  } else if (gb >= total) {
    tau = b;
  } else {
    tau = a + (ga - total) * (b - a) / (ga - gb);
  }
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std::clamp(v(i) - tau, lo, hi);
  // Spread the rounding remainder over interior coordinates.
  const double gap = total - v.sum();
  if (gap != 0.0) {
    Eigen::Index interior = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (v(i) > lo && v(i) < hi) ++interior;
    if (interior > 0)
      for (Eigen::Index i = 0; i < n; ++i)
        if (v(i) > lo && v(i) < hi) v(i) += gap / static_cast<double>(interior);
  }
}

inline double quadratic_value(const Matrix& H, const Vector& g, const Vector& x) {
  return 0.5 * x.dot(H * x) + g.dot(x);
}

/// min ½xᵀHx + gᵀx over lo ≤ x ≤ hi with H symmetric positive definite.
/// Projected Newton with an Armijo search along the projection arc.
inline Vector solve_box_qp(const Matrix& H, const Vector& g, double lo, double hi, Vector x,
                           double tol = 1e-12, std::size_t max_iter = 200) {
  const auto n = g.size();
  if (x.size() != n) x = Vector::Constant(n, 0.5 * (lo + hi));
  x = x.cwiseMax(lo).cwiseMin(hi);
  const double scale = 1.0 + g.cwiseAbs().maxCoeff() + (H * x).cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> free;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector grad = H * x + g;
    const Vector pg = x - (x - grad).cwiseMax(lo).cwiseMin(hi);
    if (pg.cwiseAbs().maxCoeff() <= tol * scale) break;
    free.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = x(i) <= lo && grad(i) > 0.0;
      const bool at_hi = x(i) >= hi && grad(i) < 0.0;
      if (!at_lo && !at_hi) free.push_back(i);
    }
    Vector dir = Vector::Zero(n);
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix hf(nf, nf);
      Vector gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = grad(free[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b)
          hf(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
      }
      const Vector df = hf.ldlt().solve(-gf);
      for (Eigen::Index a = 0; a < nf; ++a) dir(free[static_cast<std::size_t>(a)]) = df(a);
    }
    const double f0 = quadratic_value(H, g, x);
    double alpha = 1.0;
    Vector trial = x;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = (x + alpha * dir).cwiseMax(lo).cwiseMin(hi);
      const double decrease = grad.dot(x - trial);
      if (quadratic_value(H, g, trial) <= f0 - 1e-4 * decrease) {
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved || (trial - x).cwiseAbs().maxCoeff() == 0.0) {
      // Fall back to a projected gradient step with exact line minimization.
      const Vector d = -pg;
      const double curv = d.dot(H * d);
      const double t = curv > 0.0 ? std::max(0.0, -grad.dot(d) / curv) : 1.0;
      trial = (x + t * d).cwiseMax(lo).cwiseMin(hi);
      if ((trial - x).cwiseAbs().maxCoeff() == 0.0) break;
    }
    x = trial;
  }
  return x;
}

/// Variables whose sum is pinned, e.g. the four phases of one cycle.
struct SumGroup {
  std::vector<Eigen::Index> indices;
  double total = 0.0;
};

/// min ½xᵀHx + gᵀx subject to lo ≤ x ≤ hi and Σ_{i∈G} x_i = total for each
/// group. Groups must be disjoint.
struct BoxedQp {
  Matrix H;
  Vector g;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<SumGroup> groups;
};

struct QpOptions {
  double tol = 1e-10;
  std::size_t max_iter = 200000;
  bool polish = true;
};

struct QpResult {
  Vector x;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool polished = false;
};

inline void project_feasible(const BoxedQp& qp, Vector& x) {
  std::vector<char> grouped(static_cast<std::size_t>(x.size()), 0);
  Vector buf;
  for (const auto& grp : qp.groups) {
    buf.resize(static_cast<Eigen::Index>(grp.indices.size()));
    for (std::size_t a = 0; a < grp.indices.size(); ++a) buf(static_cast<Eigen::Index>(a)) = x(grp.indices[a]);
    project_capped_simplex(buf, grp.total, qp.lo, qp.hi);
    for (std::size_t a = 0; a < grp.indices.size(); ++a) {
      x(grp.indices[a]) = buf(static_cast<Eigen::Index>(a));
      grouped[static_cast<std::size_t>(grp.indices[a])] = 1;
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!grouped[static_cast<std::size_t>(i)]) x(i) = std::clamp(x(i), qp.lo, qp.hi);
}

namespace detail {

/// Solves the equality-constrained KKT system on the free variables of an
/// active set guessed from `x`; accepts the result only if it is feasible and
/// every bound multiplier has the right sign.
inline bool polish_active_set(const BoxedQp& qp, Vector& x) {
  const auto n = x.size();
  const double range = qp.hi - qp.lo;
  const double snap = 1e-7 * std::max(1.0, range);
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // -1 lo, +1 hi, 0 free
  Vector xb = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x(i) <= qp.lo + snap) {
      state[static_cast<std::size_t>(i)] = -1;
      xb(i) = qp.lo;
    } else if (x(i) >= qp.hi - snap) {
      state[static_cast<std::size_t>(i)] = 1;
      xb(i) = qp.hi;
    }
  }
  std::vector<Eigen::Index> free;
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i)
    if (state[static_cast<std::size_t>(i)] == 0) {
      pos[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(free.size());
      free.push_back(i);
    }
  std::vector<int> group_of(static_cast<std::size_t>(n), -1);
  std::vector<std::size_t> active_groups;
  for (std::size_t gi = 0; gi < qp.groups.size(); ++gi) {
    bool any_free = false;
    double fixed = 0.0;
    for (auto idx : qp.groups[gi].indices) {
      group_of[static_cast<std::size_t>(idx)] = static_cast<int>(gi);
      if (state[static_cast<std::size_t>(idx)] == 0)
        any_free = true;
      else
        fixed += xb(idx);
    }
    if (any_free)
      active_groups.push_back(gi);
    else if (std::abs(fixed - qp.groups[gi].total) > 1e-9)
      return false;
  }
  const auto nf = static_cast<Eigen::Index>(free.size());
  const auto ng = static_cast<Eigen::Index>(active_groups.size());
  Matrix kkt = Matrix::Zero(nf + ng, nf + ng);
  Vector rhs = Vector::Zero(nf + ng);
  for (Eigen::Index a = 0; a < nf; ++a) {
    const auto ia = free[static_cast<std::size_t>(a)];
    double r = -qp.g(ia);
    for (Eigen::Index j = 0; j < n; ++j)
      if (state[static_cast<std::size_t>(j)] != 0) r -= qp.H(ia, j) * xb(j);
    rhs(a) = r;
    for (Eigen::Index b = 0; b < nf; ++b) kkt(a, b) = qp.H(ia, free[static_cast<std::size_t>(b)]);
  }
  for (Eigen::Index c = 0; c < ng; ++c) {
    const auto& grp = qp.groups[active_groups[static_cast<std::size_t>(c)]];
    double fixed = 0.0;
    for (auto idx : grp.indices) {
      if (state[static_cast<std::size_t>(idx)] == 0) {
        kkt(nf + c, pos[static_cast<std::size_t>(idx)]) = 1.0;
        kkt(pos[static_cast<std::size_t>(idx)], nf + c) = 1.0;
      } else {
        fixed += xb(idx);
      }
    }
    rhs(nf + c) = grp.total - fixed;
  }
  Eigen::FullPivLU<Matrix> lu(kkt);
  if (!lu.isInvertible()) return false;
  const Vector sol = lu.solve(rhs);
  Vector cand = xb;
  const double feas_tol = 1e-9 * std::max(1.0, range);
  for (Eigen::Index a = 0; a < nf; ++a) {
    const double v = sol(a);
    if (v < qp.lo - feas_tol || v > qp.hi + feas_tol) return false;
    cand(free[static_cast<std::size_t>(a)]) = std::clamp(v, qp.lo, qp.hi);
  }
  const Vector grad = qp.H * cand + qp.g;
  const double sign_tol = 1e-8 * (1.0 + grad.cwiseAbs().maxCoeff());
  std::vector<double> nu(qp.groups.size(), 0.0);
  for (Eigen::Index c = 0; c < ng; ++c) nu[active_groups[static_cast<std::size_t>(c)]] = sol(nf + c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = state[static_cast<std::size_t>(i)];
    if (s == 0) continue;
    const int gi = group_of[static_cast<std::size_t>(i)];
    const double reduced = grad(i) + (gi >= 0 ? nu[static_cast<std::size_t>(gi)] : 0.0);
    if (s < 0 && reduced < -sign_tol) return false;
    if (s > 0 && reduced > sign_tol) return false;
  }
  x = cand;
  return true;
}

}  // namespace detail

/// Accelerated projected gradient (FISTA with adaptive restart) followed by
/// an active-set polish. Used for the centralized and road-level problems and
/// as the reference optimum in tests.
inline QpResult solve_dense_qp(const BoxedQp& qp, const Vector& warm = Vector(), const QpOptions& opt = {}) {
  const auto n = qp.g.size();
  if (qp.H.rows() != n || qp.H.cols() != n) throw ShapeMismatch("dense QP: Hessian shape mismatch");
  QpResult res;
  Vector x = warm.size() == n ? warm : Vector::Constant(n, 0.5 * (qp.lo + qp.hi));
  project_feasible(qp, x);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(qp.H, Eigen::EigenvaluesOnly);
  const double lip = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lip;
  const double scale = 1.0 + qp.g.cwiseAbs().maxCoeff();
  Vector y = x, x_prev = x;
  double t = 1.0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    Vector x_next = y - step * (qp.H * y + qp.g);
    project_feasible(qp, x_next);
    // Gradient-mapping restart keeps momentum from overshooting.
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x;
      x_next = x - step * (qp.H * x + qp.g);
      project_feasible(qp, x_next);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x_prev = x;
    x = x_next;
    t = t_next;
    if (it % 8 == 0) {
      Vector probe = x - step * (qp.H * x + qp.g);
      project_feasible(qp, probe);
      if (lip * (x - probe).cwiseAbs().maxCoeff() <= opt.tol * scale) {
        res.converged = true;
        break;
      }
    }
  }
  if (opt.polish) {
    Vector polished = x;
    if (detail::polish_active_set(qp, polished) &&
        quadratic_value(qp.H, qp.g, polished) <= quadratic_value(qp.H, qp.g, x) + 1e-12 * scale) {
      x = polished;
      res.polished = true;
      res.converged = true;
    }
  }
  res.x = x;
  res.objective = quadratic_value(qp.H, qp.g, x);
  return res;
}

}  // namespace twolane
