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

#include <cmath>
#include <cstddef>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "twolane/errors.hpp"
#include "twolane/types.hpp"

namespace twolane {

/// Structural nonzeros of a matrix, column-major.
class SparsityPattern {
 public:
  SparsityPattern() = default;
  SparsityPattern(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  static SparsityPattern dense(std::size_t rows, std::size_t cols) {
    SparsityPattern p(rows, cols);
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t r = 0; r < rows; ++r) p.entries_.emplace_back(r, c);
    return p;
  }

  /// Pattern of the nonzero entries of `m`.
  static SparsityPattern of(const Matrix& m) {
    SparsityPattern p(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        if (m(r, c) != 0.0) p.entries_.emplace_back(r, c);
    return p;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return entries_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& entries() const { return entries_; }

  bool contains(std::size_t r, std::size_t c) const {
    for (const auto& e : entries_)
      if (e.first == r && e.second == c) return true;
    return false;
  }

  Vector flatten(const Matrix& m) const {
    if (static_cast<std::size_t>(m.rows()) != rows_ || static_cast<std::size_t>(m.cols()) != cols_)
      throw ShapeMismatch("matrix does not match sparsity pattern shape");
    Vector v(entries_.size());
    for (std::size_t e = 0; e < entries_.size(); ++e)
      v(static_cast<Eigen::Index>(e)) = m(entries_[e].first, entries_[e].second);
    return v;
  }

  Matrix unflatten(const Vector& v) const {
    if (static_cast<std::size_t>(v.size()) != entries_.size())
      throw ShapeMismatch("vector length does not match sparsity pattern");
    Matrix m = Matrix::Zero(rows_, cols_);
    for (std::size_t e = 0; e < entries_.size(); ++e)
      m(entries_[e].first, entries_[e].second) = v(static_cast<Eigen::Index>(e));
    return m;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> entries_;
};

/// Ĉ_i(k) and its regularization weight μ_i.
struct CouplingEstimate {
  Matrix c_hat;
  double mu = 1.0;
};

/// Regularized one-step cost of a candidate coupling matrix `c`:
/// ‖x_k − x_{k−1} + B u − c z‖² + μ‖c − Ĉ_prev‖_F².
inline double transfer_objective(const Matrix& c, const CouplingEstimate& prev, const Vector& x_k,
                                 const Vector& x_km1, const Matrix& b_km1, const Vector& u_km1,
                                 const Vector& z_km1) {
  const Vector r = x_k - x_km1 + b_km1 * u_km1 - c * z_km1;
  return r.squaredNorm() + prev.mu * (c - prev.c_hat).squaredNorm();
}

/// One regularized least-squares step of the coupling estimate:
/// Ĉ(k) = Ĉ(k−1) + [x_k − x_{k−1} + B u − Ĉ(k−1) z] zᵀ (μI + z zᵀ)⁻¹.
inline CouplingEstimate update_transfer_estimate(const CouplingEstimate& est, const Vector& x_k,
                                                 const Vector& x_km1, const Matrix& b_km1,
                                                 const Vector& u_km1, const Vector& z_km1) {
  const auto n = est.c_hat.rows();
  const auto q = est.c_hat.cols();
  if (x_k.size() != n || x_km1.size() != n || b_km1.rows() != n || b_km1.cols() != u_km1.size() ||
      z_km1.size() != q)
    throw ShapeMismatch("transfer estimate update: inconsistent shapes");
  if (!(est.mu > 0.0)) throw ShapeMismatch("transfer estimate update: mu must be positive");
  CouplingEstimate next = est;
  if (q == 0) return next;
  const Vector residual = x_k - x_km1 + b_km1 * u_km1 - est.c_hat * z_km1;
  const Matrix gram = est.mu * Matrix::Identity(q, q) + z_km1 * z_km1.transpose();
  // (μI + zzᵀ) is symmetric positive definite; w = (μI + zzᵀ)⁻¹ z.
  const Vector w = gram.ldlt().solve(z_km1);
  next.c_hat += residual * w.transpose();
  return next;
}

/// Normalization of the AR weight step. `norm` divides by δ + ‖η‖₂ as the
/// update is usually written; `squared_norm` divides by δ + ‖η‖₂², which is
/// the stable NLMS form when the stacked regressor has norm above ~2.
enum class ArNormalization { norm, squared_norm };

/// Autoregressive forecaster with p scalar weights shared by every entry of
/// the flattened coefficient vector.
struct ArForecaster {
  std::size_t order = 3;
  double delta = 0.5;
  ArNormalization normalization = ArNormalization::norm;
  Vector weights;              // φ(k), size p
  std::deque<Vector> history;  // history[0] is the most recent entry

  ArForecaster() : ArForecaster(3, 0.5) {}

  ArForecaster(std::size_t p, double d, ArNormalization mode = ArNormalization::norm)
      : order(p), delta(d), normalization(mode), weights(Vector::Zero(static_cast<Eigen::Index>(p))) {
    if (p < 1) throw ShapeMismatch("AR order must be at least 1");
    if (!(d > 0.0 && d <= 1.0)) throw ShapeMismatch("AR delta must lie in (0, 1]");
    weights(0) = 1.0;
  }

  bool ready() const { return history.size() >= order; }

  void reset_weights() {
    weights.setZero();
    weights(0) = 1.0;
  }
};

/// Prediction of the next entry from the buffered history, Σ_q φ_q h_q.
inline Vector ar_one_step(const ArForecaster& f) {
  Vector pred = Vector::Zero(f.history.front().size());
  for (std::size_t q = 0; q < f.order; ++q) pred += f.weights(static_cast<Eigen::Index>(q)) * f.history[q];
  return pred;
}

/// Normalized-gradient weight update with the newest observation, then
/// pushes it into the history. Returns the one-step prediction error norm
/// (zero while the buffer is still filling).
inline double update_ar_weights(ArForecaster& f, const Vector& latest) {
  double err_norm = 0.0;
  if (!f.history.empty() && f.history.front().size() != latest.size())
    throw ShapeMismatch("AR history entries must share one length");
  if (f.ready()) {
    const Vector err = latest - ar_one_step(f);
    err_norm = err.norm();
    Vector step(static_cast<Eigen::Index>(f.order));
    double regressor_sq = 0.0;
    for (std::size_t q = 0; q < f.order; ++q) {
      step(static_cast<Eigen::Index>(q)) = f.history[q].dot(err);
      regressor_sq += f.history[q].squaredNorm();
    }
    const double denom = f.normalization == ArNormalization::norm ? f.delta + std::sqrt(regressor_sq)
                                                                   : f.delta + regressor_sq;
    f.weights += step / denom;
    if (!f.weights.allFinite()) f.reset_weights();
  }
  f.history.push_front(latest);
  while (f.history.size() > f.order) f.history.pop_back();
  return err_norm;
}

struct CoefficientForecast {
  std::vector<Vector> values;  // entries for k+1 .. k+horizon−1
  bool fallback = false;       // history too short: held the last value
};

/// Rolls the AR recursion forward, feeding each forecast back as input.
inline CoefficientForecast forecast_coefficients(const ArForecaster& f, std::size_t horizon) {
  CoefficientForecast out;
  if (horizon <= 1) {
    out.fallback = !f.ready();
    return out;
  }
  if (f.history.empty()) throw ShapeMismatch("cannot forecast without any history");
  if (!f.ready()) {
    out.fallback = true;
    out.values.assign(horizon - 1, f.history.front());
    return out;
  }
  std::deque<Vector> window(f.history.begin(), f.history.begin() + static_cast<std::ptrdiff_t>(f.order));
  for (std::size_t j = 1; j < horizon; ++j) {
    Vector next = Vector::Zero(window.front().size());
    for (std::size_t q = 0; q < f.order; ++q) next += f.weights(static_cast<Eigen::Index>(q)) * window[q];
    out.values.push_back(next);
    window.push_front(std::move(next));
    window.pop_back();
  }
  return out;
}

}  // namespace twolane
