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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"

using namespace twolane;
using namespace twolane::testing;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const char* id, bool ok, const std::string& what) {
  std::printf("%s %s %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void predictor_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t M = 1 + static_cast<std::size_t>(t % 6);
    const Eigen::Index q = 4 * (t % 5);
    std::vector<Matrix> b, c;
    for (std::size_t h = 0; h < M; ++h) {
      b.push_back(random_matrix(rng, 8, 4, 0, 1));
      c.push_back(random_matrix(rng, 8, q, 0, 1));
    }
    const Vector x0 = random_vector(rng, 8, 0, 60);
    const Vector U = random_vector(rng, 4 * static_cast<Eigen::Index>(M), 10, 70);
    const Vector Z = random_vector(rng, q * static_cast<Eigen::Index>(M), 10, 70);
    const Vector y = predict_trajectory(assemble_stacked(b, c), x0, U, Z);
    Vector x = x0;
    for (std::size_t h = 0; h < M; ++h) {
      const auto hh = static_cast<Eigen::Index>(h);
      x = x - b[h] * U.segment(4 * hh, 4) + c[h] * Z.segment(q * hh, q);
      worst = std::max(worst, (trajectory_block(y, 8, h) - x).cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(t0);
  report("A1", worst < 1e-10 && secs < 5.0,
         fmt("predictor equivalence: 1000 instances, max abs error %.3g (< 1e-10), %.2f s (< 5 s)", worst, secs));
}

void admm_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  const SignalTiming timing;
  BlockAdmmOptions opt;
  opt.rule = StopRule::residual;
  opt.eps_stop = 1e-5;
  opt.max_sweeps = 20000;
  opt.t_max = 30.0;
  double worst = 0.0, worst_cycle = 0.0;
  std::size_t sweeps = 0;
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_mpc_instance(rng, 5, timing);
    const auto res = solve_block_admm(inst.problem, inst.warm, opt);
    const auto ref = solve_dense_qp(inst.dense, plan_vector(inst.warm));
    worst = std::max(worst, (plan_vector(res.U) - ref.x).cwiseAbs().maxCoeff());
    for (Eigen::Index h = 0; h < 5; ++h)
      worst_cycle = std::max(worst_cycle, std::abs(res.U.col(h).sum() + timing.yellow - timing.cycle));
    sweeps += res.sweeps;
  }
  const double secs = seconds_since(t0);
  report("A2", worst < 1e-3 && worst_cycle < 1e-9 && secs < 30.0,
         fmt("ADMM vs dense QP: 100 instances M=5, max coordinate error %.3g (< 1e-3), max cycle error %.3g "
             "(< 1e-9), mean %.0f sweeps, %.2f s (< 30 s)",
             worst, worst_cycle, static_cast<double>(sweeps) / 100.0, secs));
}

// Neighbor controls are drawn per phase from the box: cycle-feasible plans
// share block sums, which leaves part of C unobservable.
void estimator_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sc = load("grid_2x3");
  auto cfg = sc.plant;
  cfg.split_profile = {};
  const Plant plant(sc.topology, cfg, sc.timing, {}, 1);
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (std::size_t i = 0; i < sc.topology.size(); ++i) {
    const Matrix c_true = plant.true_transfer_matrix(i, 0);
    const Matrix b = plant.true_outflow_matrix(i, 0);
    CouplingEstimate est{Matrix::Zero(8, c_true.cols()), 1.0};
    Vector x = Vector::Constant(8, 2000.0);
    for (int k = 0; k < 200; ++k) {
      const Vector u = random_vector(rng, 4, sc.timing.u_min, sc.timing.u_max);
      const Vector z = random_vector(rng, c_true.cols(), sc.timing.u_min, sc.timing.u_max);
      const Vector next = x - b * u + c_true * z;
      est = update_transfer_estimate(est, next, x, b, u, z);
      x = next;
    }
    worst = std::max(worst, (est.c_hat - c_true).norm() / c_true.norm());
  }
  const double secs = seconds_since(t0);
  report("A3", worst < 0.10 && secs < 10.0,
         fmt("estimator consistency: 6 intersections x 200 steps, worst relative error %.4f (< 0.10), %.2f s (< 10 s)",
             worst, secs));
}

void estimator_optimality() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> eps(0.0, 1e-3);
  CouplingEstimate est{Matrix::Zero(8, 12), 1.0};
  std::size_t violations = 0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Vector xk = random_vector(rng, 8, 0, 50), xm = random_vector(rng, 8, 0, 50);
    const Matrix b = random_matrix(rng, 8, 4, 0, 1);
    const Vector u = random_vector(rng, 4, 10, 70), z = random_vector(rng, 12, 10, 70);
    const auto next = update_transfer_estimate(est, xk, xm, b, u, z);
    const double best = transfer_objective(next.c_hat, est, xk, xm, b, u, z);
    auto check = [&](const Matrix& other) {
      const double gap = best - transfer_objective(other, est, xk, xm, b, u, z);
      worst = std::max(worst, gap);
      violations += gap > 1e-9 * (1.0 + std::abs(best)) ? 1 : 0;
    };
    check(est.c_hat);
    for (int p = 0; p < 100; ++p) {
      Matrix pert = next.c_hat;
      for (Eigen::Index e = 0; e < pert.size(); ++e) pert.data()[e] += eps(rng);
      check(pert);
    }
    est = next;
  }
  report("A4", violations == 0,
         fmt("estimate update optimality: 50 updates x 101 comparisons, %zu violations, max excess %.3g", violations,
             worst));
}

struct Outcome {
  RunResult result;
  double seconds = 0.0;
};

Outcome bundled_run(const fs::path& out) {
  const auto sc = load("grid_2x3");
  RunOptions opt;
  opt.out = out;
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{run_scenario(sc, opt), 0.0};
  o.seconds = seconds_since(t0);
  return o;
}

const ControllerRun& find(const RunResult& r, const std::string& label) {
  for (const auto& run : r.runs)
    if (run.label == label) return run;
  throw MalformedConfig("missing controller " + label);
}

void ordering(const Outcome& o) {
  const double fixed = find(o.result, "fixed_time").summary.avg_delay_s;
  const double mp = find(o.result, "max_pressure").summary.avg_delay_s;
  const double road = find(o.result, "mpc_road").summary.avg_delay_s;
  const double dmpc = find(o.result, "dmpc_admm").summary.avg_delay_s;
  const double ratio = dmpc / fixed;
  const bool ok = dmpc < mp && mp < fixed && dmpc < road && ratio <= 0.80 && o.seconds < 300.0;
  report("A5", ok,
         fmt("delay ordering on grid_2x3 (60 steps): dmpc_admm %.2f s < max_pressure %.2f s < fixed_time %.2f s, "
             "mpc_road %.2f s, dmpc/fixed %.3f (<= 0.80), run %.2f s (< 300 s)",
             dmpc, mp, fixed, road, ratio, o.seconds));
}

void computation_time(const Outcome& o) {
  const double dmpc = find(o.result, "dmpc_admm").mean_solve_ms;
  const double central = find(o.result, "centralized_ref").mean_solve_ms;
  const double ratio = dmpc / central;
  report("A6", ratio <= 0.67,
         fmt("solve time: dmpc_admm %.4f ms per intersection vs centralized_ref %.4f ms per step, ratio %.3f (<= 0.67)",
             dmpc, central, ratio));
}

void conservation_and_feasibility(const std::vector<const Outcome*>& runs) {
  const SignalTiming timing = load("grid_2x3").timing;
  double cons = 0.0, cycle = 0.0, box = 0.0;
  std::size_t controls = 0;
  for (const auto* o : runs)
    for (const auto& run : o->result.runs) {
      for (const auto& rec : run.records) cons = std::max(cons, std::abs(rec.conservation_error));
      for (const auto& step : run.outputs)
        for (const auto& out : step) {
          ++controls;
          cycle = std::max(cycle, std::abs(out.u.sum() + timing.yellow - timing.cycle));
          box = std::max({box, timing.u_min - out.u.minCoeff(), out.u.maxCoeff() - timing.u_max});
        }
    }
  report("A7", cons <= 1e-9 && cycle <= 1e-9 && box <= 0.0,
         fmt("conservation and feasibility: max conservation error %.3g (<= 1e-9), %zu controls, max cycle error "
             "%.3g (<= 1e-9), max box violation %.3g (<= 0)",
             cons, controls, cycle, box));
}

void forecaster_sanity() {
  // Constant series: hold-last start, 20 updates of burn-in.
  ArForecaster cst(3, 0.5);
  const Vector c = (Vector(3) << 0.4, 1.7, -2.5).finished();
  for (int k = 0; k < 20; ++k) update_ar_weights(cst, c);
  double cst_err = 0.0;
  for (const auto& v : forecast_coefficients(cst, 10).values) cst_err = std::max(cst_err, (v - c).cwiseAbs().maxCoeff());

  ArForecaster lin(2, 0.5);
  lin.weights << 2.0, -1.0;
  auto series = [](double k) { return (Vector(2) << 3.0 + 0.5 * k, -1.0 + 0.25 * k).finished(); };
  for (int k = 0; k < 6; ++k) update_ar_weights(lin, series(k));
  double lin_err = 0.0;
  const auto fc = forecast_coefficients(lin, 11);
  for (std::size_t h = 0; h < fc.values.size(); ++h)
    lin_err = std::max(lin_err, (fc.values[h] - series(6.0 + static_cast<double>(h))).cwiseAbs().maxCoeff());
  report("A8", cst_err == 0.0 && lin_err < 1e-9,
         fmt("AR forecaster: constant series max forecast error %.3g (exact), linear series with weights (2, -1) "
             "max error %.3g (< 1e-9)",
             cst_err, lin_err));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void determinism(const fs::path& a, const fs::path& b) {
  std::size_t files = 0, differ = 0;
  std::string first;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.rfind("timing", 0) == 0) continue;  // wall-clock measurements
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differ;
      if (first.empty()) first = fs::relative(e.path(), a).string();
    }
  }
  report("A9", files > 0 && differ == 0,
         fmt("determinism: %zu output files compared across two runs with the same seed, %zu differ%s%s", files,
             differ, first.empty() ? "" : ", first: ", first.c_str()));
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "twolane_acceptance";
  fs::remove_all(root);
  try {
    predictor_equivalence();
    admm_correctness();
    estimator_consistency();
    estimator_optimality();
    const Outcome first = bundled_run(root / "run_a");
    ordering(first);
    computation_time(first);
    const Outcome second = bundled_run(root / "run_b");
    conservation_and_feasibility({&first, &second});
    forecaster_sanity();
    determinism(root / "run_a", root / "run_b");
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
