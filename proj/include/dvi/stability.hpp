// Copyright 2026 The dvi-density Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Perturbed games and convergence of their equilibria.
//
// Instance k perturbs every selected coefficient by delta(k) * bump and
// replaces U^n by U^n_eps = { v_i >= eps2_i, <v_i, 1> = 1 + eps1 }. The
// affine map v_i = c_i vbar_i + eps2_i with c_i = 1 + eps1 - eps2_i (b - a)
// takes U^n onto U^n_eps, and the VI over U^n_eps becomes the VI over U^n with
//   Pbar = C P C,   Qbar = C (P eps2 + Q).

#ifndef DVI_STABILITY_HPP
#define DVI_STABILITY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dvi/dynamics.hpp"
#include "dvi/equilibrium.hpp"
#include "dvi/error.hpp"
#include "dvi/models.hpp"
#include "dvi/operators.hpp"
#include "dvi/vi_assembly.hpp"

namespace dvi {

struct PerturbationSchedule {
  int k_max = 100;
  std::function<double(int)> eps1 = [](int k) { return 0.1 / k; };
  std::function<double(int, std::size_t)> eps2 = [](int k, std::size_t) { return 0.05 / k; };
  std::function<double(int)> delta = [](int k) { return 0.1 / k; };
  /// Coefficients receiving the delta: any of A, B, E, F, G, f, xi, alpha.
  std::set<std::string> targets{"A", "B", "E", "F", "G", "f", "xi", "alpha"};

  static PerturbationSchedule zero() {
    PerturbationSchedule s;
    s.eps1 = [](int) { return 0.0; };
    s.eps2 = [](int, std::size_t) { return 0.0; };
    s.delta = [](int) { return 0.0; };
    return s;
  }

  /// Checks eps1 > -1 on 1..k_max and that the realized magnitudes have a
  /// decreasing envelope tending to zero (the tail maximum shrinks).
  void validate(std::size_t n) const {
    detail::require(k_max >= 1, ErrorKind::schedule_infeasible, "schedule: need k_max >= 1");
    std::vector<double> mag(static_cast<std::size_t>(k_max) + 1, 0.0);
    for (int k = 1; k <= k_max; ++k) {
      const double e1 = eps1(k);
      detail::require(std::isfinite(e1) && e1 > -1.0, ErrorKind::schedule_infeasible,
                      "schedule: eps1 must exceed -1 (k=" + std::to_string(k) + ")");
      double m = std::max(std::abs(e1), std::abs(delta(k)));
      for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(eps2(k, i)));
      detail::require(std::isfinite(m), ErrorKind::schedule_infeasible, "schedule: non-finite magnitude");
      mag[static_cast<std::size_t>(k)] = m;
    }
    // Tail maxima must not increase and the last one must be below the first
    // unless everything is zero.
    double first_tail = 0.0, last_tail = mag.back();
    for (int k = 1; k <= k_max; ++k) first_tail = std::max(first_tail, mag[static_cast<std::size_t>(k)]);
    detail::require(first_tail == 0.0 || k_max == 1 || last_tail < first_tail, ErrorKind::schedule_infeasible,
                    "schedule: perturbation magnitudes do not decay");
    for (const auto& t : targets) {
      static const std::set<std::string> known{"A", "B", "E", "F", "G", "f", "xi", "alpha"};
      detail::require(known.count(t) == 1, ErrorKind::config, "schedule: unknown coefficient '" + t + "'");
    }
  }
};

struct PerturbedInstance {
  int k = 0;
  GameSpec spec;
  double eps1 = 0.0;
  std::vector<double> eps2;

  std::vector<double> mass() const { return std::vector<double>(spec.n(), 1.0 + eps1); }
};

inline PerturbedInstance perturb_spec(const GameSpec& base, const PerturbationSchedule& sched, int k) {
  detail::require(k >= 1 && k <= sched.k_max, ErrorKind::domain, "perturb_spec: k outside 1..k_max");
  PerturbedInstance out{k, base, sched.eps1(k), {}};
  detail::require(out.eps1 > -1.0, ErrorKind::schedule_infeasible, "perturb_spec: eps1 must exceed -1");
  const double len = base.grid.length();
  for (std::size_t i = 0; i < base.n(); ++i) {
    const double e2 = sched.eps2(k, i);
    if (!(1.0 + out.eps1 > e2 * len)) {
      detail::fail(ErrorKind::schedule_infeasible, "perturb_spec: mass " + std::to_string(1.0 + out.eps1) +
                                                        " does not exceed floor mass " + std::to_string(e2 * len) +
                                                        " in market " + std::to_string(i + 1));
    }
    out.eps2.push_back(e2);
  }
  const double d = sched.delta(k);
  if (d == 0.0) return out;
  const GridFn shape = d * bump(base.grid);
  const LinOp dop = LinOp::multiplication(shape);
  auto has = [&](const char* name) { return sched.targets.count(name) == 1; };
  auto op_map = [&](const LinOp& op) { return op + dop; };
  for (auto& m : out.spec.markets) {
    if (has("A")) m.A = m.A.map(op_map);
    if (has("B")) {
      for (auto& b : m.B_row) b = b.map(op_map);
    }
    if (has("E")) m.E = m.E.map(op_map);
    if (has("F")) m.F = m.F.map(op_map);
    if (has("G")) m.G = m.G + dop;
    if (has("f")) m.f = m.f.map([&](const GridFn& f) { return f + shape; });
    if (has("xi")) m.xi = m.xi + shape;
    if (has("alpha")) m.alpha = m.alpha + shape;
  }
  return out;
}

enum class PerturbedPath { direct, h_map };

struct PerturbedSolve {
  AssembledVI vi;
  EquilibriumResult result;
};

/// Equilibrium over U^n_eps, either by projecting onto the floor/mass set
/// directly or through the map onto U^n.
inline PerturbedSolve solve_perturbed(const PerturbedInstance& inst, Mode mode, PerturbedPath path,
                                      const AssembleOptions& aopt = {}, SolveOptions sopt = {}) {
  AssembledVI vi = assemble(inst.spec, mode, aopt);
  const std::size_t n = vi.n;
  const Grid& grid = vi.grid;
  if (path == PerturbedPath::direct) {
    sopt.floor = inst.eps2;
    sopt.mass = inst.mass();
    sopt.initial.reset();
    auto r = solve(vi, sopt);
    return {std::move(vi), std::move(r)};
  }

  const auto len = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd c(vi.Q.size()), e2(vi.Q.size());
  std::vector<double> ci(n);
  for (std::size_t i = 0; i < n; ++i) {
    ci[i] = 1.0 + inst.eps1 - inst.eps2[i] * grid.length();
    c.segment(static_cast<Eigen::Index>(i) * len, len).setConstant(ci[i]);
    e2.segment(static_cast<Eigen::Index>(i) * len, len).setConstant(inst.eps2[i]);
  }
  AssembledVI bar = vi;
  bar.P = c.asDiagonal() * vi.P * c.asDiagonal();
  bar.P_payoff = c.asDiagonal() * vi.P_payoff * c.asDiagonal();
  bar.Q = c.asDiagonal() * (vi.P * e2 + vi.Q);
  AssembleOptions bopt = aopt;
  bopt.eps0.reset();
  certify(bar, bopt);

  SolveOptions inner = sopt;
  inner.floor.clear();
  inner.mass.clear();
  inner.initial.reset();
  // Distances in the original coordinates are at most max c_i times larger.
  inner.tol = sopt.tol / *std::max_element(ci.begin(), ci.end());
  const EquilibriumResult rb = solve(bar, inner);

  const Eigen::VectorXd v = c.asDiagonal() * rb.u_hat.stacked() + e2;
  EquilibriumResult r = rb;
  r.u_hat = DensityProfile::unstack(grid, n, v);
  r.V_hat = DensityProfile::unstack(grid, n, vi.payoff(v)).components();
  r.owap.clear();
  for (std::size_t i = 0; i < n; ++i) r.owap.push_back(inner_product(r.u_hat[i], r.V_hat[i]));
  // Multiplier of the direct iteration: eps0 lambdabar_i / (eps0bar c_i).
  auto to_direct = [&](std::vector<double> l) {
    for (std::size_t i = 0; i < n; ++i) l[i] = vi.eps0 * l[i] / (bar.eps0 * ci[i]);
    return l;
  };
  r.lambda = to_direct(rb.lambda);
  for (auto& l : r.lambda_trace) l = to_direct(l);
  const std::vector<double> mass = inst.mass();
  const Eigen::VectorXd field = vi.P * v + vi.Q;
  r.vi_residual = vi_residual(field, v, grid, n, mode, inst.eps2, mass, sopt.vi_samples, sopt.seed);
  const double sgn = mode == Mode::nne ? -1.0 : 1.0;
  const Eigen::VectorXd again = project_stacked(v + (sgn * vi.eps0) * field, grid, n, inst.eps2, mass);
  r.fixed_point_residual = weighted_norm(vi.weights, again - v);
  return {std::move(vi), std::move(r)};
}

struct StabilityRow {
  int k = 0;
  double u_gap = 0.0;
  double v_gap = 0.0;
  std::vector<double> owap_gap;
  double p_gap = 0.0;
  double q_gap = 0.0;
  std::vector<std::vector<double>> lambda_trace;
};

struct StabilityReport {
  Mode mode = Mode::nne;
  EquilibriumResult base;
  std::vector<StabilityRow> rows{};
  std::vector<int> skipped{};          // k whose perturbed operator failed the certificate
  std::optional<int> first_certified{};
  bool shrinking = false;              // u_gap at the last k below u_gap at the first certified k
  bool below_threshold = false;        // final u_gap, v_gap, owap_gap below the threshold
  double rate_constant = 0.0;          // median of k * u_gap over k >= 10
  bool rate_within_factor3 = false;    // every k * u_gap on [10, k_max] within 3x of the median
};

struct StabilityOptions {
  AssembleOptions assemble{};
  SolveOptions solve{};
  PerturbedPath path = PerturbedPath::direct;
  double threshold = 1e-2;
  bool keep_lambda_traces = false;
};

inline StabilityReport stability_report(const GameSpec& base, const PerturbationSchedule& sched, Mode mode,
                                        const StabilityOptions& opt = {}) {
  sched.validate(base.n());
  const AssembledVI vi = assemble(base, mode, opt.assemble);
  StabilityReport rep{mode, solve(vi, opt.solve)};
  const Eigen::VectorXd& w = vi.weights;
  const Eigen::VectorXd u0 = rep.base.u_hat.stacked();
  const Eigen::VectorXd v0 = DensityProfile(rep.base.V_hat).stacked();

  for (int k = 1; k <= sched.k_max; ++k) {
    std::optional<PerturbedSolve> solved;
    try {
      solved = solve_perturbed(perturb_spec(base, sched, k), mode, opt.path, opt.assemble, opt.solve);
    } catch (const DefinitenessError&) {
      if (rep.first_certified) {
        // Past the threshold a failing certificate is a real error.
        try {
          throw;
        } catch (const Error& e) {
          e.rethrow_with_context("k=" + std::to_string(k));
        }
      }
      rep.skipped.push_back(k);
      continue;
    } catch (const Error& e) {
      e.rethrow_with_context("k=" + std::to_string(k));
    }
    if (!rep.first_certified) rep.first_certified = k;
    const PerturbedSolve& ps = *solved;
    StabilityRow row;
    row.k = k;
    row.u_gap = weighted_norm(w, ps.result.u_hat.stacked() - u0);
    row.v_gap = weighted_norm(w, DensityProfile(ps.result.V_hat).stacked() - v0);
    for (std::size_t i = 0; i < base.n(); ++i) row.owap_gap.push_back(std::abs(rep.base.owap[i] - ps.result.owap[i]));
    row.p_gap = op_norm(Eigen::MatrixXd(vi.P - ps.vi.P), w);
    row.q_gap = weighted_norm(w, vi.Q - ps.vi.Q);
    if (opt.keep_lambda_traces) row.lambda_trace = ps.result.lambda_trace;
    rep.rows.push_back(std::move(row));
  }

  if (!rep.rows.empty()) {
    const auto& first = rep.rows.front();
    const auto& last = rep.rows.back();
    rep.shrinking = rep.rows.size() == 1 || last.u_gap < first.u_gap || first.u_gap == 0.0;
    rep.below_threshold = last.u_gap < opt.threshold && last.v_gap < opt.threshold;
    for (double g : last.owap_gap) rep.below_threshold = rep.below_threshold && g < opt.threshold;
    std::vector<double> scaled;
    for (const auto& r : rep.rows) {
      if (r.k >= 10) scaled.push_back(r.k * r.u_gap);
    }
    if (!scaled.empty()) {
      std::vector<double> sorted = scaled;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
      rep.rate_constant = sorted[sorted.size() / 2];
      rep.rate_within_factor3 = std::all_of(scaled.begin(), scaled.end(), [&](double s) {
        return s <= 3.0 * rep.rate_constant && s >= rep.rate_constant / 3.0;
      });
    }
  }
  return rep;
}

}  // namespace dvi

#endif  // DVI_STABILITY_HPP
