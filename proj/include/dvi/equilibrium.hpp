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


// Projected fixed-point solvers for NNE and MNE.
//
//   NNE:  u <- Proj((I - eps0 P) u - eps0 Q)
//   MNE:  u <- Proj((I + eps0 P) u + eps0 Q)
//
// Proj is the component-wise projection onto {u_i >= floor_i, <u_i,1> = mass_i}
// (U^n by default). The multiplier of the last projection is reported as the
// equilibrium multiplier.

#ifndef DVI_EQUILIBRIUM_HPP
#define DVI_EQUILIBRIUM_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dvi/density_projection.hpp"
#include "dvi/dynamics.hpp"
#include "dvi/error.hpp"
#include "dvi/function_space.hpp"
#include "dvi/vi_assembly.hpp"

namespace dvi {

struct EquilibriumResult {
  Mode mode = Mode::nne;
  DensityProfile u_hat;
  std::vector<double> lambda;
  std::vector<GridFn> V_hat;
  std::vector<double> owap;
  int iterations = 0;
  std::vector<double> gap_trace;
  std::vector<std::vector<double>> lambda_trace;  // lambda^{(m)}, m = 1..iterations
  double vi_residual = 0.0;
  double fixed_point_residual = 0.0;
};

struct SolveOptions {
  double tol = 1e-9;
  int max_iters = 100000;
  std::optional<DensityProfile> initial{};
  std::vector<double> floor{};  // empty: 0 per market
  std::vector<double> mass{};   // empty: 1 per market
  int vi_samples = 200;
  std::uint64_t seed = 20240601;
  /// Called after every iteration with (m, u^{(m)}, lambda^{(m)}, gap).
  std::function<void(int, const Eigen::VectorXd&, const std::vector<double>&, double)> observer{};
};

namespace detail {

inline std::vector<double> fill_default(const std::vector<double>& v, std::size_t n, double value) {
  if (v.empty()) return std::vector<double>(n, value);
  require(v.size() == n, ErrorKind::domain, "solver: need one floor/mass value per market");
  return v;
}

// Random point of prod_i {u_i >= floor_i, <u_i,1> = mass_i}.
inline Eigen::VectorXd sample_feasible(std::mt19937_64& rng, const Grid& grid, std::size_t n,
                                       const std::vector<double>& floor, const std::vector<double>& mass) {
  const auto len = static_cast<Eigen::Index>(grid.size());
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> keep(0.0, 1.0);
  Eigen::VectorXd z(len * static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double density = keep(rng);  // fraction of active nodes
    Eigen::VectorXd v(len);
    for (Eigen::Index j = 0; j < len; ++j) v[j] = keep(rng) < density ? e(rng) : 0.0;
    if (v.sum() == 0.0) v[std::uniform_int_distribution<Eigen::Index>(0, len - 1)(rng)] = 1.0;
    v *= (mass[i] - floor[i] * grid.weights().sum()) / grid.weights().dot(v);
    v.array() += floor[i];
    z.segment(static_cast<Eigen::Index>(i) * len, len) = v;
  }
  return z;
}

}  // namespace detail

/// Extreme value of <G, Z - u> over the constraint set: the minimum for NNE,
/// the maximum for MNE. Combines the exact vertex optimum (all free mass on
/// the extreme node of each component) with seeded random feasible points.
inline double vi_residual(const Eigen::VectorXd& field, const Eigen::VectorXd& u, const Grid& grid, std::size_t n,
                          Mode mode, const std::vector<double>& floor, const std::vector<double>& mass, int samples,
                          std::uint64_t seed) {
  const auto len = static_cast<Eigen::Index>(grid.size());
  const Eigen::VectorXd w = stacked_weights(grid, n);
  const double sgn = mode == Mode::nne ? 1.0 : -1.0;  // minimize sgn * <G, Z - u>
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto off = static_cast<Eigen::Index>(i) * len;
    const Eigen::VectorXd g = sgn * field.segment(off, len);
    const double free = mass[i] - floor[i] * grid.weights().sum();
    const double at_vertex = floor[i] * grid.weights().dot(g) + free * g.minCoeff();
    best += at_vertex - weighted_dot(grid.weights(), g, u.segment(off, len));
  }
  std::mt19937_64 rng(seed);
  for (int k = 0; k < samples; ++k) {
    const Eigen::VectorXd z = detail::sample_feasible(rng, grid, n, floor, mass);
    best = std::min(best, sgn * weighted_dot(w, field, z - u));
  }
  return sgn * best;
}

namespace detail {

inline EquilibriumResult iterate(const AssembledVI& vi, const SolveOptions& opt) {
  const std::size_t n = vi.n;
  const Grid& grid = vi.grid;
  const auto floor = fill_default(opt.floor, n, 0.0);
  const auto mass = fill_default(opt.mass, n, 1.0);
  const double sgn = vi.mode == Mode::nne ? -1.0 : 1.0;
  require(opt.tol > 0.0, ErrorKind::domain, "solver: tol must be positive");
  require(opt.max_iters > 0, ErrorKind::domain, "solver: max_iters must be positive");

  Eigen::VectorXd u;
  if (opt.initial) {
    require(opt.initial->n() == n, ErrorKind::domain, "solver: initial iterate has wrong market count");
    u = opt.initial->stacked();
  } else {
    u.resize(vi.Q.size());
    const auto len = static_cast<Eigen::Index>(grid.size());
    for (std::size_t i = 0; i < n; ++i) u.segment(static_cast<Eigen::Index>(i) * len, len).setConstant(mass[i] / grid.length());
  }

  // ||u^{(m)} - u_hat|| <= q/(1-q) gap_m for a q-contraction, so stopping at
  // gap < tol (1-q)/q bounds the distance to the fixed point by tol.
  const double q = vi.contraction_factor();
  const double stop = q < 1.0 ? opt.tol * std::min(1.0, (1.0 - q) / std::max(q, 1e-300)) : opt.tol;

  EquilibriumResult out{vi.mode, DensityProfile::unstack(grid, n, u), {}, {}, {}, 0, {}, {}, 0.0, 0.0};
  std::vector<double> lambda;
  for (int m = 1; m <= opt.max_iters; ++m) {
    const Eigen::VectorXd theta = u + (sgn * vi.eps0) * (vi.P * u + vi.Q);
    if (!theta.allFinite()) {
      throw DivergenceError("solver: iterate became non-finite at iteration " + std::to_string(m),
                            static_cast<double>(m));
    }
    Eigen::VectorXd next = project_stacked(theta, grid, n, floor, mass, &lambda);
    const double gap = weighted_norm(vi.weights, next - u);
    u = std::move(next);
    out.gap_trace.push_back(gap);
    out.lambda_trace.push_back(lambda);
    out.iterations = m;
    if (opt.observer) opt.observer(m, u, lambda, gap);
    if (gap < stop) break;
    if (m == opt.max_iters) {
      throw MaxItersError("solver: no convergence after " + std::to_string(m) + " iterations (last gap " +
                              std::to_string(gap) + ")",
                          out.gap_trace);
    }
  }

  out.u_hat = DensityProfile::unstack(grid, n, u);
  out.lambda = lambda;
  const Eigen::VectorXd v = vi.payoff(u);
  const auto parts = DensityProfile::unstack(grid, n, v);
  out.V_hat = parts.components();
  for (std::size_t i = 0; i < n; ++i) out.owap.push_back(inner_product(out.u_hat[i], out.V_hat[i]));

  const Eigen::VectorXd field = vi.P * u + vi.Q;
  out.vi_residual = vi_residual(field, u, grid, n, vi.mode, floor, mass, opt.vi_samples, opt.seed);
  const Eigen::VectorXd again = project_stacked(u + (sgn * vi.eps0) * field, grid, n, floor, mass);
  out.fixed_point_residual = weighted_norm(vi.weights, again - u);
  return out;
}

}  // namespace detail

inline EquilibriumResult solve_nne(const AssembledVI& vi, const SolveOptions& opt = {}) {
  detail::require(vi.mode == Mode::nne, ErrorKind::domain, "solve_nne: operator assembled for MNE");
  detail::require(vi.eps_P > 0.0 && vi.eps0 > 0.0, ErrorKind::definiteness, "solve_nne: missing certificate");
  return detail::iterate(vi, opt);
}

inline EquilibriumResult solve_mne(const AssembledVI& vi, const SolveOptions& opt = {}) {
  detail::require(vi.mode == Mode::mne, ErrorKind::domain, "solve_mne: operator assembled for NNE");
  detail::require(vi.eps_P > 0.0 && vi.eps0 > 0.0, ErrorKind::definiteness, "solve_mne: missing certificate");
  return detail::iterate(vi, opt);
}

inline EquilibriumResult solve(const AssembledVI& vi, const SolveOptions& opt = {}) {
  return vi.mode == Mode::nne ? solve_nne(vi, opt) : solve_mne(vi, opt);
}

inline double default_support_floor(const Grid& grid) { return 1e-6 / grid.length(); }

/// max_i max_{x: u_i(x) > floor} (<V_i, u_i> - V_i(x))^+.
inline double verify_nne(const DensityProfile& u, const std::vector<GridFn>& V, double support_floor) {
  detail::require(V.size() == u.n(), ErrorKind::domain, "verify_nne: need one value function per market");
  double worst = 0.0;
  for (std::size_t i = 0; i < u.n(); ++i) {
    detail::require_same_grid(u.grid(), V[i].grid(), "verify_nne");
    const double avg = inner_product(V[i], u[i]);
    for (std::size_t j = 0; j < u[i].size(); ++j) {
      if (u[i][j] > support_floor) worst = std::max(worst, avg - V[i][j]);
    }
  }
  return worst;
}

inline double verify_nne(const DensityProfile& u, const std::vector<GridFn>& V) {
  return verify_nne(u, V, default_support_floor(u.grid()));
}

/// K(u) = (1/2) <P u, u> + <Q, u>; requires a self-adjoint P.
inline double potential_value(const DensityProfile& u, const AssembledVI& vi) {
  const double defect = self_adjointness_defect(vi.P, vi.weights);
  if (defect > 1e-8) {
    detail::fail(ErrorKind::not_self_adjoint,
                 "potential_value: P is not self-adjoint (relative defect " + std::to_string(defect) + ")");
  }
  const Eigen::VectorXd x = u.stacked();
  return 0.5 * weighted_dot(vi.weights, vi.P * x, x) + weighted_dot(vi.weights, vi.Q, x);
}

// ---------------------------------------------------------------------------
// Piecewise-constant densities.

struct PiecewiseResult {
  std::vector<double> breakpoints;
  std::vector<AssembledVI> vis;
  std::vector<EquilibriumResult> segments;
  std::vector<double> total_wap;
};

/// Solves each segment (T_{m-1}, T_m] independently and sums the OWAPs.
inline PiecewiseResult solve_piecewise(const std::vector<GameSpec>& specs, Mode mode,
                                       const AssembleOptions& aopt = {}, const SolveOptions& sopt = {}) {
  detail::require(!specs.empty(), ErrorKind::domain, "solve_piecewise: need at least one segment");
  PiecewiseResult out;
  out.breakpoints.push_back(specs.front().s());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    if (m > 0) {
      detail::require(std::abs(specs[m].s() - specs[m - 1].T()) <= 1e-12 * (1.0 + std::abs(specs[m].s())),
                      ErrorKind::domain, "solve_piecewise: segment horizons must abut");
      detail::require(specs[m].n() == specs[0].n(), ErrorKind::domain, "solve_piecewise: market count differs");
    }
    try {
      out.vis.push_back(assemble(specs[m], mode, aopt));
      out.segments.push_back(solve(out.vis.back(), sopt));
    } catch (const Error& e) {
      e.rethrow_with_context("segment " + std::to_string(m + 1));
    }
    out.breakpoints.push_back(specs[m].T());
    const auto& owap = out.segments.back().owap;
    if (out.total_wap.empty()) out.total_wap.assign(owap.size(), 0.0);
    for (std::size_t i = 0; i < owap.size(); ++i) out.total_wap[i] += owap[i];
  }
  return out;
}

}  // namespace dvi

#endif  // DVI_EQUILIBRIUM_HPP
