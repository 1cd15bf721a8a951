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


// Projection onto { u >= floor, <u, 1> = mass } in the weighted metric.
//
// The minimizer of (1/2) sum_j w_j (u_j - theta_j)^2 over that set is
// u_j = max(theta_j - lambda, floor), where lambda solves
// g(lambda) = sum_j w_j (theta_j - floor - lambda)^+ = mass - floor (b - a).
// g is continuous, piecewise linear and non-increasing with breakpoints at
// the node values, so lambda is found exactly by a sorted sweep.

#ifndef DVI_DENSITY_PROJECTION_HPP
#define DVI_DENSITY_PROJECTION_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dvi/error.hpp"
#include "dvi/function_space.hpp"

namespace dvi {

struct MultiplierSolve {
  double lambda = 0.0;
  double residual = 0.0;
  std::pair<double, double> bracket{0.0, 0.0};
  int iterations = 0;
};

enum class RootMethod { sorted, bisection };

/// g(sigma) = sum_j w_j (theta_j - sigma)^+.
inline double multiplier_function(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, double sigma) {
  return (w.array() * (theta.array() - sigma).max(0.0)).sum();
}

namespace detail {

inline std::pair<double, double> multiplier_bracket(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                                                    double target) {
  const double total = w.sum();
  const double lo = -2.0 * target / total - weighted_norm(w, theta) / std::sqrt(total);
  return {lo, theta.maxCoeff()};
}

inline MultiplierSolve sorted_root(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, double target) {
  const auto n = theta.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index l, Eigen::Index r) { return theta[l] > theta[r]; });
  double sw = 0.0;
  double swt = 0.0;
  MultiplierSolve out;
  out.bracket = multiplier_bracket(theta, w, target);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index j = order[static_cast<std::size_t>(k)];
    sw += w[j];
    swt += w[j] * theta[j];
    const double sigma = (swt - target) / sw;
    out.iterations = static_cast<int>(k + 1);
    if (k + 1 == n || sigma >= theta[order[static_cast<std::size_t>(k + 1)]]) {
      out.lambda = sigma;
      break;
    }
  }
  out.residual = std::abs(multiplier_function(theta, w, out.lambda) - target);
  return out;
}

inline MultiplierSolve bisection_root(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, double target) {
  MultiplierSolve out;
  out.bracket = multiplier_bracket(theta, w, target);
  double lo = out.bracket.first;
  double hi = out.bracket.second;
  const double g_lo = multiplier_function(theta, w, lo);
  const double g_hi = multiplier_function(theta, w, hi);
  if (!(g_lo >= target && g_hi <= target)) {
    fail(ErrorKind::bracket, "multiplier_root: bracket [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                 "] does not straddle the target");
  }
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    out.iterations = it + 1;
    if (mid <= lo || mid >= hi) break;
    if (multiplier_function(theta, w, mid) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // The root lies in [lo, hi], which now spans adjacent doubles; pick the
  // end with the smaller residual.
  const double r_lo = std::abs(multiplier_function(theta, w, lo) - target);
  const double r_hi = std::abs(multiplier_function(theta, w, hi) - target);
  out.lambda = r_lo <= r_hi ? lo : hi;
  out.residual = std::min(r_lo, r_hi);
  return out;
}

}  // namespace detail

/// Solves sum_j w_j (theta_j - lambda)^+ = target.
inline MultiplierSolve multiplier_root(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, double target,
                                       RootMethod method = RootMethod::sorted) {
  detail::require(theta.size() == w.size() && theta.size() > 0, ErrorKind::domain,
                  "multiplier_root: size mismatch");
  detail::require(std::isfinite(target) && target > 0.0, ErrorKind::domain, "multiplier_root: target must be > 0");
  detail::require(theta.allFinite(), ErrorKind::domain, "multiplier_root: non-finite theta");
  detail::require((w.array() > 0.0).all(), ErrorKind::bracket, "multiplier_root: weights must be positive");
  return method == RootMethod::sorted ? detail::sorted_root(theta, w, target)
                                      : detail::bisection_root(theta, w, target);
}

inline MultiplierSolve multiplier_root(const GridFn& theta, double target, RootMethod method = RootMethod::sorted) {
  return multiplier_root(theta.values(), theta.grid().weights(), target, method);
}

struct Projection {
  DensityProfile u;
  std::vector<double> lambda;
};

/// Projection of one component: u = max(theta - lambda, floor) with
/// <u, 1> = mass.
inline std::pair<Eigen::VectorXd, double> project_component(const Eigen::VectorXd& theta, const Eigen::VectorXd& w,
                                                             double floor, double mass) {
  const double target = mass - floor * w.sum();
  if (!(target > 0.0)) {
    detail::fail(ErrorKind::infeasible, "project_density: mass " + std::to_string(mass) + " does not exceed floor " +
                                    std::to_string(floor) + " times the interval length");
  }
  const Eigen::VectorXd shifted = theta.array() - floor;
  const MultiplierSolve root = multiplier_root(shifted, w, target);
  Eigen::VectorXd u = (theta.array() - root.lambda).max(floor);
  return {std::move(u), root.lambda};
}

/// Component-wise projection onto prod_i { u_i >= floor_i, <u_i, 1> = mass_i }.
inline Projection project_density(const std::vector<GridFn>& theta, const std::vector<double>& floor,
                                  const std::vector<double>& mass) {
  detail::require(!theta.empty() && floor.size() == theta.size() && mass.size() == theta.size(), ErrorKind::domain,
                  "project_density: need one floor and one mass per component");
  std::vector<GridFn> parts;
  std::vector<double> lambda;
  parts.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto [u, l] = project_component(theta[i].values(), theta[i].grid().weights(), floor[i], mass[i]);
    parts.emplace_back(theta[i].grid(), std::move(u));
    lambda.push_back(l);
  }
  return {DensityProfile(std::move(parts)), std::move(lambda)};
}

/// Projection onto U^n (floor 0, mass 1).
inline Projection project_density(const std::vector<GridFn>& theta) {
  return project_density(theta, std::vector<double>(theta.size(), 0.0), std::vector<double>(theta.size(), 1.0));
}

/// Stacked-vector form used inside the fixed-point loops.
inline Eigen::VectorXd project_stacked(const Eigen::VectorXd& theta, const Grid& grid, std::size_t n,
                                       const std::vector<double>& floor, const std::vector<double>& mass,
                                       std::vector<double>* lambda = nullptr) {
  const auto len = static_cast<Eigen::Index>(grid.size());
  detail::require(theta.size() == len * static_cast<Eigen::Index>(n), ErrorKind::domain,
                  "project_density: length mismatch");
  Eigen::VectorXd out(theta.size());
  if (lambda != nullptr) lambda->assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto off = static_cast<Eigen::Index>(i) * len;
    auto [u, l] = project_component(theta.segment(off, len), grid.weights(), floor.at(i), mass.at(i));
    out.segment(off, len) = u;
    if (lambda != nullptr) (*lambda)[i] = l;
  }
  return out;
}

}  // namespace dvi

#endif  // DVI_DENSITY_PROJECTION_HPP
