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

// Quadrature-grid discretization of L2([a,b]) and its n-fold product.
//
// A function g in L2([a,b]) is represented by its values at the grid nodes;
// every inner product becomes the weighted sum  sum_j w_j f_j g_j. The
// constraint <u,1> = 1 is therefore the weighted mass of the node values.

#ifndef DVI_FUNCTION_SPACE_HPP
#define DVI_FUNCTION_SPACE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dvi/error.hpp"

namespace dvi {

enum class QuadratureRule { trapezoid, midpoint };

/// Nodes and positive quadrature weights on [a,b]. Cheap to copy; the node
/// data is shared and immutable.
class Grid {
 public:
  Grid(double a, double b, Eigen::VectorXd nodes, Eigen::VectorXd weights,
       QuadratureRule rule)
      : data_(std::make_shared<const Data>(Data{a, b, std::move(nodes), std::move(weights), rule})) {
    validate();
  }

  double a() const noexcept { return data_->a; }
  double b() const noexcept { return data_->b; }
  double length() const noexcept { return data_->b - data_->a; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_->nodes.size()); }
  const Eigen::VectorXd& nodes() const noexcept { return data_->nodes; }
  const Eigen::VectorXd& weights() const noexcept { return data_->weights; }
  QuadratureRule rule() const noexcept { return data_->rule; }

  friend bool operator==(const Grid& lhs, const Grid& rhs) {
    if (lhs.data_ == rhs.data_) return true;
    return lhs.a() == rhs.a() && lhs.b() == rhs.b() && lhs.rule() == rhs.rule() &&
           lhs.size() == rhs.size() && lhs.nodes() == rhs.nodes() &&
           lhs.weights() == rhs.weights();
  }
  friend bool operator!=(const Grid& lhs, const Grid& rhs) { return !(lhs == rhs); }

 private:
  struct Data {
    double a;
    double b;
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    QuadratureRule rule;
  };

  void validate() const {
    const auto& d = *data_;
    detail::require(std::isfinite(d.a) && std::isfinite(d.b) && d.b > d.a, ErrorKind::domain,
                    "grid: need finite a < b");
    detail::require(d.nodes.size() == d.weights.size() && d.nodes.size() >= 2, ErrorKind::domain,
                    "grid: nodes and weights must have equal length >= 2");
    for (Eigen::Index j = 0; j < d.nodes.size(); ++j) {
      detail::require(d.weights[j] > 0.0, ErrorKind::domain, "grid: weights must be positive");
      detail::require(d.nodes[j] >= d.a && d.nodes[j] <= d.b, ErrorKind::domain,
                      "grid: nodes must lie in [a,b]");
      if (j > 0) {
        detail::require(d.nodes[j] > d.nodes[j - 1], ErrorKind::domain,
                        "grid: nodes must be strictly increasing");
      }
    }
    const double total = d.weights.sum();
    detail::require(std::abs(total - (d.b - d.a)) <= 1e-12 * (d.b - d.a),
                    ErrorKind::domain, "grid: weights must sum to b - a");
  }

  std::shared_ptr<const Data> data_;
};

/// Uniform grid with `count` nodes. Trapezoid weights are h(1/2, 1, ..., 1, 1/2)
/// with h = (b-a)/(count-1); midpoint nodes sit at cell centres with weight
/// (b-a)/count.
inline Grid make_grid(double a, double b, std::size_t count,
                      QuadratureRule rule = QuadratureRule::trapezoid) {
  detail::require(std::isfinite(a) && std::isfinite(b) && b > a, ErrorKind::domain,
                  "make_grid: need a < b");
  detail::require(count >= 2, ErrorKind::domain, "make_grid: need count >= 2");
  const auto n = static_cast<Eigen::Index>(count);
  Eigen::VectorXd nodes(n);
  Eigen::VectorXd weights(n);
  if (rule == QuadratureRule::trapezoid) {
    const double h = (b - a) / static_cast<double>(count - 1);
    for (Eigen::Index j = 0; j < n; ++j) {
      nodes[j] = a + h * static_cast<double>(j);
      weights[j] = h;
    }
    nodes[n - 1] = b;
    weights[0] = weights[n - 1] = 0.5 * h;
  } else {
    const double h = (b - a) / static_cast<double>(count);
    for (Eigen::Index j = 0; j < n; ++j) {
      nodes[j] = a + h * (static_cast<double>(j) + 0.5);
      weights[j] = h;
    }
  }
  return Grid(a, b, std::move(nodes), std::move(weights), rule);
}

/// Element of H = L2([a,b]) sampled on a grid.
class GridFn {
 public:
  GridFn(Grid grid, Eigen::VectorXd values) : grid_(std::move(grid)), values_(std::move(values)) {
    detail::require(static_cast<std::size_t>(values_.size()) == grid_.size(), ErrorKind::domain,
                    "GridFn: value count must match grid size");
    detail::require(values_.allFinite(), ErrorKind::domain, "GridFn: values must be finite");
  }

  static GridFn constant(const Grid& grid, double c) {
    return GridFn(grid, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), c));
  }
  static GridFn zero(const Grid& grid) { return constant(grid, 0.0); }

  const Grid& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return grid_.size(); }
  double operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }

  GridFn& operator+=(const GridFn& rhs);
  GridFn& operator-=(const GridFn& rhs);
  GridFn& operator*=(double c) {
    values_ *= c;
    return *this;
  }

 private:
  Grid grid_;
  Eigen::VectorXd values_;
};

namespace detail {

inline void require_same_grid(const Grid& lhs, const Grid& rhs, const char* where) {
  if (lhs != rhs) fail(ErrorKind::grid_mismatch, std::string(where) + ": grid mismatch");
}

}  // namespace detail

inline GridFn& GridFn::operator+=(const GridFn& rhs) {
  detail::require_same_grid(grid_, rhs.grid_, "GridFn +=");
  values_ += rhs.values_;
  return *this;
}

inline GridFn& GridFn::operator-=(const GridFn& rhs) {
  detail::require_same_grid(grid_, rhs.grid_, "GridFn -=");
  values_ -= rhs.values_;
  return *this;
}

inline GridFn operator+(GridFn lhs, const GridFn& rhs) { return lhs += rhs; }
inline GridFn operator-(GridFn lhs, const GridFn& rhs) { return lhs -= rhs; }
inline GridFn operator*(double c, GridFn f) { return f *= c; }

/// <f, g>_H = sum_j w_j f_j g_j.
inline double inner_product(const GridFn& f, const GridFn& g) {
  detail::require_same_grid(f.grid(), g.grid(), "inner_product");
  return (f.grid().weights().array() * f.values().array() * g.values().array()).sum();
}

inline double norm(const GridFn& f) { return std::sqrt(inner_product(f, f)); }

/// Weighted sum of the node values, i.e. <f, 1>_H.
inline double integral(const GridFn& f) { return f.grid().weights().dot(f.values()); }

/// Pointwise evaluation of a closed-form function at the grid nodes.
template <class Fn>
GridFn sample(Fn&& fn, const Grid& grid) {
  Eigen::VectorXd values(static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    const double v = fn(grid.nodes()[j]);
    if (!std::isfinite(v)) {
      detail::fail(ErrorKind::domain,
                   "sample: non-finite value at x = " + std::to_string(grid.nodes()[j]));
    }
    values[j] = v;
  }
  return GridFn(grid, std::move(values));
}

/// Element of H^n: one GridFn per market, all on the same grid.
class DensityProfile {
 public:
  explicit DensityProfile(std::vector<GridFn> components) : components_(std::move(components)) {
    detail::require(!components_.empty(), ErrorKind::domain, "DensityProfile: need n >= 1");
    for (const auto& c : components_) {
      detail::require_same_grid(components_.front().grid(), c.grid(), "DensityProfile");
    }
  }

  /// Product of uniform densities 1/(b-a), the feasible centre of U^n.
  static DensityProfile uniform(const Grid& grid, std::size_t n) {
    return DensityProfile(std::vector<GridFn>(n, GridFn::constant(grid, 1.0 / grid.length())));
  }

  /// Splits a stacked vector (component-major) into n components.
  static DensityProfile unstack(const Grid& grid, std::size_t n, const Eigen::VectorXd& stacked) {
    const auto len = static_cast<Eigen::Index>(grid.size());
    detail::require(stacked.size() == len * static_cast<Eigen::Index>(n), ErrorKind::domain,
                    "DensityProfile::unstack: length mismatch");
    std::vector<GridFn> parts;
    parts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      parts.emplace_back(grid, stacked.segment(static_cast<Eigen::Index>(i) * len, len));
    }
    return DensityProfile(std::move(parts));
  }

  std::size_t n() const noexcept { return components_.size(); }
  const Grid& grid() const noexcept { return components_.front().grid(); }
  const GridFn& operator[](std::size_t i) const { return components_.at(i); }
  const std::vector<GridFn>& components() const noexcept { return components_; }

  Eigen::VectorXd stacked() const {
    const auto len = static_cast<Eigen::Index>(grid().size());
    Eigen::VectorXd out(len * static_cast<Eigen::Index>(n()));
    for (std::size_t i = 0; i < n(); ++i) {
      out.segment(static_cast<Eigen::Index>(i) * len, len) = components_[i].values();
    }
    return out;
  }

  /// Largest violation of membership in the set with per-market mass and
  /// pointwise floor (U^n when mass = 1, floor = 0).
  double membership_violation(const std::vector<double>& mass,
                              const std::vector<double>& floor) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      worst = std::max(worst, std::abs(integral(components_[i]) - mass.at(i)));
      worst = std::max(worst, floor.at(i) - components_[i].values().minCoeff());
    }
    return worst;
  }

  double membership_violation() const {
    return membership_violation(std::vector<double>(n(), 1.0), std::vector<double>(n(), 0.0));
  }

 private:
  std::vector<GridFn> components_;
};

/// Weights of H^n repeated per component, matching DensityProfile::stacked().
inline Eigen::VectorXd stacked_weights(const Grid& grid, std::size_t n) {
  const auto len = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd w(len * static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) w.segment(static_cast<Eigen::Index>(i) * len, len) = grid.weights();
  return w;
}

inline double weighted_dot(const Eigen::VectorXd& w, const Eigen::VectorXd& f,
                           const Eigen::VectorXd& g) {
  return (w.array() * f.array() * g.array()).sum();
}

inline double weighted_norm(const Eigen::VectorXd& w, const Eigen::VectorXd& f) {
  return std::sqrt(weighted_dot(w, f, f));
}

/// CSV with header `x,value`, one row per node, round-trip precision.
inline void write_csv(std::ostream& out, const GridFn& f) {
  out << "x,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t j = 0; j < f.size(); ++j) {
    out << f.grid().nodes()[static_cast<Eigen::Index>(j)] << ',' << f[j] << '\n';
  }
}

}  // namespace dvi

#endif  // DVI_FUNCTION_SPACE_HPP
