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

// Discretized bounded linear operators on H and H^n.
//
// Every operator is described by its "action matrix" M acting on node values,
// (W g)_i = sum_j M_ij g_j. Adjoints, norms and definiteness are taken in the
// weighted metric <f,g> = sum_j w_j f_j g_j, so the adjoint of M is
// D^{-1} M^T D with D = diag(w), and spectral quantities are read off the
// similarity transform D^{1/2} M D^{-1/2}.

#ifndef DVI_OPERATORS_HPP
#define DVI_OPERATORS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dvi/error.hpp"
#include "dvi/function_space.hpp"

namespace dvi {

/// Immutable discretized operator in L(H). Composite kinds (sum,
/// composition) keep their structure so that products with dense matrices
/// stay cheap for multiplication and rank-one terms.
class LinOp {
 public:
  enum class Kind { kernel, multiplication, rank_one, scaled_identity, sum, composition };

  /// (W g)(x_i) = sum_j w_j K_ij g_j.
  static LinOp kernel(const Grid& grid, Eigen::MatrixXd k);
  /// Kernel built from a closed-form k(x, y) sampled on the grid.
  template <class Fn>
  static LinOp kernel_from(const Grid& grid, Fn&& k);
  /// Kernel whose action matrix is `action`, i.e. K = action * D^{-1}.
  static LinOp from_action(const Grid& grid, const Eigen::MatrixXd& action);
  /// (W g)(x) = m(x) g(x).
  static LinOp multiplication(const GridFn& m);
  /// (W g)(x) = phi(x) <psi, g>_H.
  static LinOp rank_one(const GridFn& phi, const GridFn& psi);
  static LinOp scaled_identity(const Grid& grid, double c);
  static LinOp identity(const Grid& grid) { return scaled_identity(grid, 1.0); }
  static LinOp zero(const Grid& grid) { return scaled_identity(grid, 0.0); }
  static LinOp sum(std::vector<LinOp> terms);
  /// (outer o inner) g = outer(inner(g)).
  static LinOp composition(const LinOp& outer, const LinOp& inner);

  Kind kind() const;
  const Grid& grid() const;
  std::size_t size() const { return grid().size(); }

  Eigen::VectorXd apply(const Eigen::VectorXd& g) const;
  GridFn apply(const GridFn& g) const;

  /// Dense action matrix.
  Eigen::MatrixXd matrix() const;
  /// this * m (operator applied to each column of m).
  Eigen::MatrixXd left_multiply(const Eigen::MatrixXd& m) const;
  /// m * this.
  Eigen::MatrixXd right_multiply(const Eigen::MatrixXd& m) const;

  /// Adjoint with respect to the weighted inner product.
  LinOp adjoint() const;
  LinOp scaled(double c) const;
  bool is_zero() const { return kind() == Kind::scaled_identity && scale() == 0.0; }

  const Eigen::MatrixXd& kernel_matrix() const;
  const GridFn& multiplier() const;
  const GridFn& phi() const;
  const GridFn& psi() const;
  double scale() const;
  const std::vector<LinOp>& terms() const;
  const LinOp& outer() const;
  const LinOp& inner() const;

 private:
  struct KernelData {
    Eigen::MatrixXd k;
  };
  struct MultiplicationData {
    GridFn m;
  };
  struct RankOneData {
    GridFn phi;
    GridFn psi;
  };
  struct IdentityData {
    double c;
  };
  struct SumData {
    std::vector<LinOp> terms;
  };
  struct CompositionData {
    std::vector<LinOp> pair;  // {outer, inner}
  };
  struct Node {
    Grid grid;
    std::variant<KernelData, MultiplicationData, RankOneData, IdentityData, SumData,
                 CompositionData>
        data;
  };

  explicit LinOp(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  template <class T>
  const T& get(const char* what) const {
    const T* p = std::get_if<T>(&node_->data);
    if (p == nullptr) detail::fail(ErrorKind::domain, std::string("LinOp: not a ") + what);
    return *p;
  }

  std::shared_ptr<const Node> node_;
};

inline LinOp LinOp::kernel(const Grid& grid, Eigen::MatrixXd k) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  detail::require(k.rows() == n && k.cols() == n, ErrorKind::domain,
                  "LinOp::kernel: matrix size must match grid");
  detail::require(k.allFinite(), ErrorKind::domain, "LinOp::kernel: non-finite entries");
  return LinOp(std::make_shared<const Node>(Node{grid, KernelData{std::move(k)}}));
}

template <class Fn>
LinOp LinOp::kernel_from(const Grid& grid, Fn&& k) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = k(grid.nodes()[i], grid.nodes()[j]);
  }
  return kernel(grid, std::move(m));
}

inline LinOp LinOp::from_action(const Grid& grid, const Eigen::MatrixXd& action) {
  Eigen::MatrixXd k = action * grid.weights().cwiseInverse().asDiagonal();
  return kernel(grid, std::move(k));
}

inline LinOp LinOp::multiplication(const GridFn& m) {
  return LinOp(std::make_shared<const Node>(Node{m.grid(), MultiplicationData{m}}));
}

inline LinOp LinOp::rank_one(const GridFn& phi, const GridFn& psi) {
  detail::require_same_grid(phi.grid(), psi.grid(), "LinOp::rank_one");
  return LinOp(std::make_shared<const Node>(Node{phi.grid(), RankOneData{phi, psi}}));
}

inline LinOp LinOp::scaled_identity(const Grid& grid, double c) {
  detail::require(std::isfinite(c), ErrorKind::domain, "LinOp::scaled_identity: non-finite scale");
  return LinOp(std::make_shared<const Node>(Node{grid, IdentityData{c}}));
}

inline LinOp LinOp::sum(std::vector<LinOp> terms) {
  detail::require(!terms.empty(), ErrorKind::domain, "LinOp::sum: need at least one term");
  for (const auto& t : terms) detail::require_same_grid(terms.front().grid(), t.grid(), "LinOp::sum");
  if (terms.size() == 1) return terms.front();
  Grid grid = terms.front().grid();
  return LinOp(std::make_shared<const Node>(Node{std::move(grid), SumData{std::move(terms)}}));
}

inline LinOp LinOp::composition(const LinOp& outer, const LinOp& inner) {
  detail::require_same_grid(outer.grid(), inner.grid(), "LinOp::composition");
  return LinOp(std::make_shared<const Node>(Node{outer.grid(), CompositionData{{outer, inner}}}));
}

inline LinOp::Kind LinOp::kind() const { return static_cast<Kind>(node_->data.index()); }
inline const Grid& LinOp::grid() const { return node_->grid; }

inline const Eigen::MatrixXd& LinOp::kernel_matrix() const { return get<KernelData>("kernel").k; }
inline const GridFn& LinOp::multiplier() const {
  return get<MultiplicationData>("multiplication").m;
}
inline const GridFn& LinOp::phi() const { return get<RankOneData>("rank-one operator").phi; }
inline const GridFn& LinOp::psi() const { return get<RankOneData>("rank-one operator").psi; }
inline double LinOp::scale() const { return get<IdentityData>("scaled identity").c; }
inline const std::vector<LinOp>& LinOp::terms() const { return get<SumData>("sum").terms; }
inline const LinOp& LinOp::outer() const { return get<CompositionData>("composition").pair[0]; }
inline const LinOp& LinOp::inner() const { return get<CompositionData>("composition").pair[1]; }

inline Eigen::VectorXd LinOp::apply(const Eigen::VectorXd& g) const {
  detail::require(static_cast<std::size_t>(g.size()) == size(), ErrorKind::grid_mismatch,
                  "LinOp::apply: vector length does not match grid");
  const Eigen::VectorXd& w = grid().weights();
  switch (kind()) {
    case Kind::kernel:
      return kernel_matrix() * w.cwiseProduct(g);
    case Kind::multiplication:
      return multiplier().values().cwiseProduct(g);
    case Kind::rank_one:
      return phi().values() * weighted_dot(w, psi().values(), g);
    case Kind::scaled_identity:
      return scale() * g;
    case Kind::sum: {
      Eigen::VectorXd out = Eigen::VectorXd::Zero(g.size());
      for (const auto& t : terms()) out += t.apply(g);
      return out;
    }
    case Kind::composition:
      return outer().apply(inner().apply(g));
  }
  return g;
}

inline GridFn LinOp::apply(const GridFn& g) const {
  detail::require_same_grid(grid(), g.grid(), "LinOp::apply");
  return GridFn(grid(), apply(g.values()));
}

inline Eigen::MatrixXd LinOp::left_multiply(const Eigen::MatrixXd& m) const {
  detail::require(static_cast<std::size_t>(m.rows()) == size(), ErrorKind::grid_mismatch,
                  "LinOp::left_multiply: size mismatch");
  const Eigen::VectorXd& w = grid().weights();
  switch (kind()) {
    case Kind::kernel:
      return kernel_matrix() * (w.asDiagonal() * m);
    case Kind::multiplication:
      return multiplier().values().asDiagonal() * m;
    case Kind::rank_one: {
      const Eigen::RowVectorXd row = (w.cwiseProduct(psi().values())).transpose() * m;
      return phi().values() * row;
    }
    case Kind::scaled_identity:
      return scale() * m;
    case Kind::sum: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
      for (const auto& t : terms()) out += t.left_multiply(m);
      return out;
    }
    case Kind::composition:
      return outer().left_multiply(inner().left_multiply(m));
  }
  return m;
}

inline Eigen::MatrixXd LinOp::right_multiply(const Eigen::MatrixXd& m) const {
  detail::require(static_cast<std::size_t>(m.cols()) == size(), ErrorKind::grid_mismatch,
                  "LinOp::right_multiply: size mismatch");
  const Eigen::VectorXd& w = grid().weights();
  switch (kind()) {
    case Kind::kernel:
      return (m * kernel_matrix()) * w.asDiagonal();
    case Kind::multiplication:
      return m * multiplier().values().asDiagonal();
    case Kind::rank_one: {
      const Eigen::VectorXd col = m * phi().values();
      return col * w.cwiseProduct(psi().values()).transpose();
    }
    case Kind::scaled_identity:
      return scale() * m;
    case Kind::sum: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), m.cols());
      for (const auto& t : terms()) out += t.right_multiply(m);
      return out;
    }
    case Kind::composition:
      return inner().right_multiply(outer().right_multiply(m));
  }
  return m;
}

inline Eigen::MatrixXd LinOp::matrix() const {
  const auto n = static_cast<Eigen::Index>(size());
  switch (kind()) {
    case Kind::kernel:
      return kernel_matrix() * grid().weights().asDiagonal();
    case Kind::multiplication:
      return multiplier().values().asDiagonal();
    case Kind::rank_one:
      return phi().values() * grid().weights().cwiseProduct(psi().values()).transpose();
    case Kind::scaled_identity:
      return scale() * Eigen::MatrixXd::Identity(n, n);
    case Kind::sum: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
      for (const auto& t : terms()) out += t.matrix();
      return out;
    }
    case Kind::composition:
      return outer().left_multiply(inner().matrix());
  }
  return Eigen::MatrixXd::Zero(n, n);
}

inline LinOp LinOp::adjoint() const {
  switch (kind()) {
    case Kind::kernel:
      return kernel(grid(), kernel_matrix().transpose());
    case Kind::multiplication:
    case Kind::scaled_identity:
      return *this;
    case Kind::rank_one:
      return rank_one(psi(), phi());
    case Kind::sum: {
      std::vector<LinOp> adj;
      adj.reserve(terms().size());
      for (const auto& t : terms()) adj.push_back(t.adjoint());
      return sum(std::move(adj));
    }
    case Kind::composition:
      return composition(inner().adjoint(), outer().adjoint());
  }
  return *this;
}

inline LinOp LinOp::scaled(double c) const {
  switch (kind()) {
    case Kind::kernel:
      return kernel(grid(), c * kernel_matrix());
    case Kind::multiplication:
      return multiplication(c * multiplier());
    case Kind::rank_one:
      return rank_one(c * phi(), psi());
    case Kind::scaled_identity:
      return scaled_identity(grid(), c * scale());
    case Kind::sum: {
      std::vector<LinOp> out;
      out.reserve(terms().size());
      for (const auto& t : terms()) out.push_back(t.scaled(c));
      return sum(std::move(out));
    }
    case Kind::composition:
      return composition(outer().scaled(c), inner());
  }
  return *this;
}

inline LinOp operator+(const LinOp& lhs, const LinOp& rhs) {
  if (lhs.is_zero()) return rhs;
  if (rhs.is_zero()) return lhs;
  return LinOp::sum({lhs, rhs});
}
inline LinOp operator*(double c, const LinOp& op) { return op.scaled(c); }
inline LinOp operator-(const LinOp& lhs, const LinOp& rhs) { return lhs + rhs.scaled(-1.0); }
inline LinOp compose(const LinOp& outer, const LinOp& inner) {
  return LinOp::composition(outer, inner);
}

/// n x n table of operators on H^n; entry (i, j) maps component j to i.
class BlockOp {
 public:
  BlockOp(std::size_t n, std::vector<LinOp> blocks) : n_(n), blocks_(std::move(blocks)) {
    detail::require(n_ >= 1 && blocks_.size() == n_ * n_, ErrorKind::domain,
                    "BlockOp: need n*n blocks");
    for (const auto& b : blocks_) detail::require_same_grid(blocks_.front().grid(), b.grid(), "BlockOp");
  }

  static BlockOp diagonal(const std::vector<LinOp>& diag) {
    const std::size_t n = diag.size();
    std::vector<LinOp> blocks;
    blocks.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        blocks.push_back(i == j ? diag[i] : LinOp::zero(diag[i].grid()));
      }
    }
    return BlockOp(n, std::move(blocks));
  }

  /// Splits a dense nN x nN action matrix into kernel blocks.
  static BlockOp from_action(const Grid& grid, std::size_t n, const Eigen::MatrixXd& action) {
    const auto len = static_cast<Eigen::Index>(grid.size());
    detail::require(action.rows() == len * static_cast<Eigen::Index>(n) && action.cols() == action.rows(),
                    ErrorKind::domain, "BlockOp::from_action: size mismatch");
    std::vector<LinOp> blocks;
    blocks.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        blocks.push_back(LinOp::from_action(
            grid, action.block(static_cast<Eigen::Index>(i) * len, static_cast<Eigen::Index>(j) * len, len, len)));
      }
    }
    return BlockOp(n, std::move(blocks));
  }

  std::size_t n() const noexcept { return n_; }
  const Grid& grid() const { return blocks_.front().grid(); }
  const LinOp& block(std::size_t i, std::size_t j) const { return blocks_.at(i * n_ + j); }

  Eigen::VectorXd apply(const Eigen::VectorXd& stacked) const {
    const auto len = static_cast<Eigen::Index>(grid().size());
    detail::require(stacked.size() == len * static_cast<Eigen::Index>(n_), ErrorKind::grid_mismatch,
                    "BlockOp::apply: length mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(stacked.size());
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const LinOp& b = block(i, j);
        if (b.is_zero()) continue;
        out.segment(static_cast<Eigen::Index>(i) * len, len) +=
            b.apply(Eigen::VectorXd(stacked.segment(static_cast<Eigen::Index>(j) * len, len)));
      }
    }
    return out;
  }

  DensityProfile apply(const DensityProfile& u) const {
    detail::require(u.n() == n_, ErrorKind::domain, "BlockOp::apply: component count mismatch");
    return DensityProfile::unstack(grid(), n_, apply(u.stacked()));
  }

  Eigen::MatrixXd matrix() const {
    const auto len = static_cast<Eigen::Index>(grid().size());
    const auto total = len * static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(total, total);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (block(i, j).is_zero()) continue;
        out.block(static_cast<Eigen::Index>(i) * len, static_cast<Eigen::Index>(j) * len, len, len) =
            block(i, j).matrix();
      }
    }
    return out;
  }

  BlockOp adjoint() const {
    std::vector<LinOp> adj;
    adj.reserve(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) adj.push_back(block(j, i).adjoint());
    }
    return BlockOp(n_, std::move(adj));
  }

  Eigen::VectorXd weights() const { return stacked_weights(grid(), n_); }

 private:
  std::size_t n_;
  std::vector<LinOp> blocks_;
};

/// Samples of an operator-valued function on a time grid, linearly
/// interpolated between samples. A single sample marks a time-constant family.
class TimeOpFamily {
 public:
  static TimeOpFamily constant(std::vector<double> times, const LinOp& op) {
    return TimeOpFamily(std::move(times), std::vector<LinOp>{op});
  }
  static TimeOpFamily sampled(std::vector<double> times, std::vector<LinOp> ops) {
    detail::require(ops.size() == times.size(), ErrorKind::domain,
                    "TimeOpFamily: need one sample per time node");
    return TimeOpFamily(std::move(times), std::move(ops));
  }
  template <class Fn>
  static TimeOpFamily from_function(std::vector<double> times, Fn&& op_at) {
    std::vector<LinOp> ops;
    ops.reserve(times.size());
    for (double t : times) ops.push_back(op_at(t));
    return sampled(std::move(times), std::move(ops));
  }

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t steps() const noexcept { return times_.size() - 1; }
  bool is_constant() const noexcept { return ops_.size() == 1; }
  const Grid& grid() const { return ops_.front().grid(); }

  /// Sample at time node k.
  const LinOp& at_node(std::size_t k) const { return is_constant() ? ops_.front() : ops_.at(k); }

  /// Linear interpolation; exact sample at nodes.
  LinOp at(double t) const {
    if (is_constant()) return ops_.front();
    const auto [k, theta] = locate(t);
    if (theta == 0.0) return ops_[k];
    if (theta == 1.0) return ops_[k + 1];
    return ops_[k].scaled(1.0 - theta) + ops_[k + 1].scaled(theta);
  }

  /// Largest operator norm over the samples (sup norm in C([s,T], L(H))).
  template <class NormFn>
  double sup_norm(NormFn&& norm_of) const {
    double best = 0.0;
    for (const auto& op : ops_) best = std::max(best, norm_of(op));
    return best;
  }

  TimeOpFamily map(const std::function<LinOp(const LinOp&)>& fn) const {
    std::vector<LinOp> out;
    out.reserve(ops_.size());
    for (const auto& op : ops_) out.push_back(fn(op));
    return TimeOpFamily(times_, std::move(out));
  }

  /// Index of the interval containing t and the fractional position in it.
  std::pair<std::size_t, double> locate(double t) const {
    detail::require(t >= times_.front() - 1e-12 && t <= times_.back() + 1e-12, ErrorKind::domain,
                    "TimeOpFamily: time outside [s, T]");
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    if (k >= times_.size() - 1) return {times_.size() - 2, 1.0};
    return {k, std::clamp((t - times_[k]) / (times_[k + 1] - times_[k]), 0.0, 1.0)};
  }

 private:
  TimeOpFamily(std::vector<double> times, std::vector<LinOp> ops)
      : times_(std::move(times)), ops_(std::move(ops)) {
    detail::require(times_.size() >= 2, ErrorKind::domain, "TimeOpFamily: need at least two time nodes");
    for (std::size_t k = 1; k < times_.size(); ++k) {
      detail::require(times_[k] > times_[k - 1], ErrorKind::domain,
                      "TimeOpFamily: time nodes must be strictly increasing");
    }
    detail::require(!ops_.empty(), ErrorKind::domain, "TimeOpFamily: no samples");
    for (const auto& op : ops_) detail::require_same_grid(ops_.front().grid(), op.grid(), "TimeOpFamily");
  }

  std::vector<double> times_;
  std::vector<LinOp> ops_;
};

// ---------------------------------------------------------------------------
// Spectral estimates in the weighted metric.

struct NormOptions {
  enum class Method { dense, power };
  Method method = Method::dense;
  int iters = 20000;
  double rel_tol = 1e-10;
};

struct DefinitenessBounds {
  double eps_low;
  double eps_high;
};

namespace detail {

inline Eigen::MatrixXd weighted_similarity(const Eigen::MatrixXd& action, const Eigen::VectorXd& w) {
  const Eigen::VectorXd s = w.cwiseSqrt();
  return s.asDiagonal() * action * s.cwiseInverse().asDiagonal();
}

inline double power_norm(const Eigen::MatrixXd& action, const Eigen::VectorXd& w, const NormOptions& opt) {
  const Eigen::Index n = action.rows();
  // Adjoint action in the weighted metric.
  const Eigen::MatrixXd adj = w.cwiseInverse().asDiagonal() * action.transpose() * w.asDiagonal();
  Eigen::VectorXd x(n);
  for (Eigen::Index j = 0; j < n; ++j) x[j] = 1.0 + 0.01 * std::sin(static_cast<double>(j + 1));
  x /= weighted_norm(w, x);
  double estimate = 0.0;
  for (int it = 0; it < opt.iters; ++it) {
    const Eigen::VectorXd y = action * x;
    const double next = weighted_norm(w, y);
    if (next == 0.0) return 0.0;
    if (it > 0 && std::abs(next - estimate) <= opt.rel_tol * next) return next;
    estimate = next;
    Eigen::VectorXd z = adj * y;
    const double zn = weighted_norm(w, z);
    if (zn == 0.0) return estimate;
    x = z / zn;
  }
  throw ConvergenceError("op_norm: power iteration did not converge",
                         std::vector<double>(x.data(), x.data() + x.size()));
}

}  // namespace detail

/// Operator norm of an action matrix in the weighted metric.
inline double op_norm(const Eigen::MatrixXd& action, const Eigen::VectorXd& w, const NormOptions& opt = {}) {
  if (opt.method == NormOptions::Method::power) return detail::power_norm(action, w, opt);
  const Eigen::MatrixXd s = detail::weighted_similarity(action, w);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.transpose() * s, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw ConvergenceError("op_norm: eigen-solver failed", {});
  }
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

inline double op_norm(const LinOp& op, const NormOptions& opt = {}) {
  if (op.kind() == LinOp::Kind::scaled_identity) return std::abs(op.scale());
  return op_norm(op.matrix(), op.grid().weights(), opt);
}

inline double op_norm(const BlockOp& op, const NormOptions& opt = {}) {
  return op_norm(op.matrix(), op.weights(), opt);
}

/// Extremal Rayleigh quotients of the symmetric part, <(M+M*)/2 Z, Z>/||Z||^2.
inline DefinitenessBounds definiteness_bounds(const Eigen::MatrixXd& action, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd s = detail::weighted_similarity(action, w);
  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw ConvergenceError("definiteness_bounds: eigen-solver failed", {});
  }
  return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

inline DefinitenessBounds definiteness_bounds(const LinOp& op) {
  if (op.kind() == LinOp::Kind::scaled_identity) return {op.scale(), op.scale()};
  return definiteness_bounds(op.matrix(), op.grid().weights());
}

inline DefinitenessBounds definiteness_bounds(const BlockOp& op) {
  return definiteness_bounds(op.matrix(), op.weights());
}

/// Adjoint of an action matrix in the weighted metric: D^{-1} M^T D.
inline Eigen::MatrixXd weighted_adjoint(const Eigen::MatrixXd& action, const Eigen::VectorXd& w) {
  return w.cwiseInverse().asDiagonal() * action.transpose() * w.asDiagonal();
}

/// Relative deviation from self-adjointness, ||DM - (DM)^T|| / ||DM||.
inline double self_adjointness_defect(const Eigen::MatrixXd& action, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd dm = w.asDiagonal() * action;
  const double scale = dm.norm();
  if (scale == 0.0) return 0.0;
  return (dm - dm.transpose()).norm() / scale;
}

// ---------------------------------------------------------------------------
// Closed-form operators used by the packaged scenarios.

/// Graphon operator with kernel 2cos(pi(x - y)).
inline LinOp cosine_graphon(const Grid& grid, double scale = 1.0) {
  return LinOp::kernel_from(grid, [scale](double x, double y) {
    return 2.0 * scale * std::cos(M_PI * (x - y));
  });
}

/// (W1 g)(x) = x g(x).
inline LinOp multiplication_by_x(const Grid& grid, double scale = 1.0) {
  return LinOp::multiplication(sample([scale](double x) { return scale * x; }, grid));
}

/// (F g)(x) = int_a^b y g(y) dy, aggregate production.
inline LinOp aggregate_production(const Grid& grid, double scale = 1.0) {
  return LinOp::rank_one(GridFn::constant(grid, scale), sample([](double x) { return x; }, grid));
}

/// W1 F: (W1 F g)(x) = x int_a^b y g(y) dy.
inline LinOp weighted_aggregate(const Grid& grid, double scale = 1.0) {
  const GridFn x = sample([](double v) { return v; }, grid);
  return LinOp::rank_one(scale * x, x);
}

}  // namespace dvi

#endif  // DVI_OPERATORS_HPP
