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

// Forward state equation, backward operator equation and value functions.
//
//   X_i' = A_i X_i + sum_j B_ij u_j + f_i,          X_i(s) = xi_i
//   Y_i' = -E_i - Y_i A_i,                           Y_i(T) = G_i
//   V_i  = alpha_i + int (E_i X_i + F_i u_i) dt + G_i X_i(T)
//        = alpha_i + Y_i(s) xi_i + int Y_i (f_i + sum_j B_ij u_j) dt + int F_i u_i dt

#ifndef DVI_DYNAMICS_HPP
#define DVI_DYNAMICS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dvi/error.hpp"
#include "dvi/function_space.hpp"
#include "dvi/operators.hpp"

namespace dvi {

/// Uniform time grid s = t_0 < ... < t_M = T.
inline std::vector<double> make_timegrid(double s, double T, std::size_t steps) {
  detail::require(std::isfinite(s) && std::isfinite(T) && T > s, ErrorKind::domain,
                  "make_timegrid: need s < T");
  detail::require(steps >= 1, ErrorKind::domain, "make_timegrid: need at least one step");
  std::vector<double> t(steps + 1);
  const double h = (T - s) / static_cast<double>(steps);
  for (std::size_t k = 0; k <= steps; ++k) t[k] = s + h * static_cast<double>(k);
  t.back() = T;
  return t;
}

namespace detail {

// Integral over [lo, hi] of the quadratic interpolating at x[0..2], as
// weights on the three samples. Two-point Gauss rule is exact here.
inline std::array<double, 3> quadratic_weights(const std::array<double, 3>& x, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double g = half / std::sqrt(3.0);
  std::array<double, 3> w{0.0, 0.0, 0.0};
  for (double p : {mid - g, mid + g}) {
    for (int k = 0; k < 3; ++k) {
      double l = 1.0;
      for (int m = 0; m < 3; ++m) {
        if (m != k) l *= (p - x[m]) / (x[k] - x[m]);
      }
      w[k] += half * l;
    }
  }
  return w;
}

}  // namespace detail

/// Composite Simpson weights on an arbitrary time grid. Intervals are paired;
/// with an odd count the last interval integrates the quadratic through the
/// final three nodes, and a single interval falls back to the trapezoid.
inline std::vector<double> time_weights(const std::vector<double>& t) {
  detail::require(t.size() >= 2, ErrorKind::domain, "time_weights: need two nodes");
  const std::size_t m = t.size() - 1;
  std::vector<double> w(t.size(), 0.0);
  if (m == 1) {
    w[0] = w[1] = 0.5 * (t[1] - t[0]);
    return w;
  }
  const std::size_t paired = m - m % 2;
  for (std::size_t k = 0; k < paired; k += 2) {
    const auto q = detail::quadratic_weights({t[k], t[k + 1], t[k + 2]}, t[k], t[k + 2]);
    for (int j = 0; j < 3; ++j) w[k + j] += q[j];
  }
  if (paired < m) {
    const auto q = detail::quadratic_weights({t[m - 2], t[m - 1], t[m]}, t[m - 1], t[m]);
    for (int j = 0; j < 3; ++j) w[m - 2 + j] += q[j];
  }
  return w;
}

/// Function-valued family f(t) in C([s,T], H), linear between samples.
class TimeFnFamily {
 public:
  static TimeFnFamily constant(std::vector<double> times, const GridFn& f) {
    return TimeFnFamily(std::move(times), std::vector<GridFn>{f});
  }
  static TimeFnFamily sampled(std::vector<double> times, std::vector<GridFn> fs) {
    detail::require(fs.size() == times.size(), ErrorKind::domain,
                    "TimeFnFamily: need one sample per time node");
    return TimeFnFamily(std::move(times), std::move(fs));
  }
  template <class Fn>
  static TimeFnFamily from_function(std::vector<double> times, Fn&& f_at) {
    std::vector<GridFn> fs;
    fs.reserve(times.size());
    for (double t : times) fs.push_back(f_at(t));
    return sampled(std::move(times), std::move(fs));
  }

  const std::vector<double>& times() const noexcept { return times_; }
  bool is_constant() const noexcept { return fs_.size() == 1; }
  const Grid& grid() const { return fs_.front().grid(); }
  const GridFn& at_node(std::size_t k) const { return is_constant() ? fs_.front() : fs_.at(k); }

  GridFn at(double t) const {
    if (is_constant()) return fs_.front();
    detail::require(t >= times_.front() - 1e-12 && t <= times_.back() + 1e-12, ErrorKind::domain,
                    "TimeFnFamily: time outside [s, T]");
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    if (k >= times_.size() - 1) return fs_.back();
    const double theta = (t - times_[k]) / (times_[k + 1] - times_[k]);
    return (1.0 - theta) * fs_[k] + theta * fs_[k + 1];
  }

  TimeFnFamily map(const std::function<GridFn(const GridFn&)>& fn) const {
    std::vector<GridFn> out;
    out.reserve(fs_.size());
    for (const auto& f : fs_) out.push_back(fn(f));
    return TimeFnFamily(times_, std::move(out));
  }

 private:
  TimeFnFamily(std::vector<double> times, std::vector<GridFn> fs)
      : times_(std::move(times)), fs_(std::move(fs)) {
    detail::require(times_.size() >= 2, ErrorKind::domain, "TimeFnFamily: need two time nodes");
    detail::require(!fs_.empty(), ErrorKind::domain, "TimeFnFamily: no samples");
    for (const auto& f : fs_) detail::require_same_grid(fs_.front().grid(), f.grid(), "TimeFnFamily");
  }

  std::vector<double> times_;
  std::vector<GridFn> fs_;
};

/// Coefficients of one market i.
struct MarketCoefficients {
  TimeOpFamily A;
  std::vector<TimeOpFamily> B_row;  // B_i1 ... B_in
  TimeOpFamily E;
  TimeOpFamily F;
  LinOp G;
  TimeFnFamily f;
  GridFn xi;
  GridFn alpha;
};

struct GameSpec {
  std::vector<double> times;
  Grid grid;
  std::vector<MarketCoefficients> markets;

  std::size_t n() const noexcept { return markets.size(); }
  double s() const { return times.front(); }
  double T() const { return times.back(); }

  /// Throws domain-error unless every family shares the time grid and the
  /// spatial grid, and each market has n B-blocks.
  void validate() const {
    detail::require(!markets.empty(), ErrorKind::domain, "GameSpec: need at least one market");
    detail::require(times.size() >= 2, ErrorKind::domain, "GameSpec: need a time grid");
    auto same_times = [&](const std::vector<double>& t, const char* what) {
      detail::require(t == times, ErrorKind::domain, std::string("GameSpec: time grid mismatch in ") + what);
    };
    for (const auto& m : markets) {
      detail::require(m.B_row.size() == n(), ErrorKind::domain, "GameSpec: each market needs n B blocks");
      same_times(m.A.times(), "A");
      same_times(m.E.times(), "E");
      same_times(m.F.times(), "F");
      same_times(m.f.times(), "f");
      detail::require_same_grid(grid, m.A.grid(), "GameSpec A");
      detail::require_same_grid(grid, m.E.grid(), "GameSpec E");
      detail::require_same_grid(grid, m.F.grid(), "GameSpec F");
      detail::require_same_grid(grid, m.G.grid(), "GameSpec G");
      detail::require_same_grid(grid, m.f.grid(), "GameSpec f");
      detail::require_same_grid(grid, m.xi.grid(), "GameSpec xi");
      detail::require_same_grid(grid, m.alpha.grid(), "GameSpec alpha");
      for (const auto& b : m.B_row) {
        same_times(b.times(), "B");
        detail::require_same_grid(grid, b.grid(), "GameSpec B");
      }
    }
  }
};

struct StateTrajectory {
  std::vector<double> times;
  std::vector<GridFn> states;
};

namespace detail {

inline Eigen::VectorXd forcing_at(const MarketCoefficients& c, const DensityProfile& u, std::size_t k) {
  Eigen::VectorXd b = c.f.at_node(k).values();
  for (std::size_t j = 0; j < c.B_row.size(); ++j) {
    const LinOp& op = c.B_row[j].at_node(k);
    if (!op.is_zero()) b += op.apply(u[j].values());
  }
  return b;
}

// A(t) g at a node or at the midpoint between nodes k and k+1.
inline Eigen::VectorXd apply_mid(const TimeOpFamily& fam, std::size_t k, const Eigen::VectorXd& g) {
  if (fam.is_constant()) return fam.at_node(0).apply(g);
  return 0.5 * (fam.at_node(k).apply(g) + fam.at_node(k + 1).apply(g));
}

inline Eigen::MatrixXd right_mid(const TimeOpFamily& fam, std::size_t k, const Eigen::MatrixXd& y) {
  if (fam.is_constant()) return fam.at_node(0).right_multiply(y);
  return 0.5 * (fam.at_node(k).right_multiply(y) + fam.at_node(k + 1).right_multiply(y));
}

inline void check_finite(const Eigen::MatrixXd& m, double t, const char* where) {
  if (!m.allFinite()) {
    throw DivergenceError(std::string(where) + ": non-finite values at t=" + std::to_string(t), t);
  }
}

}  // namespace detail

/// Classical RK4 for X' = A X + sum_j B_ij u_j + f, X(s) = xi. Coefficients
/// at half steps are linear interpolants of the node samples.
inline StateTrajectory solve_state_forward(const MarketCoefficients& c, const DensityProfile& u,
                                           const std::vector<double>& times) {
  detail::require(u.n() == c.B_row.size(), ErrorKind::domain,
                  "solve_state_forward: density has wrong number of markets");
  detail::require(times == c.A.times(), ErrorKind::domain, "solve_state_forward: time grid mismatch");
  detail::require_same_grid(c.xi.grid(), u.grid(), "solve_state_forward");
  StateTrajectory out{times, {}};
  out.states.reserve(times.size());
  out.states.push_back(c.xi);
  Eigen::VectorXd x = c.xi.values();
  Eigen::VectorXd b0 = detail::forcing_at(c, u, 0);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double h = times[k + 1] - times[k];
    const Eigen::VectorXd b1 = detail::forcing_at(c, u, k + 1);
    const Eigen::VectorXd bm = 0.5 * (b0 + b1);
    const Eigen::VectorXd k1 = c.A.at_node(k).apply(x) + b0;
    const Eigen::VectorXd k2 = detail::apply_mid(c.A, k, Eigen::VectorXd(x + 0.5 * h * k1)) + bm;
    const Eigen::VectorXd k3 = detail::apply_mid(c.A, k, Eigen::VectorXd(x + 0.5 * h * k2)) + bm;
    const Eigen::VectorXd k4 = c.A.at_node(k + 1).apply(Eigen::VectorXd(x + h * k3)) + b1;
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_finite(x, times[k + 1], "solve_state_forward");
    out.states.emplace_back(c.xi.grid(), x);
    b0 = b1;
  }
  return out;
}

enum class BackwardMethod { rk4, picard };

/// Visits the action matrices Y(t_k) for k = M, M-1, ..., 0 without storing
/// the whole family.
using BackwardVisitor = std::function<void(std::size_t, const Eigen::MatrixXd&)>;

namespace detail {

inline Eigen::MatrixXd e_matrix(const TimeOpFamily& E, std::size_t k, std::vector<Eigen::MatrixXd>& cache) {
  if (E.is_constant()) {
    if (cache.empty()) cache.push_back(E.at_node(0).matrix());
    return cache.front();
  }
  return E.at_node(k).matrix();
}

inline void backward_rk4(const TimeOpFamily& E, const TimeOpFamily& A, const LinOp& G,
                         const BackwardVisitor& visit) {
  const auto& t = E.times();
  const std::size_t m = t.size() - 1;
  std::vector<Eigen::MatrixXd> cache;
  Eigen::MatrixXd y = G.matrix();
  visit(m, y);
  Eigen::MatrixXd e_hi = e_matrix(E, m, cache);
  for (std::size_t k = m; k-- > 0;) {
    const double h = t[k + 1] - t[k];
    const Eigen::MatrixXd e_lo = e_matrix(E, k, cache);
    const Eigen::MatrixXd e_mid = 0.5 * (e_lo + e_hi);
    const Eigen::MatrixXd k1 = -e_hi - A.at_node(k + 1).right_multiply(y);
    const Eigen::MatrixXd k2 = -e_mid - right_mid(A, k, y - 0.5 * h * k1);
    const Eigen::MatrixXd k3 = -e_mid - right_mid(A, k, y - 0.5 * h * k2);
    const Eigen::MatrixXd k4 = -e_lo - A.at_node(k).right_multiply(y - h * k3);
    y -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(y, t[k], "solve_operator_backward");
    visit(k, y);
    e_hi = e_lo;
  }
}

// Picard iteration Y(t) = Y(t_hi) + int_t^{t_hi} (E + Y A) on consecutive
// intervals of length at most (1/3)/sup||A||, with the integral taken on the
// nodes and half nodes by cumulative Simpson sums.
inline void backward_picard(const TimeOpFamily& E, const TimeOpFamily& A, const LinOp& G,
                            const BackwardVisitor& visit, double tol, int max_iters) {
  const auto& t = E.times();
  const std::size_t m = t.size() - 1;
  const double a_norm = A.sup_norm([](const LinOp& op) { return op_norm(op); });
  const double span = a_norm > 0.0 ? 1.0 / (3.0 * a_norm) : (t.back() - t.front()) * 2.0;

  std::vector<Eigen::MatrixXd> cache;
  Eigen::MatrixXd y_hi = G.matrix();
  visit(m, y_hi);
  std::size_t hi = m;
  while (hi > 0) {
    std::size_t lo = hi;
    while (lo > 0 && t[hi] - t[lo - 1] <= span * (1.0 + 1e-12)) --lo;
    if (lo == hi) lo = hi - 1;  // interval shorter than one step is not representable
    const std::size_t cnt = hi - lo;
    // Samples at nodes lo..hi (index j - lo) and half nodes (index j - lo for [j, j+1]).
    std::vector<Eigen::MatrixXd> e_node(cnt + 1), e_half(cnt);
    for (std::size_t j = lo; j <= hi; ++j) e_node[j - lo] = e_matrix(E, j, cache);
    for (std::size_t j = 0; j < cnt; ++j) e_half[j] = 0.5 * (e_node[j] + e_node[j + 1]);
    std::vector<Eigen::MatrixXd> y_node(cnt + 1, y_hi), y_half(cnt, y_hi);
    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
      std::vector<Eigen::MatrixXd> g_node(cnt + 1), g_half(cnt);
      for (std::size_t j = 0; j <= cnt; ++j) g_node[j] = e_node[j] + A.at_node(lo + j).right_multiply(y_node[j]);
      for (std::size_t j = 0; j < cnt; ++j) g_half[j] = e_half[j] + right_mid(A, lo + j, y_half[j]);
      double change = 0.0;
      double scale = 1.0;
      Eigen::MatrixXd acc = y_hi;
      for (std::size_t j = cnt; j-- > 0;) {
        const double h = t[lo + j + 1] - t[lo + j];
        Eigen::MatrixXd half = acc + h * ((5.0 / 24.0) * g_node[j + 1] + (8.0 / 24.0) * g_half[j] -
                                          (1.0 / 24.0) * g_node[j]);
        acc += (h / 6.0) * (g_node[j] + 4.0 * g_half[j] + g_node[j + 1]);
        change = std::max(change, (half - y_half[j]).cwiseAbs().maxCoeff());
        change = std::max(change, (acc - y_node[j]).cwiseAbs().maxCoeff());
        scale = std::max(scale, acc.cwiseAbs().maxCoeff());
        y_half[j] = std::move(half);
        y_node[j] = acc;
      }
      check_finite(acc, t[lo], "solve_operator_backward");
      if (change <= tol * scale) {
        converged = true;
        break;
      }
    }
    if (!converged) fail(ErrorKind::internal, "solve_operator_backward: picard iteration did not contract");
    for (std::size_t j = cnt; j-- > 0;) visit(lo + j, y_node[j]);
    y_hi = y_node[0];
    hi = lo;
  }
}

}  // namespace detail

struct BackwardOptions {
  BackwardMethod method = BackwardMethod::rk4;
  double picard_tol = 1e-12;
  int picard_max_iters = 500;
};

inline void backward_sweep(const TimeOpFamily& E, const TimeOpFamily& A, const LinOp& G,
                           const BackwardVisitor& visit, const BackwardOptions& opt = {}) {
  detail::require(E.times() == A.times(), ErrorKind::domain, "solve_operator_backward: time grid mismatch");
  detail::require_same_grid(E.grid(), A.grid(), "solve_operator_backward");
  detail::require_same_grid(E.grid(), G.grid(), "solve_operator_backward");
  if (opt.method == BackwardMethod::rk4) {
    detail::backward_rk4(E, A, G, visit);
  } else {
    detail::backward_picard(E, A, G, visit, opt.picard_tol, opt.picard_max_iters);
  }
}

/// Y on the whole time grid as kernel operators. Stores M+1 dense matrices;
/// the assembly code uses backward_sweep instead.
inline TimeOpFamily solve_operator_backward(const TimeOpFamily& E, const TimeOpFamily& A, const LinOp& G,
                                            const BackwardOptions& opt = {}) {
  const Grid& grid = E.grid();
  std::vector<Eigen::MatrixXd> ys(E.times().size());
  backward_sweep(E, A, G, [&](std::size_t k, const Eigen::MatrixXd& y) { ys[k] = y; }, opt);
  std::vector<LinOp> ops;
  ops.reserve(ys.size());
  for (const auto& y : ys) ops.push_back(LinOp::from_action(grid, y));
  return TimeOpFamily::sampled(E.times(), std::move(ops));
}

/// V_i = alpha_i + int (E X + F u_i) dt + G X(T), Simpson in time.
inline GridFn value_function_direct(const MarketCoefficients& c, const StateTrajectory& x, const GridFn& u_i) {
  detail::require(x.states.size() == x.times.size(), ErrorKind::domain,
                  "value_function_direct: malformed trajectory");
  detail::require(x.times == c.E.times(), ErrorKind::domain, "value_function_direct: time grid mismatch");
  const auto tw = time_weights(x.times);
  Eigen::VectorXd v = c.alpha.values() + c.G.apply(x.states.back().values());
  for (std::size_t k = 0; k < x.times.size(); ++k) {
    v += tw[k] * (c.E.at_node(k).apply(x.states[k].values()) + c.F.at_node(k).apply(u_i.values()));
  }
  return GridFn(c.alpha.grid(), v);
}

/// V_i through the backward solution Y.
inline GridFn value_function_via_Y(const MarketCoefficients& c, const TimeOpFamily& Y, const DensityProfile& u,
                                   std::size_t i) {
  detail::require(Y.times() == c.E.times(), ErrorKind::domain, "value_function_via_Y: time grid mismatch");
  const auto& t = Y.times();
  const auto tw = time_weights(t);
  Eigen::VectorXd v = c.alpha.values() + Y.at_node(0).apply(c.xi.values());
  for (std::size_t k = 0; k < t.size(); ++k) {
    v += tw[k] * (Y.at_node(k).apply(detail::forcing_at(c, u, k)) + c.F.at_node(k).apply(u[i].values()));
  }
  return GridFn(c.alpha.grid(), v);
}

/// Same quantity without materializing Y.
inline GridFn value_function_via_Y(const MarketCoefficients& c, const DensityProfile& u, std::size_t i,
                                   const BackwardOptions& opt = {}) {
  const auto& t = c.E.times();
  const auto tw = time_weights(t);
  Eigen::VectorXd v = c.alpha.values();
  backward_sweep(
      c.E, c.A, c.G,
      [&](std::size_t k, const Eigen::MatrixXd& y) {
        v += tw[k] * (y * detail::forcing_at(c, u, k) + c.F.at_node(k).apply(u[i].values()));
        if (k == 0) v += y * c.xi.values();
      },
      opt);
  return GridFn(c.alpha.grid(), v);
}

/// Value functions of every market via the state equation (the direct path).
inline std::vector<GridFn> value_functions_direct(const GameSpec& spec, const DensityProfile& u) {
  std::vector<GridFn> out;
  out.reserve(spec.n());
  for (std::size_t i = 0; i < spec.n(); ++i) {
    const auto x = solve_state_forward(spec.markets[i], u, spec.times);
    out.push_back(value_function_direct(spec.markets[i], x, u[i]));
  }
  return out;
}

/// Long-format CSV `t,x,value` of a trajectory.
inline void write_trajectory_csv(std::ostream& out, const StateTrajectory& x) {
  out << "t,x,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < x.times.size(); ++k) {
    const auto& s = x.states[k];
    for (std::size_t j = 0; j < s.size(); ++j) {
      out << x.times[k] << ',' << s.grid().nodes()[static_cast<Eigen::Index>(j)] << ',' << s[j] << '\n';
    }
  }
}

}  // namespace dvi

#endif  // DVI_DYNAMICS_HPP
