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


// Variational-inequality data (P, Q) of a game and its spectral certificate,
// plus the linear Cournot model and its definiteness criterion.
//
// With Y_i solving the backward equation of market i,
//   P_ij = int Y_i B_ij dt + delta_ij int F_i dt,
//   Q_i  = alpha_i + Y_i(s) xi_i + int Y_i f_i dt,
// so that V_i = (P u + Q)_i. For MNE the diagonal blocks of the operator used
// in the iteration are replaced by M + M* with M = P_ii.

#ifndef DVI_VI_ASSEMBLY_HPP
#define DVI_VI_ASSEMBLY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dvi/dynamics.hpp"
#include "dvi/error.hpp"
#include "dvi/function_space.hpp"
#include "dvi/operators.hpp"

namespace dvi {

enum class Mode { nne, mne };

inline const char* mode_name(Mode m) { return m == Mode::nne ? "nne" : "mne"; }

struct AssembleOptions {
  BackwardOptions backward{};
  std::optional<double> eps0{};      // step override; must lie in (0, 2 eps_P / |P|^2)
  double definiteness_tol = 1e-8;
};

struct AssembledVI {
  Mode mode = Mode::nne;
  Grid grid;
  std::size_t n = 0;
  Eigen::MatrixXd P;          // action matrix of the iteration operator on H^n
  Eigen::MatrixXd P_payoff;   // V = P_payoff u + Q (equals P for NNE)
  Eigen::VectorXd Q;          // stacked
  Eigen::VectorXd weights;    // stacked quadrature weights
  double eps_low = 0.0;
  double eps_high = 0.0;
  double eps_P = 0.0;
  double p_norm = 0.0;
  double eps0 = 0.0;

  BlockOp P_op() const { return BlockOp::from_action(grid, n, P); }
  std::vector<GridFn> Q_parts() const { return DensityProfile::unstack(grid, n, Q).components(); }

  /// Upper end of the admissible step interval.
  double eps0_max() const { return 2.0 * eps_P / (p_norm * p_norm); }

  /// sqrt(1 - 2 eps0 eps_P + eps0^2 |P|^2).
  double contraction_factor() const {
    return std::sqrt(std::max(0.0, 1.0 - 2.0 * eps0 * eps_P + eps0 * eps0 * p_norm * p_norm));
  }

  /// Value functions V = P_payoff u + Q.
  Eigen::VectorXd payoff(const Eigen::VectorXd& u) const { return P_payoff * u + Q; }

  void set_eps0(double value) {
    if (!(value > 0.0 && value < eps0_max())) {
      detail::fail(ErrorKind::config, "eps0 = " + std::to_string(value) + " outside the admissible interval (0, " +
                                          std::to_string(eps0_max()) + ")");
    }
    eps0 = value;
  }
};

namespace detail {

struct MarketBlocks {
  std::vector<Eigen::MatrixXd> row;  // int Y_i B_ij dt (+ int F_i dt on the diagonal)
  Eigen::VectorXd q;
};

inline MarketBlocks assemble_market(const GameSpec& spec, std::size_t i, const BackwardOptions& opt) {
  const auto& c = spec.markets[i];
  const auto& t = spec.times;
  const auto tw = time_weights(t);
  const auto len = static_cast<Eigen::Index>(spec.grid.size());
  const std::size_t n = spec.n();

  MarketBlocks out;
  out.row.assign(n, Eigen::MatrixXd::Zero(len, len));
  out.q = c.alpha.values();
  Eigen::MatrixXd y_int = Eigen::MatrixXd::Zero(len, len);  // int Y dt, for time-constant B

  backward_sweep(
      c.E, c.A, c.G,
      [&](std::size_t k, const Eigen::MatrixXd& y) {
        const double tau = tw[k];
        y_int += tau * y;
        for (std::size_t j = 0; j < n; ++j) {
          const auto& b = c.B_row[j];
          if (b.is_constant()) continue;
          if (!b.at_node(k).is_zero()) out.row[j] += tau * b.at_node(k).right_multiply(y);
        }
        out.q += tau * (y * c.f.at_node(k).values());
        if (k == 0) out.q += y * c.xi.values();
      },
      opt);

  for (std::size_t j = 0; j < n; ++j) {
    const auto& b = c.B_row[j];
    if (b.is_constant() && !b.at_node(0).is_zero()) out.row[j] += b.at_node(0).right_multiply(y_int);
  }
  if (c.F.is_constant()) {
    out.row[i] += (spec.T() - spec.s()) * c.F.at_node(0).matrix();
  } else {
    for (std::size_t k = 0; k < t.size(); ++k) out.row[i] += tw[k] * c.F.at_node(k).matrix();
  }
  return out;
}

}  // namespace detail

/// Builds (P, Q) without the certificate; eps fields are left at zero.
inline AssembledVI assemble_raw(const GameSpec& spec, Mode mode, const BackwardOptions& opt = {}) {
  spec.validate();
  const std::size_t n = spec.n();
  const auto len = static_cast<Eigen::Index>(spec.grid.size());
  const auto total = len * static_cast<Eigen::Index>(n);
  AssembledVI vi{mode, spec.grid, n, Eigen::MatrixXd::Zero(total, total), Eigen::MatrixXd(), Eigen::VectorXd(total),
                 stacked_weights(spec.grid, n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto blocks = detail::assemble_market(spec, i, opt);
    const auto r = static_cast<Eigen::Index>(i) * len;
    for (std::size_t j = 0; j < n; ++j) {
      vi.P.block(r, static_cast<Eigen::Index>(j) * len, len, len) = blocks.row[j];
    }
    vi.Q.segment(r, len) = blocks.q;
  }
  vi.P_payoff = vi.P;
  if (mode == Mode::mne) {
    const Eigen::VectorXd& w = spec.grid.weights();
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i) * len;
      const Eigen::MatrixXd m = vi.P_payoff.block(r, r, len, len);
      vi.P.block(r, r, len, len) = m + weighted_adjoint(m, w);
    }
  }
  return vi;
}

/// Fills the spectral certificate and the step size. Throws
/// definiteness-error when the sign condition of the mode fails.
inline void certify(AssembledVI& vi, const AssembleOptions& opt = {}) {
  const auto bounds = definiteness_bounds(vi.P, vi.weights);
  vi.eps_low = bounds.eps_low;
  vi.eps_high = bounds.eps_high;
  vi.p_norm = op_norm(vi.P, vi.weights);
  vi.eps_P = vi.mode == Mode::nne ? bounds.eps_low : -bounds.eps_high;
  if (!(vi.eps_P > opt.definiteness_tol)) {
    throw DefinitenessError(std::string(vi.mode == Mode::nne ? "P is not positive definite"
                                                             : "P is not negative definite") +
                                ": eps_low=" + std::to_string(bounds.eps_low) +
                                " eps_high=" + std::to_string(bounds.eps_high),
                            bounds.eps_low, bounds.eps_high);
  }
  vi.eps0 = vi.eps_P / (vi.p_norm * vi.p_norm);
  if (opt.eps0) vi.set_eps0(*opt.eps0);
}

inline AssembledVI assemble(const GameSpec& spec, Mode mode, const AssembleOptions& opt = {}) {
  AssembledVI vi = assemble_raw(spec, mode, opt.backward);
  certify(vi, opt);
  return vi;
}

inline AssembledVI assemble_nne(const GameSpec& spec, const AssembleOptions& opt = {}) {
  return assemble(spec, Mode::nne, opt);
}

inline AssembledVI assemble_mne(const GameSpec& spec, const AssembleOptions& opt = {}) {
  return assemble(spec, Mode::mne, opt);
}

// ---------------------------------------------------------------------------
// Linear Cournot model.
//
// Demand dX = (s1 X - s2 F u + s0) dt, price p = s3 X + s4 F u + s5 u + s6,
// payoff V = int W1 (p - s7) dt with (W1 g)(x) = x g(x) and
// (F g)(x) = int_a^b y g(y) dy.

struct CournotParams {
  double a = 1.0;
  double b = 2.0;
  double s = 0.0;
  double T = 1.0;
  double sigma1 = 0.0;
  double sigma2 = 0.5;
  double sigma3 = 2.0;
  double sigma4 = 0.0;
  double sigma5 = 2.0;
  std::function<double(double)> sigma0 = [](double) { return 2.0; };
  std::function<double(double)> sigma6 = [](double) { return 1.0; };
  std::function<double(double)> sigma7 = [](double) { return 1.0; };
  std::function<double(double)> xi = [](double) { return 1.0; };

  void validate() const {
    detail::require(std::isfinite(a) && a > 0.0, ErrorKind::domain, "cournot: need a > 0");
    detail::require(std::isfinite(b) && b > a, ErrorKind::domain, "cournot: need b > a");
    detail::require(std::isfinite(s) && std::isfinite(T) && T > s, ErrorKind::domain, "cournot: need T > s");
  }
};

/// Coefficient of W1 F in P per unit of the NNE operator:
/// s4 h - s2 s3 int_s^T int_t^T e^{s1 (r - t)} dr dt with h = T - s.
inline double cournot_theta(const CournotParams& p) {
  const double k = p.sigma2 * p.sigma3;
  const double h = p.T - p.s;
  if (p.sigma1 == 0.0) return p.sigma4 * h - 0.5 * k * h * h;
  const double s1 = p.sigma1;
  return p.sigma4 * h - (k / s1) * (std::expm1(s1 * h) / s1 - h);
}

enum class RegimeLabel { nne_admissible, mne_admissible, inconclusive };

inline const char* regime_name(RegimeLabel l) {
  switch (l) {
    case RegimeLabel::nne_admissible: return "NNE-admissible";
    case RegimeLabel::mne_admissible: return "MNE-admissible";
    case RegimeLabel::inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct RegimeReport {
  double theta = 0.0;
  double criterion = 0.0;
  RegimeLabel label = RegimeLabel::inconclusive;
  /// Definiteness margin implied by the analytic estimate (lower bound of
  /// <PZ,Z>/|Z|^2 for NNE, upper bound for MNE; MNE operators are doubled).
  double analytic_bound = 0.0;
  std::optional<DefinitenessBounds> eps_bounds{};
};

struct RegimeOptions {
  std::size_t nodes = 101;
  std::size_t steps = 50;
  bool numeric = true;
};

inline GameSpec build_cournot_spec(const CournotParams& p, std::size_t nodes, std::size_t steps);

/// Analytic criterion (b^3 - a^3)/3 theta + s5 a (T - s) and, optionally, the
/// numerically assembled definiteness bounds of the mode's operator.
inline RegimeReport cournot_regime(const CournotParams& p, Mode mode, const RegimeOptions& opt = {}) {
  p.validate();
  RegimeReport r;
  r.theta = cournot_theta(p);
  const double cube = (p.b * p.b * p.b - p.a * p.a * p.a) / 3.0;
  const double h = p.T - p.s;
  r.criterion = cube * r.theta + p.sigma5 * p.a * h;
  if (p.sigma5 > 0.0 && r.criterion > 0.0) {
    r.label = RegimeLabel::nne_admissible;
  } else if (p.sigma5 < 0.0 && r.criterion < 0.0) {
    r.label = RegimeLabel::mne_admissible;
  }
  if (mode == Mode::nne) {
    r.analytic_bound = cube * std::min(r.theta, 0.0) + p.sigma5 * p.a * h;
  } else {
    r.analytic_bound = 2.0 * (cube * std::max(r.theta, 0.0) + p.sigma5 * p.a * h);
  }
  if (opt.numeric) {
    const AssembledVI vi = assemble_raw(build_cournot_spec(p, opt.nodes, opt.steps), mode);
    r.eps_bounds = definiteness_bounds(vi.P, vi.weights);
  }
  return r;
}

/// A = s1 I, B = -s2 F, f = s0, E = s3 W1, F = s4 W1 F + s5 W1, G = 0 and
/// alpha = int_s^T W1 (s6 - s7) dt = (T - s) x (s6 - s7).
inline GameSpec build_cournot_spec(const CournotParams& p, std::size_t nodes, std::size_t steps) {
  p.validate();
  const Grid g = make_grid(p.a, p.b, nodes);
  const auto t = make_timegrid(p.s, p.T, steps);
  const LinOp f_op = aggregate_production(g);
  const LinOp w1 = multiplication_by_x(g);
  const LinOp w1f = weighted_aggregate(g);
  const GridFn alpha = sample([&p](double x) { return (p.T - p.s) * x * (p.sigma6(x) - p.sigma7(x)); }, g);
  MarketCoefficients m{
      TimeOpFamily::constant(t, LinOp::scaled_identity(g, p.sigma1)),
      {TimeOpFamily::constant(t, f_op.scaled(-p.sigma2))},
      TimeOpFamily::constant(t, w1.scaled(p.sigma3)),
      TimeOpFamily::constant(t, w1f.scaled(p.sigma4) + w1.scaled(p.sigma5)),
      LinOp::zero(g),
      TimeFnFamily::constant(t, sample(p.sigma0, g)),
      sample(p.xi, g),
      alpha,
  };
  GameSpec spec{t, g, {m}};
  spec.validate();
  return spec;
}

}  // namespace dvi

#endif  // DVI_VI_ASSEMBLY_HPP
