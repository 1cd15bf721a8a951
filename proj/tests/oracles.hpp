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


// Reference solutions and random instances shared by the property tests and
// the acceptance binary.

#ifndef DVI_TESTS_ORACLES_HPP
#define DVI_TESTS_ORACLES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dvi/dynamics.hpp"
#include "dvi/vi_assembly.hpp"
#include "test_util.hpp"

namespace dvi::testing {

// Brute-force QP: every choice of free nodes, each solved as an
// equality-constrained least-squares problem; best feasible candidate wins.
inline Eigen::VectorXd enumerate_projection(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, double floor,
                                            double mass) {
  const auto n = theta.size();
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd arg;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sw = 0.0, swt = 0.0, fixed = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask & (1u << j)) {
        sw += w[j];
        swt += w[j] * theta[j];
      } else {
        fixed += w[j] * floor;
      }
    }
    const double lambda = (swt + fixed - mass) / sw;
    Eigen::VectorXd u(n);
    bool ok = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      u[j] = (mask & (1u << j)) ? theta[j] - lambda : floor;
      if (u[j] < floor - 1e-13) ok = false;
    }
    if (!ok) continue;
    const double obj = (w.array() * (u - theta).array().square()).sum();
    if (obj < best) {
      best = obj;
      arg = u;
    }
  }
  return arg;
}

// Operator family c0 + c1 t with random operators c0, c1.
inline TimeOpFamily affine_ops(std::mt19937_64& rng, const Grid& g, const std::vector<double>& t, double scale) {
  const LinOp c0 = random_op(rng, g, scale);
  const LinOp c1 = random_op(rng, g, scale);
  return TimeOpFamily::from_function(t, [&](double s) { return c0 + c1.scaled(s); });
}

GameSpec random_game(std::mt19937_64& rng, std::size_t n, std::size_t nodes, std::size_t steps) {
  const Grid g = make_grid(0.0, 1.0, nodes);
  const auto t = make_timegrid(0.0, 1.0, steps);
  std::vector<MarketCoefficients> markets;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TimeOpFamily> b;
    for (std::size_t j = 0; j < n; ++j) b.push_back(affine_ops(rng, g, t, 0.5));
    const GridFn f0 = random_fn(rng, g), f1 = random_fn(rng, g);
    markets.push_back({affine_ops(rng, g, t, 0.5), b, affine_ops(rng, g, t, 1.0), affine_ops(rng, g, t, 1.0),
                       random_op(rng, g), TimeFnFamily::from_function(t, [&](double s) { return f0 + s * f1; }),
                       random_fn(rng, g), random_fn(rng, g)});
  }
  GameSpec spec{t, g, markets};
  spec.validate();
  return spec;
}

inline AssembledVI direct_vi(const Grid& g, std::size_t n, const Eigen::MatrixXd& p, const Eigen::VectorXd& q,
                             Mode mode) {
  AssembledVI vi{mode, g, n, p, p, q, stacked_weights(g, n)};
  certify(vi);
  return vi;
}

// Random positive definite, non-symmetric operator on H^n.
inline AssembledVI random_pd_vi(std::mt19937_64& rng, const Grid& g, std::size_t n) {
  const auto len = static_cast<Eigen::Index>(g.size() * n);
  const Eigen::VectorXd w = stacked_weights(g, n);
  const Eigen::MatrixXd s = random_matrix(rng, len, 1.0 / std::sqrt(static_cast<double>(len)));
  // Action matrix D^{-1/2} (S + c I) D^{1/2}, positive definite for c above |S|.
  const Eigen::VectorXd r = w.cwiseSqrt();
  const Eigen::MatrixXd p =
      r.cwiseInverse().asDiagonal() * (s + 2.5 * Eigen::MatrixXd::Identity(len, len)) * r.asDiagonal();
  return direct_vi(g, n, p, random_vector(rng, len, -2.0, 2.0), Mode::nne);
}

}  // namespace dvi::testing

#endif  // DVI_TESTS_ORACLES_HPP
