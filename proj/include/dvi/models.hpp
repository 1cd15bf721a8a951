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


// Game instances with known closed forms.

#ifndef DVI_MODELS_HPP
#define DVI_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "dvi/dynamics.hpp"
#include "dvi/function_space.hpp"
#include "dvi/operators.hpp"

namespace dvi {

/// Graphon game on [0,1] with dX = (f - u) dt, f = sin(pi x)/2, payoff
/// coefficients E = 2 W2, F = I, G = -2 W2. Its NNE is pi cos(pi x) v 0 with
/// multiplier -beta/3 and V = beta + (-pi cos(pi x)) v 0.
///
/// `printed_alpha` selects alpha = beta - (5 pi/4) cos(pi x) instead of the
/// default beta - (3 pi/2) cos(pi x) - sin(pi x)/2. The former is the payoff
/// constant as usually quoted; with it P = I + W2 and
/// Q = beta - (5 pi/4) cos - sin/2, but pi cos v 0 is then not the NNE.
inline GameSpec example31_spec(const Grid& grid, const std::vector<double>& times, double beta = 1.0,
                               bool printed_alpha = false, const GridFn* xi0 = nullptr) {
  const LinOp w2 = cosine_graphon(grid);
  const GridFn alpha = printed_alpha
                           ? sample([beta](double x) { return beta - 1.25 * M_PI * std::cos(M_PI * x); }, grid)
                           : sample(
                                 [beta](double x) {
                                   return beta - 1.5 * M_PI * std::cos(M_PI * x) - 0.5 * std::sin(M_PI * x);
                                 },
                                 grid);
  MarketCoefficients m{
      TimeOpFamily::constant(times, LinOp::zero(grid)),
      {TimeOpFamily::constant(times, LinOp::scaled_identity(grid, -1.0))},
      TimeOpFamily::constant(times, w2.scaled(2.0)),
      TimeOpFamily::constant(times, LinOp::identity(grid)),
      w2.scaled(-2.0),
      TimeFnFamily::constant(times, sample([](double x) { return 0.5 * std::sin(M_PI * x); }, grid)),
      xi0 != nullptr ? *xi0 : GridFn::zero(grid),
      alpha,
  };
  GameSpec spec{times, grid, {m}};
  spec.validate();
  return spec;
}

/// pi cos(pi x) v 0.
inline GridFn example31_density(const Grid& grid) {
  return sample([](double x) { return std::max(M_PI * std::cos(M_PI * x), 0.0); }, grid);
}

/// beta + (-pi cos(pi x)) v 0.
inline GridFn example31_value(const Grid& grid, double beta = 1.0) {
  return sample([beta](double x) { return beta + std::max(-M_PI * std::cos(M_PI * x), 0.0); }, grid);
}

/// Smooth bump (1 - cos(2 pi (x - a)/(b - a)))/2 vanishing at both ends.
inline GridFn bump(const Grid& grid) {
  const double a = grid.a();
  const double len = grid.length();
  return sample([a, len](double x) { return 0.5 * (1.0 - std::cos(2.0 * M_PI * (x - a) / len)); }, grid);
}

}  // namespace dvi

#endif  // DVI_MODELS_HPP
