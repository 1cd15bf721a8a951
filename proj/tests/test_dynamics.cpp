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


#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "dvi/dynamics.hpp"
#include "dvi/models.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dvi;
using Catch::Approx;

namespace {

MarketCoefficients zero_market(const Grid& g, const std::vector<double>& t, std::size_t n, const GridFn& xi) {
  std::vector<TimeOpFamily> b(n, TimeOpFamily::constant(t, LinOp::zero(g)));
  return {TimeOpFamily::constant(t, LinOp::zero(g)),
          b,
          TimeOpFamily::constant(t, LinOp::zero(g)),
          TimeOpFamily::constant(t, LinOp::zero(g)),
          LinOp::zero(g),
          TimeFnFamily::constant(t, GridFn::zero(g)),
          xi,
          GridFn::zero(g)};
}

}  // namespace

TEST_CASE("Simpson time weights", "[time]") {
  for (std::size_t m : {1u, 2u, 3u, 7u, 200u}) {
    const auto t = make_timegrid(0.5, 2.0, m);
    const auto w = time_weights(t);
    double s0 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      s0 += w[k];
      s2 += w[k] * t[k] * t[k];
      s3 += w[k] * t[k] * t[k] * t[k];
    }
    REQUIRE(s0 == Approx(1.5).epsilon(1e-14));
    if (m >= 2) REQUIRE(s2 == Approx((8.0 - 0.125) / 3.0).epsilon(1e-13));
    if (m >= 2 && m % 2 == 0) REQUIRE(s3 == Approx((16.0 - 0.0625) / 4.0).epsilon(1e-13));
  }
}

TEST_CASE("constant dynamics keep the initial state", "[forward]") {
  const Grid g = make_grid(0.0, 1.0, 11);
  const auto t = make_timegrid(0.0, 2.0, 20);
  const GridFn xi = sample([](double x) { return 1.0 + x; }, g);
  const auto x = solve_state_forward(zero_market(g, t, 1, xi), DensityProfile::uniform(g, 1), t);
  REQUIRE(x.states.front().values() == xi.values());
  for (const auto& s : x.states) REQUIRE(testing::max_abs(s.values() - xi.values()) == 0.0);
}

TEST_CASE("scalar exponential growth", "[forward]") {
  const Grid g = make_grid(0.0, 1.0, 5);
  const auto t = make_timegrid(0.0, 1.0, 200);
  auto c = zero_market(g, t, 1, GridFn::constant(g, 1.0));
  const double s1 = 0.7;
  c.A = TimeOpFamily::constant(t, LinOp::scaled_identity(g, s1));
  const auto x = solve_state_forward(c, DensityProfile::uniform(g, 1), t);
  for (std::size_t k = 0; k < t.size(); ++k) {
    REQUIRE(testing::max_abs(x.states[k].values().array() - std::exp(s1 * t[k])) <= 1e-8);
  }
}

TEST_CASE("RK4 error drops sixteenfold when the step halves", "[forward][property]") {
  const Grid g = make_grid(0.0, 1.0, 5);
  auto err = [&](std::size_t m) {
    const auto t = make_timegrid(0.0, 1.0, m);
    auto c = zero_market(g, t, 1, GridFn::constant(g, 1.0));
    c.A = TimeOpFamily::constant(t, LinOp::scaled_identity(g, 2.0));
    const auto x = solve_state_forward(c, DensityProfile::uniform(g, 1), t);
    return std::abs(x.states.back()[0] - std::exp(2.0));
  };
  const double ratio = err(10) / err(20);
  REQUIRE(ratio > 14.0);
  REQUIRE(ratio < 18.0);
}

TEST_CASE("graphon example state is affine in time", "[forward]") {
  const Grid g = make_grid(0.0, 1.0, 101);
  const auto t = make_timegrid(0.0, 1.0, 50);
  const GridFn xi0 = sample([](double x) { return x * x; }, g);
  const GameSpec spec = example31_spec(g, t, 1.0, false, &xi0);
  const GridFn u = example31_density(g);
  const auto x = solve_state_forward(spec.markets[0], DensityProfile({u}), t);
  const GridFn f = sample([](double v) { return 0.5 * std::sin(M_PI * v); }, g);
  REQUIRE(testing::max_abs(x.states.back().values() - (xi0 + f - u).values()) <= 1e-12);
}

TEST_CASE("forward solve reports blow-up", "[forward]") {
  const Grid g = make_grid(0.0, 1.0, 3);
  const auto t = make_timegrid(0.0, 1.0, 10);
  auto c = zero_market(g, t, 1, GridFn::constant(g, 1.0));
  c.A = TimeOpFamily::constant(t, LinOp::scaled_identity(g, 1e200));
  try {
    solve_state_forward(c, DensityProfile::uniform(g, 1), t);
    FAIL("expected divergence-error");
  } catch (const DivergenceError& e) {
    REQUIRE(e.blow_up_time() > 0.0);
    REQUIRE(e.blow_up_time() <= 1.0);
  }
}

TEST_CASE("backward equation with zero data keeps the terminal value", "[backward]") {
  std::mt19937_64 rng(3);
  const Grid g = make_grid(0.0, 1.0, 9);
  const auto t = make_timegrid(0.0, 1.0, 10);
  const LinOp G = testing::random_op(rng, g);
  const auto zero = TimeOpFamily::constant(t, LinOp::zero(g));
  for (auto method : {BackwardMethod::rk4, BackwardMethod::picard}) {
    const auto y = solve_operator_backward(zero, zero, G, {method});
    for (std::size_t k = 0; k < t.size(); ++k) {
      REQUIRE(testing::max_abs(y.at_node(k).matrix() - G.matrix()) <= 1e-13);
    }
  }
}

TEST_CASE("backward closed forms for the linear Cournot payoff", "[backward]") {
  const Grid g = make_grid(1.0, 2.0, 41);
  const auto t = make_timegrid(0.0, 1.0, 200);
  const double s1 = 0.8, s3 = 2.0;
  const LinOp w1 = multiplication_by_x(g);
  const auto E = TimeOpFamily::constant(t, w1.scaled(s3));
  const LinOp G = LinOp::zero(g);
  const auto A1 = TimeOpFamily::constant(t, LinOp::scaled_identity(g, s1));
  const auto A0 = TimeOpFamily::constant(t, LinOp::zero(g));
  const auto tol = std::vector<double>{1e-7, 1e-6};
  int idx = 0;
  for (auto method : {BackwardMethod::rk4, BackwardMethod::picard}) {
    const auto y1 = solve_operator_backward(E, A1, G, {method});
    const auto y0 = solve_operator_backward(E, A0, G, {method});
    for (std::size_t k = 0; k < t.size(); ++k) {
      const Eigen::MatrixXd c1 = ((s3 / s1) * (std::exp(s1 * (1.0 - t[k])) - 1.0)) * w1.matrix();
      const Eigen::MatrixXd c0 = (s3 * (1.0 - t[k])) * w1.matrix();
      const Eigen::VectorXd& w = g.weights();
      REQUIRE(op_norm(Eigen::MatrixXd(y1.at_node(k).matrix() - c1), w) <= tol[idx]);
      REQUIRE(op_norm(Eigen::MatrixXd(y0.at_node(k).matrix() - c0), w) <= 1e-9);
    }
    ++idx;
  }
}

TEST_CASE("rk4 and picard agree on random instances", "[backward][property]") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Grid g = make_grid(0.0, 1.0, 15 + rep);
    const auto t = make_timegrid(0.0, 1.0, 40 + 7 * rep);
    const auto E = testing::affine_ops(rng, g, t, 1.0);
    const auto A = testing::affine_ops(rng, g, t, 0.3);
    const LinOp G = testing::random_op(rng, g);
    const auto a = solve_operator_backward(E, A, G, {BackwardMethod::rk4});
    const auto b = solve_operator_backward(E, A, G, {BackwardMethod::picard});
    for (std::size_t k = 0; k < t.size(); ++k) {
      const Eigen::MatrixXd d = a.at_node(k).matrix() - b.at_node(k).matrix();
      REQUIRE(op_norm(d, g.weights()) <= 1e-8);
    }
  }
}

TEST_CASE("graphon example backward solution", "[backward]") {
  const Grid g = make_grid(0.0, 1.0, 51);
  const auto t = make_timegrid(0.0, 1.0, 20);
  const GameSpec spec = example31_spec(g, t);
  const auto& m = spec.markets[0];
  const auto y = solve_operator_backward(m.E, m.A, m.G);
  const Eigen::MatrixXd w2 = cosine_graphon(g).matrix();
  for (std::size_t k = 0; k < t.size(); ++k) {
    REQUIRE(testing::max_abs(y.at_node(k).matrix() + 2.0 * t[k] * w2) <= 1e-12);
  }
}

TEST_CASE("direct value function examples", "[value]") {
  std::mt19937_64 rng(5);
  const Grid g = make_grid(0.0, 1.0, 21);
  const auto t = make_timegrid(0.0, 2.0, 30);
  auto c = zero_market(g, t, 1, GridFn::constant(g, 1.0));
  c.alpha = testing::random_fn(rng, g);
  const DensityProfile u({testing::random_density(rng, g)});
  auto x = solve_state_forward(c, u, t);
  REQUIRE(value_function_direct(c, x, u[0]).values() == c.alpha.values());
  c.F = TimeOpFamily::constant(t, LinOp::identity(g));
  x = solve_state_forward(c, u, t);
  REQUIRE(testing::max_abs(value_function_direct(c, x, u[0]).values() - (c.alpha + 2.0 * u[0]).values()) <= 1e-13);
}

TEST_CASE("graphon example value functions", "[value]") {
  const Grid g = make_grid(0.0, 1.0, 401);
  const auto t = make_timegrid(0.0, 1.0, 200);
  const GridFn u = example31_density(g);
  const DensityProfile prof({u});

  const GameSpec spec = example31_spec(g, t, 1.0);
  const auto x = solve_state_forward(spec.markets[0], prof, t);
  const GridFn v = value_function_direct(spec.markets[0], x, u);
  REQUIRE(testing::max_abs(v.values() - example31_value(g).values()) <= 5e-3);

  // Q-part under the printed payoff constant.
  const GameSpec printed = example31_spec(g, t, 1.0, true);
  const DensityProfile none({GridFn::zero(g)});
  const GridFn q = value_function_via_Y(printed.markets[0], none, 0);
  const GridFn expected = sample(
      [](double s) { return 1.0 - 1.25 * M_PI * std::cos(M_PI * s) - 0.5 * std::sin(M_PI * s); }, g);
  REQUIRE(testing::max_abs(q.values() - expected.values()) <= 1e-3);
}

TEST_CASE("value through Y equals the direct value", "[value][property]") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rep % 3);
    const GameSpec spec = testing::random_game(rng, n, 9 + static_cast<std::size_t>(rep), 60 + 2 * static_cast<std::size_t>(rep));
    const DensityProfile u = testing::random_profile(rng, spec.grid, n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = spec.markets[i];
      const auto x = solve_state_forward(c, u, spec.times);
      const GridFn direct = value_function_direct(c, x, u[i]);
      const GridFn streamed = value_function_via_Y(c, u, i);
      const auto y = solve_operator_backward(c.E, c.A, c.G);
      const GridFn stored = value_function_via_Y(c, y, u, i);
      const double scale = 1.0 + norm(direct);
      REQUIRE(norm(direct - streamed) <= 1e-8 * scale);
      REQUIRE(norm(stored - streamed) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("game spec validation", "[spec]") {
  const Grid g = make_grid(0.0, 1.0, 5);
  const auto t = make_timegrid(0.0, 1.0, 4);
  GameSpec spec{t, g, {zero_market(g, t, 2, GridFn::zero(g))}};
  REQUIRE_THROWS_AS(spec.validate(), Error);
  spec.markets.push_back(spec.markets.front());
  REQUIRE_NOTHROW(spec.validate());
  spec.markets[1].E = TimeOpFamily::constant(make_timegrid(0.0, 1.0, 5), LinOp::zero(g));
  REQUIRE_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("trajectory CSV", "[io]") {
  const Grid g = make_grid(0.0, 1.0, 3);
  const auto t = make_timegrid(0.0, 1.0, 2);
  const auto x = solve_state_forward(zero_market(g, t, 1, GridFn::constant(g, 2.0)), DensityProfile::uniform(g, 1), t);
  std::ostringstream out;
  write_trajectory_csv(out, x);
  const std::string s = out.str();
  REQUIRE(s.rfind("t,x,value\n", 0) == 0);
  REQUIRE(std::count(s.begin(), s.end(), '\n') == 10);
}
