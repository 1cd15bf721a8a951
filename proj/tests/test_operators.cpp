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

#include "dvi/operators.hpp"
#include "test_util.hpp"

using namespace dvi;
using Catch::Approx;

namespace {

// Example 3.1 operator P = I + W2 on [0,1].
LinOp identity_plus_w2(const Grid& g) { return LinOp::identity(g) + cosine_graphon(g); }

}  // namespace

TEST_CASE("identity application", "[apply]") {
  std::mt19937_64 rng(1);
  const Grid g = make_grid(0.0, 1.0, 17);
  const GridFn f = testing::random_fn(rng, g);
  REQUIRE((LinOp::identity(g).apply(f).values() - f.values()).norm() == 0.0);
}

TEST_CASE("graphon reproduces the half sine", "[apply]") {
  const Grid g = make_grid(0.0, 1.0, 401);
  const GridFn f = sample([](double x) { return 0.5 * std::sin(M_PI * x); }, g);
  const GridFn wf = cosine_graphon(g).apply(f);
  REQUIRE(testing::max_abs(wf.values() - f.values()) <= 1e-4);
}

TEST_CASE("aggregate production of the constant one", "[apply]") {
  const Grid g = make_grid(1.0, 2.0, 101);
  const GridFn out = aggregate_production(g).apply(GridFn::constant(g, 1.0));
  REQUIRE(testing::max_abs(out.values().array() - 1.5) <= 1e-10);
}

TEST_CASE("application is linear", "[apply][property]") {
  std::mt19937_64 rng(2);
  const Grid g = make_grid(-0.5, 1.5, 23);
  for (int rep = 0; rep < 20; ++rep) {
    const LinOp op = testing::random_op(rng, g);
    const GridFn f = testing::random_fn(rng, g);
    const GridFn h = testing::random_fn(rng, g);
    const double al = 0.7, be = -1.3;
    const Eigen::VectorXd lhs = op.apply(al * f + be * h).values();
    const Eigen::VectorXd rhs = al * op.apply(f).values() + be * op.apply(h).values();
    REQUIRE(testing::max_abs(lhs - rhs) <= 1e-10);
  }
}

TEST_CASE("dense matrix and structured products agree with apply", "[apply]") {
  std::mt19937_64 rng(3);
  const Grid g = make_grid(0.0, 1.0, 13);
  const LinOp a = testing::random_op(rng, g);
  const LinOp b = testing::random_op(rng, g);
  const LinOp c = compose(a, b) - 2.0 * b;
  const Eigen::MatrixXd m = testing::random_matrix(rng, 13);
  REQUIRE(testing::max_abs(c.left_multiply(m) - c.matrix() * m) <= 1e-11);
  REQUIRE(testing::max_abs(c.right_multiply(m) - m * c.matrix()) <= 1e-11);
  const Eigen::VectorXd v = testing::random_vector(rng, 13);
  REQUIRE(testing::max_abs(c.apply(v) - c.matrix() * v) <= 1e-11);
}

TEST_CASE("mismatched grids are rejected", "[apply]") {
  const LinOp op = LinOp::identity(make_grid(0.0, 1.0, 5));
  const GridFn f = GridFn::constant(make_grid(0.0, 1.0, 7), 1.0);
  REQUIRE_THROWS_AS(op.apply(f), Error);
  REQUIRE_THROWS_AS(LinOp::identity(make_grid(0.0, 1.0, 5)) + LinOp::identity(make_grid(0.0, 2.0, 5)), Error);
}

TEST_CASE("adjoint identities", "[adjoint]") {
  std::mt19937_64 rng(4);
  const Grid g = make_grid(0.0, 1.0, 31);
  const LinOp x = multiplication_by_x(g);
  REQUIRE(x.adjoint().kind() == LinOp::Kind::multiplication);
  REQUIRE((x.adjoint().matrix() - x.matrix()).norm() == 0.0);

  const LinOp w2 = cosine_graphon(g);
  REQUIRE(testing::max_abs(w2.adjoint().matrix() - w2.matrix()) <= 1e-14);

  const LinOp r = aggregate_production(g);
  const LinOp ra = r.adjoint();
  REQUIRE(ra.kind() == LinOp::Kind::rank_one);
  REQUIRE(ra.phi().values() == r.psi().values());
  REQUIRE(ra.psi().values() == r.phi().values());
}

TEST_CASE("adjoint satisfies the weighted duality", "[adjoint][property]") {
  std::mt19937_64 rng(5);
  const Grid g = make_grid(0.0, 2.0, 19);
  for (int rep = 0; rep < 30; ++rep) {
    const LinOp a = testing::random_op(rng, g);
    const LinOp b = testing::random_op(rng, g);
    const LinOp op = compose(a, b) + b;
    const GridFn u = testing::random_fn(rng, g);
    const GridFn v = testing::random_fn(rng, g);
    const double lhs = inner_product(op.apply(u), v);
    const double rhs = inner_product(u, op.adjoint().apply(v));
    REQUIRE(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
    // Involution.
    const Eigen::VectorXd twice = op.adjoint().adjoint().apply(u.values());
    REQUIRE(testing::max_abs(twice - op.apply(u.values())) <= 1e-12 * (1.0 + testing::max_abs(twice)));
    // Matrix form of the adjoint.
    REQUIRE(testing::max_abs(op.adjoint().matrix() - weighted_adjoint(op.matrix(), g.weights())) <= 1e-10);
  }
}

TEST_CASE("graphon is idempotent", "[property]") {
  // Trapezoid sums of cos(pi x) products over a full period are exact, so the
  // discrete W2 is a projection up to rounding.
  std::mt19937_64 rng(6);
  for (std::size_t n : {11u, 51u, 101u}) {
    const Grid g = make_grid(0.0, 1.0, n);
    const LinOp w2 = cosine_graphon(g);
    for (int rep = 0; rep < 5; ++rep) {
      const GridFn f = testing::random_fn(rng, g);
      REQUIRE(testing::max_abs(w2.apply(w2.apply(f)).values() - w2.apply(f).values()) <= 1e-12);
    }
  }
}

TEST_CASE("operator norm examples", "[norm]") {
  const Grid g01 = make_grid(0.0, 1.0, 401);
  REQUIRE(op_norm(LinOp::scaled_identity(g01, -2.5)) == 2.5);
  REQUIRE(std::abs(op_norm(identity_plus_w2(g01)) - 2.0) <= 1e-4);
  const Grid g12 = make_grid(1.0, 2.0, 401);
  REQUIRE(std::abs(op_norm(multiplication_by_x(g12)) - 2.0) <= 1e-6);
}

TEST_CASE("power iteration matches the dense norm where the gap is wide", "[norm]") {
  const Grid g = make_grid(0.0, 1.0, 101);
  NormOptions power;
  power.method = NormOptions::Method::power;
  const LinOp p = identity_plus_w2(g);
  REQUIRE(std::abs(op_norm(p, power) - op_norm(p)) <= 1e-6);
  const LinOp r = aggregate_production(make_grid(1.0, 2.0, 41));
  REQUIRE(std::abs(op_norm(r, power) - op_norm(r)) <= 1e-6 * op_norm(r));
}

TEST_CASE("power iteration reports non-convergence", "[norm]") {
  const Grid g = make_grid(1.0, 2.0, 401);
  NormOptions power;
  power.method = NormOptions::Method::power;
  power.iters = 3;
  power.rel_tol = 1e-15;
  try {
    op_norm(multiplication_by_x(g), power);
    FAIL("expected convergence-error");
  } catch (const ConvergenceError& e) {
    REQUIRE(e.kind() == ErrorKind::convergence);
    REQUIRE(e.last_iterate().size() == 401);
  }
}

TEST_CASE("norm bounds every application", "[norm][property]") {
  std::mt19937_64 rng(7);
  const Grid g = make_grid(0.0, 1.0, 21);
  for (int rep = 0; rep < 20; ++rep) {
    const LinOp op = testing::random_op(rng, g);
    const double nrm = op_norm(op);
    for (int k = 0; k < 10; ++k) {
      const GridFn f = testing::random_fn(rng, g);
      REQUIRE(norm(op.apply(f)) <= nrm * norm(f) * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("definiteness examples", "[definiteness]") {
  const Grid g = make_grid(0.0, 1.0, 401);
  const auto id = definiteness_bounds(LinOp::scaled_identity(g, 0.75));
  REQUIRE(std::abs(id.eps_low - 0.75) <= 1e-9);
  REQUIRE(std::abs(id.eps_high - 0.75) <= 1e-9);
  const auto p = definiteness_bounds(identity_plus_w2(g));
  REQUIRE(std::abs(p.eps_low - 1.0) <= 1e-4);
  REQUIRE(std::abs(p.eps_high - 2.0) <= 1e-4);
  const auto x = definiteness_bounds(multiplication_by_x(make_grid(1.0, 2.0, 51)).scaled(3.0));
  REQUIRE(x.eps_low == Approx(3.0));
  REQUIRE(x.eps_high == Approx(6.0));
}

TEST_CASE("definiteness bounds bracket Rayleigh quotients", "[definiteness][property]") {
  std::mt19937_64 rng(8);
  const Grid g = make_grid(0.0, 3.0, 25);
  for (int rep = 0; rep < 20; ++rep) {
    const LinOp a = testing::random_op(rng, g);
    const LinOp sym = a + a.adjoint();
    const auto b = definiteness_bounds(sym);
    for (int k = 0; k < 20; ++k) {
      const GridFn z = testing::random_fn(rng, g);
      const double q = inner_product(sym.apply(z), z) / inner_product(z, z);
      REQUIRE(q >= b.eps_low - 1e-9);
      REQUIRE(q <= b.eps_high + 1e-9);
    }
  }
}

TEST_CASE("block operator matches its dense matrix", "[block]") {
  std::mt19937_64 rng(9);
  const Grid g = make_grid(0.0, 1.0, 9);
  std::vector<LinOp> blocks;
  for (int k = 0; k < 4; ++k) blocks.push_back(testing::random_op(rng, g));
  const BlockOp p(2, blocks);
  const Eigen::VectorXd v = testing::random_vector(rng, 18);
  REQUIRE(testing::max_abs(p.apply(v) - p.matrix() * v) <= 1e-12);
  REQUIRE(testing::max_abs(p.adjoint().matrix() - weighted_adjoint(p.matrix(), p.weights())) <= 1e-11);
  const BlockOp q = BlockOp::from_action(g, 2, p.matrix());
  REQUIRE(testing::max_abs(q.matrix() - p.matrix()) <= 1e-12);
  const BlockOp d = BlockOp::diagonal({LinOp::identity(g), LinOp::scaled_identity(g, 3.0)});
  REQUIRE(op_norm(d) == Approx(3.0));
  REQUIRE(definiteness_bounds(d).eps_low == Approx(1.0));
  REQUIRE_THROWS_AS(BlockOp(2, std::vector<LinOp>(3, LinOp::identity(g))), Error);
}

TEST_CASE("time families interpolate linearly", "[time]") {
  const Grid g = make_grid(0.0, 1.0, 5);
  const std::vector<double> t{0.0, 0.5, 1.0};
  const TimeOpFamily fam = TimeOpFamily::from_function(t, [&](double s) { return LinOp::scaled_identity(g, s * s); });
  REQUIRE(fam.at(0.25).matrix()(2, 2) == Approx(0.125));
  REQUIRE(fam.at(1.0).matrix()(0, 0) == Approx(1.0));
  REQUIRE_THROWS_AS(fam.at(1.5), Error);
  REQUIRE_THROWS_AS(TimeOpFamily::constant({0.0, 0.0}, LinOp::identity(g)), Error);
  REQUIRE(TimeOpFamily::constant(t, LinOp::identity(g)).is_constant());
}
