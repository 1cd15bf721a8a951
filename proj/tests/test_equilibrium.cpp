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

#include "dvi/equilibrium.hpp"
#include "dvi/models.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dvi;
using Catch::Approx;

namespace {

CournotParams example41() {
  CournotParams p;
  p.sigma4 = -0.5;
  p.sigma5 = -0.5;
  return p;
}

}  // namespace

TEST_CASE("graphon example reaches the closed-form equilibrium", "[nne]") {
  const Grid g = make_grid(0.0, 1.0, 401);
  const auto t = make_timegrid(0.0, 1.0, 200);
  // The projection multiplier scales with the step; -beta/3 belongs to eps0 = 1/3.
  AssembleOptions opt;
  opt.eps0 = 1.0 / 3.0;
  const auto vi = assemble_nne(example31_spec(g, t, 1.0), opt);
  const auto r = solve_nne(vi, {.tol = 1e-9});
  REQUIRE(norm(r.u_hat[0] - example31_density(g)) <= 5e-3);
  REQUIRE(std::abs(r.lambda[0] + 1.0 / 3.0) <= 1e-3);
  REQUIRE(std::abs(r.owap[0] - 1.0) <= 1e-3);
  REQUIRE(verify_nne(r.u_hat, r.V_hat) <= 1e-3);
  REQUIRE(testing::max_abs(r.V_hat[0].values() - example31_value(g).values()) <= 5e-3);
  REQUIRE(r.vi_residual >= -1e-9);
  REQUIRE(r.u_hat.membership_violation() <= 1e-10);
  REQUIRE(r.fixed_point_residual <= 10 * 1e-9);
}

TEST_CASE("graphon example with the quoted payoff constant has another equilibrium", "[nne]") {
  const Grid g = make_grid(0.0, 1.0, 201);
  const auto t = make_timegrid(0.0, 1.0, 20);
  const auto r = solve_nne(assemble_nne(example31_spec(g, t, 1.0, true)));
  REQUIRE(norm(r.u_hat[0] - example31_density(g)) > 0.05);
  REQUIRE(verify_nne(r.u_hat, r.V_hat) <= 1e-6);
}

TEST_CASE("identity operator gives the uniform density", "[nne][mne]") {
  const Grid g = make_grid(0.0, 1.0, 51);
  const auto nne = solve_nne(testing::direct_vi(g, 1, Eigen::MatrixXd::Identity(51, 51), Eigen::VectorXd::Zero(51), Mode::nne));
  REQUIRE(testing::max_abs(nne.u_hat[0].values().array() - 1.0) <= 1e-9);
  const auto mne = solve_mne(testing::direct_vi(g, 1, -Eigen::MatrixXd::Identity(51, 51), Eigen::VectorXd::Zero(51), Mode::mne));
  REQUIRE(testing::max_abs(mne.u_hat[0].values().array() - 1.0) <= 1e-9);
}

TEST_CASE("Cournot NNE passes the equilibrium check", "[nne][cournot]") {
  const auto spec = build_cournot_spec(CournotParams{}, 201, 100);
  const auto vi = assemble_nne(spec);
  const auto r = solve_nne(vi);
  REQUIRE(verify_nne(r.u_hat, r.V_hat) <= 1e-6);
  // Full dynamics pipeline reproduces P u + Q.
  const auto v = value_functions_direct(spec, r.u_hat);
  REQUIRE(norm(v[0] - r.V_hat[0]) <= 1e-6);
}

TEST_CASE("gap ratio respects the contraction factor", "[nne][property]") {
  std::mt19937_64 rng(41);
  std::vector<AssembledVI> cases;
  {
    const Grid g = make_grid(0.0, 1.0, 201);
    cases.push_back(assemble_nne(example31_spec(g, make_timegrid(0.0, 1.0, 20))));
  }
  for (int rep = 0; rep < 10; ++rep) cases.push_back(testing::random_pd_vi(rng, make_grid(0.0, 1.0 + rep, 15), 1 + rep % 2));
  for (const auto& vi : cases) {
    const auto r = solve_nne(vi, {.tol = 1e-10});
    const double bound = vi.contraction_factor() + 0.05;
    for (std::size_t m = 3; m < r.gap_trace.size(); ++m) {
      if (r.gap_trace[m - 1] < 1e-13) break;
      REQUIRE(r.gap_trace[m] / r.gap_trace[m - 1] <= bound);
    }
  }
}

TEST_CASE("admissible step sizes reach the same equilibrium", "[nne][property]") {
  const Grid g = make_grid(0.0, 1.0, 201);
  const auto spec = example31_spec(g, make_timegrid(0.0, 1.0, 20));
  const auto base = assemble_nne(spec);
  const double tol = 1e-9;
  const auto ref = solve_nne(base, {.tol = tol});
  const Eigen::VectorXd w = base.weights;
  for (double frac : {0.25, 0.4, 0.5, 0.6, 0.75}) {
    AssembledVI vi = base;
    vi.set_eps0(frac * vi.eps0_max());
    const auto r = solve_nne(vi, {.tol = tol});
    REQUIRE(weighted_norm(w, r.u_hat.stacked() - ref.u_hat.stacked()) <= 10 * tol);
  }
}

TEST_CASE("multiplier trace converges with the iterates", "[nne][property]") {
  std::mt19937_64 rng(42);
  const auto vi = testing::random_pd_vi(rng, make_grid(0.0, 1.0, 31), 2);
  const auto r = solve_nne(vi, {.tol = 1e-11});
  double c = 0.0;
  for (std::size_t m = 5; m + 1 < r.gap_trace.size(); ++m) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double d = std::abs(r.lambda_trace[m][i] - r.lambda[i]);
      if (r.gap_trace[m] > 1e-12) c = std::max(c, d / r.gap_trace[m]);
    }
  }
  REQUIRE(c < 100.0);
  REQUIRE(std::abs(r.lambda_trace.back()[0] - r.lambda[0]) == 0.0);
}

TEST_CASE("Cournot MNE maximizes the weighted payoff", "[mne][cournot]") {
  std::mt19937_64 rng(43);
  const auto spec = build_cournot_spec(example41(), 101, 50);
  const auto vi = assemble_mne(spec);
  const auto r = solve_mne(vi);
  REQUIRE(r.vi_residual <= 1e-6);
  const auto v = value_functions_direct(spec, r.u_hat);
  REQUIRE(norm(v[0] - r.V_hat[0]) <= 1e-6);
  for (int k = 0; k < 100; ++k) {
    const DensityProfile z({testing::random_density(rng, spec.grid)});
    const auto vz = value_functions_direct(spec, z);
    REQUIRE(inner_product(z[0], vz[0]) <= r.owap[0] + 1e-6);
  }
}

TEST_CASE("MNE without linear term maximizes the quadratic form", "[mne][property]") {
  std::mt19937_64 rng(44);
  const Grid g = make_grid(0.0, 1.0, 21);
  const Eigen::VectorXd w = g.weights();
  const Eigen::MatrixXd s = testing::random_matrix(rng, 21, 0.2);
  const Eigen::MatrixXd sym = s + s.transpose() - 3.0 * Eigen::MatrixXd::Identity(21, 21);
  const Eigen::MatrixXd p = w.cwiseSqrt().cwiseInverse().asDiagonal() * sym * w.cwiseSqrt().asDiagonal();
  const auto vi = testing::direct_vi(g, 1, p, Eigen::VectorXd::Zero(21), Mode::mne);
  const auto r = solve_mne(vi);
  const double k_hat = potential_value(r.u_hat, vi);
  for (int k = 0; k < 100; ++k) {
    const DensityProfile z({testing::random_density(rng, g)});
    REQUIRE(potential_value(z, vi) <= k_hat + 1e-9);
  }
}

TEST_CASE("equilibrium check examples", "[verify]") {
  const Grid g = make_grid(0.0, 1.0, 11);
  const DensityProfile u = DensityProfile::uniform(g, 2);
  REQUIRE(verify_nne(u, {GridFn::constant(g, 3.0), GridFn::constant(g, -1.0)}) <= 1e-14);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(11);
  v[4] = 0.0;  // dominated node carrying mass
  REQUIRE(verify_nne(DensityProfile({GridFn::constant(g, 1.0)}), {GridFn(g, v)}) > 0.05);
}

TEST_CASE("potential values", "[potential]") {
  const Grid g = make_grid(0.0, 1.0, 41);
  const auto id = testing::direct_vi(g, 1, Eigen::MatrixXd::Identity(41, 41), Eigen::VectorXd::Zero(41), Mode::nne);
  REQUIRE(potential_value(DensityProfile::uniform(g, 1), id) == Approx(0.5));

  std::mt19937_64 rng(45);
  Eigen::MatrixXd ns = Eigen::MatrixXd::Identity(41, 41);
  ns(0, 1) = 0.5;
  const auto bad = testing::direct_vi(g, 1, ns, Eigen::VectorXd::Zero(41), Mode::nne);
  try {
    potential_value(DensityProfile::uniform(g, 1), bad);
    FAIL("expected not-self-adjoint-error");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::not_self_adjoint);
  }
}

TEST_CASE("graphon equilibrium minimizes the potential", "[potential][property]") {
  std::mt19937_64 rng(46);
  const Grid g = make_grid(0.0, 1.0, 201);
  const auto vi = assemble_nne(example31_spec(g, make_timegrid(0.0, 1.0, 20)));
  std::vector<double> trace;
  SolveOptions opt;
  opt.observer = [&](int, const Eigen::VectorXd& u, const std::vector<double>&, double) {
    trace.push_back(potential_value(DensityProfile::unstack(g, 1, u), vi));
  };
  const auto r = solve_nne(vi, opt);
  const double k_hat = potential_value(r.u_hat, vi);
  for (int k = 0; k < 100; ++k) {
    REQUIRE(k_hat <= potential_value(DensityProfile({testing::random_density(rng, g)}), vi) + 1e-12);
  }
  for (std::size_t m = 1; m < trace.size(); ++m) REQUIRE(trace[m] <= trace[m - 1] + 1e-12);
}

TEST_CASE("iteration budget exhaustion carries the gap trace", "[errors]") {
  const Grid g = make_grid(0.0, 1.0, 101);
  const auto vi = assemble_nne(example31_spec(g, make_timegrid(0.0, 1.0, 10)));
  try {
    solve_nne(vi, {.tol = 1e-14, .max_iters = 5});
    FAIL("expected max-iters-error");
  } catch (const MaxItersError& e) {
    REQUIRE(e.gap_trace().size() == 5);
  }
  REQUIRE_THROWS_AS(solve_mne(vi), Error);
}

TEST_CASE("single segment reduces to the plain solver", "[piecewise]") {
  const auto spec = build_cournot_spec(CournotParams{}, 101, 40);
  const auto pw = solve_piecewise({spec}, Mode::nne);
  const auto single = solve_nne(assemble_nne(spec));
  REQUIRE(pw.segments.size() == 1);
  REQUIRE(pw.segments[0].u_hat.stacked() == single.u_hat.stacked());
  REQUIRE(pw.total_wap[0] == single.owap[0]);
  REQUIRE(pw.breakpoints == std::vector<double>{0.0, 1.0});
}

TEST_CASE("identical time-homogeneous segments repeat", "[piecewise]") {
  const Grid g = make_grid(0.0, 1.0, 101);
  const auto a = example31_spec(g, make_timegrid(0.0, 1.0, 20));
  const auto b = example31_spec(g, make_timegrid(1.0, 2.0, 20));
  const auto pw = solve_piecewise({a, b}, Mode::nne);
  REQUIRE(testing::max_abs(pw.segments[0].u_hat.stacked() - pw.segments[1].u_hat.stacked()) <= 1e-9);
  REQUIRE(pw.total_wap[0] == Approx(2.0 * pw.segments[0].owap[0]).epsilon(1e-9));
}

TEST_CASE("split Cournot horizon gives per-segment equilibria", "[piecewise]") {
  CournotParams first, second;
  first.T = 0.5;
  second.s = 0.5;
  second.T = 1.0;
  const auto pw = solve_piecewise({build_cournot_spec(first, 101, 20), build_cournot_spec(second, 101, 20)}, Mode::nne);
  for (const auto& seg : pw.segments) {
    REQUIRE(verify_nne(seg.u_hat, seg.V_hat) <= 1e-6);
    REQUIRE(seg.u_hat.membership_violation() <= 1e-10);
  }
  REQUIRE_THROWS_AS(solve_piecewise({build_cournot_spec(first, 101, 20), build_cournot_spec(first, 101, 20)}, Mode::nne),
                    Error);
}

TEST_CASE("segment errors name the segment", "[piecewise]") {
  CournotParams first, second;
  first.T = 0.5;
  second.s = 0.5;
  second.sigma5 = 0.0;
  second.sigma4 = -1.0;
  try {
    solve_piecewise({build_cournot_spec(first, 41, 10), build_cournot_spec(second, 41, 10)}, Mode::nne);
    FAIL("expected definiteness-error");
  } catch (const DefinitenessError& e) {
    REQUIRE(std::string(e.what()).find("segment 2") != std::string::npos);
  }
}
