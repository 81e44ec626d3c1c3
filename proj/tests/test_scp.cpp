#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ddto/scp.hpp"

using namespace ddto;

namespace {

// Obstacle-free single-target variant: small enough that the full prox-linear
// loop finishes in seconds.
Scenario tiny_scenario() {
  Scenario sc = quad_nonconvex_scenario();
  sc.quad.obstacles.clear();
  sc.targets.resize(1);
  sc.priorities = {0};
  sc.horizons.clear();
  sc.l_max = 1100.0;
  sc.scp_horizon = 7;
  return sc;
}

}  // namespace

TEST_CASE("time map interpolates and inverts") {
  scp::TimeMap map;
  map.tau = {0.0, 0.5, 1.0};
  map.t = {0.0, 2.0, 3.0};
  CHECK(map.t_of_tau(0.25) == doctest::Approx(1.0));
  CHECK(map.t_of_tau(0.75) == doctest::Approx(2.5));
  CHECK(map.tau_of_t(1.0) == doctest::Approx(0.25));
  CHECK(map.tau_of_t(2.5) == doctest::Approx(0.75));
  CHECK(map.t_of_tau(-1.0) == 0.0);
  CHECK(map.t_of_tau(2.0) == 3.0);
  CHECK(map.final_time() == 3.0);
}

TEST_CASE("time reconstruction requires positive dilation and monotone stamps") {
  auto node = [](double t) {
    Vec x = Vec::Zero(9);
    x(8) = t;
    return x;
  };
  auto input = [](double s) {
    Vec u = Vec::Zero(4);
    u(3) = s;
    return u;
  };
  std::vector<Vec> xs = {node(0.0), node(1.0), node(2.5)};
  std::vector<Vec> us = {input(2.0), input(3.0)};
  auto map = scp::reconstruct_time(xs, us);
  CHECK(map.t == std::vector<double>{0.0, 1.0, 2.5});
  CHECK(map.tau[1] == doctest::Approx(0.5));

  us[0] = input(-1.0);
  CHECK_THROWS(scp::reconstruct_time(xs, us));
  us[0] = input(2.0);
  xs[2] = node(0.5);
  CHECK_THROWS(scp::reconstruct_time(xs, us));
}

TEST_CASE("shooting linearization matches finite differences") {
  auto sc = tiny_scenario();
  auto sys = model::quadrotor_continuous(sc.quad);
  Vec xa(9), ua(4);
  xa << 0.0, 1.0, 10.0, 1.0, 0.0, -0.5, 10.0, 0.0, 0.0;
  ua << 4.0, 4.0, 10.0, 2.0;
  auto lin = scp::linearize_step(sys, xa, ua, 0.25, 10);
  double h = 1e-6;
  for (int i : {0, 4, 8}) {
    Vec lo = xa, hi = xa;
    lo(i) -= h;
    hi(i) += h;
    Vec col = (scp::linearize_step(sys, hi, ua, 0.25, 10).value -
               scp::linearize_step(sys, lo, ua, 0.25, 10).value) /
              (2.0 * h);
    CHECK((lin.jac_x.col(i) - col).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("parallel and serial linearization agree exactly") {
  auto sc = tiny_scenario();
  auto sys = model::quadrotor_continuous(sc.quad);
  scp::ScpIterate it;
  it.x.resize(2);
  it.u.resize(2);
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 4; ++k) {
      Vec x = Vec::Zero(9);
      x(2) = 10.0 + k + b;
      x(8) = 0.5 * k;
      it.x[b].push_back(x);
    }
    for (int k = 0; k < 3; ++k) {
      Vec u(4);
      u << 1.0, 0.0, 9.8, 1.5;
      it.u[b].push_back(u);
    }
  }
  auto par = scp::linearize_iterate(sys, it, 1.0 / 3.0, 8, true);
  auto ser = scp::linearize_iterate(sys, it, 1.0 / 3.0, 8, false);
  for (int b = 0; b < 2; ++b)
    for (int k = 0; k < 3; ++k) {
      CHECK((par[b][k].value - ser[b][k].value).norm() == 0.0);
      CHECK((par[b][k].jac_x - ser[b][k].jac_x).norm() == 0.0);
      CHECK((par[b][k].jac_u - ser[b][k].jac_u).norm() == 0.0);
    }
}

TEST_CASE("subproblem guards the constraint-qualification bound") {
  auto sc = tiny_scenario();
  sc.scp.epsilon = 0.0;
  scp::ScpIterate it;
  Vec z0 = Vec::Zero(7);
  CHECK_THROWS_AS(scp::build_scp_subproblem(sc, {0}, it, {}, z0, 0.1), std::invalid_argument);
}

TEST_CASE("prox-linear loop lands on the target") {
  auto sc = tiny_scenario();
  auto sol = scp::scp_solve(sc, {0}, sc.z0, 4, sc.scp);
  REQUIRE(sol.converged);
  CHECK(sol.max_defect <= sc.scp.defect_tol);
  CHECK(sol.trunk_time > 0.0);
  const auto& it = sol.iterate;
  int M = it.grid_points();
  CHECK((it.x[1][M - 1].head(6) - sc.targets[0].head(6)).lpNorm<Eigen::Infinity>() < 1e-3);
  CHECK(it.x[1][M - 1](6) <= sc.l_max * (1 + 1e-6));
  // Trace is append-only and one record per iteration.
  CHECK(static_cast<int>(sol.trace.size()) == sol.iterations);
}

TEST_CASE("continuous validation of a hover trajectory") {
  auto sc = tiny_scenario();
  double g = 9.806;
  DdtoTree tree;
  TrunkSegment trunk;
  double dt = 0.25;
  for (int k = 0; k <= 4; ++k) {
    Vec x = Vec::Zero(7);
    x(2) = 10.0;
    x(6) = g * g * dt * k;
    trunk.states.push_back(x);
    trunk.times.push_back(dt * k);
    if (k < 4) {
      Vec u(4);
      u << 0.0, 0.0, g, 1.0;
      trunk.inputs.push_back(u);
    }
  }
  tree.trunks.push_back(trunk);
  BranchSegment br = {};
  br.target = 0;
  br.states = trunk.states;
  br.inputs = trunk.inputs;
  br.times = trunk.times;
  tree.branches.push_back(br);
  auto rep = scp::validate_continuous(tree, sc, 10);
  CHECK(rep.max_defect < 1e-9);
  CHECK(rep.max_speed == 0.0);
  CHECK(rep.max_thrust == doctest::Approx(g));
  CHECK(rep.min_thrust == doctest::Approx(g));
  CHECK(rep.min_dilation == 1.0);
  CHECK(rep.max_dilation == 1.0);
  CHECK(rep.max_cost == doctest::Approx(g * g));
}

TEST_CASE("round driver rejects malformed problems") {
  auto sc = tiny_scenario();
  sc.scp_horizon = 8;  // must be odd
  CHECK_THROWS(scp::run_ddto_scp(sc, sc.scp));
  sc = tiny_scenario();
  sc.priorities = {0, 1};
  CHECK_THROWS(scp::run_ddto_scp(sc, sc.scp));
}
