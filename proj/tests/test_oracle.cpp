#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ddto/oracle.hpp"

using namespace ddto;
using oracle::GridInput;
using oracle::GridState;
using oracle::GridSystem;
using oracle::StateSet;

namespace {

// 1-D integrator on {-2..2} with inputs {-1, 0, 1}; small enough that every
// reach set below is checkable by hand.
GridSystem line_system() {
  GridSystem sys;
  for (int p = -2; p <= 2; ++p) sys.states.push_back({p});
  for (int u = -1; u <= 1; ++u) sys.inputs.push_back({u});
  sys.step = [](const GridState& x, const GridInput& u) -> GridState { return {x[0] + u[0]}; };
  sys.targets.push_back(StateSet{{2}});
  sys.targets.push_back(StateSet{{-2}});
  sys.z0 = {0};
  sys.N = 4;
  return sys;
}

}  // namespace

TEST_CASE("restricted-input counterexample memberships") {
  auto sys = oracle::remark1_instance();
  auto f1 = oracle::forward_reach(sys, 1, sys.z0);
  auto f2 = oracle::forward_reach(sys, 2, sys.z0);
  CHECK(f1.count({3, 9}) == 1);
  CHECK(f2.count({4, 8}) == 1);
  // One step later the first point can no longer reach the second: moving a
  // single state unit costs one cost unit squared, and the budget row blocks it.
  auto f1_from = oracle::forward_reach(sys, 1, {3, 9});
  CHECK(f1_from.count({4, 8}) == 0);
}

TEST_CASE("forward reach on the line") {
  auto sys = line_system();
  CHECK(oracle::forward_reach(sys, 0, {0}) == StateSet{{0}});
  CHECK(oracle::forward_reach(sys, 1, {0}) == StateSet{{-1}, {0}, {1}});
  CHECK(oracle::forward_reach(sys, 2, {0}) == StateSet{{-2}, {-1}, {0}, {1}, {2}});
  // Saturation: the admissible set caps growth.
  CHECK(oracle::forward_reach(sys, 3, {0}) == StateSet{{-2}, {-1}, {0}, {1}, {2}});
}

TEST_CASE("backward reach on the line") {
  auto sys = line_system();
  CHECK(oracle::backward_reach(sys, 0, StateSet{{2}}) == StateSet{{2}});
  CHECK(oracle::backward_reach(sys, 1, StateSet{{2}}) == StateSet{{1}, {2}});
  CHECK(oracle::backward_reach(sys, 2, StateSet{{2}}) == StateSet{{0}, {1}, {2}});
}

TEST_CASE("k-reach intersects forward and backward sets") {
  auto sys = line_system();
  // Target 0 is {2} with N = 4: at k the state must be reachable in k-1 steps
  // and still within N-k steps of 2.
  CHECK(oracle::k_reach(sys, 0, 1) == StateSet{{0}});
  CHECK(oracle::k_reach(sys, 0, 2) == StateSet{{0}, {1}});
  CHECK(oracle::k_reach(sys, 0, 4) == StateSet{{2}});
  CHECK_THROWS(oracle::k_reach(sys, 0, 5));
  // Both targets jointly: the walls pull in opposite directions.
  CHECK(oracle::k_reach_J(sys, {0, 1}, 1) == StateSet{{0}});
  CHECK(oracle::k_reach_J(sys, {0, 1}, 2) == StateSet{{0}});
  CHECK(oracle::k_reach_J(sys, {0, 1}, 3).empty());
}

TEST_CASE("branch time is the last nonempty joint reach") {
  auto sys = line_system();
  CHECK(oracle::branch_time_oracle(sys, {0}) == sys.N);
  CHECK(oracle::branch_time_oracle(sys, {0, 1}) == 2);
}

TEST_CASE("branch time equals enumerated coincidence optimum") {
  for (unsigned seed : {1u, 2u, 3u, 10u, 42u}) {
    auto sys = oracle::random_integrator_instance(seed);
    std::vector<int> all(sys.num_targets());
    for (int j = 0; j < sys.num_targets(); ++j) all[j] = j;
    int via_sets = 0;
    bool feasible = true;
    try {
      via_sets = oracle::branch_time_oracle(sys, all);
    } catch (const std::exception&) {
      feasible = false;
    }
    if (feasible) CHECK(via_sets == oracle::coincidence_optimum_enumerated(sys, all));
  }
}

TEST_CASE("lambda sets shrink over time") {
  auto sys = line_system();
  for (int k = 1; k < sys.N; ++k) {
    auto now = oracle::lambda_sets(sys, k);
    auto later = oracle::lambda_sets(sys, k + 1);
    for (const auto& J : later)
      CHECK(std::find(now.begin(), now.end(), J) != now.end());
  }
}

TEST_CASE("exhaustive solution satisfies the counting identity") {
  for (unsigned seed : {5u, 6u, 7u}) {
    auto sys = oracle::random_integrator_instance(seed);
    oracle::ExhaustiveSolution sol;
    try {
      sol = oracle::exhaustive_ddto(sys);
    } catch (const std::exception&) {
      continue;  // instance infeasible for some target
    }
    int sum = 0;
    for (const auto& J : sol.target_sets) sum += static_cast<int>(J.size());
    CHECK(sol.objective + sum == sys.num_targets() * sys.N);
    // Nested target sets.
    for (size_t k = 1; k < sol.target_sets.size(); ++k)
      for (int j : sol.target_sets[k])
        CHECK(std::find(sol.target_sets[k - 1].begin(), sol.target_sets[k - 1].end(), j) !=
              sol.target_sets[k - 1].end());
  }
}

TEST_CASE("theorem checks pass on sampled instances") {
  for (unsigned seed : {1u, 9u, 23u}) {
    auto rep = oracle::check_theorems(oracle::random_integrator_instance(seed));
    CHECK(rep.all_pass());
    CHECK(rep.counterexample.empty());
  }
}

TEST_CASE("serialization round trip preserves behavior") {
  auto sys = line_system();
  auto back = oracle::from_json(oracle::to_json(sys));
  CHECK(back.N == sys.N);
  CHECK(back.z0 == sys.z0);
  CHECK(back.states == sys.states);
  CHECK(back.inputs == sys.inputs);
  REQUIRE(back.num_targets() == sys.num_targets());
  for (int j = 0; j < sys.num_targets(); ++j) CHECK(back.targets[j] == sys.targets[j]);
  for (const auto& x : sys.states)
    for (const auto& u : sys.inputs) CHECK(back.step(x, u) == sys.step(x, u));
}

TEST_CASE("admissibility filters the explicit state list") {
  auto sys = line_system();
  CHECK(sys.admissible({2}));
  CHECK_FALSE(sys.admissible({3}));
}
