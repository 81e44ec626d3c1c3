#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ddto/micp.hpp"
#include "ddto/oracle.hpp"
#include "ddto/verify.hpp"

using namespace ddto;

TEST_CASE("automatic big-M is positive and finite") {
  auto sc = quad_convex_scenario();
  double M = micp::auto_big_M(sc);
  CHECK(M > 0.0);
  CHECK(std::isfinite(M));
}

TEST_CASE("instance layout: one binary per non-anchor pair step") {
  auto sc = quad_convex_scenario();
  auto inst = micp::build_micp(sc, 0, 1e4);
  REQUIRE(inst.binaries.size() == 4);
  CHECK(inst.binaries[0].empty());  // anchor row
  for (int j = 1; j < 4; ++j)
    CHECK(static_cast<int>(inst.binaries[j].size()) == inst.shared_horizon[j]);
  CHECK(inst.anchor == 0);
  inst.base.validate();
}

TEST_CASE("branch and bound matches exhaustive enumeration") {
  auto rep = verify::run_micp_equivalence(4, 2000);
  CHECK(rep.pass());
  for (const auto& msg : rep.messages) MESSAGE(msg);
}

TEST_CASE("target-set extraction enforces the counting identity") {
  // Two targets, anchored at 0, diverging at step 2 of 3: zeta = (0,0,1)
  // means sum |J_k| = 3 + 2 and objective 1.
  std::vector<std::vector<Vec>> states(2);
  auto vec1 = [](double v) {
    Vec x(1);
    x << v;
    return x;
  };
  states[0] = {vec1(0), vec1(0), vec1(0)};
  states[1] = {vec1(0), vec1(0), vec1(5)};
  auto sets = micp::extract_target_sets(states, 0, {3, 3}, 1.0, 1e-6);
  CHECK(sets.cumulative == 5);
  REQUIRE(sets.target_sets.size() == 3);
  CHECK(sets.target_sets[0] == std::vector<int>{0, 1});
  CHECK(sets.target_sets[1] == std::vector<int>{0, 1});
  CHECK(sets.target_sets[2] == std::vector<int>{0});
  CHECK(sets.branch_times[1] == 2);
  // An objective inconsistent with the mismatch count is rejected.
  CHECK_THROWS(micp::extract_target_sets(states, 0, {3, 3}, 2.0, 1e-6));
}

TEST_CASE("monotonicity cuts do not change the optimum") {
  auto corpus = verify::bundled_corpus(2, 4000, /*embeddable_only=*/true, /*min_targets=*/2);
  for (const auto& grid : corpus) {
    auto sc = verify::scenario_from_grid(grid);
    double M = micp::auto_big_M(sc);
    auto with = micp::branch_and_bound(sc, micp::build_micp(sc, 0, M, 2, true), 60.0, 1e-6);
    auto without = micp::branch_and_bound(sc, micp::build_micp(sc, 0, M, 2, false), 60.0, 1e-6);
    CHECK(with.converged);
    CHECK(without.converged);
    CHECK(with.objective == doctest::Approx(without.objective));
  }
}
