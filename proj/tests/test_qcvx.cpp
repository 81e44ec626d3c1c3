#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ddto/qcvx.hpp"
#include "ddto/verify.hpp"

using namespace ddto;

TEST_CASE("coincidence horizon on hand-built sequences") {
  auto vec = [](double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
  };
  std::vector<std::vector<Vec>> trajs = {
      {vec(0, 0), vec(1, 1), vec(2, 2), vec(3, 3)},
      {vec(0, 0), vec(1, 1), vec(2, 2.5), vec(3, 3)},
  };
  CHECK(qcvx::coincidence_horizon(trajs, 1e-6) == 2);
  trajs[1][2] = vec(2, 2);
  CHECK(qcvx::coincidence_horizon(trajs, 1e-6) == 4);
  trajs[1][0] = vec(5, 5);
  CHECK(qcvx::coincidence_horizon(trajs, 1e-6) == 0);
}

TEST_CASE("bisection probes bracket the branch time") {
  auto sc = quad_convex_scenario();
  std::vector<int> J = {0, 1, 2, 3};
  auto res = qcvx::max_branch_time(sc, J, sc.horizons, sc.z0, sc.l_max);
  CHECK(res.k >= 1);
  CHECK(res.transcript.probed(res.k, true));
  // The step beyond must have been refuted unless the branch time saturates.
  int hmin = *std::min_element(sc.horizons.begin(), sc.horizons.end());
  if (res.k < hmin) CHECK(res.transcript.probed(res.k + 1, false));
}

TEST_CASE("all shipped targets are individually reachable") {
  auto rep = qcvx::check_assumption(quad_convex_scenario());
  CHECK(rep.all_feasible);
  for (bool ok : rep.target_feasible) CHECK(ok);
}

TEST_CASE("shipped convex scenario tree") {
  auto sc = quad_convex_scenario();
  auto tree = qcvx::run_ddto_qcvx(sc);
  REQUIRE(tree.branches.size() == 4);
  // Branch times found by the bisection on this scenario.
  CHECK(tree.branch_times.at(0) == 17);
  CHECK(tree.branch_times.at(1) == 17);
  CHECK(tree.branch_times.at(2) == 15);
  CHECK(tree.branch_times.at(3) == 15);
  // Lower priority never detaches later than higher priority.
  for (int j = 0; j + 1 < 4; ++j)
    CHECK(tree.branch_times.at(sc.priorities[j]) >= tree.branch_times.at(sc.priorities[j + 1]));
  // Exact affine dynamics along every full path, terminal states on target.
  for (const auto& br : tree.branches) {
    auto p = full_path(tree, br.target);
    double cost = 0.0;
    for (size_t k = 0; k + 1 < p.states.size(); ++k) {
      Vec pred = sc.system.step(p.states[k], p.inputs[k]);
      CHECK((pred - p.states[k + 1]).lpNorm<Eigen::Infinity>() <= 1e-8);
      cost += p.inputs[k].squaredNorm();
    }
    CHECK(cost <= sc.l_max * (1 + 1e-6));
    CHECK((p.states.back() - sc.targets[br.target]).lpNorm<Eigen::Infinity>() <= 1e-5);
  }
  CHECK(qcvx::cumulative_reachable_count(tree, sc) == 67);
}

TEST_CASE("bisection equals the exact oracle on embeddable instances") {
  auto rep = verify::run_qcvx_equivalence(4, 1000);
  CHECK(rep.pass());
  for (const auto& msg : rep.messages) MESSAGE(msg);
}
