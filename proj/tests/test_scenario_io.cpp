#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "ddto/scenario.hpp"
#include "ddto/tree_io.hpp"

using namespace ddto;

namespace {

std::string tmp_file(const char* name) { return std::string("/tmp/ddto_test_") + name; }

DdtoTree small_tree() {
  DdtoTree tree;
  auto vec = [](std::initializer_list<double> v) {
    Vec x(static_cast<int>(v.size()));
    int i = 0;
    for (double d : v) x(i++) = d;
    return x;
  };
  TrunkSegment trunk;
  trunk.start_index = 1;
  trunk.end_index = 3;
  trunk.states = {vec({0, 0}), vec({1, 0.5}), vec({2, 1})};
  trunk.inputs = {vec({1}), vec({1})};
  trunk.times = {0.0, 0.5, 1.0};
  tree.trunks.push_back(trunk);
  for (int j = 0; j < 2; ++j) {
    BranchSegment br;
    br.target = j;
    br.branch_time = 3;
    br.branch_time_continuous = 1.0;
    br.branch_point = trunk.states.back();
    br.states = {trunk.states.back(), vec({3.0 + j, 1})};
    br.inputs = {vec({0.25 * (j + 1)})};
    br.times = {1.0, 1.5};
    tree.branch_times[j] = 3;
    tree.branch_times_continuous[j] = 1.0;
    tree.branches.push_back(br);
  }
  return tree;
}

}  // namespace

TEST_CASE("scenario JSON round trip") {
  for (auto make : {quad_convex_scenario, quad_nonconvex_scenario}) {
    Scenario sc = make();
    auto path = tmp_file("scenario.json");
    save_scenario(sc, path);
    Scenario back = load_scenario(path);
    CHECK(back.name == sc.name);
    CHECK((back.z0 - sc.z0).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(back.num_targets() == sc.num_targets());
    for (int j = 0; j < sc.num_targets(); ++j)
      CHECK((back.targets[j] - sc.targets[j]).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(back.priorities == sc.priorities);
    CHECK(back.horizons == sc.horizons);
    CHECK(back.l_max == sc.l_max);
    CHECK(back.scp_horizon == sc.scp_horizon);
    CHECK(back.scp.epsilon == sc.scp.epsilon);
    CHECK(back.scp.tr_init == sc.scp.tr_init);
    CHECK(back.quad.obstacles.size() == sc.quad.obstacles.size());
    if (sc.system.n_x > 0) {
      CHECK((back.system.A - sc.system.A).norm() < 1e-12);
      CHECK((back.system.B - sc.system.B).norm() < 1e-12);
      CHECK((back.system.c - sc.system.c).norm() < 1e-12);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("unknown keys are rejected") {
  auto path = tmp_file("bad_scenario.json");
  {
    std::ofstream out(path);
    out << R"({"name": "x", "z0": [0,0,0,0,0,0], "targets": [[1,0,0,0,0,0]],)"
        << R"( "horizons": [3], "mystery": 1})";
  }
  CHECK_THROWS_WITH_AS(load_scenario(path), doctest::Contains("mystery"), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("validation rejects inconsistent scenarios") {
  Scenario sc = quad_convex_scenario();
  sc.priorities = {0, 0, 2, 3};  // duplicate rank
  CHECK_THROWS(sc.validate());
  sc = quad_convex_scenario();
  sc.horizons.pop_back();
  CHECK_THROWS(sc.validate());
  sc = quad_nonconvex_scenario();
  sc.scp.epsilon = 0.0;
  CHECK_THROWS(sc.validate());
}

TEST_CASE("tree serialization is canonical and round trips") {
  auto tree = small_tree();
  std::string a = io::tree_to_json(tree);
  std::string b = io::tree_to_json(tree);
  CHECK(a == b);
  DdtoTree back = io::tree_from_json(a);
  CHECK(io::tree_to_json(back) == a);
  REQUIRE(back.branches.size() == 2);
  CHECK(back.branch_times.at(1) == 3);
  CHECK(back.trunks[0].states.size() == 3);
  CHECK((back.branches[1].states.back() - tree.branches[1].states.back()).norm() == 0.0);

  auto path = tmp_file("tree.json");
  io::write_tree(tree, path);
  CHECK(io::tree_to_json(io::read_tree(path)) == a);
  std::remove(path.c_str());
}

TEST_CASE("full path concatenates trunk and branch without duplicate knots") {
  auto tree = small_tree();
  auto p = full_path(tree, 1);
  REQUIRE(p.states.size() == 4);   // 3 trunk knots + 1 branch terminal
  REQUIRE(p.inputs.size() == 3);
  CHECK(p.states[2](0) == 2.0);    // shared knot appears once
  CHECK(p.states[3](0) == 4.0);
  CHECK(p.inputs[2](0) == 0.5);
  CHECK(p.times.back() == 1.5);
}
