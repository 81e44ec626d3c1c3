#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ddto/conic.hpp"

using namespace ddto;
using conic::Cone;

TEST_CASE("linear program with known optimum") {
  // min x + y  s.t.  x >= 1, y >= 2  ->  3 at (1, 2).
  conic::ConicProgram prog;
  int x = prog.add_vars("x", 2);
  prog.set_objective(x, 1.0);
  prog.set_objective(x + 1, 1.0);
  prog.lower_bound(x, 1.0);
  prog.lower_bound(x + 1, 2.0);
  auto res = conic::solve(prog, 1e-9, 50000);
  REQUIRE(res.status == conic::Status::Optimal);
  CHECK(res.objective == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.x(1) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("projection distance via a second-order cone") {
  // min t  s.t.  ||x - p|| <= t, x = q  ->  t = ||q - p||.
  conic::ConicProgram prog;
  int x = prog.add_vars("x", 3);
  int t = prog.add_vars("t", 1);
  prog.set_objective(t, 1.0);
  Vec3 p(1.0, 2.0, 2.0), q(4.0, -2.0, 2.0);
  int head = prog.add_row(0.0);
  prog.coef(head, t, -1.0);
  // ||x - p|| <= t as an SOC block: rows carry G = -F with g = -p.
  for (int i = 0; i < 3; ++i) {
    int row = prog.add_row(-p(i));
    prog.coef(row, x + i, -1.0);
  }
  prog.push_cone(Cone::SecondOrder, 4);
  for (int i = 0; i < 3; ++i) prog.equality(x + i, q(i));
  auto res = conic::solve(prog, 1e-9, 50000);
  REQUIRE(res.status == conic::Status::Optimal);
  CHECK(res.objective == doctest::Approx((q - p).norm()).epsilon(1e-6));
}

TEST_CASE("equality-constrained least norm") {
  // min ||u||  s.t.  u1 + u2 = 2  ->  u = (1, 1), norm sqrt(2).
  conic::ConicProgram prog2;
  int u = prog2.add_vars("u", 2);
  int t = prog2.add_vars("t", 1);
  prog2.set_objective(t, 1.0);
  int head = prog2.add_row(0.0);
  prog2.coef(head, t, -1.0);
  for (int i = 0; i < 2; ++i) {
    int row = prog2.add_row(0.0);
    prog2.coef(row, u + i, 1.0);
  }
  prog2.push_cone(Cone::SecondOrder, 3);
  prog2.add_linear({u, u + 1}, {1.0, 1.0}, 2.0, Cone::Zero);
  auto res = conic::solve(prog2, 1e-9, 50000);
  REQUIRE(res.status == conic::Status::Optimal);
  CHECK(res.objective == doctest::Approx(std::sqrt(2.0)).epsilon(1e-5));
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("infeasible bounds are certified") {
  conic::ConicProgram prog;
  int x = prog.add_vars("x", 1);
  prog.lower_bound(x, 1.0);
  prog.upper_bound(x, 0.0);
  auto res = conic::solve(prog, 1e-9, 50000);
  CHECK(res.status == conic::Status::Infeasible);
  CHECK_FALSE(conic::check_feasible(prog));
}

TEST_CASE("feasibility check accepts a box") {
  conic::ConicProgram prog;
  int x = prog.add_vars("x", 2);
  prog.lower_bound(x, -1.0);
  prog.upper_bound(x, 1.0);
  prog.lower_bound(x + 1, 0.0);
  CHECK(conic::check_feasible(prog));
}

TEST_CASE("quadratic cost budget flips feasibility at the boundary") {
  auto probe = [](double budget) {
    conic::ConicProgram prog;
    int u = prog.add_vars("u", 4);
    for (int i = 0; i < 4; ++i) prog.equality(u + i, 1.0);  // sum of squares = 4
    conic::quad_cost_as_cone(prog, {u, u + 1, u + 2, u + 3}, budget);
    return conic::check_feasible(prog, 1e-9, 50000);
  };
  CHECK(probe(4.1));
  CHECK_FALSE(probe(3.9));
}

TEST_CASE("cone projection properties") {
  std::mt19937 rng(3);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::vector<conic::ConeSpec> cones = {
      {Cone::Zero, 2}, {Cone::Nonnegative, 3}, {Cone::SecondOrder, 4}};
  for (int trial = 0; trial < 200; ++trial) {
    Vec v(9);
    for (int i = 0; i < 9; ++i) v(i) = gauss(rng);
    Vec p = conic::project_cones(v, cones);
    // Idempotence.
    CHECK((conic::project_cones(p, cones) - p).lpNorm<Eigen::Infinity>() < 1e-12);
    // Membership: zero block exactly zero, nonnegative block nonnegative, SOC holds.
    CHECK(p.head(2).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(p.segment(2, 3).minCoeff() >= 0.0);
    CHECK(p.segment(6, 3).norm() <= p(5) + 1e-12);
    // Moreau: v = proj_K(v) - proj_K*(-v), and the two parts are orthogonal.
    Vec q = conic::project_dual_cones(-v, cones);
    CHECK((p - q - v).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(std::abs(p.dot(q)) < 1e-10);
  }
}

TEST_CASE("dual projection fixes the polar of the zero cone") {
  std::vector<conic::ConeSpec> cones = {{Cone::Zero, 3}};
  Vec v(3);
  v << 1.0, -2.0, 0.5;
  // Dual of {0} is everything: projection is the identity.
  CHECK((conic::project_dual_cones(v, cones) - v).norm() == 0.0);
  // Primal projection collapses to zero.
  CHECK(conic::project_cones(v, cones).norm() == 0.0);
}

TEST_CASE("warm starts reproduce the optimum faster") {
  conic::ConicProgram prog;
  int x = prog.add_vars("x", 3);
  int t = prog.add_vars("t", 1);
  prog.set_objective(t, 1.0);
  int head = prog.add_row(0.0);
  prog.coef(head, t, -1.0);
  for (int i = 0; i < 3; ++i) {
    int row = prog.add_row(static_cast<double>(i));
    prog.coef(row, x + i, 1.0);
  }
  prog.push_cone(Cone::SecondOrder, 4);
  prog.add_linear({x, x + 1, x + 2}, {1.0, 2.0, -1.0}, 5.0, Cone::Zero);
  auto cold = conic::solve(prog, 1e-9, 100000);
  REQUIRE(cold.status == conic::Status::Optimal);
  conic::SolverSettings st;
  st.tol = 1e-9;
  st.warm_x = cold.x;
  st.warm_y = cold.y;
  auto warm = conic::solve(prog, st);
  REQUIRE(warm.status == conic::Status::Optimal);
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-7));
  CHECK(warm.iterations < cold.iterations);
}

TEST_CASE("validate rejects malformed programs") {
  conic::ConicProgram prog;
  prog.add_vars("x", 1);
  prog.add_row(1.0);  // row not covered by any cone
  CHECK_THROWS(prog.validate());

  conic::ConicProgram nan_prog;
  int x = nan_prog.add_vars("x", 1);
  nan_prog.equality(x, std::nan(""));
  CHECK_THROWS(nan_prog.validate());
}

TEST_CASE("variable registry tracks label ranges") {
  conic::ConicProgram prog;
  int a = prog.add_vars("a", 3);
  int b = prog.add_vars("b", 2);
  CHECK(prog.range("a") == std::pair<int, int>(a, 3));
  CHECK(prog.range("b") == std::pair<int, int>(b, 2));
  CHECK(prog.num_vars() == 5);
  CHECK_THROWS(prog.range("missing"));
}
