#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ddto/model.hpp"

using namespace ddto;

namespace {

model::QuadrotorParams test_params() {
  model::QuadrotorParams p;
  p.gravity = Vec3(0.0, 0.0, -9.806);
  p.drag_coeff = 0.01;
  p.v_max = 8.0;
  p.u_max = 20.0;
  p.u_min = 5.0;
  p.e_hat = Vec3(0, 0, 1);
  p.delta_max_deg = 60.0;
  model::Obstacle ob;
  ob.H = Vec3(0.2, 0.1, 0.2).asDiagonal();
  ob.q = Vec3(-5.0, 1.0, 10.0);
  p.obstacles = {ob};
  return p;
}

// Central finite differences of a vector map, one column per input entry.
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& at, double h) {
  Vec f0 = f(at);
  Mat J(f0.size(), at.size());
  for (int i = 0; i < at.size(); ++i) {
    Vec lo = at, hi = at;
    lo(i) -= h;
    hi(i) += h;
    J.col(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("double integrator discretization is exact") {
  double dt = 0.5;
  Vec3 a(0.0, 0.0, -9.806);
  auto sys = model::double_integrator_discrete(dt, a);
  REQUIRE(sys.n_x == 6);
  REQUIRE(sys.n_u == 3);
  // Closed form: r+ = r + dt v + dt^2/2 (u + a), v+ = v + dt (u + a).
  Vec x(6), u(3);
  x << 1.0, -2.0, 3.0, 0.5, 0.25, -1.0;
  u << 2.0, 0.0, 11.0;
  Vec next = sys.step(x, u);
  for (int i = 0; i < 3; ++i) {
    CHECK(next(i) ==
          doctest::Approx(x(i) + dt * x(3 + i) + 0.5 * dt * dt * (u(i) + a(i))).epsilon(1e-14));
    CHECK(next(3 + i) == doctest::Approx(x(3 + i) + dt * (u(i) + a(i))).epsilon(1e-14));
  }
}

TEST_CASE("quadrotor field jacobians match finite differences") {
  auto sys = model::quadrotor_continuous(test_params());
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dr(-20.0, 20.0), dv(-6.0, 6.0), du(6.0, 12.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(7), u(3);
    for (int i = 0; i < 3; ++i) x(i) = dr(rng);
    for (int i = 0; i < 3; ++i) x(3 + i) = dv(rng);
    x(6) = 0.0;
    for (int i = 0; i < 3; ++i) u(i) = du(rng);
    Mat Jx = sys.jacobian_x(x, u);
    Mat Ju = sys.jacobian_u(x, u);
    Mat Jx_fd = fd_jacobian([&](const Vec& xx) { return sys.field(xx, u); }, x, 1e-6);
    Mat Ju_fd = fd_jacobian([&](const Vec& uu) { return sys.field(x, uu); }, u, 1e-6);
    double sx = std::max(1.0, Jx.norm());
    double su = std::max(1.0, Ju.norm());
    CHECK((Jx - Jx_fd).norm() / sx < 1e-4);
    CHECK((Ju - Ju_fd).norm() / su < 1e-4);
  }
}

TEST_CASE("augmented field jacobians match finite differences") {
  auto sys = model::quadrotor_continuous(test_params());
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dr(-20.0, 20.0), dv(-6.0, 6.0), du(6.0, 12.0),
      ds(1.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec xa(9), ua(4);
    for (int i = 0; i < 3; ++i) xa(i) = dr(rng);
    for (int i = 0; i < 3; ++i) xa(3 + i) = dv(rng);
    xa(6) = 0.0;
    xa(7) = 0.0;
    xa(8) = 0.0;
    for (int i = 0; i < 3; ++i) ua(i) = du(rng);
    ua(3) = ds(rng);
    Mat Jx = model::augmented_jacobian_x(sys, xa, ua);
    Mat Ju = model::augmented_jacobian_u(sys, xa, ua);
    Mat Jx_fd =
        fd_jacobian([&](const Vec& xx) { return model::augmented_ct_field(sys, xx, ua); }, xa, 1e-6);
    Mat Ju_fd =
        fd_jacobian([&](const Vec& uu) { return model::augmented_ct_field(sys, xa, uu); }, ua, 1e-6);
    CHECK((Jx - Jx_fd).norm() / std::max(1.0, Jx.norm()) < 1e-4);
    CHECK((Ju - Ju_fd).norm() / std::max(1.0, Ju.norm()) < 1e-4);
  }
}

TEST_CASE("integrator convergence order on the quadrotor field") {
  auto sys = model::quadrotor_continuous(test_params());
  Vec x0(7), u(3);
  x0 << 2.0, -1.0, 10.0, 3.0, 2.0, 1.0, 0.0;
  u << 6.0, 3.0, 12.0;
  double T = 0.8;
  Vec ref = model::integrate_zoh(sys.field, x0, u, T, 512);
  double prev_err = 0.0;
  double min_order = 10.0;
  for (int substeps : {1, 2, 4, 8}) {
    double err = (model::integrate_zoh(sys.field, x0, u, T, substeps) - ref).norm();
    if (substeps > 1) min_order = std::min(min_order, std::log2(prev_err / err));
    prev_err = err;
  }
  CHECK(min_order >= 3.5);
}

TEST_CASE("sensitivity integration matches endpoint finite differences") {
  auto sys = model::quadrotor_continuous(test_params());
  auto field = [&sys](const Vec& x, const Vec& u) { return model::augmented_ct_field(sys, x, u); };
  auto jx = [&sys](const Vec& x, const Vec& u) { return model::augmented_jacobian_x(sys, x, u); };
  auto ju = [&sys](const Vec& x, const Vec& u) { return model::augmented_jacobian_u(sys, x, u); };
  Vec xa(9), ua(4);
  xa << 2.0, -1.0, 10.0, 3.0, 2.0, 1.0, 5.0, 0.0, 0.0;
  ua << 6.0, 3.0, 12.0, 2.5;
  auto lin = model::integrate_zoh_with_sensitivities(field, jx, ju, xa, ua, 0.25, 8);
  CHECK(lin.value.allFinite());
  Mat Jx_fd = fd_jacobian(
      [&](const Vec& xx) { return model::integrate_zoh(field, xx, ua, 0.25, 8); }, xa, 1e-6);
  Mat Ju_fd = fd_jacobian(
      [&](const Vec& uu) { return model::integrate_zoh(field, xa, uu, 0.25, 8); }, ua, 1e-6);
  CHECK((lin.jac_x - Jx_fd).norm() / std::max(1.0, Jx_fd.norm()) < 1e-5);
  CHECK((lin.jac_u - Ju_fd).norm() / std::max(1.0, Ju_fd.norm()) < 1e-5);
}

TEST_CASE("dilation reproduces physical-time integration") {
  auto sys = model::quadrotor_continuous(test_params());
  Vec x(7), u(3);
  x << 0.0, 0.0, 10.0, 1.0, 0.0, 0.0, 0.0;
  u << 7.0, 0.0, 10.0;
  double s = 3.0;
  // Integrating s*F over one normalized interval equals F over s seconds.
  Vec dilated = model::dilated_discrete_step(sys, x, u, s, 64);
  Vec physical = model::integrate_zoh(sys.field, x, u, s, 64);
  CHECK((dilated - physical).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("cumulative-cost augmentation accumulates the stage cost") {
  auto sys = model::double_integrator_discrete(0.5, Vec3(0, 0, 0));
  auto step = model::augment_cumulative_step(
      [&sys](const Vec& x, const Vec& u) { return sys.step(x, u); },
      [](const Vec&, const Vec& u) { return u.squaredNorm(); });
  Vec x0 = Vec::Zero(7);  // (r, v, theta)
  Vec u(3);
  u << 1.0, 2.0, 3.0;
  Vec x1 = step(x0, u);
  Vec x2 = step(x1, u);
  CHECK(x1(6) == doctest::Approx(14.0));
  CHECK(x2(6) == doctest::Approx(28.0));
}

TEST_CASE("augmented y integrates squared constraint violations") {
  auto p = test_params();
  auto sys = model::quadrotor_continuous(p);
  Vec xa = Vec::Zero(9), ua(4);
  // Speeding well above v_max: y must strictly increase.
  xa.segment(3, 3) = Vec3(10.0, 0.0, 0.0);
  xa(2) = 30.0;
  ua << 0.0, 0.0, 9.806, 1.0;
  Vec rate = model::augmented_ct_field(sys, xa, ua);
  CHECK(rate(7) > 0.0);
  // Comfortably feasible point: y must be flat.
  xa.segment(3, 3) = Vec3(1.0, 0.0, 0.0);
  rate = model::augmented_ct_field(sys, xa, ua);
  CHECK(rate(7) == doctest::Approx(0.0));
}

TEST_CASE("shooting step equals augmented integration") {
  auto sys = model::quadrotor_continuous(test_params());
  Vec xa(9), ua(4);
  xa << 1.0, 2.0, 12.0, 0.5, -0.5, 0.0, 0.0, 0.0, 0.0;
  ua << 5.0, 5.0, 9.0, 2.0;
  Vec a = model::multiple_shooting_step(sys, xa, ua, 0.2, 10);
  auto field = [&sys](const Vec& x, const Vec& u) { return model::augmented_ct_field(sys, x, u); };
  Vec b = model::integrate_zoh(field, xa, ua, 0.2, 10);
  CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-12);
}
