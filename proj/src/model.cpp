#include "ddto/model.hpp"

#include <cmath>

namespace ddto::model {

DiscreteAffineSystem double_integrator_discrete(double dt, const Vec3& a) {
  if (dt < 0) throw std::invalid_argument("double_integrator_discrete: dt must be >= 0");
  DiscreteAffineSystem sys;
  sys.n_x = 6;
  sys.n_u = 3;
  sys.A = Mat::Identity(6, 6);
  sys.A.topRightCorner(3, 3) = dt * Mat::Identity(3, 3);
  sys.B = Mat::Zero(6, 3);
  sys.B.topRows(3) = 0.5 * dt * dt * Mat::Identity(3, 3);
  sys.B.bottomRows(3) = dt * Mat::Identity(3, 3);
  sys.c = Vec::Zero(6);
  sys.c.head(3) = 0.5 * dt * dt * a;
  sys.c.tail(3) = dt * a;
  return sys;
}

StepMap augment_cumulative_step(StepMap step, StageCost l) {
  return [step = std::move(step), l = std::move(l)](const Vec& xa, const Vec& u) {
    const int n = static_cast<int>(xa.size()) - 1;
    Vec x = xa.head(n);
    Vec out(n + 1);
    out.head(n) = step(x, u);
    out(n) = xa(n) + l(x, u);
    return out;
  };
}

static double violation_rate(const ContinuousSystem& sys, const Vec& x, const Vec& u) {
  double v = 0;
  for (const auto& g : sys.inequality_paths) {
    double gi = g.value(x, u);
    if (gi > 0) v += gi * gi;
  }
  for (const auto& h : sys.equality_paths) {
    double hj = h.value(x, u);
    v += hj * hj;
  }
  return v;
}

Vec augmented_ct_field(const ContinuousSystem& sys, const Vec& xa, const Vec& ua) {
  const int nx = sys.n_x, nu = sys.n_u;
  Vec x = xa.head(nx);
  Vec u = ua.head(nu);
  double s = ua(nu);
  Vec out(nx + 2);
  out.head(nx) = s * sys.field(x, u);
  out(nx) = s * violation_rate(sys, x, u);
  out(nx + 1) = s;
  return out;
}

Mat augmented_jacobian_x(const ContinuousSystem& sys, const Vec& xa, const Vec& ua) {
  const int nx = sys.n_x, nu = sys.n_u;
  Vec x = xa.head(nx);
  Vec u = ua.head(nu);
  double s = ua(nu);
  Mat J = Mat::Zero(nx + 2, nx + 2);
  J.topLeftCorner(nx, nx) = s * sys.jacobian_x(x, u);
  Vec dy = Vec::Zero(nx);
  for (const auto& g : sys.inequality_paths) {
    double gi = g.value(x, u);
    if (gi > 0) dy += 2.0 * gi * g.grad_x(x, u);
  }
  for (const auto& h : sys.equality_paths) {
    dy += 2.0 * h.value(x, u) * h.grad_x(x, u);
  }
  J.row(nx).head(nx) = s * dy.transpose();
  return J;
}

Mat augmented_jacobian_u(const ContinuousSystem& sys, const Vec& xa, const Vec& ua) {
  const int nx = sys.n_x, nu = sys.n_u;
  Vec x = xa.head(nx);
  Vec u = ua.head(nu);
  double s = ua(nu);
  Mat J = Mat::Zero(nx + 2, nu + 1);
  J.topLeftCorner(nx, nu) = s * sys.jacobian_u(x, u);
  Vec dy = Vec::Zero(nu);
  for (const auto& g : sys.inequality_paths) {
    double gi = g.value(x, u);
    if (gi > 0) dy += 2.0 * gi * g.grad_u(x, u);
  }
  for (const auto& h : sys.equality_paths) {
    dy += 2.0 * h.value(x, u) * h.grad_u(x, u);
  }
  J.row(nx).head(nu) = s * dy.transpose();
  // Derivative with respect to the dilation factor: field with s = 1.
  J.topRightCorner(nx, 1) = sys.field(x, u);
  J(nx, nu) = violation_rate(sys, x, u);
  J(nx + 1, nu) = 1.0;
  return J;
}

Vec integrate_zoh(const std::function<Vec(const Vec&, const Vec&)>& field,
                  const Vec& x0, const Vec& u, double interval, int substeps) {
  if (substeps < 1) throw std::invalid_argument("integrate_zoh: substeps must be >= 1");
  const double h = interval / substeps;
  Vec x = x0;
  for (int i = 0; i < substeps; ++i) {
    Vec k1 = field(x, u);
    Vec k2 = field(x + 0.5 * h * k1, u);
    Vec k3 = field(x + 0.5 * h * k2, u);
    Vec k4 = field(x + h * k3, u);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw PropagationError("integrate_zoh: non-finite state");
  }
  return x;
}

Vec multiple_shooting_step(const ContinuousSystem& sys, const Vec& xa, const Vec& ua,
                           double interval, int substeps) {
  auto f = [&sys](const Vec& x, const Vec& u) { return augmented_ct_field(sys, x, u); };
  return integrate_zoh(f, xa, ua, interval, substeps);
}

Vec dilated_discrete_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
                          double s, int substeps) {
  if (s <= 0) throw std::invalid_argument("dilated_discrete_step: s must be > 0");
  auto f = [&sys, s](const Vec& xx, const Vec& uu) -> Vec { return s * sys.field(xx, uu); };
  return integrate_zoh(f, x, u, 1.0, substeps);
}

ShootingLinearization integrate_zoh_with_sensitivities(
    const std::function<Vec(const Vec&, const Vec&)>& field,
    const std::function<Mat(const Vec&, const Vec&)>& jac_x,
    const std::function<Mat(const Vec&, const Vec&)>& jac_u,
    const Vec& x0, const Vec& u, double interval, int substeps) {
  if (substeps < 1)
    throw std::invalid_argument("integrate_zoh_with_sensitivities: substeps must be >= 1");
  const int nx = static_cast<int>(x0.size());
  const int nu = static_cast<int>(u.size());
  const double h = interval / substeps;

  // Stacked system z = (x, vec(Phi_x), vec(Phi_u)) integrated with RK4.
  struct Node {
    Vec x;
    Mat Px;
    Mat Pu;
  };
  auto deriv = [&](const Node& z) {
    Node d;
    d.x = field(z.x, u);
    Mat Jx = jac_x(z.x, u);
    d.Px = Jx * z.Px;
    d.Pu = Jx * z.Pu + jac_u(z.x, u);
    return d;
  };
  Node z{x0, Mat::Identity(nx, nx), Mat::Zero(nx, nu)};
  for (int i = 0; i < substeps; ++i) {
    Node k1 = deriv(z);
    Node z2{z.x + 0.5 * h * k1.x, z.Px + 0.5 * h * k1.Px, z.Pu + 0.5 * h * k1.Pu};
    Node k2 = deriv(z2);
    Node z3{z.x + 0.5 * h * k2.x, z.Px + 0.5 * h * k2.Px, z.Pu + 0.5 * h * k2.Pu};
    Node k3 = deriv(z3);
    Node z4{z.x + h * k3.x, z.Px + h * k3.Px, z.Pu + h * k3.Pu};
    Node k4 = deriv(z4);
    z.x += (h / 6.0) * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    z.Px += (h / 6.0) * (k1.Px + 2 * k2.Px + 2 * k3.Px + k4.Px);
    z.Pu += (h / 6.0) * (k1.Pu + 2 * k2.Pu + 2 * k3.Pu + k4.Pu);
    if (!z.x.allFinite() || !z.Px.allFinite() || !z.Pu.allFinite())
      throw PropagationError("integrate_zoh_with_sensitivities: non-finite values");
  }
  return {z.x, z.Px, z.Pu};
}

ContinuousSystem quadrotor_continuous(const QuadrotorParams& p) {
  ContinuousSystem sys;
  sys.n_x = 7;  // (r, v, theta)
  sys.n_u = 3;
  const Vec3 a = p.gravity;
  const double cd = p.drag_coeff;
  sys.field = [a, cd](const Vec& x, const Vec& u) {
    Vec3 v = x.segment<3>(3);
    Vec out(7);
    out.head(3) = v;
    out.segment<3>(3) = u.head(3) - cd * v.norm() * v + a;
    out(6) = u.squaredNorm();
    return out;
  };
  sys.jacobian_x = [cd](const Vec& x, const Vec&) {
    Vec3 v = x.segment<3>(3);
    Mat J = Mat::Zero(7, 7);
    J.block<3, 3>(0, 3) = Mat::Identity(3, 3);
    double nv = v.norm();
    if (nv > 1e-12) {
      J.block<3, 3>(3, 3) = -cd * (nv * Mat::Identity(3, 3) + v * v.transpose() / nv);
    }
    return J;
  };
  sys.jacobian_u = [](const Vec&, const Vec& u) {
    Mat J = Mat::Zero(7, 3);
    J.block<3, 3>(3, 0) = Mat::Identity(3, 3);
    J.row(6) = 2.0 * u.transpose();
    return J;
  };

  // Path constraints, each divided by a characteristic magnitude.
  auto add_g = [&sys](PathConstraint g) { sys.inequality_paths.push_back(std::move(g)); };

  const double margin2 = std::pow(1.0 + p.backoff, 2);
  for (const auto& obs : p.obstacles) {
    Mat HtH = obs.H.transpose() * obs.H;
    Vec3 q = obs.q;
    add_g({[HtH, q, margin2](const Vec& x, const Vec&) {
             Vec3 d = x.head(3) - q;
             return margin2 - d.dot(HtH * d);
           },
           [HtH, q](const Vec& x, const Vec&) {
             Vec3 d = x.head(3) - q;
             Vec gx = Vec::Zero(7);
             gx.head(3) = -2.0 * (HtH * d);
             return gx;
           },
           [](const Vec&, const Vec& u) { return Vec::Zero(u.size()); }});
  }
  if (std::isfinite(p.v_max)) {
    const double s = 1.0 / (p.v_max * p.v_max);
    const double vmax2 = std::pow(p.v_max * (1.0 - p.backoff), 2);
    add_g({[s, vmax2](const Vec& x, const Vec&) {
             return s * (x.segment<3>(3).squaredNorm() - vmax2);
           },
           [s](const Vec& x, const Vec&) {
             Vec gx = Vec::Zero(7);
             gx.segment<3>(3) = s * 2.0 * x.segment<3>(3);
             return gx;
           },
           [](const Vec&, const Vec& u) { return Vec::Zero(u.size()); }});
  }
  const double su = 1.0 / (p.u_max * p.u_max);
  const double umax2 = std::pow(p.u_max * (1.0 - p.backoff), 2);
  add_g({[su, umax2](const Vec&, const Vec& u) { return su * (u.squaredNorm() - umax2); },
         [](const Vec& x, const Vec&) { return Vec::Zero(x.size()); },
         [su](const Vec&, const Vec& u) -> Vec { return su * 2.0 * u; }});
  const double umin2 = std::pow(p.u_min * (1.0 + p.backoff), 2);
  add_g({[su, umin2](const Vec&, const Vec& u) { return su * (umin2 - u.squaredNorm()); },
         [](const Vec& x, const Vec&) { return Vec::Zero(x.size()); },
         [su](const Vec&, const Vec& u) -> Vec { return -su * 2.0 * u; }});
  // Pointing cone in quadratic form: ||u||^2 <= (sec(delta) e'u)^2 with e'u >= 0.
  {
    const double sec2 = std::pow(1.0 / std::cos(p.delta_max_deg * M_PI / 180.0), 2);
    Vec3 e = p.e_hat.normalized();
    add_g({[su, sec2, e](const Vec&, const Vec& u) {
             double eu = e.dot(u.head(3));
             return su * (u.squaredNorm() - sec2 * eu * eu);
           },
           [](const Vec& x, const Vec&) { return Vec::Zero(x.size()); },
           [su, sec2, e](const Vec&, const Vec& u) -> Vec {
             double eu = e.dot(u.head(3));
             return su * (2.0 * u - 2.0 * sec2 * eu * Vec(e));
           }});
    const double sl = 1.0 / p.u_max;
    add_g({[sl, e](const Vec&, const Vec& u) { return -sl * e.dot(u.head(3)); },
           [](const Vec& x, const Vec&) { return Vec::Zero(x.size()); },
           [sl, e](const Vec&, const Vec&) -> Vec { return -sl * Vec(e); }});
  }
  return sys;
}

}  // namespace ddto::model
