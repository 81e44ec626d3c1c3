#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ddto/types.hpp"

namespace ddto::model {

/// x_{k+1} = A x_k + B u_k + c
struct DiscreteAffineSystem {
  Mat A;
  Mat B;
  Vec c;
  int n_x = 0;
  int n_u = 0;

  Vec step(const Vec& x, const Vec& u) const { return A * x + B * u + c; }
};

/// Point-mass double integrator (r, v) under constant acceleration a,
/// discretized exactly with sampling time dt.
DiscreteAffineSystem double_integrator_discrete(double dt, const Vec3& a);

/// Scalar path constraint with gradients, used for g_i <= 0 and h_j = 0.
struct PathConstraint {
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> grad_x;
  std::function<Vec(const Vec&, const Vec&)> grad_u;
};

/// Continuous-time nonlinear system xdot = F(x, u) with path constraints.
struct ContinuousSystem {
  int n_x = 0;
  int n_u = 0;
  std::function<Vec(const Vec&, const Vec&)> field;
  std::function<Mat(const Vec&, const Vec&)> jacobian_x;
  std::function<Mat(const Vec&, const Vec&)> jacobian_u;
  std::vector<PathConstraint> inequality_paths;  // g_i(x,u) <= 0
  std::vector<PathConstraint> equality_paths;    // h_j(x,u) = 0
};

struct PropagationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Augmented state (x, y, t) and input (u, s). The y component integrates
// squared constraint violations, t reconstructs physical time.
inline int augmented_nx(const ContinuousSystem& sys) { return sys.n_x + 2; }
inline int augmented_nu(const ContinuousSystem& sys) { return sys.n_u + 1; }

/// s * (F(x,u), sum max(0,g_i)^2 + sum h_j^2, 1)
Vec augmented_ct_field(const ContinuousSystem& sys, const Vec& xa, const Vec& ua);
Mat augmented_jacobian_x(const ContinuousSystem& sys, const Vec& xa, const Vec& ua);
Mat augmented_jacobian_u(const ContinuousSystem& sys, const Vec& xa, const Vec& ua);

/// Wraps a discrete step map with a running stage-cost state theta.
using StepMap = std::function<Vec(const Vec&, const Vec&)>;
using StageCost = std::function<double(const Vec&, const Vec&)>;
StepMap augment_cumulative_step(StepMap step, StageCost l);

/// Classical RK4 under zero-order-hold input over an interval of given
/// length, split into `substeps` equal pieces.
Vec integrate_zoh(const std::function<Vec(const Vec&, const Vec&)>& field,
                  const Vec& x0, const Vec& u, double interval, int substeps);

/// One multiple-shooting interval of the augmented system.
Vec multiple_shooting_step(const ContinuousSystem& sys, const Vec& xa, const Vec& ua,
                           double interval, int substeps);

/// Integrates s*F(x, u) over one unit normalized interval.
Vec dilated_discrete_step(const ContinuousSystem& sys, const Vec& x, const Vec& u,
                          double s, int substeps);

/// Endpoint and sensitivities of one ZOH shooting interval, obtained by
/// integrating the variational equations alongside the state.
struct ShootingLinearization {
  Vec value;
  Mat jac_x;
  Mat jac_u;
};
ShootingLinearization integrate_zoh_with_sensitivities(
    const std::function<Vec(const Vec&, const Vec&)>& field,
    const std::function<Mat(const Vec&, const Vec&)>& jac_x,
    const std::function<Mat(const Vec&, const Vec&)>& jac_u,
    const Vec& x0, const Vec& u, double interval, int substeps);

/// Ellipsoidal keep-out zone ||H (r - q)|| >= 1.
struct Obstacle {
  Mat H;   // 3x3 shape matrix
  Vec3 q;  // center
};

struct QuadrotorParams {
  Vec3 gravity{0, 0, -9.806};
  double drag_coeff = 0.0;
  double v_max = std::numeric_limits<double>::infinity();
  double u_max = 20.0;
  double u_min = 5.0;
  Vec3 e_hat{0, 0, 1};
  double delta_max_deg = 60.0;
  // Fractional tightening of the penalized path bounds. The integral penalty
  // only bounds violations in a mean-square sense, so the enforced bounds are
  // backed off to keep inter-node excursions inside the true limits.
  double backoff = 0.02;
  std::vector<Obstacle> obstacles;
};

/// Point-mass quadrotor with drag and running cost theta as a state:
/// x = (r, v, theta), xdot = (v, u - c_d ||v|| v + a, ||u||^2).
/// Path constraints are scaled to O(1) magnitudes.
ContinuousSystem quadrotor_continuous(const QuadrotorParams& p);

}  // namespace ddto::model
