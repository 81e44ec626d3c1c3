#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ddto/model.hpp"
#include "ddto/types.hpp"

namespace ddto {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Convex input set. Active pieces:
///   ||u|| <= norm_max                    (when finite)
///   e_hat'u >= point_min                 (when e_hat set)
///   ||u|| <= sec(delta_max) * e_hat'u    (when delta_max_deg < 90)
///   box_lo <= u <= box_hi                (when set, per component)
struct InputConstraints {
  double norm_max = kInf;
  double point_min = -kInf;
  double delta_max_deg = 90.0;
  Vec e_hat;  // empty = no pointing constraints
  Vec box_lo, box_hi;
};

/// Optional per-component state box.
struct StateConstraints {
  Vec box_lo, box_hi;  // empty = unconstrained
};

struct ScpConfig {
  double tr_init = 0.2;      // initial trust-region radius (scaled deviations)
  double w_pen = 1e2;        // exact-penalty weight (scaled residuals)
  double w_time = 0.2;       // weight on the maximized trunk end time
  double tr_decay = 0.5;     // radius shrink factor on a rejected step
  int max_iterations = 400;
  double convergence_tol = 1e-4;  // iterate infinity-norm change (scaled)
  double defect_tol = 1e-5;
  double epsilon = 1e-5;     // per-interval bound on the y increase
  double s_min = 1.0;
  double s_max = 15.0;
  double u_inf_max = 20.0;   // input set is an infinity-norm ball
  int substeps = 10;
  double solver_tol = 1e-5;
  int solver_max_iter = 60000;
  int grid_points = 0;       // M; derived from N when 0
};

struct MicpConfig {
  double big_M = 0.0;  // 0 = choose automatically
  int p_norm = 2;      // 2 or numeric_limits<int>::max() for infinity
  int anchor = -1;     // 0-based; -1 = free (best anchor)
  double gap_tol = 1e-6;
  double time_budget_s = 600.0;
  bool monotonicity_cuts = true;
  double extract_tol = 1e-5;
};

/// One planning problem: initial state, prioritized singleton targets,
/// horizons, constraints, cumulative-cost budget.
struct Scenario {
  std::string name;
  model::DiscreteAffineSystem system;  // used by qcvx and micp
  Vec z0;
  std::vector<Vec> targets;    // singleton target states z^j
  std::vector<int> priorities; // priorities[r] = target index of rank r (0-based)
  std::vector<int> horizons;   // N^j
  InputConstraints input;
  StateConstraints state;
  double l_max = kInf;  // budget on sum ||u_k||^2

  // Continuous-time data (scp).
  model::QuadrotorParams quad;
  int scp_horizon = 0;  // total horizon N (odd)

  ScpConfig scp;
  MicpConfig micp;

  int num_targets() const { return static_cast<int>(targets.size()); }
  void validate() const;  // throws on inconsistent dimensions or bounds
};

/// Appendix-style bundled examples matching the shipped scenario files.
Scenario quad_convex_scenario();
Scenario quad_nonconvex_scenario();

/// Schema-validated JSON ingestion. Unknown keys are rejected.
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& sc, const std::string& path);

}  // namespace ddto
