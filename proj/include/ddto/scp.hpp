#pragma once

#include <string>
#include <vector>

#include "ddto/conic.hpp"
#include "ddto/model.hpp"
#include "ddto/scenario.hpp"

namespace ddto::scp {

/// Node values of the multiple-shooting transcription. Block 0 is the trunk,
/// blocks 1..|J| follow the order of J. States are augmented (x, y, t),
/// inputs are augmented (u, s).
struct ScpIterate {
  std::vector<std::vector<Vec>> x;  // [block][k], k = 0..M-1
  std::vector<std::vector<Vec>> u;  // [block][k], k = 0..M-2
  double penalty = 0.0;
  double max_defect = 0.0;
  int num_blocks() const { return static_cast<int>(x.size()); }
  int grid_points() const { return x.empty() ? 0 : static_cast<int>(x[0].size()); }
};

/// Endpoint and sensitivities of one shooting interval of the augmented
/// dilated dynamics. Throws model::PropagationError on non-finite results.
model::ShootingLinearization linearize_step(const model::ContinuousSystem& sys, const Vec& xa,
                                            const Vec& ua, double interval, int substeps);

struct IterRecord {
  int iteration = 0;
  double penalty = 0.0;
  double defect = 0.0;
  double step_norm = 0.0;
  double trunk_time = 0.0;
  double tr_weight = 0.0;
  int solver_status = 0;
  int solver_iterations = 0;
};

struct ScpSolution {
  bool converged = false;
  ScpIterate iterate;
  int iterations = 0;
  double trunk_time = 0.0;  // S_t of the trunk's last node
  double max_defect = 0.0;
  std::vector<IterRecord> trace;
};

/// Per-block linearizations for one iterate (pure per-interval computation;
/// parallelized over intervals when OpenMP is enabled).
std::vector<std::vector<model::ShootingLinearization>> linearize_iterate(
    const model::ContinuousSystem& sys, const ScpIterate& it, double interval, int substeps,
    bool parallel = true);

/// Convex subproblem in deviations around `it`: penalized linearized shooting
/// defects, per-interval y-increase bound, stitching and boundary rows,
/// penalized terminal rows, per-knot trust-region balls, maximize trunk
/// duration.
/// `branch_budgets` overrides sc.l_max per branch (empty = l_max for all);
/// early rounds use it to hold back budget for the trunks still to come.
conic::ConicProgram build_scp_subproblem(
    const Scenario& sc, const std::vector<int>& J, const ScpIterate& it,
    const std::vector<std::vector<model::ShootingLinearization>>& lin, const Vec& z0_phys,
    double tr_radius, const std::vector<double>& branch_budgets = {});

/// Prox-linear loop for one deferred-decision segment with target set J,
/// starting from physical state z0_phys (r, v, theta).
ScpSolution scp_solve(const Scenario& sc, const std::vector<int>& J, const Vec& z0_phys, int M,
                      const ScpConfig& cfg, const std::vector<double>& branch_budgets = {});

/// Piecewise-linear normalized-to-physical time map t(tau) with t(0) = 0.
struct TimeMap {
  std::vector<double> tau;  // knots, uniform on [0, 1]
  std::vector<double> t;    // strictly increasing physical times
  double t_of_tau(double tau_q) const;
  double tau_of_t(double t_q) const;
  double final_time() const { return t.back(); }
};
TimeMap reconstruct_time(const std::vector<Vec>& x_nodes, const std::vector<Vec>& u_nodes);

/// Per-round iteration traces are appended to `traces` when provided.
DdtoTree run_ddto_scp(const Scenario& sc, const ScpConfig& cfg,
                      std::vector<std::vector<IterRecord>>* traces = nullptr);

struct ViolationReport {
  double max_inequality = 0.0;     // max over samples of max(0, g_i)
  double max_equality = 0.0;       // max |h_j|
  double max_defect = 0.0;         // dense re-integration endpoint mismatch
  double min_obstacle_margin = 0.0;  // min ||H(r-q)|| over samples (inf when no obstacles)
  double max_speed = 0.0;
  double max_thrust = 0.0;
  double min_thrust = 0.0;
  double max_cost = 0.0;           // max over targets of terminal theta
  double min_dilation = 0.0;
  double max_dilation = 0.0;
};
ViolationReport validate_continuous(const DdtoTree& tree, const Scenario& sc,
                                    int samples_per_interval);

void write_iteration_trace(const std::vector<IterRecord>& trace, const std::string& path);

}  // namespace ddto::scp
