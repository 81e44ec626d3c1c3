#pragma once

#include <utility>
#include <vector>

#include "ddto/conic.hpp"
#include "ddto/scenario.hpp"

namespace ddto::qcvx {

/// Latest k such that all pairs of sequences agree (infinity norm <= tol)
/// at every time up to k. Returns the min length when fully coincident.
int coincidence_horizon(const std::vector<std::vector<Vec>>& trajectories, double tol);

struct SolveOptions {
  double tol = 1e-7;
  int max_iter = 50000;
  bool shared_inputs = true;   // share trunk states AND inputs (default encoding)
  double coincidence_tol = 1e-6;
};

/// Feasibility program for |J| trajectories forced coincident up to k_star.
/// Variable labels: "xt"/"ut" shared trunk block; "x<j>"/"u<j>" per-target
/// branch blocks (global target index j).
conic::ConicProgram build_coincident_feasibility(const Scenario& sc, const std::vector<int>& J,
                                                 int k_star, const std::vector<int>& horizons,
                                                 const Vec& z0, double budget,
                                                 bool shared_inputs = true,
                                                 bool min_cost_objective = false);

struct BisectionTranscript {
  std::vector<std::pair<int, bool>> probes;  // (k_star, feasible)
  bool probed(int k, bool feasible) const;
};

struct BranchTimeResult {
  int k = 0;
  BisectionTranscript transcript;
};

/// Largest k with a feasible coincident program, found by bisection.
/// Horizons are the per-target remaining horizons M^j (order matches J).
BranchTimeResult max_branch_time(const Scenario& sc, const std::vector<int>& J,
                                 const std::vector<int>& horizons, const Vec& z0, double budget,
                                 const SolveOptions& opt = {});

struct AssumptionReport {
  std::vector<bool> target_feasible;
  bool all_feasible = false;
};
AssumptionReport check_assumption(const Scenario& sc, const SolveOptions& opt = {});

DdtoTree run_ddto_qcvx(const Scenario& sc, const SolveOptions& opt = {});

/// Per-target trajectories extracted from a solved coincident program.
/// Result order matches J; each entry holds the full state and input path.
struct ExtractedPaths {
  std::vector<std::vector<Vec>> states;
  std::vector<std::vector<Vec>> inputs;
};
ExtractedPaths extract_paths(const conic::ConicProgram& prog, const Vec& solution,
                             const Scenario& sc, const std::vector<int>& J, int k_star,
                             const std::vector<int>& horizons, bool shared_inputs);

/// Sum over k of |J_k| implied by a tree (coincidence with the
/// highest-priority path, tolerance-based), used for cross-method comparison.
int cumulative_reachable_count(const DdtoTree& tree, const Scenario& sc, double tol = 1e-5);

}  // namespace ddto::qcvx
