#pragma once

#include <set>
#include <string>
#include <vector>

#include "ddto/conic.hpp"
#include "ddto/scenario.hpp"

namespace ddto::micp {

/// Big-M mixed-integer conic encoding anchored at target i. Variable labels:
/// "x<j>"/"u<j>" per-target full-horizon blocks, "zeta<j>" relaxed binaries.
struct MicpInstance {
  conic::ConicProgram base;              // continuous part, zeta boxed to [0,1]
  std::vector<std::vector<int>> binaries;  // binaries[j][k-1] -> var index; empty row for j == anchor
  double big_M = 0.0;
  int p_norm = 2;
  int anchor = 0;  // 0-based
  std::vector<int> shared_horizon;  // N^{ij} per target (min of the two horizons)
};

struct BnbNode {
  std::set<int> fixed_zero;
  std::set<int> fixed_one;
  double bound = 0.0;
  int depth = 0;
};

/// Automatic Assumption-2 constant: twice the state-difference diameter
/// implied by the scenario bounds (box if present, norm propagation otherwise).
double auto_big_M(const Scenario& sc);

MicpInstance build_micp(const Scenario& sc, int anchor, double big_M, int p_norm = 2,
                        bool monotonicity_cuts = true);

struct RelaxedSolution {
  conic::SolveResult result;
  std::vector<double> zeta;   // values aligned with flattened binaries
  int earliest_fractional = -1;  // variable index, -1 when integral
  bool integral = false;
};
RelaxedSolution solve_relaxed(const MicpInstance& inst, const BnbNode& node,
                              double tol, int max_iter,
                              const std::optional<Vec>& warm = std::nullopt);

struct BnbNodeRecord {
  int id = 0;
  int depth = 0;
  double bound = 0.0;
  double incumbent = 0.0;
  std::string status;  // "branched", "pruned", "infeasible", "incumbent"
};

struct MicpResult {
  int anchor = 0;
  double objective = 0.0;   // incumbent sum of binaries (integer-valued)
  double best_bound = 0.0;
  double gap = 0.0;
  bool converged = false;   // gap closed within budget
  int nodes = 0;
  std::vector<std::vector<Vec>> states;   // per target, 1..N^j
  std::vector<std::vector<Vec>> inputs;
  std::vector<std::vector<int>> zeta;     // rounded binaries, anchor row all zero
  std::vector<std::vector<int>> target_sets;  // J_k (0-based targets)
  std::vector<int> branch_times;          // k^j per target
  DdtoTree tree;
  std::vector<BnbNodeRecord> log;
};

MicpResult branch_and_bound(const Scenario& sc, const MicpInstance& inst,
                            double time_budget_s, double gap_tol);

/// J_k / branch times / counting-identity check on an integer-feasible
/// per-target state table. Throws when the identity is violated beyond tol.
struct TargetSets {
  std::vector<std::vector<int>> target_sets;
  std::vector<int> branch_times;
  int cumulative = 0;  // sum_k |J_k| over the shared horizon
};
TargetSets extract_target_sets(const std::vector<std::vector<Vec>>& states, int anchor,
                               const std::vector<int>& shared_horizon, double objective,
                               double tol);

/// Runs the anchored solve for every target and keeps the least objective.
MicpResult best_anchor(const Scenario& sc);

/// Honors sc.micp (anchor = -1 means best_anchor).
MicpResult run_ddto_micp(const Scenario& sc);

void write_node_log(const std::vector<BnbNodeRecord>& log, const std::string& path);

}  // namespace ddto::micp
