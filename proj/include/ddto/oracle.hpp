#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ddto::oracle {

using GridState = std::vector<int>;
using GridInput = std::vector<int>;
using StateSet = std::set<GridState>;

/// Finite-state, finite-input system for exact reachability computations.
struct GridSystem {
  std::vector<GridState> states;  // admissible set X (explicit)
  std::vector<GridInput> inputs;  // admissible set U
  std::function<GridState(const GridState&, const GridInput&)> step;
  std::vector<StateSet> targets;
  GridState z0;
  int N = 0;

  bool admissible(const GridState& x) const;
  int num_targets() const { return static_cast<int>(targets.size()); }
};

StateSet forward_reach(const GridSystem& sys, int M, const GridState& z);
StateSet backward_reach(const GridSystem& sys, int M, const StateSet& Z);

/// F_{k-1}(z0) intersected with B_{N-k}(Z^j), 1-based k and 0-based j.
StateSet k_reach(const GridSystem& sys, int j, int k);
StateSet k_reach_J(const GridSystem& sys, const std::vector<int>& J, int k);

/// All nonempty target subsets whose k-reach intersection is nonempty.
std::vector<std::vector<int>> lambda_sets(const GridSystem& sys, int k);

/// max { k : k_reach_J(J, k) nonempty }; throws when J is infeasible at k=1.
int branch_time_oracle(const GridSystem& sys, const std::vector<int>& J);

struct ExhaustiveSolution {
  int anchor = 0;                                   // 0-based
  int objective = 0;                                // cardinality objective value
  std::vector<std::vector<GridState>> trajectories; // one per target
  std::vector<std::vector<int>> target_sets;        // J_k per time step (0-based targets)
};

/// Exact minimizer of the cardinality objective by full enumeration of
/// anchor trajectories with per-target shortest-path matching. anchor = -1
/// optimizes the anchor choice as well.
ExhaustiveSolution exhaustive_ddto(const GridSystem& sys, int anchor = -1,
                                   std::int64_t budget = 10'000'000);

struct TheoremReport {
  bool branch_time_matches = true;     // coincidence optimum equals branch time
  bool monotone_nonemptiness = true;   // nonempty propagates earlier, empty later
  bool monotone_target_sets = true;    // J_k subset of J_{k-1} in the optimum
  bool no_recoincidence = true;        // no coincidence after branch times
  bool counting_identity = true;       // objective + sum |J_k| = n N on the optimum
  std::string counterexample;          // non-empty on failure
  bool all_pass() const {
    return branch_time_matches && monotone_nonemptiness && monotone_target_sets &&
           no_recoincidence && counting_identity;
  }
};
TheoremReport check_theorems(const GridSystem& sys, std::int64_t budget = 10'000'000);

/// Longest shared feasible prefix from z0 that stays extendable to every
/// target in J — the trajectory-space route to the branch time, computed
/// without the reachable-set machinery.
int coincidence_optimum_enumerated(const GridSystem& sys, const std::vector<int>& J);

// Serialization of explicit instances (transition table form) so
// counterexamples are replayable.
std::string to_json(const GridSystem& sys);
GridSystem from_json(const std::string& json_text);

/// Deterministic random instance families used by the bundled corpus.
GridSystem random_integrator_instance(unsigned seed, int max_targets = 3, int max_horizon = 5);

/// Remark-style counterexample system: x+ = x + (u, u^2), a'x <= 9,
/// integer inputs -3..3.
GridSystem remark1_instance();

}  // namespace ddto::oracle
