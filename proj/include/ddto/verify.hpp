#pragma once

#include <string>
#include <vector>

#include "ddto/oracle.hpp"
#include "ddto/scenario.hpp"

namespace ddto::verify {

struct BatteryReport {
  int instances = 0;
  int failures = 0;
  std::vector<std::string> messages;
  bool pass() const { return instances > 0 && failures == 0; }
};

/// Deterministic randomized corpus. embeddable_only keeps the 1-D
/// single-integrator family whose grid feasibility coincides with the
/// continuous relaxation (integer-endpoint interval argument).
std::vector<oracle::GridSystem> bundled_corpus(int count, unsigned seed0, bool embeddable_only,
                                               int min_targets = 1);

/// Convex embedding of a 1-D single-integrator grid instance.
Scenario scenario_from_grid(const oracle::GridSystem& sys);

/// check_theorems over the corpus (coincidence optimum, monotonicity,
/// nested target sets, counting identity).
BatteryReport run_theorem_battery(int count = 50, unsigned seed0 = 1);

/// max_branch_time == branch_time_oracle on every feasible target subset of
/// every embeddable instance, plus bisection-transcript sanity.
BatteryReport run_qcvx_equivalence(int count = 12, unsigned seed0 = 1000);

/// branch_and_bound objective == exhaustive_ddto objective on embeddable
/// micro-instances.
BatteryReport run_micp_equivalence(int count = 8, unsigned seed0 = 2000);

}  // namespace ddto::verify
