#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace ddto {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;

/// One shared trajectory segment between consecutive branch points.
struct TrunkSegment {
  std::vector<Vec> states;
  std::vector<Vec> inputs;  // one fewer than states
  int start_index = 1;      // global time index of first state (1-based)
  int end_index = 1;        // global time index of last state
  std::vector<double> times;  // physical time stamps (continuous methods only)
};

/// Dedicated segment from a branch point to one target.
struct BranchSegment {
  int target = 0;  // 0-based target index
  std::vector<Vec> states;
  std::vector<Vec> inputs;
  int branch_time = 1;  // global time index where this target detaches
  Vec branch_point;
  std::vector<double> times;
  double branch_time_continuous = 0.0;
};

/// Tree of trunks and branches produced by every solution method.
struct DdtoTree {
  std::vector<TrunkSegment> trunks;
  std::vector<BranchSegment> branches;        // one per target, target order
  std::map<int, int> branch_times;            // target -> global time index
  std::map<int, double> branch_times_continuous;  // target -> seconds (scp)
};

// Full path to target j: trunk prefixes up to the branch point followed by
// the branch. States/inputs are concatenated without duplicating the shared
// knot at segment joints.
struct FullPath {
  std::vector<Vec> states;
  std::vector<Vec> inputs;
  std::vector<double> times;
};
FullPath full_path(const DdtoTree& tree, int target);

}  // namespace ddto
