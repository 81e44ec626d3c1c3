#pragma once

#include <string>

#include "ddto/scenario.hpp"
#include "ddto/types.hpp"

namespace ddto::io {

/// Canonical JSON encoding of a tree (shortest round-trip decimals, ordered
/// keys) so identical trees serialize to identical bytes.
std::string tree_to_json(const DdtoTree& tree);
DdtoTree tree_from_json(const std::string& text);

void write_tree(const DdtoTree& tree, const std::string& path);
DdtoTree read_tree(const std::string& path);

/// One row per time step: index, time, state, input, cumulative input cost.
void write_trajectory_csv(const FullPath& path_data, const Scenario& sc,
                          const std::string& path);

/// plotdata/target_<j>.csv series: position, speed, cumulative cost, thrust
/// magnitude, pointing angle.
void write_plotdata(const DdtoTree& tree, const Scenario& sc, const std::string& dir);

}  // namespace ddto::io
