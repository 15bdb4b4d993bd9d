#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fhdp {

/// One pipeline stage: a vehicle and its contiguous run of model units
/// [unit_begin, unit_end) in topological order.
struct StageAssignment {
  int vehicle_id = 0;
  int unit_begin = 0;
  int unit_end = 0;

  int unit_count() const { return unit_end - unit_begin; }
  friend bool operator==(const StageAssignment&, const StageAssignment&) = default;
};

/// An execution path (stage order) plus its partition strategy. The unit
/// the scheduler emits and the validator checks.
struct PipelineTemplate {
  std::vector<StageAssignment> stages;
  double predicted_path_time_s = 0.0;
  std::string generator;  // phase1 | dqn | greedy | random | oracle | dfs_fallback

  std::vector<int> path() const {
    std::vector<int> ids;
    ids.reserve(stages.size());
    for (const auto& s : stages) ids.push_back(s.vehicle_id);
    return ids;
  }
};

/// Execution-dependency DAG over cluster vehicles: edge (u, v) forces u to
/// finish (including its transfer) before v starts. An empty edge set is
/// the order-free DAG where any path is admissible.
struct ClusterDag {
  std::vector<std::pair<int, int>> edges;
};

}  // namespace fhdp
