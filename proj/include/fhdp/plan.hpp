#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fhdp/clustering.hpp"
#include "fhdp/learner.hpp"
#include "fhdp/scenario.hpp"
#include "fhdp/swift.hpp"

namespace fhdp {

inline constexpr int kPlanSchemaVersion = 1;

struct AdmissionRecord {
  int vehicle_id = 0;
  double predicted_dwell_s = 0.0;
  VehicleClass vehicle_class = VehicleClass::kIneligible;
};

/// A scheduled template together with its independent validator verdict.
struct PlannedTemplate {
  PipelineTemplate tmpl;
  std::vector<std::string> violations;  // empty -> valid

  bool valid() const { return violations.empty(); }
};

struct PlannedCluster {
  Cluster cluster;
  std::vector<PlannedTemplate> templates;  // rotation entries, one per start
  // Replacement template sets per potential failed member, for the
  // template-based recovery path. Only present for clusters of two or more.
  std::map<int, EssentialPipelineSet> template_pool;
  std::vector<std::string> warnings;
  bool feasible = false;  // at least one template and every template valid
};

/// The full planning artifact: admission verdicts, formed clusters, their
/// schedules, and validator results, fingerprinted against the scenario.
struct Plan {
  int schema_version = kPlanSchemaVersion;
  std::string tool_version;
  std::string scenario_hash;
  std::string scenario_name;
  std::string scheduler;  // swift | greedy | random | oracle
  std::uint64_t seed = 0;
  std::vector<AdmissionRecord> admissions;
  std::vector<int> unclustered;  // eligible vehicles left without a cluster
  std::vector<PlannedCluster> clusters;
  std::vector<std::string> warnings;
  bool all_infeasible = true;
};

/// admission -> clustering -> scheduler -> validation. The policy is used
/// by the swift scheduler's second phase when given (trained value
/// function); without it template generation falls back to depth-first
/// search. Throws std::invalid_argument on an unknown scheduler and
/// propagates oracle_limit_error from the oracle scheduler.
Plan build_plan(const Scenario& scenario, const std::string& scheduler,
                std::uint64_t seed, const ValueFunction* policy = nullptr);

/// The cluster's rotation as the simulator consumes it: valid templates
/// keyed by their start vehicle.
EssentialPipelineSet rotation_of(const PlannedCluster& cluster);
/// Member stability scores keyed by vehicle id.
std::map<int, double> stability_of(const PlannedCluster& cluster);

inline constexpr int kMetricsSchemaVersion = 1;

/// One federated round over every feasible cluster in the plan.
struct ScenarioSimResult {
  nlohmann::ordered_json metrics;               // metrics file content
  std::map<int, std::vector<SimEvent>> traces;  // keyed by anchor vehicle
  bool aborted = false;
  std::vector<std::string> warnings;
};

/// Simulates one round per feasible cluster: faults drawn from the
/// scenario's fault spec (scripted faults filtered to cluster members,
/// seed derived per anchor), recovery per `recovery` ("templates",
/// "elastic", "relaunch", or "" for the scenario default). Throws
/// std::invalid_argument when the plan's scenario hash does not match the
/// scenario. Infeasible clusters are skipped with a warning; a plan with
/// none leaves the metrics cluster list empty.
ScenarioSimResult simulate_scenario(const Scenario& scenario, const Plan& plan,
                                    const std::string& recovery,
                                    std::uint64_t seed,
                                    double aggregation_overhead_s = 0.0);

nlohmann::ordered_json plan_to_json(const Plan& plan);
Plan plan_from_json(const nlohmann::json& j);
void save_plan(const Plan& plan, const std::string& path);
Plan load_plan(const std::string& path);

/// Value-function serialization for the train verb's artifact.
nlohmann::ordered_json policy_to_json(const ValueFunction& policy,
                                      const std::string& scenario_hash);
ValueFunction policy_from_json(const nlohmann::json& j);
void save_policy(const ValueFunction& policy, const std::string& scenario_hash,
                 const std::string& path);
/// Returns the policy and, when scenario_hash_out is non-null, the scenario
/// fingerprint recorded at save time.
ValueFunction load_policy(const std::string& path,
                          std::string* scenario_hash_out = nullptr);

}  // namespace fhdp
