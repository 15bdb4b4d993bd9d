#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fhdp/admission.hpp"
#include "fhdp/clustering.hpp"
#include "fhdp/cost_model.hpp"
#include "fhdp/learner.hpp"
#include "fhdp/simloop.hpp"
#include "fhdp/swift.hpp"
#include "fhdp/util.hpp"
#include "fhdp/vehicle.hpp"
#include "fhdp/world.hpp"

namespace fhdp {

inline constexpr int kScenarioSchemaVersion = 1;

/// How a mobility pattern appears in the config file: either a named
/// factory ("identity", "random_walk", "drift") or an explicit row-
/// stochastic matrix.
struct PatternSpec {
  int pattern_id = 0;
  std::string type;  // identity | random_walk | drift | matrix
  int drow = 0;      // drift only
  int dcol = 0;      // drift only
  double p_move = 0.0;
  std::vector<std::vector<double>> rows;  // matrix only
};

struct WorldSpec {
  double area_range_m = 1000.0;
  double unit_distance_m = 100.0;
  double step_seconds = 1.0;
  std::vector<PatternSpec> patterns;
};

/// One configured vehicle: its resource profile plus the mobility ground
/// truth. true_dwell_s is oracle-only knowledge; non-oracle predictors see
/// just the observed cell trail.
struct ScenarioVehicle {
  VehicleProfile profile;
  int pattern_id = 0;
  int start_cell = 0;
  double arrival_time_s = 0.0;
  double true_dwell_s = 0.0;
  std::vector<int> observed_cells;
};

struct RecoveryConfig {
  RecoveryMode mode = RecoveryMode::kTemplates;
  RecoveryOverheads overheads;
  int checkpoint_interval_epochs = 5;
};

/// The complete experiment configuration: everything the pipeline from
/// admission to simulation consumes, in one versioned file.
struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string tool_version = std::string(kToolVersion);
  std::string name;
  std::uint64_t seed = 0;
  WorldSpec world;
  std::vector<ScenarioVehicle> vehicles;
  ModelProfile model;
  CostParams cost;
  AdmissionParams admission;
  std::string dwell_predictor = "oracle";  // oracle | mean
  ClusteringParams clustering;
  SwiftWeights weights;
  TrainParams train;
  FaultSpec faults;
  RecoveryConfig recovery;
  // Completed dwell samples per pattern id; the mean predictor's history.
  std::map<int, std::vector<double>> dwell_history;
};

RecoveryMode recovery_mode_from_string(const std::string& s);
CommVolumeMode comm_volume_from_string(const std::string& s);
std::string to_string(CommVolumeMode mode);

/// Canonical serialization: stable key order, shortest round-trip floats.
nlohmann::ordered_json scenario_to_json(const Scenario& s);
/// Structural parse. Unknown keys anywhere are errors; missing required
/// keys are errors naming the field. Does not run semantic validation.
Scenario scenario_from_json(const nlohmann::json& j);

void save_scenario(const Scenario& s, const std::string& path);
/// Parse + validate_scenario. Throws std::invalid_argument with the
/// offending field, or std::runtime_error on I/O failure.
Scenario load_scenario(const std::string& path);

/// Cross-field semantic validation (ids resolve, ranges hold, patterns are
/// row-stochastic and local). Throws std::invalid_argument.
void validate_scenario(const Scenario& s);
/// Non-fatal advisories: mu outside [0.3, 0.7], nu outside [1.1, 1.5].
std::vector<std::string> scenario_warnings(const Scenario& s);

/// FNV-1a 64-bit fingerprint of the canonical JSON text, in hex. Embedded
/// in every derived output file.
std::string scenario_hash(const Scenario& s);

// Reconstruction of runtime objects from the config.
GridWorld world_of(const Scenario& s);
MobilityPattern make_pattern(const GridWorld& world, const PatternSpec& spec);
std::vector<MobilityPattern> patterns_of(const Scenario& s);
TrajectoryHistory history_of(const ScenarioVehicle& v, double step_seconds);
FleetMap fleet_of(const Scenario& s);
std::unique_ptr<DwellPredictor> predictor_of(const Scenario& s);

struct GenerateOptions {
  int vehicles = 5;
  std::string preset = "jetson";
  std::uint64_t seed = 0;
  std::string name;  // empty -> "<preset>-v<vehicles>-s<seed>"
  double area_range_m = 1000.0;
  double unit_distance_m = 100.0;
  double comm_radius_m = 300.0;
  double dwell_min_s = 60.0;
  double dwell_max_s = 600.0;
  int observed_steps = 8;
  int components = 4;
  int units_per_component = 3;
  double unit_param_bytes = 4e8;
  double unit_flops_per_sample = 2e9;
  double unit_activation_bytes = 1e6;
  int batches_per_epoch = 10;
  int batch_size = 16;
  double model_scale = 1.0;  // multiplies param bytes and flops per unit
};

/// Deterministic scenario synthesis: vehicle profiles cycle through the
/// preset's device table, dwells and trajectories are drawn from named
/// sub-streams of the seed. Regeneration with equal options is
/// byte-identical. Throws std::invalid_argument on bad options (unknown
/// preset, vehicles < 1).
Scenario generate_scenario(const GenerateOptions& options);

}  // namespace fhdp
