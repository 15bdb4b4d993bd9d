#include "fhdp/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fhdp/util.hpp"

namespace fhdp {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& message) {
  throw std::invalid_argument("scenario: " + message);
}

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) {
        known = true;
        break;
      }
    if (!known) fail("unknown key '" + ctx + "." + it.key() + "'");
  }
}

const json& require(const json& j, const std::string& ctx, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail("missing key '" + ctx + "." + key + "'");
  return *it;
}

double require_number(const json& j, const std::string& ctx, const char* key) {
  const json& v = require(j, ctx, key);
  if (!v.is_number()) fail("'" + ctx + "." + key + "' must be a number");
  return v.get<double>();
}

int require_int(const json& j, const std::string& ctx, const char* key) {
  const json& v = require(j, ctx, key);
  if (!v.is_number_integer()) fail("'" + ctx + "." + key + "' must be an integer");
  return v.get<int>();
}

std::uint64_t require_u64(const json& j, const std::string& ctx, const char* key) {
  const json& v = require(j, ctx, key);
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<long long>() < 0))
    fail("'" + ctx + "." + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string require_string(const json& j, const std::string& ctx, const char* key) {
  const json& v = require(j, ctx, key);
  if (!v.is_string()) fail("'" + ctx + "." + key + "' must be a string");
  return v.get<std::string>();
}

const json& require_array(const json& j, const std::string& ctx, const char* key) {
  const json& v = require(j, ctx, key);
  if (!v.is_array()) fail("'" + ctx + "." + key + "' must be an array");
  return v;
}

}  // namespace

RecoveryMode recovery_mode_from_string(const std::string& s) {
  if (s == "templates") return RecoveryMode::kTemplates;
  if (s == "elastic") return RecoveryMode::kElastic;
  if (s == "relaunch") return RecoveryMode::kRelaunch;
  fail("unknown recovery mode '" + s + "' (templates|elastic|relaunch)");
}

CommVolumeMode comm_volume_from_string(const std::string& s) {
  if (s == "partition_params") return CommVolumeMode::kPartitionParams;
  if (s == "boundary_activations") return CommVolumeMode::kBoundaryActivations;
  fail("unknown comm_volume '" + s + "' (partition_params|boundary_activations)");
}

std::string to_string(CommVolumeMode mode) {
  return mode == CommVolumeMode::kPartitionParams ? "partition_params"
                                                  : "boundary_activations";
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["schema_version"] = s.schema_version;
  j["tool_version"] = s.tool_version;
  j["name"] = s.name;
  j["seed"] = s.seed;

  ordered_json world;
  world["area_range_m"] = s.world.area_range_m;
  world["unit_distance_m"] = s.world.unit_distance_m;
  world["step_seconds"] = s.world.step_seconds;
  world["patterns"] = ordered_json::array();
  for (const PatternSpec& p : s.world.patterns) {
    ordered_json pj;
    pj["pattern_id"] = p.pattern_id;
    pj["type"] = p.type;
    if (p.type == "drift") {
      pj["drow"] = p.drow;
      pj["dcol"] = p.dcol;
      pj["p_move"] = p.p_move;
    } else if (p.type == "matrix") {
      pj["rows"] = p.rows;
    }
    world["patterns"].push_back(pj);
  }
  j["world"] = world;

  j["vehicles"] = ordered_json::array();
  for (const ScenarioVehicle& v : s.vehicles) {
    ordered_json vj;
    vj["vehicle_id"] = v.profile.vehicle_id;
    vj["memory_bytes"] = v.profile.memory_bytes;
    vj["compute_flops_per_s"] = v.profile.compute_flops_per_s;
    vj["link_bytes_per_s"] = v.profile.link_bytes_per_s;
    vj["comm_radius_m"] = v.profile.comm_radius_m;
    vj["pattern_id"] = v.pattern_id;
    vj["start_cell"] = v.start_cell;
    vj["arrival_time_s"] = v.arrival_time_s;
    vj["true_dwell_s"] = v.true_dwell_s;
    vj["observed_cells"] = v.observed_cells;
    j["vehicles"].push_back(vj);
  }

  ordered_json model;
  model["batches_per_epoch"] = s.model.batches_per_epoch();
  model["batch_size"] = s.model.batch_size();
  model["components"] = ordered_json::array();
  for (const NamedComponent& c : s.model.components()) {
    ordered_json cj;
    cj["name"] = c.name;
    cj["units"] = ordered_json::array();
    for (const ModelUnit& u : c.units) {
      ordered_json uj;
      uj["flops_per_sample"] = u.flops_per_sample;
      uj["param_bytes"] = u.param_bytes;
      uj["activation_bytes_per_sample"] = u.activation_bytes_per_sample;
      cj["units"].push_back(uj);
    }
    model["components"].push_back(cj);
  }
  j["model"] = model;

  ordered_json cost;
  cost["gpu_utilization"] = s.cost.gpu_utilization;
  cost["bandwidth_overhead"] = s.cost.bandwidth_overhead;
  cost["footprint_multiplier"] = s.cost.footprint_multiplier;
  cost["comm_volume"] = to_string(s.cost.comm_volume);
  j["cost"] = cost;

  ordered_json admission;
  admission["alpha"] = s.admission.alpha;
  admission["e_req"] = s.admission.e_req;
  admission["dwell_predictor"] = s.dwell_predictor;
  j["admission"] = admission;

  ordered_json clustering;
  clustering["alpha_prime"] = s.clustering.alpha_prime;
  clustering["beta"] = s.clustering.beta;
  clustering["stable_epochs"] = s.clustering.stable_epochs;
  clustering["lambda_size"] = s.clustering.lambda_size;
  j["clustering"] = clustering;

  ordered_json weights;
  weights["w1"] = s.weights.w1;
  weights["w2"] = s.weights.w2;
  weights["w3"] = s.weights.w3;
  weights["w4"] = s.weights.w4;
  j["swift_weights"] = weights;

  ordered_json train;
  train["episodes"] = s.train.episodes;
  train["replay_capacity"] = s.train.replay_capacity;
  train["batch_size"] = s.train.batch_size;
  train["gamma"] = s.train.gamma;
  train["epsilon_start"] = s.train.epsilon_start;
  train["epsilon_end"] = s.train.epsilon_end;
  train["epsilon_decay_episodes"] = s.train.epsilon_decay_episodes;
  train["target_sync_interval"] = s.train.target_sync_interval;
  train["updates_per_episode"] = s.train.updates_per_episode;
  train["hidden"] = s.train.hidden;
  train["learning_rate"] = s.train.optimizer.learning_rate;
  j["train"] = train;

  ordered_json faults;
  faults["hazard_rate_per_s"] = s.faults.hazard_rate_per_s;
  faults["disconnect_fraction"] = s.faults.disconnect_fraction;
  faults["disconnect_duration_s"] = s.faults.disconnect_duration_s;
  faults["scripted"] = ordered_json::array();
  for (const Fault& f : s.faults.scripted) {
    ordered_json fj;
    fj["vehicle_id"] = f.vehicle_id;
    fj["time_s"] = f.time_s;
    fj["kind"] = f.kind == FaultKind::kDeparture ? "departure" : "disconnect";
    fj["duration_s"] = f.duration_s;
    faults["scripted"].push_back(fj);
  }
  j["faults"] = faults;

  ordered_json recovery;
  recovery["mode"] = to_string(s.recovery.mode);
  recovery["template_s"] = s.recovery.overheads.template_s;
  recovery["elastic_s"] = s.recovery.overheads.elastic_s;
  recovery["relaunch_s"] = s.recovery.overheads.relaunch_s;
  recovery["checkpoint_interval_epochs"] = s.recovery.checkpoint_interval_epochs;
  j["recovery"] = recovery;

  ordered_json history = ordered_json::object();
  for (const auto& [pattern_id, dwells] : s.dwell_history)
    history[std::to_string(pattern_id)] = dwells;
  j["dwell_history"] = history;
  return j;
}

Scenario scenario_from_json(const json& j) {
  check_keys(j, "scenario",
             {"schema_version", "tool_version", "name", "seed", "world",
              "vehicles", "model",
              "cost", "admission", "clustering", "swift_weights", "train",
              "faults", "recovery", "dwell_history"});
  Scenario s;
  s.schema_version = require_int(j, "scenario", "schema_version");
  if (s.schema_version != kScenarioSchemaVersion)
    fail("schema_version is " + std::to_string(s.schema_version) +
         " but this tool reads version " + std::to_string(kScenarioSchemaVersion));
  s.tool_version = require_string(j, "scenario", "tool_version");
  s.name = require_string(j, "scenario", "name");
  s.seed = require_u64(j, "scenario", "seed");

  const json& world = require(j, "scenario", "world");
  check_keys(world, "world",
             {"area_range_m", "unit_distance_m", "step_seconds", "patterns"});
  s.world.area_range_m = require_number(world, "world", "area_range_m");
  s.world.unit_distance_m = require_number(world, "world", "unit_distance_m");
  s.world.step_seconds = require_number(world, "world", "step_seconds");
  for (const json& pj : require_array(world, "world", "patterns")) {
    check_keys(pj, "pattern",
               {"pattern_id", "type", "drow", "dcol", "p_move", "rows"});
    PatternSpec p;
    p.pattern_id = require_int(pj, "pattern", "pattern_id");
    p.type = require_string(pj, "pattern", "type");
    if (p.type == "drift") {
      p.drow = require_int(pj, "pattern", "drow");
      p.dcol = require_int(pj, "pattern", "dcol");
      p.p_move = require_number(pj, "pattern", "p_move");
    } else if (p.type == "matrix") {
      const json& rows = require_array(pj, "pattern", "rows");
      for (const json& row : rows) {
        if (!row.is_array()) fail("pattern.rows must be an array of arrays");
        p.rows.push_back(row.get<std::vector<double>>());
      }
    } else if (p.type != "identity" && p.type != "random_walk") {
      fail("unknown pattern type '" + p.type +
           "' (identity|random_walk|drift|matrix)");
    }
    s.world.patterns.push_back(std::move(p));
  }

  for (const json& vj : require_array(j, "scenario", "vehicles")) {
    check_keys(vj, "vehicle",
               {"vehicle_id", "memory_bytes", "compute_flops_per_s",
                "link_bytes_per_s", "comm_radius_m", "pattern_id", "start_cell",
                "arrival_time_s", "true_dwell_s", "observed_cells"});
    ScenarioVehicle v;
    v.profile.vehicle_id = require_int(vj, "vehicle", "vehicle_id");
    v.profile.memory_bytes = require_number(vj, "vehicle", "memory_bytes");
    v.profile.compute_flops_per_s =
        require_number(vj, "vehicle", "compute_flops_per_s");
    v.profile.link_bytes_per_s = require_number(vj, "vehicle", "link_bytes_per_s");
    v.profile.comm_radius_m = require_number(vj, "vehicle", "comm_radius_m");
    v.pattern_id = require_int(vj, "vehicle", "pattern_id");
    v.start_cell = require_int(vj, "vehicle", "start_cell");
    v.arrival_time_s = require_number(vj, "vehicle", "arrival_time_s");
    v.true_dwell_s = require_number(vj, "vehicle", "true_dwell_s");
    const json& cells = require_array(vj, "vehicle", "observed_cells");
    for (const json& c : cells) {
      if (!c.is_number_integer()) fail("vehicle.observed_cells must be integers");
      v.observed_cells.push_back(c.get<int>());
    }
    s.vehicles.push_back(std::move(v));
  }

  const json& model = require(j, "scenario", "model");
  check_keys(model, "model", {"batches_per_epoch", "batch_size", "components"});
  std::vector<NamedComponent> components;
  for (const json& cj : require_array(model, "model", "components")) {
    check_keys(cj, "component", {"name", "units"});
    NamedComponent c;
    c.name = require_string(cj, "component", "name");
    for (const json& uj : require_array(cj, "component", "units")) {
      check_keys(uj, "unit",
                 {"flops_per_sample", "param_bytes", "activation_bytes_per_sample"});
      ModelUnit u;
      u.flops_per_sample = require_number(uj, "unit", "flops_per_sample");
      u.param_bytes = require_number(uj, "unit", "param_bytes");
      u.activation_bytes_per_sample =
          require_number(uj, "unit", "activation_bytes_per_sample");
      c.units.push_back(u);
    }
    components.push_back(std::move(c));
  }
  s.model = ModelProfile(std::move(components),
                         require_int(model, "model", "batches_per_epoch"),
                         require_int(model, "model", "batch_size"));

  const json& cost = require(j, "scenario", "cost");
  check_keys(cost, "cost",
             {"gpu_utilization", "bandwidth_overhead", "footprint_multiplier",
              "comm_volume"});
  s.cost.gpu_utilization = require_number(cost, "cost", "gpu_utilization");
  s.cost.bandwidth_overhead = require_number(cost, "cost", "bandwidth_overhead");
  s.cost.footprint_multiplier =
      require_number(cost, "cost", "footprint_multiplier");
  s.cost.comm_volume =
      comm_volume_from_string(require_string(cost, "cost", "comm_volume"));

  const json& admission = require(j, "scenario", "admission");
  check_keys(admission, "admission", {"alpha", "e_req", "dwell_predictor"});
  s.admission.alpha = require_number(admission, "admission", "alpha");
  s.admission.e_req = require_int(admission, "admission", "e_req");
  s.dwell_predictor = require_string(admission, "admission", "dwell_predictor");

  const json& clustering = require(j, "scenario", "clustering");
  check_keys(clustering, "clustering",
             {"alpha_prime", "beta", "stable_epochs", "lambda_size"});
  s.clustering.alpha_prime = require_number(clustering, "clustering", "alpha_prime");
  s.clustering.beta = require_number(clustering, "clustering", "beta");
  s.clustering.stable_epochs = require_int(clustering, "clustering", "stable_epochs");
  s.clustering.lambda_size = require_number(clustering, "clustering", "lambda_size");

  const json& weights = require(j, "scenario", "swift_weights");
  check_keys(weights, "swift_weights", {"w1", "w2", "w3", "w4"});
  s.weights.w1 = require_number(weights, "swift_weights", "w1");
  s.weights.w2 = require_number(weights, "swift_weights", "w2");
  s.weights.w3 = require_number(weights, "swift_weights", "w3");
  s.weights.w4 = require_number(weights, "swift_weights", "w4");

  const json& train = require(j, "scenario", "train");
  check_keys(train, "train",
             {"episodes", "replay_capacity", "batch_size", "gamma",
              "epsilon_start", "epsilon_end", "epsilon_decay_episodes",
              "target_sync_interval", "updates_per_episode", "hidden",
              "learning_rate"});
  s.train.episodes = require_int(train, "train", "episodes");
  s.train.replay_capacity =
      static_cast<std::size_t>(require_u64(train, "train", "replay_capacity"));
  s.train.batch_size =
      static_cast<std::size_t>(require_u64(train, "train", "batch_size"));
  s.train.gamma = require_number(train, "train", "gamma");
  s.train.epsilon_start = require_number(train, "train", "epsilon_start");
  s.train.epsilon_end = require_number(train, "train", "epsilon_end");
  s.train.epsilon_decay_episodes =
      require_int(train, "train", "epsilon_decay_episodes");
  s.train.target_sync_interval = require_int(train, "train", "target_sync_interval");
  s.train.updates_per_episode = require_int(train, "train", "updates_per_episode");
  const json& hidden = require_array(train, "train", "hidden");
  s.train.hidden.clear();
  for (const json& h : hidden) {
    if (!h.is_number_integer()) fail("train.hidden must be integers");
    s.train.hidden.push_back(h.get<int>());
  }
  s.train.optimizer.learning_rate = require_number(train, "train", "learning_rate");
  s.train.seed = s.seed;

  const json& faults = require(j, "scenario", "faults");
  check_keys(faults, "faults",
             {"hazard_rate_per_s", "disconnect_fraction", "disconnect_duration_s",
              "scripted"});
  s.faults.hazard_rate_per_s = require_number(faults, "faults", "hazard_rate_per_s");
  s.faults.disconnect_fraction =
      require_number(faults, "faults", "disconnect_fraction");
  s.faults.disconnect_duration_s =
      require_number(faults, "faults", "disconnect_duration_s");
  for (const json& fj : require_array(faults, "faults", "scripted")) {
    check_keys(fj, "fault", {"vehicle_id", "time_s", "kind", "duration_s"});
    Fault f;
    f.vehicle_id = require_int(fj, "fault", "vehicle_id");
    f.time_s = require_number(fj, "fault", "time_s");
    std::string kind = require_string(fj, "fault", "kind");
    if (kind == "departure")
      f.kind = FaultKind::kDeparture;
    else if (kind == "disconnect")
      f.kind = FaultKind::kDisconnect;
    else
      fail("unknown fault kind '" + kind + "' (departure|disconnect)");
    f.duration_s = require_number(fj, "fault", "duration_s");
    s.faults.scripted.push_back(f);
  }

  const json& recovery = require(j, "scenario", "recovery");
  check_keys(recovery, "recovery",
             {"mode", "template_s", "elastic_s", "relaunch_s",
              "checkpoint_interval_epochs"});
  s.recovery.mode =
      recovery_mode_from_string(require_string(recovery, "recovery", "mode"));
  s.recovery.overheads.template_s = require_number(recovery, "recovery", "template_s");
  s.recovery.overheads.elastic_s = require_number(recovery, "recovery", "elastic_s");
  s.recovery.overheads.relaunch_s =
      require_number(recovery, "recovery", "relaunch_s");
  s.recovery.checkpoint_interval_epochs =
      require_int(recovery, "recovery", "checkpoint_interval_epochs");

  const json& history = require(j, "scenario", "dwell_history");
  if (!history.is_object()) fail("dwell_history must be an object");
  for (auto it = history.begin(); it != history.end(); ++it) {
    int pattern_id = 0;
    try {
      pattern_id = std::stoi(it.key());
    } catch (const std::exception&) {
      fail("dwell_history key '" + it.key() + "' is not a pattern id");
    }
    if (!it.value().is_array()) fail("dwell_history values must be arrays");
    s.dwell_history[pattern_id] = it.value().get<std::vector<double>>();
  }
  return s;
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("scenario: cannot open " + path);
  out << scenario_to_json(s).dump(2) << "\n";
  if (!out) throw std::runtime_error("scenario: write failed for " + path);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("scenario: " + path + " is not valid JSON: " +
                                e.what());
  }
  Scenario s = scenario_from_json(j);
  validate_scenario(s);
  return s;
}

GridWorld world_of(const Scenario& s) {
  return GridWorld(s.world.area_range_m, s.world.unit_distance_m,
                   s.world.step_seconds);
}

MobilityPattern make_pattern(const GridWorld& world, const PatternSpec& spec) {
  if (spec.type == "identity") return identity_pattern(world.cell_count(), spec.pattern_id);
  if (spec.type == "random_walk") return random_walk_pattern(world, spec.pattern_id);
  if (spec.type == "drift")
    return drift_pattern(world, spec.drow, spec.dcol, spec.p_move, spec.pattern_id);
  if (spec.type == "matrix") {
    MobilityPattern p;
    p.pattern_id = spec.pattern_id;
    int n = static_cast<int>(spec.rows.size());
    p.transition = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(spec.rows[static_cast<std::size_t>(i)].size()) != n)
        fail("pattern " + std::to_string(spec.pattern_id) +
             ": matrix rows must be square");
      for (int c = 0; c < n; ++c)
        p.transition(i, c) = spec.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
    return p;
  }
  fail("unknown pattern type '" + spec.type + "'");
}

std::vector<MobilityPattern> patterns_of(const Scenario& s) {
  GridWorld world = world_of(s);
  std::vector<MobilityPattern> patterns;
  patterns.reserve(s.world.patterns.size());
  for (const PatternSpec& spec : s.world.patterns)
    patterns.push_back(make_pattern(world, spec));
  return patterns;
}

TrajectoryHistory history_of(const ScenarioVehicle& v, double step_seconds) {
  TrajectoryHistory h;
  h.vehicle_id = v.profile.vehicle_id;
  h.arrival_time_s = v.arrival_time_s;
  h.departure_time_s = v.arrival_time_s + v.true_dwell_s;
  std::int64_t step0 =
      static_cast<std::int64_t>(v.arrival_time_s / step_seconds);
  for (std::size_t i = 0; i < v.observed_cells.size(); ++i)
    h.observed.push_back(
        {step0 + static_cast<std::int64_t>(i), v.observed_cells[i]});
  return h;
}

FleetMap fleet_of(const Scenario& s) {
  FleetMap fleet;
  for (const ScenarioVehicle& v : s.vehicles)
    fleet.emplace(v.profile.vehicle_id, v.profile);
  return fleet;
}

std::unique_ptr<DwellPredictor> predictor_of(const Scenario& s) {
  if (s.dwell_predictor == "oracle")
    return std::make_unique<OracleDwellPredictor>(s.world.step_seconds);
  if (s.dwell_predictor == "mean") {
    std::map<int, std::vector<double>> by_pattern = s.dwell_history;
    if (by_pattern.empty())
      fail("dwell_predictor 'mean' needs a non-empty dwell_history");
    return std::make_unique<MeanDwellPredictor>(patterns_of(s), by_pattern);
  }
  fail("unknown dwell_predictor '" + s.dwell_predictor + "' (oracle|mean)");
}

void validate_scenario(const Scenario& s) {
  if (s.schema_version != kScenarioSchemaVersion)
    fail("schema_version is " + std::to_string(s.schema_version) +
         " but this tool reads version " + std::to_string(kScenarioSchemaVersion));
  if (s.world.area_range_m <= 0.0) fail("world.area_range_m must be positive");
  if (s.world.unit_distance_m <= 0.0 ||
      s.world.unit_distance_m > s.world.area_range_m)
    fail("world.unit_distance_m must be in (0, area_range_m]");
  if (s.world.step_seconds <= 0.0) fail("world.step_seconds must be positive");
  if (s.world.patterns.empty()) fail("world.patterns must be non-empty");

  GridWorld world = world_of(s);
  std::set<int> pattern_ids;
  for (const PatternSpec& spec : s.world.patterns) {
    if (!pattern_ids.insert(spec.pattern_id).second)
      fail("duplicate pattern_id " + std::to_string(spec.pattern_id));
    MobilityPattern p = make_pattern(world, spec);
    if (p.dim() != world.cell_count())
      fail("pattern " + std::to_string(spec.pattern_id) + " has dimension " +
           std::to_string(p.dim()) + ", world has " +
           std::to_string(world.cell_count()) + " cells");
    try {
      validate_pattern(world, p);
    } catch (const std::invalid_argument& e) {
      fail("pattern " + std::to_string(spec.pattern_id) + ": " + e.what());
    }
  }

  if (s.vehicles.empty()) fail("vehicles must be non-empty");
  std::set<int> vehicle_ids;
  for (const ScenarioVehicle& v : s.vehicles) {
    const std::string ctx = "vehicle " + std::to_string(v.profile.vehicle_id);
    if (!vehicle_ids.insert(v.profile.vehicle_id).second)
      fail("duplicate vehicle_id " + std::to_string(v.profile.vehicle_id));
    if (v.profile.memory_bytes <= 0.0) fail(ctx + ": memory_bytes must be positive");
    if (v.profile.compute_flops_per_s <= 0.0)
      fail(ctx + ": compute_flops_per_s must be positive");
    if (v.profile.link_bytes_per_s <= 0.0)
      fail(ctx + ": link_bytes_per_s must be positive");
    if (v.profile.comm_radius_m <= 0.0)
      fail(ctx + ": comm_radius_m must be positive");
    if (!pattern_ids.count(v.pattern_id))
      fail(ctx + ": pattern_id " + std::to_string(v.pattern_id) + " not defined");
    if (!world.valid_cell(v.start_cell)) fail(ctx + ": start_cell out of range");
    if (v.arrival_time_s < 0.0) fail(ctx + ": arrival_time_s must be >= 0");
    if (v.true_dwell_s <= 0.0) fail(ctx + ": true_dwell_s must be positive");
    if (v.observed_cells.empty()) fail(ctx + ": observed_cells must be non-empty");
    for (int cell : v.observed_cells)
      if (!world.valid_cell(cell)) fail(ctx + ": observed cell out of range");
  }

  if (s.model.unit_count() == 0) fail("model has no units");
  validate_cost_params(s.cost);
  validate_admission_params(s.admission);
  if (s.dwell_predictor != "oracle" && s.dwell_predictor != "mean")
    fail("unknown dwell_predictor '" + s.dwell_predictor + "' (oracle|mean)");
  if (s.dwell_predictor == "mean" && s.dwell_history.empty())
    fail("dwell_predictor 'mean' needs a non-empty dwell_history");
  validate_clustering_params(s.clustering);
  validate_weights(s.weights);
  validate_train_params(s.train);

  if (s.faults.hazard_rate_per_s < 0.0)
    fail("faults.hazard_rate_per_s must be >= 0");
  if (s.faults.disconnect_fraction < 0.0 || s.faults.disconnect_fraction > 1.0)
    fail("faults.disconnect_fraction must be in [0, 1]");
  if (s.faults.disconnect_duration_s <= 0.0)
    fail("faults.disconnect_duration_s must be positive");
  for (const Fault& f : s.faults.scripted) {
    if (!vehicle_ids.count(f.vehicle_id))
      fail("scripted fault references unknown vehicle " +
           std::to_string(f.vehicle_id));
    if (f.time_s < 0.0) fail("scripted fault time_s must be >= 0");
    if (f.kind == FaultKind::kDisconnect && f.duration_s <= 0.0)
      fail("scripted disconnect duration_s must be positive");
  }

  if (s.recovery.overheads.template_s < 0.0 ||
      s.recovery.overheads.elastic_s < 0.0 ||
      s.recovery.overheads.relaunch_s < 0.0)
    fail("recovery overheads must be >= 0");
  if (s.recovery.checkpoint_interval_epochs < 0)
    fail("recovery.checkpoint_interval_epochs must be >= 0");

  for (const auto& [pattern_id, dwells] : s.dwell_history) {
    if (!pattern_ids.count(pattern_id))
      fail("dwell_history references unknown pattern " +
           std::to_string(pattern_id));
    for (double d : dwells)
      if (!(d > 0.0)) fail("dwell_history entries must be positive");
  }
}

std::vector<std::string> scenario_warnings(const Scenario& s) {
  std::vector<std::string> warnings;
  if (s.cost.gpu_utilization < 0.3 || s.cost.gpu_utilization > 0.7)
    warnings.push_back("cost.gpu_utilization " +
                       format_double(s.cost.gpu_utilization) +
                       " is outside the documented range [0.3, 0.7]");
  if (s.cost.bandwidth_overhead < 1.1 || s.cost.bandwidth_overhead > 1.5)
    warnings.push_back("cost.bandwidth_overhead " +
                       format_double(s.cost.bandwidth_overhead) +
                       " is outside the documented range [1.1, 1.5]");
  return warnings;
}

std::string scenario_hash(const Scenario& s) {
  return to_hex(fnv1a64(scenario_to_json(s).dump()));
}

namespace {

struct DeviceSpec {
  const char* label;
  double memory_bytes;
  double compute_flops_per_s;
  double link_bytes_per_s;
};

// Embedded edge-device table for --preset jetson: Xavier NX and Nano class
// boards at 8 GB, the AGX class at 32 GB, all with a 12.5 MB/s V2V link.
constexpr DeviceSpec kJetsonDevices[] = {
    {"xavier-nx", 8e9, 0.404e12, 12.5e6},
    {"nano", 8e9, 0.472e12, 12.5e6},
    {"agx", 32e9, 3.85e12, 12.5e6},
};

}  // namespace

Scenario generate_scenario(const GenerateOptions& options) {
  if (options.vehicles < 1) fail("generate: vehicles must be >= 1");
  if (options.preset != "jetson")
    fail("generate: unknown preset '" + options.preset + "' (jetson)");
  if (options.components < 1 || options.units_per_component < 1)
    fail("generate: model must have at least one component and unit");
  if (options.dwell_min_s <= 0.0 || options.dwell_max_s < options.dwell_min_s)
    fail("generate: dwell range must satisfy 0 < min <= max");
  if (options.model_scale <= 0.0) fail("generate: model_scale must be positive");
  if (options.observed_steps < 1) fail("generate: observed_steps must be >= 1");

  Scenario s;
  s.seed = options.seed;
  s.name = options.name.empty()
               ? options.preset + "-v" + std::to_string(options.vehicles) + "-s" +
                     std::to_string(options.seed)
               : options.name;
  s.world.area_range_m = options.area_range_m;
  s.world.unit_distance_m = options.unit_distance_m;
  s.world.step_seconds = 1.0;
  s.world.patterns = {
      {0, "random_walk", 0, 0, 0.0, {}},
      {1, "drift", 0, 1, 0.8, {}},
      {2, "drift", 1, 0, 0.8, {}},
  };

  GridWorld world = world_of(s);
  std::mt19937_64 rng = make_rng(options.seed, "scenario-generate");
  std::uniform_int_distribution<int> pattern_draw(
      0, static_cast<int>(s.world.patterns.size()) - 1);
  std::uniform_int_distribution<int> cell_draw(0, world.cell_count() - 1);
  std::uniform_real_distribution<double> dwell_draw(options.dwell_min_s,
                                                    options.dwell_max_s);
  std::vector<MobilityPattern> patterns = patterns_of(s);

  for (int i = 0; i < options.vehicles; ++i) {
    const DeviceSpec& device =
        kJetsonDevices[static_cast<std::size_t>(i) % std::size(kJetsonDevices)];
    ScenarioVehicle v;
    v.profile.vehicle_id = i + 1;
    v.profile.memory_bytes = device.memory_bytes;
    v.profile.compute_flops_per_s = device.compute_flops_per_s;
    v.profile.link_bytes_per_s = device.link_bytes_per_s;
    v.profile.comm_radius_m = options.comm_radius_m;
    v.pattern_id = s.world.patterns[static_cast<std::size_t>(pattern_draw(rng))]
                       .pattern_id;
    v.start_cell = cell_draw(rng);
    v.arrival_time_s = 0.0;
    v.true_dwell_s = dwell_draw(rng);
    const MobilityPattern* pattern = nullptr;
    for (const MobilityPattern& p : patterns)
      if (p.pattern_id == v.pattern_id) pattern = &p;
    TrajectoryHistory h = generate_trajectory(
        *pattern, v.profile.vehicle_id, v.start_cell, options.observed_steps,
        v.arrival_time_s, v.arrival_time_s + v.true_dwell_s, rng);
    for (const TrajectoryObservation& obs : h.observed)
      v.observed_cells.push_back(obs.cell);
    s.vehicles.push_back(std::move(v));
  }

  std::vector<NamedComponent> components;
  for (int c = 0; c < options.components; ++c) {
    NamedComponent component;
    component.name = "block" + std::to_string(c);
    for (int u = 0; u < options.units_per_component; ++u)
      component.units.push_back(
          {options.unit_flops_per_sample * options.model_scale,
           options.unit_param_bytes * options.model_scale,
           options.unit_activation_bytes});
    components.push_back(std::move(component));
  }
  s.model = ModelProfile(std::move(components), options.batches_per_epoch,
                         options.batch_size);

  std::mt19937_64 history_rng = make_rng(options.seed, "scenario-dwell-history");
  for (const PatternSpec& p : s.world.patterns) {
    std::vector<double> dwells;
    for (int k = 0; k < 12; ++k) dwells.push_back(dwell_draw(history_rng));
    s.dwell_history[p.pattern_id] = std::move(dwells);
  }

  s.train.seed = options.seed;
  validate_scenario(s);
  return s;
}

}  // namespace fhdp
