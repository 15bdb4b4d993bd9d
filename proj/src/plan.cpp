#include "fhdp/plan.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "fhdp/admission.hpp"
#include "fhdp/cost_model.hpp"
#include "fhdp/util.hpp"

namespace fhdp {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& message) {
  throw std::invalid_argument("plan: " + message);
}

VehicleClass vehicle_class_from_string(const std::string& s) {
  if (s == "ineligible") return VehicleClass::kIneligible;
  if (s == "resource_limited") return VehicleClass::kResourceLimited;
  if (s == "resource_sufficient") return VehicleClass::kResourceSufficient;
  fail("unknown vehicle class '" + s + "'");
}

ordered_json template_to_json(const PipelineTemplate& t) {
  ordered_json j;
  j["start_vehicle"] = t.stages.empty() ? -1 : t.stages.front().vehicle_id;
  j["generator"] = t.generator;
  j["predicted_path_time_s"] = t.predicted_path_time_s;
  j["stages"] = ordered_json::array();
  for (const StageAssignment& s : t.stages) {
    ordered_json sj;
    sj["vehicle_id"] = s.vehicle_id;
    sj["unit_begin"] = s.unit_begin;
    sj["unit_end"] = s.unit_end;
    j["stages"].push_back(sj);
  }
  return j;
}

PipelineTemplate template_from_json(const json& j) {
  PipelineTemplate t;
  t.generator = j.at("generator").get<std::string>();
  t.predicted_path_time_s = j.at("predicted_path_time_s").get<double>();
  for (const json& sj : j.at("stages")) {
    StageAssignment s;
    s.vehicle_id = sj.at("vehicle_id").get<int>();
    s.unit_begin = sj.at("unit_begin").get<int>();
    s.unit_end = sj.at("unit_end").get<int>();
    t.stages.push_back(s);
  }
  return t;
}

/// Schedules one instance with the selected strategy. Returns the rotation
/// templates (one per start for swift, a single template for baselines)
/// and appends scheduler warnings.
std::vector<PipelineTemplate> run_scheduler(const SwiftInstance& inst,
                                            const std::string& scheduler,
                                            std::uint64_t seed, int anchor,
                                            const ValueFunction* policy,
                                            std::vector<std::string>* warnings) {
  std::vector<PipelineTemplate> templates;
  if (scheduler == "swift") {
    EssentialPipelineSet set = build_essential_set(inst, policy);
    for (const auto& [start, tmpl] : set.pipelines) templates.push_back(tmpl);
    warnings->insert(warnings->end(), set.warnings.begin(), set.warnings.end());
  } else if (scheduler == "greedy") {
    if (auto t = baseline_greedy_matching(inst))
      templates.push_back(*t);
    else
      warnings->push_back("cluster " + std::to_string(anchor) +
                          ": greedy matching found no feasible pipeline");
  } else if (scheduler == "random") {
    std::uint64_t cluster_seed =
        derive_seed(seed, "plan-random-" + std::to_string(anchor));
    if (auto t = baseline_random(inst, cluster_seed))
      templates.push_back(*t);
    else
      warnings->push_back("cluster " + std::to_string(anchor) +
                          ": random search found no feasible pipeline");
  } else if (scheduler == "oracle") {
    if (auto t = enumerate_optimal(inst))
      templates.push_back(*t);
    else
      warnings->push_back("cluster " + std::to_string(anchor) +
                          ": exhaustive search found no feasible pipeline");
  } else {
    fail("unknown scheduler '" + scheduler + "' (swift|greedy|random|oracle)");
  }
  return templates;
}

}  // namespace

Plan build_plan(const Scenario& scenario, const std::string& scheduler,
                std::uint64_t seed, const ValueFunction* policy) {
  if (scheduler != "swift" && scheduler != "greedy" && scheduler != "random" &&
      scheduler != "oracle")
    fail("unknown scheduler '" + scheduler + "' (swift|greedy|random|oracle)");

  Plan plan;
  plan.tool_version = std::string(kToolVersion);
  plan.scenario_hash = scenario_hash(scenario);
  plan.scenario_name = scenario.name;
  plan.scheduler = scheduler;
  plan.seed = seed;

  GridWorld world = world_of(scenario);
  std::vector<MobilityPattern> patterns = patterns_of(scenario);
  FleetMap fleet = fleet_of(scenario);
  auto predictor = predictor_of(scenario);

  std::map<int, TrajectoryHistory> histories;
  std::map<int, double> dwells;
  for (const ScenarioVehicle& v : scenario.vehicles)
    histories.emplace(v.profile.vehicle_id,
                      history_of(v, scenario.world.step_seconds));

  for (const auto& [id, history] : histories) {
    DwellEstimate estimate = predict_dwell(history, *predictor);
    AdmissionRecord record;
    record.vehicle_id = id;
    record.predicted_dwell_s = estimate.predicted_dwell_s;
    record.vehicle_class = classify(fleet.at(id), estimate, scenario.model,
                                    scenario.admission, scenario.cost);
    dwells[id] = estimate.predicted_dwell_s;
    plan.admissions.push_back(record);
  }

  // Greedy partition: anchors in descending predicted dwell (ties by id);
  // each eligible vehicle joins at most one cluster.
  std::set<int> unassigned;
  for (const AdmissionRecord& r : plan.admissions)
    if (r.vehicle_class != VehicleClass::kIneligible)
      unassigned.insert(r.vehicle_id);

  double radius_den = scenario.world.unit_distance_m;
  while (!unassigned.empty()) {
    int anchor = *unassigned.begin();
    for (int id : unassigned)
      if (dwells[id] > dwells[anchor]) anchor = id;

    const VehicleProfile& anchor_profile = fleet.at(anchor);
    const TrajectoryHistory& anchor_history = histories.at(anchor);
    double radius_cells = anchor_profile.comm_radius_m / radius_den;
    std::vector<ClusterCandidate> candidates;
    for (int nb : unassigned) {
      const TrajectoryHistory& nb_history = histories.at(nb);
      if (world.cell_distance(anchor_history.current_cell(),
                              nb_history.current_cell()) > radius_cells)
        continue;
      candidates.push_back(make_candidate(world, patterns, anchor_profile,
                                          anchor_history, fleet.at(nb),
                                          nb_history, dwells[nb],
                                          dwells[anchor]));
    }

    std::optional<Cluster> cluster =
        form_cluster(anchor, candidates, scenario.model, scenario.clustering);
    if (!cluster) {
      plan.warnings.push_back("anchor " + std::to_string(anchor) +
                              ": no feasible cluster");
      plan.unclustered.push_back(anchor);
      unassigned.erase(anchor);
      continue;
    }
    for (const ClusterMember& m : cluster->members) unassigned.erase(m.vehicle_id);

    PlannedCluster planned;
    planned.cluster = *cluster;
    SwiftInstance inst = make_swift_instance(*cluster, fleet, scenario.model,
                                             scenario.cost, {}, scenario.weights);
    std::vector<PipelineTemplate> templates = run_scheduler(
        inst, scheduler, seed, cluster->anchor_vehicle, policy,
        &planned.warnings);
    for (PipelineTemplate& t : templates) {
      PlannedTemplate planned_t;
      planned_t.violations = validate_template(t, scenario.model, fleet,
                                               scenario.cost);
      planned_t.tmpl = std::move(t);
      planned.templates.push_back(std::move(planned_t));
    }
    planned.feasible = !planned.templates.empty() &&
                       std::all_of(planned.templates.begin(),
                                   planned.templates.end(),
                                   [](const PlannedTemplate& t) {
                                     return t.valid();
                                   });

    if (cluster->size() >= 2) {
      for (const ClusterMember& failed : cluster->members) {
        std::vector<SwiftMember> rest;
        for (const SwiftMember& m : inst.members())
          if (m.vehicle_id != failed.vehicle_id) rest.push_back(m);
        SwiftInstance sub(rest, scenario.model, scenario.cost, {},
                          scenario.weights);
        planned.template_pool.emplace(failed.vehicle_id,
                                      build_essential_set(sub, policy));
      }
    }
    plan.clusters.push_back(std::move(planned));
  }

  plan.all_infeasible =
      plan.clusters.empty() ||
      std::none_of(plan.clusters.begin(), plan.clusters.end(),
                   [](const PlannedCluster& c) { return c.feasible; });
  return plan;
}

EssentialPipelineSet rotation_of(const PlannedCluster& cluster) {
  EssentialPipelineSet set;
  for (const PlannedTemplate& t : cluster.templates) {
    if (!t.valid() || t.tmpl.stages.empty()) continue;
    set.pipelines.emplace(t.tmpl.stages.front().vehicle_id, t.tmpl);
  }
  return set;
}

std::map<int, double> stability_of(const PlannedCluster& cluster) {
  std::map<int, double> stability;
  for (const ClusterMember& m : cluster.cluster.members)
    stability.emplace(m.vehicle_id, m.stability);
  return stability;
}

ScenarioSimResult simulate_scenario(const Scenario& scenario, const Plan& plan,
                                    const std::string& recovery,
                                    std::uint64_t seed,
                                    double aggregation_overhead_s) {
  std::string hash = scenario_hash(scenario);
  if (plan.scenario_hash != hash)
    fail("plan was built for scenario hash " + plan.scenario_hash +
         " but the scenario hashes to " + hash);

  RecoveryMode mode;
  if (recovery.empty())
    mode = scenario.recovery.mode;
  else if (recovery == "templates")
    mode = RecoveryMode::kTemplates;
  else if (recovery == "elastic")
    mode = RecoveryMode::kElastic;
  else if (recovery == "relaunch")
    mode = RecoveryMode::kRelaunch;
  else
    fail("unknown recovery mode '" + recovery +
         "' (templates|elastic|relaunch)");

  FleetMap fleet = fleet_of(scenario);
  std::map<int, double> dwell_by_id;
  for (const ScenarioVehicle& v : scenario.vehicles)
    dwell_by_id[v.profile.vehicle_id] = v.true_dwell_s;

  ScenarioSimResult result;
  ordered_json& metrics = result.metrics;
  metrics["schema_version"] = kMetricsSchemaVersion;
  metrics["tool_version"] = std::string(kToolVersion);
  metrics["scenario_hash"] = hash;
  metrics["scenario_name"] = scenario.name;
  metrics["scheduler"] = plan.scheduler;
  metrics["recovery"] = to_string(mode);
  metrics["seed"] = seed;
  metrics["clusters"] = ordered_json::array();

  std::vector<double> round_times;
  for (const PlannedCluster& c : plan.clusters) {
    int anchor = c.cluster.anchor_vehicle;
    if (!c.feasible) {
      result.warnings.push_back("cluster " + std::to_string(anchor) +
                                " is infeasible; skipped");
      continue;
    }
    EssentialPipelineSet rotation = rotation_of(c);

    FaultSpec spec = scenario.faults;
    std::map<int, double> member_dwells;
    for (const ClusterMember& m : c.cluster.members)
      member_dwells[m.vehicle_id] = dwell_by_id.at(m.vehicle_id);
    spec.scripted.clear();
    for (const Fault& f : scenario.faults.scripted)
      if (member_dwells.count(f.vehicle_id)) spec.scripted.push_back(f);
    std::vector<Fault> faults = inject_faults(
        spec, member_dwells,
        derive_seed(seed, "sim-faults-" + std::to_string(anchor)));

    RoundConfig config;
    config.recovery = mode;
    config.overheads = scenario.recovery.overheads;
    config.checkpoint_interval_epochs =
        scenario.recovery.checkpoint_interval_epochs;
    config.stability = stability_of(c);

    SimResult sim = run_round(rotation, fleet, scenario.model, scenario.cost,
                              faults, c.template_pool, config);
    result.traces.emplace(anchor, std::move(sim.events));

    const RoundMetrics& m = sim.metrics;
    ordered_json cj;
    cj["anchor_vehicle"] = anchor;
    cj["round_time_s"] = m.round_time_s;
    cj["completed_epochs"] = m.completed_epochs;
    cj["lost_epochs"] = m.lost_epochs;
    cj["throughput_samples_per_s"] = m.throughput_samples_per_s;
    cj["recovery_times_s"] = m.recovery_times_s;
    cj["redistributed_bytes"] = m.redistributed_bytes;
    cj["total_redistributed_bytes"] = m.total_redistributed_bytes;
    cj["aborted"] = m.aborted;
    cj["status"] = m.status;
    cj["warnings"] = m.warnings;
    cj["pipeline_runs"] = ordered_json::array();
    for (const PipelineRun& run : m.pipeline_runs) {
      ordered_json rj;
      rj["start_vehicle"] = run.start_vehicle;
      rj["predicted_s"] = run.predicted_s;
      rj["simulated_s"] = run.simulated_s;
      rj["completed"] = run.completed;
      cj["pipeline_runs"].push_back(rj);
    }
    metrics["clusters"].push_back(cj);

    round_times.push_back(m.round_time_s);
    result.aborted = result.aborted || m.aborted;
    for (const std::string& w : m.warnings)
      result.warnings.push_back("cluster " + std::to_string(anchor) + ": " +
                                w);
  }

  metrics["fl_round_time_s"] =
      round_times.empty()
          ? 0.0
          : fl_round_accounting(round_times, aggregation_overhead_s);
  metrics["aborted"] = result.aborted;
  return result;
}

ordered_json plan_to_json(const Plan& plan) {
  ordered_json j;
  j["schema_version"] = plan.schema_version;
  j["tool_version"] = plan.tool_version;
  j["scenario_hash"] = plan.scenario_hash;
  j["scenario_name"] = plan.scenario_name;
  j["scheduler"] = plan.scheduler;
  j["seed"] = plan.seed;

  j["admissions"] = ordered_json::array();
  for (const AdmissionRecord& r : plan.admissions) {
    ordered_json rj;
    rj["vehicle_id"] = r.vehicle_id;
    rj["predicted_dwell_s"] = r.predicted_dwell_s;
    rj["class"] = to_string(r.vehicle_class);
    j["admissions"].push_back(rj);
  }
  j["unclustered"] = plan.unclustered;

  j["clusters"] = ordered_json::array();
  for (const PlannedCluster& c : plan.clusters) {
    ordered_json cj;
    cj["anchor_vehicle"] = c.cluster.anchor_vehicle;
    cj["members"] = ordered_json::array();
    for (const ClusterMember& m : c.cluster.members) {
      ordered_json mj;
      mj["vehicle_id"] = m.vehicle_id;
      mj["stability"] = m.stability;
      mj["memory_bytes"] = m.memory_bytes;
      mj["work_budget_flops"] = m.work_budget_flops;
      cj["members"].push_back(mj);
    }
    cj["aggregate_memory_bytes"] = c.cluster.aggregate_memory_bytes;
    cj["aggregate_work_budget_flops"] = c.cluster.aggregate_work_budget_flops;
    cj["stable_epochs"] = c.cluster.stable_epochs;
    cj["objective"] = c.cluster.objective;
    cj["memory_margin"] = c.cluster.memory_margin;
    cj["budget_margin"] = c.cluster.budget_margin;
    cj["templates"] = ordered_json::array();
    for (const PlannedTemplate& t : c.templates) {
      ordered_json tj = template_to_json(t.tmpl);
      tj["violations"] = t.violations;
      cj["templates"].push_back(tj);
    }
    ordered_json pool = ordered_json::object();
    for (const auto& [failed_id, set] : c.template_pool) {
      ordered_json pj;
      pj["pipelines"] = ordered_json::array();
      for (const auto& [start, tmpl] : set.pipelines)
        pj["pipelines"].push_back(template_to_json(tmpl));
      pj["warnings"] = set.warnings;
      pool[std::to_string(failed_id)] = pj;
    }
    cj["template_pool"] = pool;
    cj["warnings"] = c.warnings;
    cj["feasible"] = c.feasible;
    j["clusters"].push_back(cj);
  }
  j["warnings"] = plan.warnings;
  j["all_infeasible"] = plan.all_infeasible;
  return j;
}

Plan plan_from_json(const json& j) {
  Plan plan;
  plan.schema_version = j.at("schema_version").get<int>();
  if (plan.schema_version != kPlanSchemaVersion)
    fail("schema_version is " + std::to_string(plan.schema_version) +
         " but this tool reads version " + std::to_string(kPlanSchemaVersion));
  plan.tool_version = j.at("tool_version").get<std::string>();
  plan.scenario_hash = j.at("scenario_hash").get<std::string>();
  plan.scenario_name = j.at("scenario_name").get<std::string>();
  plan.scheduler = j.at("scheduler").get<std::string>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  for (const json& rj : j.at("admissions")) {
    AdmissionRecord r;
    r.vehicle_id = rj.at("vehicle_id").get<int>();
    r.predicted_dwell_s = rj.at("predicted_dwell_s").get<double>();
    r.vehicle_class = vehicle_class_from_string(rj.at("class").get<std::string>());
    plan.admissions.push_back(r);
  }
  plan.unclustered = j.at("unclustered").get<std::vector<int>>();
  for (const json& cj : j.at("clusters")) {
    PlannedCluster c;
    c.cluster.anchor_vehicle = cj.at("anchor_vehicle").get<int>();
    for (const json& mj : cj.at("members")) {
      ClusterMember m;
      m.vehicle_id = mj.at("vehicle_id").get<int>();
      m.stability = mj.at("stability").get<double>();
      m.memory_bytes = mj.at("memory_bytes").get<double>();
      m.work_budget_flops = mj.at("work_budget_flops").get<double>();
      c.cluster.members.push_back(m);
    }
    c.cluster.aggregate_memory_bytes =
        cj.at("aggregate_memory_bytes").get<double>();
    c.cluster.aggregate_work_budget_flops =
        cj.at("aggregate_work_budget_flops").get<double>();
    c.cluster.stable_epochs = cj.at("stable_epochs").get<int>();
    c.cluster.objective = cj.at("objective").get<double>();
    c.cluster.memory_margin = cj.at("memory_margin").get<double>();
    c.cluster.budget_margin = cj.at("budget_margin").get<double>();
    for (const json& tj : cj.at("templates")) {
      PlannedTemplate t;
      t.tmpl = template_from_json(tj);
      t.violations = tj.at("violations").get<std::vector<std::string>>();
      c.templates.push_back(std::move(t));
    }
    const json& pool = cj.at("template_pool");
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      EssentialPipelineSet set;
      for (const json& tj : it.value().at("pipelines")) {
        PipelineTemplate t = template_from_json(tj);
        int start = t.stages.empty() ? -1 : t.stages.front().vehicle_id;
        set.pipelines.emplace(start, std::move(t));
      }
      set.warnings =
          it.value().at("warnings").get<std::vector<std::string>>();
      c.template_pool.emplace(std::stoi(it.key()), std::move(set));
    }
    c.warnings = cj.at("warnings").get<std::vector<std::string>>();
    c.feasible = cj.at("feasible").get<bool>();
    plan.clusters.push_back(std::move(c));
  }
  plan.warnings = j.at("warnings").get<std::vector<std::string>>();
  plan.all_infeasible = j.at("all_infeasible").get<bool>();
  return plan;
}

void save_plan(const Plan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("plan: cannot open " + path);
  out << plan_to_json(plan).dump(2) << "\n";
  if (!out) throw std::runtime_error("plan: write failed for " + path);
}

Plan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("plan: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("plan: " + path + " is not valid JSON: " +
                                e.what());
  }
  return plan_from_json(j);
}

ordered_json policy_to_json(const ValueFunction& policy,
                            const std::string& scenario_hash) {
  ordered_json j;
  j["schema_version"] = kPlanSchemaVersion;
  j["tool_version"] = std::string(kToolVersion);
  j["scenario_hash"] = scenario_hash;
  j["state_dim"] = policy.state_dim();
  j["action_count"] = policy.action_count();
  j["hidden"] = policy.hidden();
  Eigen::VectorXd flat = policy.flat_parameters();
  std::vector<double> parameters(flat.data(), flat.data() + flat.size());
  j["parameters"] = parameters;
  return j;
}

ValueFunction policy_from_json(const json& j) {
  int version = j.at("schema_version").get<int>();
  if (version != kPlanSchemaVersion)
    fail("policy schema_version is " + std::to_string(version) +
         " but this tool reads version " + std::to_string(kPlanSchemaVersion));
  ValueFunction policy(j.at("state_dim").get<int>(),
                       j.at("action_count").get<int>(),
                       j.at("hidden").get<std::vector<int>>(), 0);
  std::vector<double> parameters =
      j.at("parameters").get<std::vector<double>>();
  if (static_cast<int>(parameters.size()) != policy.parameter_count())
    fail("policy has " + std::to_string(parameters.size()) +
         " parameters, expected " + std::to_string(policy.parameter_count()));
  policy.set_flat_parameters(Eigen::Map<const Eigen::VectorXd>(
      parameters.data(), static_cast<Eigen::Index>(parameters.size())));
  return policy;
}

void save_policy(const ValueFunction& policy, const std::string& scenario_hash,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("policy: cannot open " + path);
  out << policy_to_json(policy, scenario_hash).dump(2) << "\n";
  if (!out) throw std::runtime_error("policy: write failed for " + path);
}

ValueFunction load_policy(const std::string& path,
                          std::string* scenario_hash_out) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("policy: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("policy: " + path + " is not valid JSON: " +
                                e.what());
  }
  if (scenario_hash_out)
    *scenario_hash_out = j.at("scenario_hash").get<std::string>();
  return policy_from_json(j);
}

}  // namespace fhdp
