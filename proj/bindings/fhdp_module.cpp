// Python bindings: a thin JSON-string interface over the planning stack
// plus direct access to the analytic cost model. Structured artifacts
// (scenarios, plans, policies, metrics) cross the boundary as JSON text so
// the Python side stays schema-agnostic.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fhdp/cost_model.hpp"
#include "fhdp/learner.hpp"
#include "fhdp/plan.hpp"
#include "fhdp/scenario.hpp"
#include "fhdp/simloop.hpp"
#include "fhdp/swift.hpp"
#include "fhdp/util.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

fhdp::Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: not valid JSON: ") +
                                e.what());
  }
  fhdp::Scenario s = fhdp::scenario_from_json(j);
  fhdp::validate_scenario(s);
  return s;
}

fhdp::Plan parse_plan(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("plan: not valid JSON: ") +
                                e.what());
  }
  return fhdp::plan_from_json(j);
}

std::string events_to_csv(const std::vector<fhdp::SimEvent>& events) {
  std::ostringstream out;
  out << "timestamp,kind,pipeline_id,vehicle_id,detail\n";
  for (const fhdp::SimEvent& e : events) {
    std::string detail = e.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << fhdp::format_double(e.timestamp_s) << "," << fhdp::to_string(e.kind)
        << "," << e.pipeline_id << "," << e.vehicle_id << "," << detail
        << "\n";
  }
  return out.str();
}

fhdp::CostParams cost_params(double mu, double nu) {
  fhdp::CostParams params;
  params.gpu_utilization = mu;
  params.bandwidth_overhead = nu;
  return params;
}

}  // namespace

PYBIND11_MODULE(_fhdp, m) {
  m.doc() = "Pipeline scheduling and fault-tolerant federated training over "
            "vehicular clusters";

  m.attr("TOOL_VERSION") = std::string(fhdp::kToolVersion);
  m.attr("SCENARIO_SCHEMA_VERSION") = fhdp::kScenarioSchemaVersion;
  m.attr("PLAN_SCHEMA_VERSION") = fhdp::kPlanSchemaVersion;
  m.attr("METRICS_SCHEMA_VERSION") = fhdp::kMetricsSchemaVersion;

  m.def(
      "generate_scenario",
      [](int vehicles, std::uint64_t seed, const std::string& preset,
         const std::string& name, double model_scale, int components,
         int units_per_component, double dwell_min_s, double dwell_max_s)
          -> std::string {
        fhdp::GenerateOptions opt;
        opt.vehicles = vehicles;
        opt.seed = seed;
        opt.preset = preset;
        opt.name = name;
        opt.model_scale = model_scale;
        opt.components = components;
        opt.units_per_component = units_per_component;
        opt.dwell_min_s = dwell_min_s;
        opt.dwell_max_s = dwell_max_s;
        return fhdp::scenario_to_json(fhdp::generate_scenario(opt)).dump(2);
      },
      py::arg("vehicles") = 5, py::arg("seed") = 0,
      py::arg("preset") = "jetson", py::arg("name") = "",
      py::arg("model_scale") = 1.0, py::arg("components") = 4,
      py::arg("units_per_component") = 3, py::arg("dwell_min_s") = 60.0,
      py::arg("dwell_max_s") = 600.0,
      "Deterministic scenario file content for a device preset.");

  m.def(
      "scenario_hash",
      [](const std::string& scenario_json) {
        return fhdp::scenario_hash(parse_scenario(scenario_json));
      },
      py::arg("scenario_json"),
      "Canonical fingerprint used to pair plans and policies to scenarios.");

  m.def(
      "scenario_warnings",
      [](const std::string& scenario_json) {
        return fhdp::scenario_warnings(parse_scenario(scenario_json));
      },
      py::arg("scenario_json"),
      "Non-fatal range warnings (validation errors raise ValueError).");

  m.def(
      "build_plan",
      [](const std::string& scenario_json, const std::string& scheduler,
         std::uint64_t seed,
         const std::optional<std::string>& policy_json) -> std::string {
        fhdp::Scenario scenario = parse_scenario(scenario_json);
        std::optional<fhdp::ValueFunction> policy;
        if (policy_json) policy = fhdp::policy_from_json(json::parse(*policy_json));
        fhdp::Plan plan = fhdp::build_plan(scenario, scheduler, seed,
                                           policy ? &*policy : nullptr);
        return fhdp::plan_to_json(plan).dump(2);
      },
      py::arg("scenario_json"), py::arg("scheduler") = "swift",
      py::arg("seed") = 0, py::arg("policy_json") = std::nullopt,
      "Admission, clustering, scheduling, and validation in one pass.");

  m.def(
      "train_policy",
      [](const std::string& scenario_json, std::optional<int> episodes,
         std::optional<std::uint64_t> seed) {
        fhdp::Scenario scenario = parse_scenario(scenario_json);
        fhdp::Plan plan = fhdp::build_plan(scenario, "swift",
                                           seed.value_or(0), nullptr);
        fhdp::FleetMap fleet = fhdp::fleet_of(scenario);
        std::vector<fhdp::SwiftInstance> instances;
        int n_max = 0;
        for (const fhdp::PlannedCluster& c : plan.clusters) {
          if (c.cluster.size() > scenario.model.unit_count()) continue;
          instances.push_back(fhdp::make_swift_instance(
              c.cluster, fleet, scenario.model, scenario.cost, {},
              scenario.weights));
          n_max = std::max(n_max, c.cluster.size());
        }
        if (instances.empty())
          throw std::invalid_argument(
              "train_policy: no feasible clusters to train on");
        fhdp::TrainParams params = scenario.train;
        if (seed) params.seed = *seed;
        if (episodes) params.episodes = *episodes;
        fhdp::SwiftPipelineEnv env(instances, n_max);
        fhdp::TrainResult result = fhdp::train(env, params);
        std::vector<std::pair<int, double>> curve;
        curve.reserve(result.curve.size());
        for (const fhdp::EpisodePoint& p : result.curve)
          curve.emplace_back(p.episode, p.total_return);
        std::string policy_json =
            fhdp::policy_to_json(result.value_function,
                                 fhdp::scenario_hash(scenario))
                .dump(2);
        return py::make_tuple(policy_json, curve);
      },
      py::arg("scenario_json"), py::arg("episodes") = std::nullopt,
      py::arg("seed") = std::nullopt,
      "Trains the phase-2 policy; returns (policy_json, learning curve).");

  m.def(
      "simulate_round",
      [](const std::string& scenario_json, const std::string& plan_json,
         const std::string& recovery, std::uint64_t seed,
         double aggregation_overhead_s) {
        fhdp::Scenario scenario = parse_scenario(scenario_json);
        fhdp::Plan plan = parse_plan(plan_json);
        fhdp::ScenarioSimResult result = fhdp::simulate_scenario(
            scenario, plan, recovery, seed, aggregation_overhead_s);
        py::dict traces;
        for (const auto& [anchor, events] : result.traces)
          traces[py::int_(anchor)] = events_to_csv(events);
        py::dict out;
        out["metrics_json"] = result.metrics.dump(2);
        out["traces"] = traces;
        out["aborted"] = result.aborted;
        out["warnings"] = result.warnings;
        return out;
      },
      py::arg("scenario_json"), py::arg("plan_json"),
      py::arg("recovery") = "", py::arg("seed") = 0,
      py::arg("aggregation_overhead_s") = 0.0,
      "One federated round per feasible cluster with fault injection.");

  m.def(
      "compute_time",
      [](double work_flops, double compute_flops_per_s, double mu,
         double nu) {
        return fhdp::compute_time(work_flops, compute_flops_per_s,
                                  cost_params(mu, nu));
      },
      py::arg("work_flops"), py::arg("compute_flops_per_s"),
      py::arg("mu") = 0.5, py::arg("nu") = 1.2,
      "Stage compute seconds: work x nu / (compute x mu).");

  m.def(
      "comm_time",
      [](double partition_param_bytes, int n_batch, double link_bytes_per_s,
         double mu, double nu) {
        return fhdp::comm_time(partition_param_bytes, n_batch,
                               link_bytes_per_s, cost_params(mu, nu));
      },
      py::arg("partition_param_bytes"), py::arg("n_batch"),
      py::arg("link_bytes_per_s"), py::arg("mu") = 0.5, py::arg("nu") = 1.2,
      "Stage transfer seconds: 2 x bytes x n_batch x nu / link.");
}
