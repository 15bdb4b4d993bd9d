// fhdp: scenario generation, planning, DQN training, fault simulation,
// and report aggregation for federated pipeline training over vehicular
// clusters.
//
// Exit codes: 0 success, 2 usage or validation error, 3 nothing feasible,
// 4 a simulated round aborted.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fhdp/plan.hpp"
#include "fhdp/scenario.hpp"
#include "fhdp/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitAborted = 4;
constexpr int kReportSchemaVersion = 1;

std::string output_root() {
  const char* root = std::getenv("FHDP_OUTPUT_ROOT");
  if (root && *root) return std::string(root);
  return ".";
}

/// Explicit --out wins; otherwise the default name under the output root.
std::string resolve_out(const std::string& flag, const std::string& fallback) {
  fs::path path = flag.empty() ? fs::path(output_root()) / fallback
                               : fs::path(flag);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path.string();
}

fhdp::RecoveryMode recovery_mode_from_string(const std::string& s) {
  if (s == "templates") return fhdp::RecoveryMode::kTemplates;
  if (s == "elastic") return fhdp::RecoveryMode::kElastic;
  if (s == "relaunch") return fhdp::RecoveryMode::kRelaunch;
  throw std::invalid_argument("unknown recovery mode '" + s +
                              "' (templates|elastic|relaunch)");
}

fhdp::Scenario load_scenario_with_warnings(const std::string& path) {
  fhdp::Scenario scenario = fhdp::load_scenario(path);
  for (const std::string& w : fhdp::scenario_warnings(scenario))
    std::cerr << "warning: " << w << "\n";
  return scenario;
}

struct GenerateArgs {
  fhdp::GenerateOptions opt;
  std::string out;
};

int cmd_generate(const GenerateArgs& args) {
  fhdp::Scenario scenario = fhdp::generate_scenario(args.opt);
  std::string path = resolve_out(args.out, scenario.name + ".json");
  fhdp::save_scenario(scenario, path);
  std::cout << "scenario " << scenario.name << " hash "
            << fhdp::scenario_hash(scenario) << " -> " << path << "\n";
  return kExitOk;
}

struct PlanArgs {
  std::string scenario_path;
  std::string scheduler = "swift";
  std::string policy_path;
  std::uint64_t seed = 0;
  std::string out;
};

/// Loads a policy and warns when it was trained against another scenario.
std::optional<fhdp::ValueFunction> maybe_load_policy(
    const std::string& path, const std::string& scenario_hash) {
  if (path.empty()) return std::nullopt;
  std::string trained_for;
  fhdp::ValueFunction policy = fhdp::load_policy(path, &trained_for);
  if (trained_for != scenario_hash)
    std::cerr << "warning: policy was trained for scenario " << trained_for
              << " but this scenario hashes to " << scenario_hash << "\n";
  return policy;
}

int cmd_plan(const PlanArgs& args) {
  fhdp::Scenario scenario = load_scenario_with_warnings(args.scenario_path);
  std::string hash = fhdp::scenario_hash(scenario);
  std::optional<fhdp::ValueFunction> policy =
      maybe_load_policy(args.policy_path, hash);

  fhdp::Plan plan = fhdp::build_plan(scenario, args.scheduler, args.seed,
                                     policy ? &*policy : nullptr);
  std::string path = resolve_out(args.out, scenario.name + "-" +
                                               args.scheduler + "-plan.json");
  fhdp::save_plan(plan, path);

  for (const std::string& w : plan.warnings)
    std::cerr << "warning: " << w << "\n";
  std::cout << "plan " << args.scheduler << " for scenario " << scenario.name
            << " hash " << hash << " -> " << path << "\n";
  std::cout << "  admissions: " << plan.admissions.size() << ", clusters: "
            << plan.clusters.size() << ", unclustered: "
            << plan.unclustered.size() << "\n";
  for (const fhdp::PlannedCluster& c : plan.clusters) {
    double best = 0.0;
    bool first = true;
    for (const fhdp::PlannedTemplate& t : c.templates)
      if (t.valid() && (first || t.tmpl.predicted_path_time_s < best)) {
        best = t.tmpl.predicted_path_time_s;
        first = false;
      }
    std::cout << "  cluster " << c.cluster.anchor_vehicle << ": "
              << c.cluster.members.size() << " members, "
              << c.templates.size() << " templates, "
              << (c.feasible ? "feasible" : "infeasible");
    if (!first) std::cout << ", best t_path " << best << " s";
    std::cout << "\n";
  }
  if (plan.all_infeasible) {
    std::cerr << "error: no feasible cluster in this plan\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

struct TrainArgs {
  std::string scenario_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int episodes = 0;
  bool episodes_given = false;
  std::string out;
  std::string curve_out;
};

int cmd_train_dqn(const TrainArgs& args) {
  fhdp::Scenario scenario = load_scenario_with_warnings(args.scenario_path);
  std::string hash = fhdp::scenario_hash(scenario);
  fhdp::Plan plan = fhdp::build_plan(scenario, "swift", args.seed, nullptr);

  fhdp::FleetMap fleet = fhdp::fleet_of(scenario);
  std::vector<fhdp::SwiftInstance> instances;
  int n_max = 0;
  for (const fhdp::PlannedCluster& c : plan.clusters) {
    if (c.cluster.size() > scenario.model.unit_count()) {
      std::cerr << "warning: cluster " << c.cluster.anchor_vehicle << " has "
                << c.cluster.size() << " members but the model has only "
                << scenario.model.unit_count() << " units; skipped\n";
      continue;
    }
    instances.push_back(fhdp::make_swift_instance(
        c.cluster, fleet, scenario.model, scenario.cost, {},
        scenario.weights));
    n_max = std::max(n_max, c.cluster.size());
  }
  if (instances.empty()) {
    std::cerr << "error: no feasible clusters to train on\n";
    return kExitInfeasible;
  }

  fhdp::TrainParams params = scenario.train;
  if (args.seed_given) params.seed = args.seed;
  if (args.episodes_given) params.episodes = args.episodes;

  fhdp::SwiftPipelineEnv env(instances, n_max);
  fhdp::TrainResult result = fhdp::train(env, params);

  std::string path = resolve_out(args.out, scenario.name + "-policy.json");
  fhdp::save_policy(result.value_function, hash, path);
  if (!args.curve_out.empty())
    fhdp::write_learning_curve(result.curve,
                               resolve_out(args.curve_out, "curve.csv"));

  auto window_mean = [&](std::size_t begin, std::size_t end) {
    double sum = 0.0;
    for (std::size_t i = begin; i < end; ++i)
      sum += result.curve[i].total_return;
    return end > begin ? sum / static_cast<double>(end - begin) : 0.0;
  };
  std::size_t n = result.curve.size();
  std::size_t w = std::min<std::size_t>(100, n);
  std::cout << "policy for scenario " << scenario.name << " hash " << hash
            << " -> " << path << "\n";
  std::cout << "  episodes: " << n << ", first-" << w << " mean return "
            << window_mean(0, w) << ", last-" << w << " mean return "
            << window_mean(n - w, n) << "\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string scenario_path;
  std::string plan_path;
  std::string recovery;  // empty -> scenario default
  std::uint64_t seed = 0;
  double aggregation_overhead_s = 0.0;
  std::string out_dir;
};

int cmd_simulate(const SimulateArgs& args) {
  fhdp::Scenario scenario = load_scenario_with_warnings(args.scenario_path);
  fhdp::Plan plan = fhdp::load_plan(args.plan_path);
  if (plan.all_infeasible) {
    std::cerr << "error: the plan has no feasible cluster to simulate\n";
    return kExitInfeasible;
  }
  if (!args.recovery.empty())
    recovery_mode_from_string(args.recovery);  // fail fast on typos
  std::string mode_name = args.recovery.empty()
                              ? fhdp::to_string(scenario.recovery.mode)
                              : args.recovery;

  fs::path dir = args.out_dir.empty()
                     ? fs::path(output_root()) /
                           ("sim-" + scenario.name + "-" + plan.scheduler +
                            "-" + mode_name + "-s" +
                            std::to_string(args.seed))
                     : fs::path(args.out_dir);
  fs::create_directories(dir);

  fhdp::ScenarioSimResult result = fhdp::simulate_scenario(
      scenario, plan, args.recovery, args.seed, args.aggregation_overhead_s);
  for (const std::string& w : result.warnings)
    std::cerr << "warning: " << w << "\n";

  for (const auto& [anchor, events] : result.traces) {
    std::string trace_path =
        (dir / ("trace-" + std::to_string(anchor) + ".csv")).string();
    fhdp::write_trace_csv(events, trace_path);
  }
  for (ordered_json& cj : result.metrics["clusters"])
    cj["trace_file"] =
        "trace-" + std::to_string(cj.at("anchor_vehicle").get<int>()) +
        ".csv";

  std::string metrics_path = (dir / "metrics.json").string();
  std::ofstream out(metrics_path);
  if (!out) throw std::runtime_error("cannot open " + metrics_path);
  out << result.metrics.dump(2) << "\n";

  std::cout << "simulated " << result.traces.size() << " cluster(s) under "
            << result.metrics["recovery"].get<std::string>()
            << " recovery -> " << metrics_path << "\n";
  std::cout << "  fl_round_time_s: "
            << result.metrics["fl_round_time_s"].get<double>()
            << (result.aborted ? " (aborted)" : "") << "\n";
  return result.aborted ? kExitAborted : kExitOk;
}

struct ReportArgs {
  std::vector<std::string> metrics_paths;
  std::string out;
};

struct GroupStats {
  int runs = 0;
  int aborted_runs = 0;
  std::string scenario_hash;
  std::vector<double> round_time, recovery_time, redistributed, throughput,
      lost;
};

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

int cmd_report(const ReportArgs& args) {
  // Key: scenario, scheduler, recovery.
  std::map<std::tuple<std::string, std::string, std::string>, GroupStats>
      groups;
  for (const std::string& path : args.metrics_paths) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("report: cannot open " + path);
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("report: " + path + " is not valid JSON: " +
                                  e.what());
    }
    int version = j.at("schema_version").get<int>();
    if (version != fhdp::kMetricsSchemaVersion)
      throw std::invalid_argument(
          "report: " + path + " has metrics schema_version " +
          std::to_string(version) + " but this tool reads version " +
          std::to_string(fhdp::kMetricsSchemaVersion));

    GroupStats& g = groups[{j.at("scenario_name").get<std::string>(),
                            j.at("scheduler").get<std::string>(),
                            j.at("recovery").get<std::string>()}];
    g.runs += 1;
    g.scenario_hash = j.at("scenario_hash").get<std::string>();
    if (j.at("aborted").get<bool>()) g.aborted_runs += 1;
    g.round_time.push_back(j.at("fl_round_time_s").get<double>());

    double recovery_sum = 0.0, redistributed_sum = 0.0, throughput_sum = 0.0,
           lost_sum = 0.0;
    for (const json& cj : j.at("clusters")) {
      for (const json& r : cj.at("recovery_times_s"))
        recovery_sum += r.get<double>();
      redistributed_sum += cj.at("total_redistributed_bytes").get<double>();
      throughput_sum += cj.at("throughput_samples_per_s").get<double>();
      lost_sum += cj.at("lost_epochs").get<double>();
    }
    g.recovery_time.push_back(recovery_sum);
    g.redistributed.push_back(redistributed_sum);
    g.throughput.push_back(throughput_sum);
    g.lost.push_back(lost_sum);
  }

  std::string path = resolve_out(args.out, "report.csv");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << std::setprecision(17);  // round-trip exact doubles
  out << "# " << fhdp::kToolVersion << " report schema_version "
      << kReportSchemaVersion << "\n";
  out << "scenario,scenario_hash,scheduler,recovery,runs,"
         "round_time_mean,round_time_stddev,"
         "recovery_time_mean,recovery_time_stddev,"
         "redistributed_bytes_mean,redistributed_bytes_stddev,"
         "throughput_mean,throughput_stddev,"
         "lost_epochs_mean,aborted_runs\n";
  for (const auto& [key, g] : groups) {
    out << std::get<0>(key) << "," << g.scenario_hash << ","
        << std::get<1>(key) << "," << std::get<2>(key) << "," << g.runs << ","
        << mean_of(g.round_time) << "," << stddev_of(g.round_time) << ","
        << mean_of(g.recovery_time) << "," << stddev_of(g.recovery_time)
        << "," << mean_of(g.redistributed) << ","
        << stddev_of(g.redistributed) << "," << mean_of(g.throughput) << ","
        << stddev_of(g.throughput) << "," << mean_of(g.lost) << ","
        << g.aborted_runs << "\n";
  }
  std::cout << "report over " << args.metrics_paths.size() << " metrics file(s), "
            << groups.size() << " group(s) -> " << path << "\n";
  return kExitOk;
}

struct OracleArgs {
  std::string scenario_path;
  std::string policy_path;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_oracle(const OracleArgs& args) {
  fhdp::Scenario scenario = load_scenario_with_warnings(args.scenario_path);
  std::string hash = fhdp::scenario_hash(scenario);
  std::optional<fhdp::ValueFunction> policy =
      maybe_load_policy(args.policy_path, hash);

  fhdp::Plan swift_plan = fhdp::build_plan(scenario, "swift", args.seed,
                                           policy ? &*policy : nullptr);
  fhdp::Plan oracle_plan =
      fhdp::build_plan(scenario, "oracle", args.seed, nullptr);

  ordered_json report;
  report["schema_version"] = 1;
  report["tool_version"] = std::string(fhdp::kToolVersion);
  report["scenario_hash"] = hash;
  report["scenario_name"] = scenario.name;
  report["seed"] = args.seed;
  report["clusters"] = ordered_json::array();

  std::vector<double> gaps;
  for (std::size_t i = 0; i < oracle_plan.clusters.size(); ++i) {
    const fhdp::PlannedCluster& oc = oracle_plan.clusters[i];
    const fhdp::PlannedCluster* sc = nullptr;
    for (const fhdp::PlannedCluster& c : swift_plan.clusters)
      if (c.cluster.anchor_vehicle == oc.cluster.anchor_vehicle) sc = &c;

    ordered_json cj;
    cj["anchor_vehicle"] = oc.cluster.anchor_vehicle;
    cj["oracle_feasible"] = oc.feasible;
    cj["swift_feasible"] = sc != nullptr && sc->feasible;
    if (oc.feasible)
      cj["oracle_path_time_s"] = oc.templates[0].tmpl.predicted_path_time_s;
    if (sc != nullptr && sc->feasible) {
      double best = sc->templates[0].tmpl.predicted_path_time_s;
      for (const fhdp::PlannedTemplate& t : sc->templates)
        best = std::min(best, t.tmpl.predicted_path_time_s);
      cj["swift_path_time_s"] = best;
      if (oc.feasible) {
        double oracle_time = oc.templates[0].tmpl.predicted_path_time_s;
        double gap = (best - oracle_time) / oracle_time * 100.0;
        cj["gap_percent"] = gap;
        gaps.push_back(gap);
      }
    }
    report["clusters"].push_back(cj);
  }
  report["mean_gap_percent"] = mean_of(gaps);

  std::string path = resolve_out(args.out, scenario.name + "-oracle.json");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << report.dump(2) << "\n";

  std::cout << "oracle comparison for scenario " << scenario.name << " hash "
            << hash << " -> " << path << "\n";
  for (const ordered_json& cj : report["clusters"]) {
    std::cout << "  cluster " << cj.at("anchor_vehicle").get<int>() << ": ";
    if (cj.contains("gap_percent"))
      std::cout << "swift " << cj.at("swift_path_time_s").get<double>()
                << " s vs oracle " << cj.at("oracle_path_time_s").get<double>()
                << " s, gap " << cj.at("gap_percent").get<double>() << "%\n";
    else
      std::cout << "swift "
                << (cj.at("swift_feasible").get<bool>() ? "feasible"
                                                        : "infeasible")
                << ", oracle "
                << (cj.at("oracle_feasible").get<bool>() ? "feasible"
                                                         : "infeasible")
                << "\n";
  }
  if (swift_plan.all_infeasible && oracle_plan.all_infeasible) {
    std::cerr << "error: no feasible cluster under either scheduler\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fhdp: pipeline scheduling and fault-tolerant federated "
               "training over vehicular clusters"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand(
      "generate", "Write a complete scenario file from a preset");
  generate->add_option("--vehicles", gen.opt.vehicles, "Fleet size");
  generate->add_option("--preset", gen.opt.preset, "Device preset (jetson)");
  generate->add_option("--seed", gen.opt.seed, "Generation seed");
  generate->add_option("--name", gen.opt.name, "Scenario name");
  generate->add_option("--area", gen.opt.area_range_m, "Area side, meters");
  generate->add_option("--unit-distance", gen.opt.unit_distance_m,
                       "Grid cell side, meters");
  generate->add_option("--comm-radius", gen.opt.comm_radius_m,
                       "Communication radius, meters");
  generate->add_option("--dwell-min", gen.opt.dwell_min_s,
                       "Minimum true dwell, seconds");
  generate->add_option("--dwell-max", gen.opt.dwell_max_s,
                       "Maximum true dwell, seconds");
  generate->add_option("--observed-steps", gen.opt.observed_steps,
                       "Observed trajectory steps per vehicle");
  generate->add_option("--components", gen.opt.components,
                       "Model components");
  generate->add_option("--units-per-component", gen.opt.units_per_component,
                       "Units per component");
  generate->add_option("--model-scale", gen.opt.model_scale,
                       "Multiplier on per-unit parameter bytes and flops");
  generate->add_option("--batches", gen.opt.batches_per_epoch,
                       "Batches per epoch");
  generate->add_option("--batch-size", gen.opt.batch_size, "Batch size");
  generate->add_option("--out", gen.out, "Output path");

  PlanArgs plan_args;
  CLI::App* plan = app.add_subcommand(
      "plan", "Admission, clustering, scheduling, and validation");
  plan->add_option("--scenario", plan_args.scenario_path, "Scenario file")
      ->required();
  plan->add_option("--scheduler", plan_args.scheduler,
                   "swift|greedy|random|oracle");
  plan->add_option("--policy", plan_args.policy_path,
                   "Trained policy file (swift only)");
  plan->add_option("--seed", plan_args.seed, "Scheduling seed");
  plan->add_option("--out", plan_args.out, "Output path");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train-dqn", "Train the phase-2 scheduling policy on a scenario");
  train->add_option("--scenario", train_args.scenario_path, "Scenario file")
      ->required();
  CLI::Option* train_seed =
      train->add_option("--seed", train_args.seed, "Training seed");
  CLI::Option* train_episodes = train->add_option(
      "--episodes", train_args.episodes, "Episode budget override");
  train->add_option("--out", train_args.out, "Policy output path");
  train->add_option("--curve", train_args.curve_out,
                    "Learning-curve CSV output path");

  SimulateArgs sim_args;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run one federated round with fault injection");
  simulate->add_option("--scenario", sim_args.scenario_path, "Scenario file")
      ->required();
  simulate->add_option("--plan", sim_args.plan_path, "Plan file")->required();
  simulate->add_option("--recovery", sim_args.recovery,
                       "templates|elastic|relaunch (default: scenario)");
  simulate->add_option("--seed", sim_args.seed, "Fault-injection seed");
  simulate->add_option("--aggregation-overhead",
                       sim_args.aggregation_overhead_s,
                       "Inter-cluster aggregation overhead, seconds");
  simulate->add_option("--out-dir", sim_args.out_dir, "Output directory");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand(
      "report", "Aggregate metrics files into a plot-ready CSV");
  report->add_option("metrics", report_args.metrics_paths,
                     "Metrics JSON files")
      ->required();
  report->add_option("--out", report_args.out, "Output CSV path");
  std::uint64_t report_seed = 0;
  report->add_option("--seed", report_seed,
                     "Accepted for interface uniformity; aggregation is "
                     "deterministic");

  OracleArgs oracle_args;
  CLI::App* oracle = app.add_subcommand(
      "oracle", "Exhaustive optimum vs swift, per cluster");
  oracle->add_option("--scenario", oracle_args.scenario_path, "Scenario file")
      ->required();
  oracle->add_option("--policy", oracle_args.policy_path,
                     "Trained policy file for the swift side");
  oracle->add_option("--seed", oracle_args.seed, "Scheduling seed");
  oracle->add_option("--out", oracle_args.out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  train_args.seed_given = train_seed->count() > 0;
  train_args.episodes_given = train_episodes->count() > 0;

  try {
    if (app.got_subcommand(generate)) return cmd_generate(gen);
    if (app.got_subcommand(plan)) return cmd_plan(plan_args);
    if (app.got_subcommand(train)) return cmd_train_dqn(train_args);
    if (app.got_subcommand(simulate)) return cmd_simulate(sim_args);
    if (app.got_subcommand(report)) return cmd_report(report_args);
    if (app.got_subcommand(oracle)) return cmd_oracle(oracle_args);
  } catch (const fhdp::oracle_limit_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
