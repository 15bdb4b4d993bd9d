#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fhdp/cost_model.hpp"
#include "fhdp/swift.hpp"
#include "fhdp/vehicle.hpp"

namespace fhdp {

enum class SimEventKind {
  kStageStart,
  kStageEnd,
  kTransferStart,
  kTransferEnd,
  kDeparture,
  kDisconnect,
  kReconnect,
  kCheckpoint,
  kRecoveryStart,
  kRecoveryEnd,
  kRoundEnd,
};

std::string to_string(SimEventKind kind);

/// One totally-ordered trace entry. pipeline_id is the start vehicle of the
/// rotation entry being executed (-1 outside any execution); vehicle_id is
/// the acting vehicle (-1 when not applicable).
struct SimEvent {
  double timestamp_s = 0.0;
  SimEventKind kind = SimEventKind::kRoundEnd;
  int pipeline_id = -1;
  int vehicle_id = -1;
  std::string detail;
};

enum class FaultKind { kDeparture, kDisconnect };

struct Fault {
  int vehicle_id = 0;
  double time_s = 0.0;
  FaultKind kind = FaultKind::kDeparture;
  double duration_s = 0.0;  // disconnects only
};

/// Either a scripted fault list or a per-vehicle exponential hazard whose
/// draws are censored at the vehicle's true dwell (no fault when the draw
/// falls beyond it).
struct FaultSpec {
  std::vector<Fault> scripted;
  double hazard_rate_per_s = 0.0;  // > 0 switches to hazard mode
  double disconnect_fraction = 0.0;
  double disconnect_duration_s = 10.0;
};

std::vector<Fault> inject_faults(const FaultSpec& spec,
                                 const std::map<int, double>& true_dwell_s,
                                 std::uint64_t seed);

enum class RecoveryMode { kTemplates, kElastic, kRelaunch };

std::string to_string(RecoveryMode mode);

/// Fixed control overheads per recovery mechanism, calibrated so the
/// default template:elastic:relaunch ratio is 5:30:50.
struct RecoveryOverheads {
  double template_s = 5.0;
  double elastic_s = 30.0;
  double relaunch_s = 50.0;
};

/// Model state backed up at the edge. A checkpoint only protects failures
/// that occur at or after ready_time_s (the upload is asynchronous).
struct Checkpoint {
  int epoch = 0;
  int stored_at_edge_id = 0;
  double bytes = 0.0;
  double ready_time_s = 0.0;
};

/// Outcome of planning one recovery. replacement is nullopt when the
/// mechanism could not produce a template (caller falls through to the
/// relaunch path).
struct RecoveryOutcome {
  std::optional<PipelineTemplate> replacement;
  double redistributed_bytes = 0.0;
  double transfer_time_s = 0.0;
  double recovery_time_s = 0.0;  // control overhead + transfer
  int lost_epochs = 0;
  std::string detail;
};

/// Template-pool recovery: pick the pool template with the failed
/// pipeline's start vehicle (lowest-id entry when that start is the failed
/// vehicle itself), diff it against the failed template, and charge only
/// the stages whose (vehicle, unit range) assignment changed. Transfer is
/// one-way at each receiving vehicle's link rate.
RecoveryOutcome recover_with_template(const PipelineTemplate& failed,
                                      int failed_vehicle,
                                      const std::map<int, PipelineTemplate>& pool,
                                      const Checkpoint& checkpoint,
                                      int current_epoch, const FleetMap& fleet,
                                      const ModelProfile& model,
                                      const CostParams& cost,
                                      double control_overhead_s);

/// Elastic recovery: survivors keep their assignments; the failed stage's
/// unit run is absorbed by the upstream neighbor first (as much as its
/// memory allows) and the downstream neighbor takes the rest. nullopt when
/// the neighbors cannot hold the orphaned units.
std::optional<PipelineTemplate> elastic_patch(const PipelineTemplate& failed,
                                              int failed_vehicle,
                                              const FleetMap& fleet,
                                              const ModelProfile& model,
                                              const CostParams& cost);

/// Relaunch recovery: full re-plan over the surviving vehicles (Phase-1
/// greedy in stability order, depth-first search as fallback) and full
/// model redistribution. required_start pins stage 1 to that vehicle.
std::optional<PipelineTemplate> relaunch_plan(
    const FleetMap& survivors, const std::map<int, double>& stability,
    const ModelProfile& model, const CostParams& cost,
    std::optional<int> required_start = std::nullopt);

struct RoundConfig {
  RecoveryMode recovery = RecoveryMode::kTemplates;
  RecoveryOverheads overheads;
  int checkpoint_interval_epochs = 5;
  int edge_node_id = 0;
  std::map<int, double> stability;  // relaunch stage order; missing ids rank last
};

struct PipelineRun {
  int start_vehicle = 0;
  double predicted_s = 0.0;
  double simulated_s = 0.0;
  bool completed = false;
};

struct RoundMetrics {
  double round_time_s = 0.0;
  int completed_epochs = 0;
  int lost_epochs = 0;
  double throughput_samples_per_s = 0.0;
  std::vector<PipelineRun> pipeline_runs;
  std::vector<double> recovery_times_s;
  std::vector<double> redistributed_bytes;
  double total_redistributed_bytes = 0.0;
  bool aborted = false;
  std::string status = "ok";
  std::vector<std::string> warnings;
};

struct SimResult {
  std::vector<SimEvent> events;
  RoundMetrics metrics;
};

/// Executes one federated round: every essential pipeline runs once, in
/// ascending start-vehicle order, each execution counting as one epoch.
/// Deterministic — all randomness lives in the fault schedule.
///
/// Fault handling: a disconnect pauses its vehicle, stalling any stage or
/// transfer it still owes (transfers pause when either endpoint is
/// offline). A departure interrupts the active execution when the departed
/// vehicle participates in it; the epoch counter rolls back to the last
/// ready checkpoint (the difference is recorded as lost epochs, not
/// replayed), recovery produces a replacement template per the configured
/// mode, and the interrupted entry restarts on the replacement. Departures
/// of non-participants are charged as a concurrent recovery that only
/// delays the next execution if still in flight. Later rotation entries
/// referencing a departed vehicle are swapped to their mode-appropriate
/// replacement without an extra charge (replacements are prepared during
/// the paid recovery window); entries whose start vehicle departed are
/// skipped. Recovery with an empty pool falls back to relaunch with a
/// warning; when even relaunch cannot re-plan, the round aborts.
SimResult run_round(const EssentialPipelineSet& set, const FleetMap& fleet,
                    const ModelProfile& model, const CostParams& cost,
                    const std::vector<Fault>& faults,
                    const std::map<int, EssentialPipelineSet>& template_pool,
                    const RoundConfig& config);

/// Synchronous inter-cluster accounting: max of the cluster round times
/// plus the aggregation overhead.
double fl_round_accounting(const std::vector<double>& cluster_round_times_s,
                           double aggregation_overhead_s);

/// CSV trace with header timestamp,kind,pipeline_id,vehicle_id,detail.
void write_trace_csv(const std::vector<SimEvent>& events, const std::string& path);

}  // namespace fhdp
