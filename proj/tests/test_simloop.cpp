#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fhdp/cost_model.hpp"
#include "fhdp/simloop.hpp"
#include "fhdp/swift.hpp"

using namespace fhdp;

namespace {

// Fixture arithmetic (defaults mu = 0.5, nu = 1.2): every vehicle computes
// 3.84e9 FLOP/s, so a stage of u units costs u * 8e9 * 1.2 / 1.92e9 = 5u
// seconds, and a transfer of b bytes costs 2 * b * 2 * 1.2 / 0.96e9 = 5b/1e9
// seconds. Memories 3.5/1.5/2.5 GB admit 3/1/2 units respectively.
ModelProfile sim_model() {
  std::vector<ModelUnit> units(4, ModelUnit{1e9, 1e9, 1e3});
  return ModelProfile({{"net", units}}, 2, 4);
}

FleetMap sim_fleet() {
  FleetMap fleet;
  fleet.emplace(1, VehicleProfile{1, 3.5e9, 3.84e9, 0.96e9, 100.0});
  fleet.emplace(2, VehicleProfile{2, 1.5e9, 3.84e9, 0.96e9, 100.0});
  fleet.emplace(3, VehicleProfile{3, 2.5e9, 3.84e9, 0.96e9, 100.0});
  return fleet;
}

const std::map<int, double> kStability{{1, 3.0}, {2, 2.0}, {3, 1.0}};

std::vector<SwiftMember> sim_members(const std::vector<int>& ids) {
  FleetMap fleet = sim_fleet();
  std::vector<SwiftMember> members;
  for (int id : ids) {
    const VehicleProfile& p = fleet.at(id);
    members.push_back({id, kStability.at(id), p.memory_bytes,
                       p.compute_flops_per_s, p.link_bytes_per_s});
  }
  return members;
}

EssentialPipelineSet sim_set() {
  SwiftInstance inst(sim_members({1, 2, 3}), sim_model(), CostParams{});
  return build_essential_set(inst, nullptr);
}

std::map<int, EssentialPipelineSet> sim_pool() {
  std::map<int, EssentialPipelineSet> pool;
  const std::vector<int> all{1, 2, 3};
  for (int failed : all) {
    std::vector<int> rest;
    for (int id : all)
      if (id != failed) rest.push_back(id);
    SwiftInstance inst(sim_members(rest), sim_model(), CostParams{});
    pool.emplace(failed, build_essential_set(inst, nullptr));
  }
  return pool;
}

Fault dep(int vehicle, double t) {
  return Fault{vehicle, t, FaultKind::kDeparture, 0.0};
}

Fault disc(int vehicle, double t, double duration) {
  return Fault{vehicle, t, FaultKind::kDisconnect, duration};
}

RoundConfig cfg(RecoveryMode mode) {
  RoundConfig config;
  config.recovery = mode;
  config.stability = kStability;
  return config;
}

int count_kind(const std::vector<SimEvent>& events, SimEventKind kind) {
  int n = 0;
  for (const SimEvent& e : events)
    if (e.kind == kind) ++n;
  return n;
}

const SimEvent* find_kind(const std::vector<SimEvent>& events, SimEventKind kind,
                          int nth = 0) {
  for (const SimEvent& e : events)
    if (e.kind == kind && nth-- == 0) return &e;
  return nullptr;
}

void check_monotone(const std::vector<SimEvent>& events) {
  for (std::size_t i = 1; i < events.size(); ++i)
    CHECK(events[i].timestamp_s >= events[i - 1].timestamp_s);
}

StageAssignment stage(int vehicle, int begin, int end) {
  return StageAssignment{vehicle, begin, end};
}

}  // namespace

TEST_SUITE("simloop") {
  TEST_CASE("fixture essential set and pool have the derived shapes") {
    EssentialPipelineSet set = sim_set();
    REQUIRE(set.pipelines.size() == 3);
    CHECK(set.warnings.empty());
    const auto& t1 = set.pipelines.at(1);
    const auto& t2 = set.pipelines.at(2);
    const auto& t3 = set.pipelines.at(3);
    CHECK(t1.stages == std::vector<StageAssignment>{stage(1, 0, 2), stage(2, 2, 3),
                                                    stage(3, 3, 4)});
    CHECK(t2.stages == std::vector<StageAssignment>{stage(2, 0, 1), stage(1, 1, 2),
                                                    stage(3, 2, 4)});
    CHECK(t3.stages == std::vector<StageAssignment>{stage(3, 0, 1), stage(1, 1, 3),
                                                    stage(2, 3, 4)});
    CHECK(t1.predicted_path_time_s == doctest::Approx(35.0));
    CHECK(t2.predicted_path_time_s == doctest::Approx(30.0));
    CHECK(t3.predicted_path_time_s == doctest::Approx(35.0));

    auto pool = sim_pool();
    REQUIRE(pool.at(2).pipelines.size() == 2);
    CHECK(pool.at(2).pipelines.at(1).stages ==
          std::vector<StageAssignment>{stage(1, 0, 3), stage(3, 3, 4)});
    CHECK(pool.at(2).pipelines.at(3).stages ==
          std::vector<StageAssignment>{stage(3, 0, 1), stage(1, 1, 4)});
    // Without vehicle 1 the survivors hold only 3 of the 4 units.
    CHECK(pool.at(1).pipelines.empty());
    CHECK_FALSE(pool.at(1).warnings.empty());
    REQUIRE(pool.at(3).pipelines.size() == 2);
  }

  TEST_CASE("fault-free round matches the analytic path times") {
    auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {},
                            sim_pool(), cfg(RecoveryMode::kTemplates));
    const RoundMetrics& m = result.metrics;
    CHECK_FALSE(m.aborted);
    CHECK(m.status == "ok");
    CHECK(std::abs(m.round_time_s - 100.0) <= 1e-6);
    CHECK(m.completed_epochs == 3);
    CHECK(m.lost_epochs == 0);
    CHECK(m.recovery_times_s.empty());
    CHECK(m.total_redistributed_bytes == 0.0);
    REQUIRE(m.pipeline_runs.size() == 3);
    double predicted_sum = 0.0;
    for (const PipelineRun& run : m.pipeline_runs) {
      CHECK(run.completed);
      CHECK(std::abs(run.simulated_s - run.predicted_s) <= 1e-6);
      predicted_sum += run.predicted_s;
    }
    CHECK(std::abs(m.round_time_s - predicted_sum) <= 1e-6);
    CHECK(m.throughput_samples_per_s == doctest::Approx(8.0 * 3 / 100.0));

    check_monotone(result.events);
    CHECK(count_kind(result.events, SimEventKind::kStageStart) == 9);
    CHECK(count_kind(result.events, SimEventKind::kStageEnd) == 9);
    CHECK(count_kind(result.events, SimEventKind::kTransferStart) == 6);
    CHECK(count_kind(result.events, SimEventKind::kRecoveryStart) == 0);
    CHECK(count_kind(result.events, SimEventKind::kCheckpoint) == 0);
    const SimEvent* end = find_kind(result.events, SimEventKind::kRoundEnd);
    REQUIRE(end != nullptr);
    CHECK(end->timestamp_s == doctest::Approx(100.0));
    CHECK(end->detail == "epochs=3");
    CHECK(result.events.front().kind == SimEventKind::kStageStart);
    CHECK(result.events.front().timestamp_s == 0.0);
  }

  TEST_CASE("checkpoints follow the epoch interval and charge the uplink") {
    RoundConfig config = cfg(RecoveryMode::kTemplates);
    config.checkpoint_interval_epochs = 1;
    auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {},
                            sim_pool(), config);
    REQUIRE(count_kind(result.events, SimEventKind::kCheckpoint) == 3);
    const SimEvent* first = find_kind(result.events, SimEventKind::kCheckpoint, 0);
    // 4e9 bytes at vehicle 1's 0.96e9 B/s uplink with nu = 1.2 -> 5 s.
    CHECK(first->timestamp_s == doctest::Approx(35.0));
    CHECK(first->vehicle_id == 1);
    CHECK(first->detail.find("epoch=1") != std::string::npos);
    CHECK(first->detail.find("ready=40") != std::string::npos);
    const SimEvent* second = find_kind(result.events, SimEventKind::kCheckpoint, 1);
    CHECK(second->timestamp_s == doctest::Approx(65.0));
    CHECK(second->vehicle_id == 2);

    config.checkpoint_interval_epochs = 2;
    auto sparse = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {},
                            sim_pool(), config);
    CHECK(count_kind(sparse.events, SimEventKind::kCheckpoint) == 1);
  }

  TEST_CASE("template recovery walkthrough with a mid-stage departure") {
    auto result =
        run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {dep(2, 5.0)},
                  sim_pool(), cfg(RecoveryMode::kTemplates));
    const RoundMetrics& m = result.metrics;
    CHECK_FALSE(m.aborted);
    // Recovery: 5 s control + 3e9 bytes * 1.2 / 0.96e9 = 3.75 s transfer.
    REQUIRE(m.recovery_times_s.size() == 1);
    CHECK(m.recovery_times_s[0] == doctest::Approx(8.75));
    REQUIRE(m.redistributed_bytes.size() == 1);
    CHECK(m.redistributed_bytes[0] == doctest::Approx(3e9));
    CHECK(m.lost_epochs == 0);
    CHECK(m.completed_epochs == 2);
    // Restarted replacement runs 13.75..48.75; the swapped third entry runs
    // 48.75..73.75 on the depth-first pool template for start 3.
    CHECK(std::abs(m.round_time_s - 73.75) <= 1e-6);
    REQUIRE(m.pipeline_runs.size() == 3);
    CHECK(m.pipeline_runs[0].start_vehicle == 1);
    CHECK(m.pipeline_runs[0].completed);
    CHECK(m.pipeline_runs[0].predicted_s == doctest::Approx(35.0));
    CHECK(std::abs(m.pipeline_runs[0].simulated_s - 35.0) <= 1e-6);
    CHECK(m.pipeline_runs[1].start_vehicle == 2);
    CHECK_FALSE(m.pipeline_runs[1].completed);
    CHECK(m.pipeline_runs[1].predicted_s == doctest::Approx(30.0));
    CHECK(m.pipeline_runs[2].start_vehicle == 3);
    CHECK(m.pipeline_runs[2].completed);
    CHECK(m.pipeline_runs[2].predicted_s == doctest::Approx(25.0));

    check_monotone(result.events);
    const SimEvent* gone = find_kind(result.events, SimEventKind::kDeparture);
    REQUIRE(gone != nullptr);
    CHECK(gone->timestamp_s == doctest::Approx(5.0));
    CHECK(gone->vehicle_id == 2);
    CHECK(gone->pipeline_id == 1);
    const SimEvent* rs = find_kind(result.events, SimEventKind::kRecoveryStart);
    REQUIRE(rs != nullptr);
    CHECK(rs->timestamp_s == doctest::Approx(5.0));
    CHECK(rs->detail.find("mode=templates") != std::string::npos);
    const SimEvent* re = find_kind(result.events, SimEventKind::kRecoveryEnd);
    REQUIRE(re != nullptr);
    CHECK(re->timestamp_s == doctest::Approx(13.75));
    CHECK(re->detail.find("lost_epochs=0") != std::string::npos);
    // The interrupted stage never re-emits start events before the departure.
    const SimEvent* restart = find_kind(result.events, SimEventKind::kStageStart);
    CHECK(restart->timestamp_s == doctest::Approx(13.75));
    CHECK(restart->detail == "units=0..3");
  }

  TEST_CASE("elastic recovery absorbs the orphaned units into neighbors") {
    auto result =
        run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {dep(2, 5.0)},
                  sim_pool(), cfg(RecoveryMode::kElastic));
    const RoundMetrics& m = result.metrics;
    CHECK_FALSE(m.aborted);
    // 30 s control + one moved unit (1e9 bytes) at vehicle 1's link = 1.25 s.
    REQUIRE(m.recovery_times_s.size() == 1);
    CHECK(m.recovery_times_s[0] == doctest::Approx(31.25));
    CHECK(m.redistributed_bytes[0] == doctest::Approx(1e9));
    // Restart at 36.25 runs 35 s; the patched third entry runs 25 s.
    CHECK(std::abs(m.round_time_s - 96.25) <= 1e-6);
    CHECK(m.completed_epochs == 2);
    REQUIRE(m.pipeline_runs.size() == 3);
    CHECK(m.pipeline_runs[2].predicted_s == doctest::Approx(25.0));
  }

  TEST_CASE("relaunch recovery redistributes the whole model") {
    auto result =
        run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {dep(2, 5.0)},
                  sim_pool(), cfg(RecoveryMode::kRelaunch));
    const RoundMetrics& m = result.metrics;
    CHECK_FALSE(m.aborted);
    // 50 s control + full 4e9 bytes split 3.75 s + 1.25 s transfer.
    REQUIRE(m.recovery_times_s.size() == 1);
    CHECK(m.recovery_times_s[0] == doctest::Approx(55.0));
    CHECK(m.redistributed_bytes[0] == doctest::Approx(4e9));
    CHECK(std::abs(m.round_time_s - 120.0) <= 1e-6);
    CHECK(m.completed_epochs == 2);
  }

  TEST_CASE("recovery mechanisms order as templates < elastic < relaunch") {
    std::map<RecoveryMode, RoundMetrics> runs;
    for (RecoveryMode mode : {RecoveryMode::kTemplates, RecoveryMode::kElastic,
                              RecoveryMode::kRelaunch}) {
      runs[mode] = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                             {dep(2, 5.0)}, sim_pool(), cfg(mode))
                       .metrics;
    }
    double t = runs[RecoveryMode::kTemplates].recovery_times_s[0];
    double e = runs[RecoveryMode::kElastic].recovery_times_s[0];
    double r = runs[RecoveryMode::kRelaunch].recovery_times_s[0];
    CHECK(t < e);
    CHECK(e < r);
    CHECK(r >= 2.0 * t);  // relaunch is at least twice the template recovery
    CHECK(runs[RecoveryMode::kTemplates].total_redistributed_bytes <=
          runs[RecoveryMode::kRelaunch].total_redistributed_bytes);
  }

  TEST_CASE("unrecoverable departure aborts the round") {
    auto result =
        run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {dep(1, 12.0)},
                  sim_pool(), cfg(RecoveryMode::kTemplates));
    const RoundMetrics& m = result.metrics;
    CHECK(m.aborted);
    CHECK(m.status.find("unrecoverable") != std::string::npos);
    CHECK(m.round_time_s == doctest::Approx(12.0));
    CHECK(m.completed_epochs == 0);
    CHECK_FALSE(m.warnings.empty());
    check_monotone(result.events);
    CHECK(count_kind(result.events, SimEventKind::kRecoveryStart) ==
          count_kind(result.events, SimEventKind::kRecoveryEnd));
    const SimEvent* end = find_kind(result.events, SimEventKind::kRoundEnd);
    REQUIRE(end != nullptr);
    CHECK(end->detail == "aborted");
    CHECK(end->timestamp_s == doctest::Approx(12.0));
  }

  TEST_CASE("a departed data provider skips its pipeline and rolls back epochs") {
    // Vehicle 2 departs at t=40 while providing data for the second entry:
    // epoch 1 (uncheckpointed) is lost, entry 2 is skipped, and the third
    // entry swaps to the pool template after the concurrent redeployment.
    auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                            {dep(2, 40.0)}, sim_pool(),
                            cfg(RecoveryMode::kTemplates));
    const RoundMetrics& m = result.metrics;
    CHECK_FALSE(m.aborted);
    CHECK(m.lost_epochs == 1);
    CHECK(m.completed_epochs == 1);
    REQUIRE(m.recovery_times_s.size() == 1);
    CHECK(m.recovery_times_s[0] == doctest::Approx(8.75));
    CHECK(std::abs(m.round_time_s - 73.75) <= 1e-6);
    REQUIRE(m.pipeline_runs.size() == 3);
    CHECK(m.pipeline_runs[0].completed);
    CHECK_FALSE(m.pipeline_runs[1].completed);
    CHECK(m.pipeline_runs[2].completed);
    CHECK(std::abs(m.pipeline_runs[2].simulated_s - 25.0) <= 1e-6);
    const SimEvent* rs = find_kind(result.events, SimEventKind::kRecoveryStart);
    REQUIRE(rs != nullptr);
    CHECK(rs->pipeline_id == 3);  // charged against the affected third entry
    CHECK(rs->timestamp_s == doctest::Approx(40.0));
  }

  TEST_CASE("a ready checkpoint caps the rollback; in-flight uploads are void") {
    RoundConfig config = cfg(RecoveryMode::kTemplates);
    config.checkpoint_interval_epochs = 1;

    SUBCASE("departure after the upload completes keeps epoch 1") {
      // Checkpoint at 35 becomes ready at 40; the departure at 40.001 finds
      // it, so nothing is lost.
      auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                              {dep(2, 40.001)}, sim_pool(), config);
      CHECK(result.metrics.lost_epochs == 0);
      CHECK(result.metrics.completed_epochs == 2);
      CHECK(count_kind(result.events, SimEventKind::kCheckpoint) == 2);
    }
    SUBCASE("departure during the upload voids it") {
      auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                              {dep(2, 39.9)}, sim_pool(), config);
      CHECK(result.metrics.lost_epochs == 1);
      CHECK(result.metrics.completed_epochs == 1);
    }
  }

  TEST_CASE("disconnects pause compute and transfers until reconnect") {
    SUBCASE("pause during the owner's compute stretches the stage") {
      auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                              {disc(1, 2.0, 4.0)}, sim_pool(),
                              cfg(RecoveryMode::kTemplates));
      const RoundMetrics& m = result.metrics;
      CHECK_FALSE(m.aborted);
      CHECK(m.recovery_times_s.empty());
      CHECK(std::abs(m.pipeline_runs[0].simulated_s - 39.0) <= 1e-6);
      CHECK(std::abs(m.round_time_s - 104.0) <= 1e-6);
      CHECK(find_kind(result.events, SimEventKind::kDisconnect) != nullptr);
      CHECK(find_kind(result.events, SimEventKind::kReconnect) != nullptr);
      const SimEvent* first_end = find_kind(result.events, SimEventKind::kStageEnd);
      CHECK(first_end->timestamp_s == doctest::Approx(14.0));
    }
    SUBCASE("pause at the receiving endpoint stalls the transfer") {
      auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                              {disc(2, 12.0, 3.0)}, sim_pool(),
                              cfg(RecoveryMode::kTemplates));
      CHECK(std::abs(result.metrics.pipeline_runs[0].simulated_s - 38.0) <= 1e-6);
      CHECK(std::abs(result.metrics.round_time_s - 103.0) <= 1e-6);
    }
    SUBCASE("a pause covering a stage start delays it") {
      // The pause begins exactly as the inbound transfer completes at t=30,
      // so only the third stage's start is pushed to the reconnect at 35.
      auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                              {disc(3, 30.0, 5.0)}, sim_pool(),
                              cfg(RecoveryMode::kTemplates));
      CHECK(std::abs(result.metrics.pipeline_runs[0].simulated_s - 40.0) <= 1e-6);
      CHECK(std::abs(result.metrics.round_time_s - 105.0) <= 1e-6);
      const SimEvent* third_start =
          find_kind(result.events, SimEventKind::kStageStart, 2);
      CHECK(third_start->timestamp_s == doctest::Approx(35.0));
      CHECK(third_start->vehicle_id == 3);
    }
  }

  TEST_CASE("recover_with_template diffs stage assignments") {
    ModelProfile model = sim_model();
    FleetMap fleet = sim_fleet();
    CostParams cost;
    EssentialPipelineSet set = sim_set();
    const PipelineTemplate& t1 = set.pipelines.at(1);
    auto pool2 = sim_pool().at(2).pipelines;
    Checkpoint cp{2, 0, 4e9, 100.0};

    SUBCASE("changed stages pay bytes and transfer; unchanged ride free") {
      RecoveryOutcome out =
          recover_with_template(t1, 2, pool2, cp, 5, fleet, model, cost, 5.0);
      REQUIRE(out.replacement.has_value());
      CHECK(out.lost_epochs == 3);
      CHECK(out.redistributed_bytes == doctest::Approx(3e9));
      CHECK(out.transfer_time_s == doctest::Approx(3.75));
      CHECK(out.recovery_time_s == doctest::Approx(8.75));
      CHECK(out.replacement->stages.front().vehicle_id == 1);
      CHECK(out.detail.find("changed_stages=1") != std::string::npos);
    }
    SUBCASE("an identical replacement redistributes nothing") {
      std::map<int, PipelineTemplate> pool{{1, t1}};
      RecoveryOutcome out =
          recover_with_template(t1, 99, pool, cp, 2, fleet, model, cost, 5.0);
      REQUIRE(out.replacement.has_value());
      CHECK(out.redistributed_bytes == 0.0);
      CHECK(out.recovery_time_s == doctest::Approx(5.0));
      CHECK(out.lost_epochs == 0);
    }
    SUBCASE("an empty pool yields no replacement") {
      RecoveryOutcome out = recover_with_template(t1, 2, {}, cp, 5, fleet, model,
                                                  cost, 5.0);
      CHECK_FALSE(out.replacement.has_value());
      CHECK(out.detail.find("pool") != std::string::npos);
    }
    SUBCASE("pool templates referencing the failed vehicle are unusable") {
      std::map<int, PipelineTemplate> pool{{1, t1}};  // t1 contains vehicle 2
      RecoveryOutcome out =
          recover_with_template(t1, 2, pool, cp, 5, fleet, model, cost, 5.0);
      CHECK_FALSE(out.replacement.has_value());
    }
    SUBCASE("validation") {
      CHECK_THROWS_AS(
          recover_with_template(t1, 2, pool2, cp, 1, fleet, model, cost, 5.0),
          std::invalid_argument);
      CHECK_THROWS_AS(
          recover_with_template(t1, 2, pool2, cp, 5, fleet, model, cost, -1.0),
          std::invalid_argument);
    }
  }

  TEST_CASE("elastic_patch absorbs orphans upstream first") {
    ModelProfile model = sim_model();
    FleetMap fleet = sim_fleet();
    CostParams cost;
    EssentialPipelineSet set = sim_set();

    SUBCASE("middle stage folds into the upstream neighbor") {
      auto patched = elastic_patch(set.pipelines.at(1), 2, fleet, model, cost);
      REQUIRE(patched.has_value());
      CHECK(patched->stages ==
            std::vector<StageAssignment>{stage(1, 0, 3), stage(3, 3, 4)});
      CHECK(patched->generator == "elastic");
    }
    SUBCASE("last stage must fit upstream") {
      auto patched = elastic_patch(set.pipelines.at(3), 2, fleet, model, cost);
      REQUIRE(patched.has_value());
      CHECK(patched->stages ==
            std::vector<StageAssignment>{stage(3, 0, 1), stage(1, 1, 4)});
    }
    SUBCASE("first stage falls to the downstream neighbor") {
      auto patched = elastic_patch(set.pipelines.at(2), 2, fleet, model, cost);
      REQUIRE(patched.has_value());
      CHECK(patched->stages ==
            std::vector<StageAssignment>{stage(1, 0, 2), stage(3, 2, 4)});
    }
    SUBCASE("infeasible neighbors yield nullopt") {
      // Losing vehicle 1 orphans units 0..2; vehicle 2 cannot hold them.
      CHECK_FALSE(
          elastic_patch(set.pipelines.at(1), 1, fleet, model, cost).has_value());
    }
    SUBCASE("a single-stage template cannot be patched") {
      PipelineTemplate solo;
      solo.stages = {stage(1, 0, 4)};
      CHECK_FALSE(elastic_patch(solo, 1, fleet, model, cost).has_value());
    }
    SUBCASE("an absent vehicle returns the template unchanged") {
      auto same = elastic_patch(set.pipelines.at(1), 99, fleet, model, cost);
      REQUIRE(same.has_value());
      CHECK(same->stages == set.pipelines.at(1).stages);
    }
  }

  TEST_CASE("relaunch_plan re-plans over the survivors") {
    ModelProfile model = sim_model();
    CostParams cost;
    FleetMap survivors = sim_fleet();
    survivors.erase(2);

    auto plan = relaunch_plan(survivors, kStability, model, cost);
    REQUIRE(plan.has_value());
    CHECK(plan->generator == "relaunch");
    CHECK(plan->stages ==
          std::vector<StageAssignment>{stage(1, 0, 3), stage(3, 3, 4)});

    auto pinned = relaunch_plan(survivors, kStability, model, cost, 3);
    REQUIRE(pinned.has_value());
    CHECK(pinned->stages ==
          std::vector<StageAssignment>{stage(3, 0, 1), stage(1, 1, 4)});

    CHECK_FALSE(relaunch_plan(survivors, kStability, model, cost, 2).has_value());
    CHECK_FALSE(relaunch_plan({}, kStability, model, cost).has_value());

    FleetMap weak = sim_fleet();
    weak.erase(1);  // vehicles 2 and 3 only hold 3 of 4 units
    CHECK_FALSE(relaunch_plan(weak, kStability, model, cost).has_value());
  }

  TEST_CASE("inject_faults validates and sorts scripted schedules") {
    FaultSpec spec;
    spec.scripted = {dep(3, 9.0), disc(1, 2.0, 4.0), dep(2, 5.0)};
    auto faults = inject_faults(spec, {}, 0);
    REQUIRE(faults.size() == 3);
    CHECK(faults[0].vehicle_id == 1);
    CHECK(faults[1].vehicle_id == 2);
    CHECK(faults[2].vehicle_id == 3);

    FaultSpec bad_time;
    bad_time.scripted = {dep(1, -1.0)};
    CHECK_THROWS_AS(inject_faults(bad_time, {}, 0), std::invalid_argument);
    FaultSpec bad_duration;
    bad_duration.scripted = {disc(1, 1.0, 0.0)};
    CHECK_THROWS_AS(inject_faults(bad_duration, {}, 0), std::invalid_argument);
  }

  TEST_CASE("hazard fault times average the inverse rate") {
    FaultSpec spec;
    spec.hazard_rate_per_s = 0.01;
    std::map<int, double> dwell;
    for (int v = 0; v < 10000; ++v) dwell[v] = 1e12;  // effectively untruncated
    auto faults = inject_faults(spec, dwell, 42);
    REQUIRE(faults.size() == 10000);
    double mean = 0.0;
    for (const Fault& f : faults) {
      CHECK(f.kind == FaultKind::kDeparture);
      mean += f.time_s;
    }
    mean /= static_cast<double>(faults.size());
    CHECK(mean == doctest::Approx(100.0).epsilon(0.05));
  }

  TEST_CASE("hazard draws are censored at the true dwell") {
    FaultSpec spec;
    spec.hazard_rate_per_s = 0.01;
    std::map<int, double> dwell;
    for (int v = 0; v < 10000; ++v) dwell[v] = 50.0;
    auto faults = inject_faults(spec, dwell, 7);
    // P(fault) = 1 - exp(-0.5) ~ 0.3935; 3 sigma ~ 147.
    CHECK(faults.size() > 3935 - 150);
    CHECK(faults.size() < 3935 + 150);
    for (const Fault& f : faults) CHECK(f.time_s < 50.0);

    auto again = inject_faults(spec, dwell, 7);
    REQUIRE(again.size() == faults.size());
    for (std::size_t i = 0; i < faults.size(); ++i) {
      CHECK(again[i].vehicle_id == faults[i].vehicle_id);
      CHECK(again[i].time_s == faults[i].time_s);
    }
    auto other = inject_faults(spec, dwell, 8);
    bool differs = other.size() != faults.size();
    for (std::size_t i = 0; !differs && i < faults.size(); ++i)
      differs = other[i].time_s != faults[i].time_s ||
                other[i].vehicle_id != faults[i].vehicle_id;
    CHECK(differs);
  }

  TEST_CASE("hazard disconnect fraction controls the fault kind") {
    std::map<int, double> dwell{{1, 1e12}, {2, 1e12}, {3, 1e12}};
    FaultSpec spec;
    spec.hazard_rate_per_s = 0.01;
    spec.disconnect_fraction = 1.0;
    spec.disconnect_duration_s = 7.5;
    for (const Fault& f : inject_faults(spec, dwell, 3)) {
      CHECK(f.kind == FaultKind::kDisconnect);
      CHECK(f.duration_s == 7.5);
    }
    spec.disconnect_fraction = 0.0;
    for (const Fault& f : inject_faults(spec, dwell, 3))
      CHECK(f.kind == FaultKind::kDeparture);
    spec.disconnect_fraction = 1.5;
    CHECK_THROWS_AS(inject_faults(spec, dwell, 3), std::invalid_argument);
  }

  TEST_CASE("fl_round_accounting takes the slowest cluster plus overhead") {
    CHECK(fl_round_accounting({10.0}, 1.0) == doctest::Approx(11.0));
    CHECK(fl_round_accounting({10.0, 20.0, 15.0}, 0.0) == doctest::Approx(20.0));
    CHECK_THROWS_AS(fl_round_accounting({}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(fl_round_accounting({10.0}, -1.0), std::invalid_argument);
  }

  TEST_CASE("run_round validates its inputs") {
    EssentialPipelineSet set = sim_set();
    FleetMap fleet = sim_fleet();
    ModelProfile model = sim_model();
    CostParams cost;
    auto pool = sim_pool();
    RoundConfig config = cfg(RecoveryMode::kTemplates);

    CHECK_THROWS_AS(run_round({}, fleet, model, cost, {}, pool, config),
                    std::invalid_argument);
    EssentialPipelineSet mislabeled;
    mislabeled.pipelines.emplace(2, set.pipelines.at(1));
    CHECK_THROWS_AS(run_round(mislabeled, fleet, model, cost, {}, pool, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_round(set, fleet, model, cost, {dep(9, 1.0)}, pool, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_round(set, fleet, model, cost, {dep(1, -2.0)}, pool, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_round(set, fleet, model, cost,
                              {dep(1, 5.0), dep(1, 9.0)}, pool, config),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_round(set, fleet, model, cost, {disc(1, 5.0, 0.0)}, pool,
                              config),
                    std::invalid_argument);
    RoundConfig bad = config;
    bad.checkpoint_interval_epochs = -1;
    CHECK_THROWS_AS(run_round(set, fleet, model, cost, {}, pool, bad),
                    std::invalid_argument);
    bad = config;
    bad.overheads.elastic_s = -1.0;
    CHECK_THROWS_AS(run_round(set, fleet, model, cost, {}, pool, bad),
                    std::invalid_argument);
  }

  TEST_CASE("trace CSV round-trips the event schema") {
    auto result =
        run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, {dep(2, 5.0)},
                  sim_pool(), cfg(RecoveryMode::kTemplates));
    const std::string path = "simloop_trace_test.csv";
    write_trace_csv(result.events, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "timestamp,kind,pipeline_id,vehicle_id,detail");
    std::size_t rows = 0;
    bool saw_recovery_end = false;
    while (std::getline(in, line)) {
      ++rows;
      if (line.rfind("13.75,recovery_end,1,2,", 0) == 0) {
        saw_recovery_end = true;
        CHECK(line.find("transfer_s=3.75") != std::string::npos);
        CHECK(line.find("lost_epochs=0") != std::string::npos);
      }
      CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    in.close();
    CHECK(rows == result.events.size());
    CHECK(saw_recovery_end);
    std::remove(path.c_str());
  }

  TEST_CASE("identical inputs replay identical traces") {
    FaultSpec spec;
    spec.hazard_rate_per_s = 0.008;
    spec.disconnect_fraction = 0.5;
    std::map<int, double> dwell{{1, 500.0}, {2, 500.0}, {3, 500.0}};
    auto faults = inject_faults(spec, dwell, 123);
    auto a = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, faults,
                       sim_pool(), cfg(RecoveryMode::kTemplates));
    auto b = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{}, faults,
                       sim_pool(), cfg(RecoveryMode::kTemplates));
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
      CHECK(a.events[i].timestamp_s == b.events[i].timestamp_s);
      CHECK(a.events[i].kind == b.events[i].kind);
      CHECK(a.events[i].pipeline_id == b.events[i].pipeline_id);
      CHECK(a.events[i].vehicle_id == b.events[i].vehicle_id);
      CHECK(a.events[i].detail == b.events[i].detail);
    }
    CHECK(a.metrics.round_time_s == b.metrics.round_time_s);
    CHECK(a.metrics.completed_epochs == b.metrics.completed_epochs);
  }

  TEST_CASE("trace invariants hold across fault mixes") {
    std::vector<std::vector<Fault>> schedules = {
        {},
        {dep(2, 5.0)},
        {dep(2, 40.0)},
        {dep(3, 66.0)},
        {disc(1, 2.0, 4.0), dep(2, 22.0)},
        {dep(2, 5.0), dep(3, 50.0)},
        {disc(2, 12.0, 3.0), disc(3, 29.0, 6.0)},
    };
    for (const auto& faults : schedules) {
      for (RecoveryMode mode : {RecoveryMode::kTemplates, RecoveryMode::kElastic,
                                RecoveryMode::kRelaunch}) {
        auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                                faults, sim_pool(), cfg(mode));
        check_monotone(result.events);
        CHECK(count_kind(result.events, SimEventKind::kRecoveryStart) ==
              count_kind(result.events, SimEventKind::kRecoveryEnd));
        CHECK(count_kind(result.events, SimEventKind::kRoundEnd) == 1);
        double total = 0.0;
        for (double bytes : result.metrics.redistributed_bytes) {
          CHECK(bytes <= sim_model().total_param_bytes() + 1e-6);
          total += bytes;
        }
        CHECK(result.metrics.total_redistributed_bytes ==
              doctest::Approx(total));
        if (!result.metrics.aborted && result.metrics.round_time_s > 0.0) {
          CHECK(result.metrics.throughput_samples_per_s ==
                doctest::Approx(8.0 * result.metrics.completed_epochs /
                                result.metrics.round_time_s));
        }
      }
    }
  }

  TEST_CASE("throughput never improves as the hazard rate grows") {
    const std::vector<double> rates{0.0, 0.004, 0.02};
    std::vector<double> means;
    for (double rate : rates) {
      double sum = 0.0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<Fault> faults;
        if (rate > 0.0) {
          FaultSpec spec;
          spec.hazard_rate_per_s = rate;
          std::map<int, double> dwell{{1, 300.0}, {2, 300.0}, {3, 300.0}};
          faults = inject_faults(spec, dwell, seed);
        }
        auto result = run_round(sim_set(), sim_fleet(), sim_model(), CostParams{},
                                faults, sim_pool(), cfg(RecoveryMode::kTemplates));
        sum += result.metrics.throughput_samples_per_s;
      }
      means.push_back(sum / 20.0);
    }
    CHECK(means[0] >= means[1]);
    CHECK(means[1] >= means[2]);
    CHECK(means[0] == doctest::Approx(8.0 * 3 / 100.0));
  }
}
