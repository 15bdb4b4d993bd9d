#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fhdp/clustering.hpp"
#include "fhdp/cost_model.hpp"
#include "fhdp/learner.hpp"
#include "fhdp/pipeline.hpp"
#include "fhdp/vehicle.hpp"

namespace fhdp {

/// Reward mix: w1 scales the (normalized, negated) stage time, w2/w3/w4 the
/// memory, disjointness, and precedence indicators.
struct SwiftWeights {
  double w1 = 1.0;
  double w2 = 0.5;
  double w3 = 0.5;
  double w4 = 0.5;
};

void validate_weights(const SwiftWeights& weights);

/// One schedulable cluster member as the scheduler sees it.
struct SwiftMember {
  int vehicle_id = 0;
  double stability = 0.0;
  double memory_bytes = 0.0;
  double compute_flops_per_s = 0.0;
  double link_bytes_per_s = 0.0;
};

/// Immutable scheduling problem: the cluster members (sorted by descending
/// stability, ascending id on ties — slot order), the profiled model, cost
/// parameters, the precedence DAG, reward weights, and the time scale used
/// to normalize reward times. The time scale is the Phase-1 path time when
/// Phase 1 is feasible, otherwise the whole model's compute time on the
/// fastest member.
class SwiftInstance {
 public:
  SwiftInstance(std::vector<SwiftMember> members, ModelProfile model,
                CostParams cost, ClusterDag dag = {}, SwiftWeights weights = {});

  const std::vector<SwiftMember>& members() const { return members_; }
  const ModelProfile& model() const { return model_; }
  const CostParams& cost() const { return cost_; }
  const ClusterDag& dag() const { return dag_; }
  const SwiftWeights& weights() const { return weights_; }
  const FleetMap& fleet() const { return fleet_; }
  double time_scale_s() const { return time_scale_s_; }
  int unit_count() const { return model_.unit_count(); }
  int size() const { return static_cast<int>(members_.size()); }

  /// Slot index of a vehicle in stability order; throws on unknown id.
  int slot_of(int vehicle_id) const;
  /// True when every DAG predecessor of vehicle_id is already in `placed`.
  bool dag_allows(int vehicle_id, const std::vector<int>& placed) const;

  /// The instance restricted to start_vehicle plus the highest-stability
  /// others, at most unit_count() members total. Excluded ids (lowest
  /// stability first) are appended to *excluded when given.
  SwiftInstance reduced_for_start(int start_vehicle,
                                  std::vector<int>* excluded = nullptr) const;

 private:
  std::vector<SwiftMember> members_;
  ModelProfile model_;
  CostParams cost_;
  ClusterDag dag_;
  SwiftWeights weights_;
  FleetMap fleet_;
  double time_scale_s_ = 1.0;
};

/// Builds the scheduling problem for a formed cluster from fleet profiles.
SwiftInstance make_swift_instance(const Cluster& cluster, const FleetMap& fleet,
                                  const ModelProfile& model,
                                  const CostParams& cost, ClusterDag dag = {},
                                  SwiftWeights weights = {});

/// Template validity: c1 every unit covered exactly once by contiguous
/// ranges in path order; c2 stage bytes within vehicle memory; c3 the path
/// is a topological order of the DAG and stage start times respect each
/// edge's finish-plus-transfer; c4 no repeated vehicles; c5 pairwise
/// disjoint ranges. Violations are returned as data, never thrown.
std::vector<std::string> validate_template(const PipelineTemplate& t,
                                           const ModelProfile& model,
                                           const FleetMap& fleet,
                                           const CostParams& cost,
                                           const ClusterDag& dag = {});

/// Phase 1: stages in descending-stability order, each vehicle taking the
/// largest unit run that fits its memory while leaving one unit for every
/// later stage; the last stage takes the rest. nullopt when the greedy
/// order cannot host the model (or violates the DAG).
std::optional<PipelineTemplate> phase1_initial_pipeline(const SwiftInstance& inst);

/// One decision's reward: w1 x (-(t_cmp + t_com)/scale) + w2/w3/w4
/// indicator terms. The terminal path-time adjustment is applied by the
/// environment, not here.
double stage_reward(double t_cmp_s, double t_com_s, bool memory_ok,
                    bool disjoint_ok, bool dag_ok, const SwiftWeights& weights,
                    double time_scale_s);

/// Pipeline-construction MDP over one or more instances sharing a model
/// (same unit count). An action is slot x K + (units - 1). The state packs
/// the remaining-capacity fraction, five per-slot features, and the mask,
/// padded to n_max slots. The mask enforces every template constraint, so
/// legal rollouts always score full indicator terms; finishing subtracts
/// the normalized path time, and a dead end ends the episode with a
/// penalty instead.
class SwiftPipelineEnv : public EpisodeEnv {
 public:
  SwiftPipelineEnv(std::vector<SwiftInstance> instances, int n_max);

  int state_dim() const override { return 1 + 5 * n_max_ + n_max_ * units_; }
  int action_count() const override { return n_max_ * units_; }
  /// Uniformly draws an instance and a forced start slot from the seed.
  void reset(std::uint64_t episode_seed) override;
  /// Deterministic reset used by template generation.
  void reset_to(int instance_index, int start_slot);
  Eigen::VectorXd state() const override;
  std::vector<std::uint8_t> feasible_mask() const override;
  double step(int action) override;
  bool done() const override { return done_; }
  bool failed() const { return failed_; }

  int slot_of_action(int action) const { return action / units_; }
  int units_of_action(int action) const { return action % units_ + 1; }
  int action_of(int slot, int units) const { return slot * units_ + units - 1; }
  const SwiftInstance& instance() const;
  const std::vector<int>& path_slots() const { return path_slots_; }
  /// The finished episode's template; throws unless done and not failed.
  PipelineTemplate current_template(const std::string& generator) const;

 private:
  bool slot_action_feasible(int slot, int units) const;

  std::vector<SwiftInstance> instances_;
  int n_max_ = 0;
  int units_ = 0;
  int active_ = 0;
  int forced_start_slot_ = -1;
  std::vector<int> path_slots_;          // slots in placement order
  std::vector<int> slot_units_;          // per-slot assigned unit count
  std::vector<int> slot_begin_;          // per-slot first assigned unit
  std::vector<double> slot_cmp_s_;       // per-slot stage compute time
  std::vector<double> slot_com_s_;       // per-slot outbound transfer time
  int next_unit_ = 0;
  double path_time_s_ = 0.0;
  bool done_ = true;
  bool failed_ = false;
};

/// Phase 2: greedy rollout of the value function from a forced start
/// vehicle, deterministic tie-breaking (lowest vehicle id, then fewest
/// units). One backtrack at the deepest decision on a dead end; nullopt if
/// the retry also fails.
std::optional<PipelineTemplate> phase2_generate(const SwiftInstance& inst,
                                                int start_vehicle,
                                                const ValueFunction& policy);

/// Depth-first search for any valid template starting at start_vehicle,
/// visiting vehicles by ascending id and unit counts smallest-first.
/// Complete: nullopt only when no valid template with that start exists.
std::optional<PipelineTemplate> find_feasible_template(const SwiftInstance& inst,
                                                       int start_vehicle);

/// One template per cluster member serving as stage 1. The highest-
/// stability member's template comes from Phase 1; the rest from Phase 2
/// in ascending stability order, falling back to depth-first search when
/// the rollout dead-ends. Missing entries are reported in warnings.
struct EssentialPipelineSet {
  std::map<int, PipelineTemplate> pipelines;  // keyed by start vehicle id
  std::vector<std::string> warnings;
};

EssentialPipelineSet build_essential_set(const SwiftInstance& inst,
                                         const ValueFunction* policy);

/// Exhaustive minimum-path-time template over all member permutations and
/// contiguous unit compositions. Ties prefer the lexicographically smaller
/// path. Refuses instances beyond 5 members or 10 units.
std::optional<PipelineTemplate> enumerate_optimal(const SwiftInstance& inst);

/// Uniform draw over feasible (permutation, composition) pairs by
/// rejection sampling; nullopt after max_retries misses.
std::optional<PipelineTemplate> baseline_random(const SwiftInstance& inst,
                                                std::uint64_t seed,
                                                int max_retries = 10000);

/// The Phase-1 stability-greedy rule as a standalone baseline.
std::optional<PipelineTemplate> baseline_greedy_matching(const SwiftInstance& inst);

}  // namespace fhdp
