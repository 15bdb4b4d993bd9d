#include "fhdp/swift.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "fhdp/util.hpp"

namespace fhdp {

namespace {

/// The Phase-1 greedy core over a stability-ordered member prefix: each
/// stage takes the largest unit run its memory admits while leaving one
/// unit per later stage; the last stage takes the rest.
std::optional<std::vector<StageAssignment>> greedy_stages(
    const std::vector<SwiftMember>& members, const ModelProfile& model) {
  int n = static_cast<int>(members.size());
  int units = model.unit_count();
  if (n == 0 || n > units) return std::nullopt;
  std::vector<StageAssignment> stages;
  stages.reserve(n);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    int stages_after = n - 1 - i;
    int remaining = units - next;
    int take = 0;
    if (stages_after == 0) {
      take = remaining;
      if (model.range_param_bytes(next, next + take) > members[i].memory_bytes)
        return std::nullopt;
    } else {
      for (int u = remaining - stages_after; u >= 1; --u) {
        if (model.range_param_bytes(next, next + u) <= members[i].memory_bytes) {
          take = u;
          break;
        }
      }
      if (take == 0) return std::nullopt;
    }
    stages.push_back({members[i].vehicle_id, next, next + take});
    next += take;
  }
  return stages;
}

bool path_respects_dag(const std::vector<int>& path, const ClusterDag& dag) {
  for (const auto& [from, to] : dag.edges) {
    auto it_from = std::find(path.begin(), path.end(), from);
    auto it_to = std::find(path.begin(), path.end(), to);
    if (it_from == path.end() || it_to == path.end()) continue;  // vacuous
    if (it_from > it_to) return false;
  }
  return true;
}

}  // namespace

void validate_weights(const SwiftWeights& weights) {
  for (double w : {weights.w1, weights.w2, weights.w3, weights.w4})
    if (!std::isfinite(w) || w < 0.0)
      throw std::invalid_argument("SwiftWeights: weights must be finite and >= 0");
}

SwiftInstance::SwiftInstance(std::vector<SwiftMember> members, ModelProfile model,
                             CostParams cost, ClusterDag dag, SwiftWeights weights)
    : members_(std::move(members)), model_(std::move(model)), cost_(cost),
      dag_(std::move(dag)), weights_(weights) {
  if (members_.empty())
    throw std::invalid_argument("SwiftInstance: no members");
  validate_cost_params(cost_);
  validate_weights(weights_);
  for (const auto& m : members_) {
    if (m.memory_bytes <= 0.0 || m.compute_flops_per_s <= 0.0 ||
        m.link_bytes_per_s <= 0.0)
      throw std::invalid_argument("SwiftInstance: member resources must be positive");
    if (!std::isfinite(m.stability) || m.stability < 0.0)
      throw std::invalid_argument("SwiftInstance: member stability must be finite and >= 0");
  }
  std::sort(members_.begin(), members_.end(), [](const auto& a, const auto& b) {
    if (a.stability != b.stability) return a.stability > b.stability;
    return a.vehicle_id < b.vehicle_id;
  });
  for (const auto& m : members_) {
    VehicleProfile profile;
    profile.vehicle_id = m.vehicle_id;
    profile.memory_bytes = m.memory_bytes;
    profile.compute_flops_per_s = m.compute_flops_per_s;
    profile.link_bytes_per_s = m.link_bytes_per_s;
    profile.comm_radius_m = 1.0;  // irrelevant to scheduling
    if (!fleet_.emplace(m.vehicle_id, profile).second)
      throw std::invalid_argument("SwiftInstance: duplicate vehicle id");
  }

  // Reward time scale: Phase-1 path time when the greedy order is feasible,
  // otherwise the whole model's compute time on the fastest member.
  std::vector<SwiftMember> prefix(
      members_.begin(),
      members_.begin() + std::min<std::size_t>(members_.size(),
                                               static_cast<std::size_t>(unit_count())));
  if (auto stages = greedy_stages(prefix, model_)) {
    PipelineTemplate t;
    t.stages = *stages;
    time_scale_s_ = path_time(t, fleet_, model_, cost_);
  } else {
    double best_compute = 0.0;
    for (const auto& m : members_)
      best_compute = std::max(best_compute, m.compute_flops_per_s);
    time_scale_s_ = compute_time(model_.total_flops_per_epoch(), best_compute, cost_);
  }
}

int SwiftInstance::slot_of(int vehicle_id) const {
  for (int s = 0; s < size(); ++s)
    if (members_[s].vehicle_id == vehicle_id) return s;
  throw std::invalid_argument("SwiftInstance: unknown vehicle id");
}

bool SwiftInstance::dag_allows(int vehicle_id, const std::vector<int>& placed) const {
  for (const auto& [from, to] : dag_.edges) {
    if (to != vehicle_id) continue;
    if (fleet_.find(from) == fleet_.end()) continue;  // endpoint outside cluster
    if (std::find(placed.begin(), placed.end(), from) == placed.end()) return false;
  }
  return true;
}

SwiftInstance SwiftInstance::reduced_for_start(int start_vehicle,
                                               std::vector<int>* excluded) const {
  slot_of(start_vehicle);  // membership check
  if (size() <= unit_count()) return *this;
  std::vector<SwiftMember> kept;
  std::vector<int> dropped;
  int budget = unit_count();
  bool start_kept = false;
  for (const auto& m : members_) {
    if (m.vehicle_id == start_vehicle) {
      kept.push_back(m);
      start_kept = true;
    } else if (static_cast<int>(kept.size()) < budget - (start_kept ? 0 : 1)) {
      kept.push_back(m);
    } else {
      dropped.push_back(m.vehicle_id);
    }
  }
  if (excluded)  // lowest stability first
    excluded->insert(excluded->end(), dropped.rbegin(), dropped.rend());
  return SwiftInstance(std::move(kept), model_, cost_, dag_, weights_);
}

SwiftInstance make_swift_instance(const Cluster& cluster, const FleetMap& fleet,
                                  const ModelProfile& model,
                                  const CostParams& cost, ClusterDag dag,
                                  SwiftWeights weights) {
  std::vector<SwiftMember> members;
  members.reserve(cluster.members.size());
  for (const auto& cm : cluster.members) {
    const VehicleProfile& p = fleet_at(fleet, cm.vehicle_id);
    members.push_back({cm.vehicle_id, cm.stability, p.memory_bytes,
                       p.compute_flops_per_s, p.link_bytes_per_s});
  }
  return SwiftInstance(std::move(members), model, cost, std::move(dag), weights);
}

std::vector<std::string> validate_template(const PipelineTemplate& t,
                                           const ModelProfile& model,
                                           const FleetMap& fleet,
                                           const CostParams& cost,
                                           const ClusterDag& dag) {
  std::vector<std::string> violations;
  int units = model.unit_count();
  if (t.stages.empty()) {
    violations.push_back("c1: template has no stages");
    return violations;
  }

  bool ranges_sane = true;
  std::vector<int> coverage(units, 0);
  for (std::size_t i = 0; i < t.stages.size(); ++i) {
    const auto& s = t.stages[i];
    if (s.unit_begin < 0 || s.unit_end > units || s.unit_begin >= s.unit_end) {
      violations.push_back("c1: stage " + std::to_string(i) + " has an invalid unit range");
      ranges_sane = false;
      continue;
    }
    for (int k = s.unit_begin; k < s.unit_end; ++k) ++coverage[k];
  }
  if (ranges_sane) {
    for (int k = 0; k < units; ++k) {
      if (coverage[k] == 0) {
        violations.push_back("c1: unit " + std::to_string(k) + " is not assigned");
        ranges_sane = false;
      } else if (coverage[k] > 1) {
        violations.push_back("c5: unit " + std::to_string(k) + " is assigned to multiple stages");
        ranges_sane = false;
      }
    }
  }
  if (ranges_sane) {
    for (std::size_t i = 1; i < t.stages.size(); ++i) {
      if (t.stages[i].unit_begin != t.stages[i - 1].unit_end) {
        violations.push_back("c1: stage ranges do not follow pipeline order");
        ranges_sane = false;
        break;
      }
    }
    if (ranges_sane && t.stages.front().unit_begin != 0) {
      violations.push_back("c1: first stage does not start at unit 0");
      ranges_sane = false;
    }
  }

  bool vehicles_known = true;
  std::vector<int> path;
  for (std::size_t i = 0; i < t.stages.size(); ++i) {
    const auto& s = t.stages[i];
    path.push_back(s.vehicle_id);
    auto it = fleet.find(s.vehicle_id);
    if (it == fleet.end()) {
      violations.push_back("c2: stage " + std::to_string(i) + " uses unknown vehicle " +
                           std::to_string(s.vehicle_id));
      vehicles_known = false;
      continue;
    }
    if (s.unit_begin >= 0 && s.unit_end <= units && s.unit_begin < s.unit_end &&
        model.range_param_bytes(s.unit_begin, s.unit_end) > it->second.memory_bytes)
      violations.push_back("c2: stage " + std::to_string(i) + " exceeds the memory of vehicle " +
                           std::to_string(s.vehicle_id));
  }

  std::vector<int> sorted_path = path;
  std::sort(sorted_path.begin(), sorted_path.end());
  if (std::adjacent_find(sorted_path.begin(), sorted_path.end()) != sorted_path.end())
    violations.push_back("c4: a vehicle appears in more than one stage");

  if (!path_respects_dag(path, dag))
    violations.push_back("c3: path is not a topological order of the cluster precedence graph");
  else if (ranges_sane && vehicles_known && !dag.edges.empty()) {
    auto timings = stage_timings(t, fleet, model, cost);
    std::map<int, std::size_t> stage_of;
    for (std::size_t i = 0; i < path.size(); ++i) stage_of.emplace(path[i], i);
    for (const auto& [from, to] : dag.edges) {
      auto f = stage_of.find(from);
      auto g = stage_of.find(to);
      if (f == stage_of.end() || g == stage_of.end()) continue;
      const auto& u = timings[f->second];
      if (timings[g->second].start_s < u.end_s + u.comm_s - 1e-9)
        violations.push_back("c3: vehicle " + std::to_string(to) +
                             " starts before vehicle " + std::to_string(from) +
                             " finishes its transfer");
    }
  }
  return violations;
}

std::optional<PipelineTemplate> phase1_initial_pipeline(const SwiftInstance& inst) {
  std::vector<SwiftMember> prefix(
      inst.members().begin(),
      inst.members().begin() +
          std::min<std::size_t>(inst.members().size(),
                                static_cast<std::size_t>(inst.unit_count())));
  auto stages = greedy_stages(prefix, inst.model());
  if (!stages) return std::nullopt;
  PipelineTemplate t;
  t.stages = *stages;
  t.generator = "phase1";
  if (!path_respects_dag(t.path(), inst.dag())) return std::nullopt;
  t.predicted_path_time_s = path_time(t, inst.fleet(), inst.model(), inst.cost());
  return t;
}

double stage_reward(double t_cmp_s, double t_com_s, bool memory_ok,
                    bool disjoint_ok, bool dag_ok, const SwiftWeights& weights,
                    double time_scale_s) {
  validate_weights(weights);
  if (!(time_scale_s > 0.0))
    throw std::invalid_argument("stage_reward: time scale must be positive");
  if (t_cmp_s < 0.0 || t_com_s < 0.0)
    throw std::invalid_argument("stage_reward: negative stage time");
  return weights.w1 * (-(t_cmp_s + t_com_s) / time_scale_s) +
         weights.w2 * (memory_ok ? 1.0 : 0.0) +
         weights.w3 * (disjoint_ok ? 1.0 : 0.0) +
         weights.w4 * (dag_ok ? 1.0 : 0.0);
}

SwiftPipelineEnv::SwiftPipelineEnv(std::vector<SwiftInstance> instances, int n_max)
    : instances_(std::move(instances)), n_max_(n_max) {
  if (instances_.empty())
    throw std::invalid_argument("SwiftPipelineEnv: no instances");
  if (n_max_ < 1) throw std::invalid_argument("SwiftPipelineEnv: n_max must be >= 1");
  units_ = instances_.front().unit_count();
  for (const auto& inst : instances_) {
    if (inst.unit_count() != units_)
      throw std::invalid_argument("SwiftPipelineEnv: instances must share one model size");
    if (inst.size() > n_max_)
      throw std::invalid_argument("SwiftPipelineEnv: instance larger than n_max");
    if (inst.size() > units_)
      throw std::invalid_argument("SwiftPipelineEnv: more members than units");
  }
}

const SwiftInstance& SwiftPipelineEnv::instance() const {
  return instances_[static_cast<std::size_t>(active_)];
}

void SwiftPipelineEnv::reset(std::uint64_t episode_seed) {
  std::mt19937_64 rng(mix_seed(episode_seed));
  std::uniform_int_distribution<int> pick_instance(
      0, static_cast<int>(instances_.size()) - 1);
  int idx = pick_instance(rng);
  std::uniform_int_distribution<int> pick_slot(0, instances_[idx].size() - 1);
  reset_to(idx, pick_slot(rng));
}

void SwiftPipelineEnv::reset_to(int instance_index, int start_slot) {
  if (instance_index < 0 || instance_index >= static_cast<int>(instances_.size()))
    throw std::invalid_argument("SwiftPipelineEnv: instance index out of range");
  active_ = instance_index;
  if (start_slot < 0 || start_slot >= instance().size())
    throw std::invalid_argument("SwiftPipelineEnv: start slot out of range");
  forced_start_slot_ = start_slot;
  int n = instance().size();
  path_slots_.clear();
  slot_units_.assign(n, 0);
  slot_begin_.assign(n, 0);
  slot_cmp_s_.assign(n, 0.0);
  slot_com_s_.assign(n, 0.0);
  next_unit_ = 0;
  path_time_s_ = 0.0;
  done_ = false;
  failed_ = false;
}

bool SwiftPipelineEnv::slot_action_feasible(int slot, int units) const {
  const SwiftInstance& inst = instance();
  int n = inst.size();
  if (done_ || slot < 0 || slot >= n || units < 1) return false;
  if (slot_units_[slot] > 0) return false;  // already placed
  if (path_slots_.empty() && forced_start_slot_ >= 0 && slot != forced_start_slot_)
    return false;
  int stages_after = n - static_cast<int>(path_slots_.size()) - 1;
  int remaining = units_ - next_unit_;
  if (stages_after == 0) {
    if (units != remaining) return false;  // last stage takes the rest
  } else if (units > remaining - stages_after) {
    return false;  // leave one unit for every later stage
  }
  const SwiftMember& m = inst.members()[slot];
  if (inst.model().range_param_bytes(next_unit_, next_unit_ + units) > m.memory_bytes)
    return false;
  std::vector<int> placed_ids;
  placed_ids.reserve(path_slots_.size());
  for (int s : path_slots_) placed_ids.push_back(inst.members()[s].vehicle_id);
  return inst.dag_allows(m.vehicle_id, placed_ids);
}

std::vector<std::uint8_t> SwiftPipelineEnv::feasible_mask() const {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(action_count()), 0);
  if (done_) return mask;
  for (int slot = 0; slot < instance().size(); ++slot)
    for (int units = 1; units <= units_; ++units)
      if (slot_action_feasible(slot, units))
        mask[static_cast<std::size_t>(action_of(slot, units))] = 1;
  return mask;
}

Eigen::VectorXd SwiftPipelineEnv::state() const {
  const SwiftInstance& inst = instance();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(state_dim());
  double total_bytes = inst.model().total_param_bytes();
  s(0) = inst.model().range_param_bytes(next_unit_, units_) / total_bytes;
  for (int slot = 0; slot < inst.size(); ++slot) {
    const SwiftMember& m = inst.members()[slot];
    int base = 1 + 5 * slot;
    s(base + 0) = static_cast<double>(slot_units_[slot]) / units_;
    s(base + 1) = slot_units_[slot] > 0
                      ? inst.model().range_param_bytes(
                            slot_begin_[slot], slot_begin_[slot] + slot_units_[slot]) /
                            m.memory_bytes
                      : 0.0;
    s(base + 2) = slot_cmp_s_[slot] / inst.time_scale_s();
    s(base + 3) = slot_com_s_[slot] / inst.time_scale_s();
  }
  for (std::size_t pos = 0; pos < path_slots_.size(); ++pos)
    s(1 + 5 * path_slots_[pos] + 4) =
        static_cast<double>(pos + 1) / static_cast<double>(n_max_);
  auto mask = feasible_mask();
  int offset = 1 + 5 * n_max_;
  for (std::size_t a = 0; a < mask.size(); ++a)
    s(offset + static_cast<int>(a)) = mask[a] ? 1.0 : 0.0;
  return s;
}

double SwiftPipelineEnv::step(int action) {
  if (done_) throw std::invalid_argument("SwiftPipelineEnv: episode already finished");
  int slot = slot_of_action(action);
  int units = units_of_action(action);
  if (action < 0 || action >= action_count() || !slot_action_feasible(slot, units))
    throw std::invalid_argument("SwiftPipelineEnv: action violates the feasible mask");

  const SwiftInstance& inst = instance();
  const SwiftMember& m = inst.members()[slot];
  int begin = next_unit_;
  int end = begin + units;
  bool terminal = static_cast<int>(path_slots_.size()) + 1 == inst.size();

  double t_cmp = compute_time(inst.model().range_flops_per_epoch(begin, end),
                              m.compute_flops_per_s, inst.cost());
  double t_com = 0.0;
  if (!terminal) {
    double volume = inst.cost().comm_volume == CommVolumeMode::kPartitionParams
                        ? inst.model().range_param_bytes(begin, end)
                        : inst.model().boundary_activation_bytes(end) *
                              static_cast<double>(inst.model().batch_size());
    t_com = comm_time(volume, inst.model().batches_per_epoch(), m.link_bytes_per_s,
                      inst.cost());
  }

  path_slots_.push_back(slot);
  slot_units_[slot] = units;
  slot_begin_[slot] = begin;
  slot_cmp_s_[slot] = t_cmp;
  slot_com_s_[slot] = t_com;
  next_unit_ = end;
  path_time_s_ += t_cmp + t_com;

  // The mask admits only legal placements, so the indicator terms are
  // always earned on the path the agent actually walks.
  double reward = stage_reward(t_cmp, t_com, true, true, true, inst.weights(),
                               inst.time_scale_s());
  if (terminal) {
    done_ = true;
    reward -= path_time_s_ / inst.time_scale_s();
  } else {
    auto mask = feasible_mask();
    if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; })) {
      done_ = true;
      failed_ = true;
      reward -= inst.weights().w2 + 2.0;  // dead end: worse than any legal finish
    }
  }
  return reward;
}

PipelineTemplate SwiftPipelineEnv::current_template(const std::string& generator) const {
  if (!done_ || failed_ || static_cast<int>(path_slots_.size()) != instance().size())
    throw std::invalid_argument("SwiftPipelineEnv: no completed template available");
  PipelineTemplate t;
  for (int slot : path_slots_)
    t.stages.push_back({instance().members()[slot].vehicle_id, slot_begin_[slot],
                        slot_begin_[slot] + slot_units_[slot]});
  t.generator = generator;
  t.predicted_path_time_s = path_time_s_;
  return t;
}

namespace {

/// Feasible argmax of the policy with deterministic tie-breaking: higher
/// value first, then lower vehicle id, then fewer units. `exclude` masks a
/// single action out (used by the backtrack retry).
int best_policy_action(const SwiftPipelineEnv& env, const ValueFunction& policy,
                       const std::vector<std::uint8_t>& mask, int exclude) {
  Eigen::VectorXd q = policy.values(env.state());
  int best = -1, best_vid = 0, best_units = 0;
  double best_q = 0.0;
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (!mask[a] || a == exclude) continue;
    int vid = env.instance().members()[env.slot_of_action(a)].vehicle_id;
    int units = env.units_of_action(a);
    bool better = best < 0 || q(a) > best_q ||
                  (q(a) == best_q &&
                   (vid < best_vid || (vid == best_vid && units < best_units)));
    if (better) {
      best = a;
      best_q = q(a);
      best_vid = vid;
      best_units = units;
    }
  }
  return best;
}

}  // namespace

std::optional<PipelineTemplate> phase2_generate(const SwiftInstance& inst,
                                                int start_vehicle,
                                                const ValueFunction& policy) {
  SwiftInstance work = inst.reduced_for_start(start_vehicle);
  if (policy.action_count() % work.unit_count() != 0)
    throw std::invalid_argument("phase2_generate: policy actions do not match the unit count");
  int n_max = policy.action_count() / work.unit_count();
  if (n_max < work.size())
    throw std::invalid_argument("phase2_generate: policy was sized for fewer vehicles");
  SwiftPipelineEnv env({work}, n_max);
  if (policy.state_dim() != env.state_dim() ||
      policy.action_count() != env.action_count())
    throw std::invalid_argument("phase2_generate: policy dimensions do not match the instance");

  int start_slot = work.slot_of(start_vehicle);
  std::vector<int> chosen;
  bool backtracked = false;
  env.reset_to(0, start_slot);
  while (!env.done()) {
    auto mask = env.feasible_mask();
    int action = best_policy_action(env, policy, mask, -1);
    if (action < 0) return std::nullopt;  // nothing legal at the first decision
    chosen.push_back(action);
    env.step(action);
    if (!env.failed()) continue;
    if (backtracked) return std::nullopt;
    backtracked = true;
    int bad = chosen.back();
    chosen.pop_back();
    env.reset_to(0, start_slot);
    for (int prev : chosen) env.step(prev);
    int alt = best_policy_action(env, policy, env.feasible_mask(), bad);
    if (alt < 0) return std::nullopt;
    chosen.push_back(alt);
    env.step(alt);
    if (env.failed()) return std::nullopt;
  }
  if (env.failed()) return std::nullopt;
  return env.current_template("dqn");
}

std::optional<PipelineTemplate> find_feasible_template(const SwiftInstance& inst,
                                                       int start_vehicle) {
  SwiftInstance work = inst.reduced_for_start(start_vehicle);
  int n = work.size();
  int units = work.unit_count();

  std::vector<int> id_order(static_cast<std::size_t>(n));
  std::iota(id_order.begin(), id_order.end(), 0);
  std::sort(id_order.begin(), id_order.end(), [&](int a, int b) {
    return work.members()[a].vehicle_id < work.members()[b].vehicle_id;
  });

  std::vector<StageAssignment> stages;
  std::vector<int> placed_ids;
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  std::function<bool(int)> dfs = [&](int next_unit) -> bool {
    int depth = static_cast<int>(stages.size());
    if (depth == n) return next_unit == units;
    int stages_after = n - depth - 1;
    int remaining = units - next_unit;
    for (int slot : id_order) {
      if (used[static_cast<std::size_t>(slot)]) continue;
      const SwiftMember& m = work.members()[slot];
      if (depth == 0 && m.vehicle_id != start_vehicle) continue;
      if (!work.dag_allows(m.vehicle_id, placed_ids)) continue;
      int lo = stages_after == 0 ? remaining : 1;
      int hi = stages_after == 0 ? remaining : remaining - stages_after;
      for (int u = lo; u <= hi; ++u) {
        if (work.model().range_param_bytes(next_unit, next_unit + u) > m.memory_bytes)
          break;  // ranges only grow
        used[static_cast<std::size_t>(slot)] = true;
        stages.push_back({m.vehicle_id, next_unit, next_unit + u});
        placed_ids.push_back(m.vehicle_id);
        if (dfs(next_unit + u)) return true;
        placed_ids.pop_back();
        stages.pop_back();
        used[static_cast<std::size_t>(slot)] = false;
      }
    }
    return false;
  };

  if (!dfs(0)) return std::nullopt;
  PipelineTemplate t;
  t.stages = stages;
  t.generator = "dfs_fallback";
  t.predicted_path_time_s = path_time(t, work.fleet(), work.model(), work.cost());
  return t;
}

EssentialPipelineSet build_essential_set(const SwiftInstance& inst,
                                         const ValueFunction* policy) {
  EssentialPipelineSet set;
  if (inst.size() > inst.unit_count())
    set.warnings.push_back("cluster of " + std::to_string(inst.size()) +
                           " members exceeds " + std::to_string(inst.unit_count()) +
                           " units; each template drops the lowest-stability surplus");

  // Highest-stability start comes from Phase 1.
  int phase1_start = inst.members().front().vehicle_id;
  if (auto t = phase1_initial_pipeline(inst)) {
    set.pipelines.emplace(phase1_start, std::move(*t));
  }

  // Remaining starts in ascending stability order.
  for (auto it = inst.members().rbegin(); it != inst.members().rend(); ++it) {
    int start = it->vehicle_id;
    if (set.pipelines.count(start)) continue;
    std::optional<PipelineTemplate> t;
    if (policy) {
      t = phase2_generate(inst, start, *policy);
    }
    if (!t) {
      t = find_feasible_template(inst, start);
      if (t && policy)
        set.warnings.push_back("start vehicle " + std::to_string(start) +
                               ": rollout dead-ended; used depth-first fallback");
    }
    if (t) {
      set.pipelines.emplace(start, std::move(*t));
    } else {
      set.warnings.push_back("start vehicle " + std::to_string(start) +
                             ": no feasible pipeline exists");
    }
  }
  return set;
}

std::optional<PipelineTemplate> enumerate_optimal(const SwiftInstance& inst) {
  constexpr int kMaxVehicles = 5;
  constexpr int kMaxUnits = 10;
  if (inst.size() > kMaxVehicles || inst.unit_count() > kMaxUnits)
    throw oracle_limit_error(
        "enumerate_optimal: limits are " + std::to_string(kMaxVehicles) +
        " vehicles and " + std::to_string(kMaxUnits) + " units");

  int n = inst.size();
  int units = inst.unit_count();
  // std::next_permutation enumerates everything only from the ascending
  // start; ties are resolved by comparing vehicle-id paths instead.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);

  std::optional<PipelineTemplate> best;
  std::vector<int> best_path;
  std::vector<int> cuts(static_cast<std::size_t>(std::max(0, n - 1)));
  do {
    std::vector<int> path;
    path.reserve(static_cast<std::size_t>(n));
    for (int slot : perm) path.push_back(inst.members()[slot].vehicle_id);
    if (!path_respects_dag(path, inst.dag())) continue;

    // All compositions of `units` into n positive parts via cut positions.
    std::function<void(int, int)> visit = [&](int next_cut, int prev) {
      if (next_cut == n - 1) {
        PipelineTemplate t;
        int begin = 0;
        for (int i = 0; i < n; ++i) {
          int end = i + 1 < n ? cuts[static_cast<std::size_t>(i)] : units;
          const SwiftMember& m = inst.members()[perm[static_cast<std::size_t>(i)]];
          if (inst.model().range_param_bytes(begin, end) > m.memory_bytes) return;
          t.stages.push_back({m.vehicle_id, begin, end});
          begin = end;
        }
        t.generator = "oracle";
        t.predicted_path_time_s = path_time(t, inst.fleet(), inst.model(), inst.cost());
        bool take = !best || t.predicted_path_time_s < best->predicted_path_time_s ||
                    (t.predicted_path_time_s == best->predicted_path_time_s &&
                     path < best_path);
        if (take) {
          best = t;
          best_path = path;
        }
        return;
      }
      for (int c = prev + 1; c <= units - (n - 1 - next_cut); ++c) {
        cuts[static_cast<std::size_t>(next_cut)] = c;
        visit(next_cut + 1, c);
      }
    };
    visit(0, 0);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::optional<PipelineTemplate> baseline_random(const SwiftInstance& inst,
                                                std::uint64_t seed,
                                                int max_retries) {
  if (max_retries < 1)
    throw std::invalid_argument("baseline_random: retry budget must be positive");
  SwiftInstance work = inst;
  if (inst.size() > inst.unit_count())
    work = inst.reduced_for_start(inst.members().front().vehicle_id);
  int n = work.size();
  int units = work.unit_count();
  auto rng = make_rng(seed, "baseline-random");

  std::vector<int> slots(static_cast<std::size_t>(n));
  std::iota(slots.begin(), slots.end(), 0);
  std::vector<int> interior(static_cast<std::size_t>(std::max(0, units - 1)));
  std::iota(interior.begin(), interior.end(), 1);

  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::shuffle(slots.begin(), slots.end(), rng);
    std::vector<int> cuts;
    std::sample(interior.begin(), interior.end(), std::back_inserter(cuts),
                static_cast<std::size_t>(n - 1), rng);
    std::sort(cuts.begin(), cuts.end());

    PipelineTemplate t;
    std::vector<int> placed_ids;
    int begin = 0;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      int end = i + 1 < n ? cuts[static_cast<std::size_t>(i)] : units;
      const SwiftMember& m = work.members()[slots[static_cast<std::size_t>(i)]];
      if (work.model().range_param_bytes(begin, end) > m.memory_bytes ||
          !work.dag_allows(m.vehicle_id, placed_ids)) {
        ok = false;
        break;
      }
      t.stages.push_back({m.vehicle_id, begin, end});
      placed_ids.push_back(m.vehicle_id);
      begin = end;
    }
    if (!ok) continue;
    t.generator = "random";
    t.predicted_path_time_s = path_time(t, work.fleet(), work.model(), work.cost());
    return t;
  }
  return std::nullopt;
}

std::optional<PipelineTemplate> baseline_greedy_matching(const SwiftInstance& inst) {
  auto t = phase1_initial_pipeline(inst);
  if (t) t->generator = "greedy";
  return t;
}

}  // namespace fhdp
