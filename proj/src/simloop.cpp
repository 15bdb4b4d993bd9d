#include "fhdp/simloop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include "fhdp/util.hpp"

namespace fhdp {

namespace {

struct PauseSpan {
  double begin = 0.0;
  double end = 0.0;
};

std::vector<PauseSpan> merge_spans(std::vector<PauseSpan> spans) {
  std::sort(spans.begin(), spans.end(),
            [](const PauseSpan& a, const PauseSpan& b) { return a.begin < b.begin; });
  std::vector<PauseSpan> merged;
  for (const PauseSpan& s : spans) {
    if (!merged.empty() && s.begin <= merged.back().end)
      merged.back().end = std::max(merged.back().end, s.end);
    else
      merged.push_back(s);
  }
  return merged;
}

std::vector<PauseSpan> union_spans(const std::vector<PauseSpan>& a,
                                   const std::vector<PauseSpan>& b) {
  std::vector<PauseSpan> all(a);
  all.insert(all.end(), b.begin(), b.end());
  return merge_spans(std::move(all));
}

/// First instant >= t at which no pause is active. Spans must be merged.
double next_free(const std::vector<PauseSpan>& spans, double t) {
  for (const PauseSpan& p : spans) {
    if (p.begin <= t && t < p.end) t = p.end;
    else if (p.begin > t) break;
  }
  return t;
}

/// Completion instant of `duration` seconds of work started at `start`,
/// pausing whenever a span is active. Spans must be merged.
double finish_after(const std::vector<PauseSpan>& spans, double start,
                    double duration) {
  double t = start;
  double rem = duration;
  for (const PauseSpan& p : spans) {
    if (p.end <= t) continue;
    if (p.begin >= t + rem) break;
    if (p.begin > t) rem -= p.begin - t;
    t = p.end;
  }
  return t + rem;
}

}  // namespace

std::string to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::kStageStart: return "stage_start";
    case SimEventKind::kStageEnd: return "stage_end";
    case SimEventKind::kTransferStart: return "transfer_start";
    case SimEventKind::kTransferEnd: return "transfer_end";
    case SimEventKind::kDeparture: return "departure";
    case SimEventKind::kDisconnect: return "disconnect";
    case SimEventKind::kReconnect: return "reconnect";
    case SimEventKind::kCheckpoint: return "checkpoint";
    case SimEventKind::kRecoveryStart: return "recovery_start";
    case SimEventKind::kRecoveryEnd: return "recovery_end";
    case SimEventKind::kRoundEnd: return "round_end";
  }
  throw std::invalid_argument("unknown SimEventKind");
}

std::string to_string(RecoveryMode mode) {
  switch (mode) {
    case RecoveryMode::kTemplates: return "templates";
    case RecoveryMode::kElastic: return "elastic";
    case RecoveryMode::kRelaunch: return "relaunch";
  }
  throw std::invalid_argument("unknown RecoveryMode");
}

std::vector<Fault> inject_faults(const FaultSpec& spec,
                                 const std::map<int, double>& true_dwell_s,
                                 std::uint64_t seed) {
  std::vector<Fault> out;
  if (spec.hazard_rate_per_s > 0.0) {
    if (spec.disconnect_fraction < 0.0 || spec.disconnect_fraction > 1.0)
      throw std::invalid_argument("inject_faults: disconnect fraction must lie in [0, 1]");
    if (spec.disconnect_fraction > 0.0 && spec.disconnect_duration_s <= 0.0)
      throw std::invalid_argument("inject_faults: disconnect duration must be positive");
    auto rng = make_rng(seed, "fault-injection");
    std::exponential_distribution<double> time_draw(spec.hazard_rate_per_s);
    std::bernoulli_distribution kind_draw(spec.disconnect_fraction);
    for (const auto& [vehicle_id, dwell] : true_dwell_s) {
      if (dwell < 0.0)
        throw std::invalid_argument("inject_faults: dwell times must be nonnegative");
      double t = time_draw(rng);
      bool disconnect = kind_draw(rng);
      if (t >= dwell) continue;  // censored at the true dwell
      Fault f;
      f.vehicle_id = vehicle_id;
      f.time_s = t;
      f.kind = disconnect ? FaultKind::kDisconnect : FaultKind::kDeparture;
      f.duration_s = disconnect ? spec.disconnect_duration_s : 0.0;
      out.push_back(f);
    }
  } else {
    for (const Fault& f : spec.scripted) {
      if (f.time_s < 0.0)
        throw std::invalid_argument("inject_faults: fault times must be nonnegative");
      if (f.kind == FaultKind::kDisconnect && f.duration_s <= 0.0)
        throw std::invalid_argument("inject_faults: disconnect duration must be positive");
      out.push_back(f);
    }
  }
  std::sort(out.begin(), out.end(), [](const Fault& a, const Fault& b) {
    if (a.time_s != b.time_s) return a.time_s < b.time_s;
    return a.vehicle_id < b.vehicle_id;
  });
  return out;
}

RecoveryOutcome recover_with_template(const PipelineTemplate& failed,
                                      int failed_vehicle,
                                      const std::map<int, PipelineTemplate>& pool,
                                      const Checkpoint& checkpoint,
                                      int current_epoch, const FleetMap& fleet,
                                      const ModelProfile& model,
                                      const CostParams& cost,
                                      double control_overhead_s) {
  if (control_overhead_s < 0.0)
    throw std::invalid_argument("recover_with_template: negative control overhead");
  if (current_epoch < checkpoint.epoch)
    throw std::invalid_argument("recover_with_template: epoch precedes the checkpoint");
  RecoveryOutcome out;
  out.lost_epochs = current_epoch - checkpoint.epoch;

  auto usable = [&](const PipelineTemplate& t) {
    if (t.stages.empty()) return false;
    for (const StageAssignment& s : t.stages)
      if (s.vehicle_id == failed_vehicle) return false;
    return true;
  };
  const PipelineTemplate* chosen = nullptr;
  int chosen_start = 0;
  int want = failed.stages.empty() ? failed_vehicle
                                   : failed.stages.front().vehicle_id;
  auto it = pool.find(want);
  if (it != pool.end() && usable(it->second)) {
    chosen = &it->second;
    chosen_start = it->first;
  } else {
    for (const auto& [start, t] : pool) {
      if (usable(t)) {
        chosen = &t;
        chosen_start = start;
        break;
      }
    }
  }
  if (!chosen) {
    out.detail = "empty template pool";
    return out;
  }

  int changed = 0;
  for (const StageAssignment& ns : chosen->stages) {
    bool unchanged = false;
    for (const StageAssignment& os : failed.stages) {
      if (os == ns) {
        unchanged = true;
        break;
      }
    }
    if (unchanged) continue;
    ++changed;
    double bytes = model.range_param_bytes(ns.unit_begin, ns.unit_end);
    out.redistributed_bytes += bytes;
    out.transfer_time_s += bytes * cost.bandwidth_overhead /
                           fleet_at(fleet, ns.vehicle_id).link_bytes_per_s;
  }
  out.recovery_time_s = control_overhead_s + out.transfer_time_s;
  out.replacement = *chosen;
  out.detail = "mode=templates;start=" + std::to_string(chosen_start) +
               ";changed_stages=" + std::to_string(changed);
  return out;
}

std::optional<PipelineTemplate> elastic_patch(const PipelineTemplate& failed,
                                              int failed_vehicle,
                                              const FleetMap& fleet,
                                              const ModelProfile& model,
                                              const CostParams& cost) {
  int f = -1;
  for (std::size_t i = 0; i < failed.stages.size(); ++i) {
    if (failed.stages[i].vehicle_id == failed_vehicle) {
      f = static_cast<int>(i);
      break;
    }
  }
  if (f < 0) return failed;  // vehicle held no stage; nothing to patch
  if (failed.stages.size() == 1) return std::nullopt;

  int b = failed.stages[static_cast<std::size_t>(f)].unit_begin;
  int e = failed.stages[static_cast<std::size_t>(f)].unit_end;
  int orphan = e - b;

  // The upstream neighbor absorbs the longest prefix its memory admits;
  // the downstream neighbor must hold the rest.
  int absorbed = 0;
  if (f > 0) {
    const StageAssignment& prev = failed.stages[static_cast<std::size_t>(f - 1)];
    double mem = fleet_at(fleet, prev.vehicle_id).memory_bytes;
    for (int a = orphan; a >= 1; --a) {
      if (model.range_param_bytes(prev.unit_begin, b + a) <= mem) {
        absorbed = a;
        break;
      }
    }
  }
  if (f + 1 < static_cast<int>(failed.stages.size())) {
    const StageAssignment& next = failed.stages[static_cast<std::size_t>(f + 1)];
    double mem = fleet_at(fleet, next.vehicle_id).memory_bytes;
    if (model.range_param_bytes(b + absorbed, next.unit_end) > mem)
      return std::nullopt;
  } else if (absorbed < orphan) {
    return std::nullopt;  // the failed stage was last; upstream must take it all
  }

  PipelineTemplate patched;
  for (std::size_t i = 0; i < failed.stages.size(); ++i) {
    if (static_cast<int>(i) == f) continue;
    StageAssignment s = failed.stages[i];
    if (static_cast<int>(i) == f - 1) s.unit_end = b + absorbed;
    if (static_cast<int>(i) == f + 1) s.unit_begin = b + absorbed;
    patched.stages.push_back(s);
  }
  patched.generator = "elastic";
  patched.predicted_path_time_s = path_time(patched, fleet, model, cost);
  return patched;
}

std::optional<PipelineTemplate> relaunch_plan(const FleetMap& survivors,
                                              const std::map<int, double>& stability,
                                              const ModelProfile& model,
                                              const CostParams& cost,
                                              std::optional<int> required_start) {
  if (survivors.empty()) return std::nullopt;
  if (required_start && survivors.find(*required_start) == survivors.end())
    return std::nullopt;
  std::vector<SwiftMember> members;
  members.reserve(survivors.size());
  for (const auto& [id, profile] : survivors) {
    auto it = stability.find(id);
    members.push_back({id, it == stability.end() ? 0.0 : it->second,
                       profile.memory_bytes, profile.compute_flops_per_s,
                       profile.link_bytes_per_s});
  }
  SwiftInstance inst(std::move(members), model, cost);

  std::optional<PipelineTemplate> plan;
  if (inst.size() <= inst.unit_count()) {
    plan = phase1_initial_pipeline(inst);
    if (plan && required_start &&
        plan->stages.front().vehicle_id != *required_start)
      plan.reset();
  }
  if (!plan) {
    if (required_start) {
      plan = find_feasible_template(inst, *required_start);
    } else {
      for (const SwiftMember& m : inst.members()) {
        plan = find_feasible_template(inst, m.vehicle_id);
        if (plan) break;
      }
    }
  }
  if (plan) plan->generator = "relaunch";
  return plan;
}

SimResult run_round(const EssentialPipelineSet& set, const FleetMap& fleet,
                    const ModelProfile& model, const CostParams& cost,
                    const std::vector<Fault>& faults,
                    const std::map<int, EssentialPipelineSet>& template_pool,
                    const RoundConfig& config) {
  validate_cost_params(cost);
  if (set.pipelines.empty())
    throw std::invalid_argument("run_round: empty essential pipeline set");
  if (config.checkpoint_interval_epochs < 0)
    throw std::invalid_argument("run_round: negative checkpoint interval");
  if (config.overheads.template_s < 0.0 || config.overheads.elastic_s < 0.0 ||
      config.overheads.relaunch_s < 0.0)
    throw std::invalid_argument("run_round: negative recovery overhead");
  for (const auto& [start, tmpl] : set.pipelines) {
    auto violations = validate_template(tmpl, model, fleet, cost);
    if (!violations.empty())
      throw std::invalid_argument("run_round: invalid template for start " +
                                  std::to_string(start) + ": " + violations.front());
    if (tmpl.stages.front().vehicle_id != start)
      throw std::invalid_argument(
          "run_round: template stage 1 must be the start vehicle");
  }

  std::vector<Fault> departures;
  std::map<int, std::vector<PauseSpan>> pauses;
  std::set<int> departure_seen;
  for (const Fault& f : faults) {
    fleet_at(fleet, f.vehicle_id);  // membership check
    if (f.time_s < 0.0)
      throw std::invalid_argument("run_round: fault times must be nonnegative");
    if (f.kind == FaultKind::kDeparture) {
      if (!departure_seen.insert(f.vehicle_id).second)
        throw std::invalid_argument("run_round: duplicate departure for vehicle " +
                                    std::to_string(f.vehicle_id));
      departures.push_back(f);
    } else {
      if (f.duration_s <= 0.0)
        throw std::invalid_argument("run_round: disconnect duration must be positive");
      pauses[f.vehicle_id].push_back({f.time_s, f.time_s + f.duration_s});
    }
  }
  std::sort(departures.begin(), departures.end(), [](const Fault& a, const Fault& b) {
    if (a.time_s != b.time_s) return a.time_s < b.time_s;
    return a.vehicle_id < b.vehicle_id;
  });
  for (auto& [vehicle_id, spans] : pauses) spans = merge_spans(std::move(spans));

  struct Entry {
    int start = 0;
    PipelineTemplate tmpl;
  };
  std::vector<Entry> rotation;
  rotation.reserve(set.pipelines.size());
  for (const auto& [start, tmpl] : set.pipelines) rotation.push_back({start, tmpl});

  SimResult result;
  auto& events = result.events;
  auto& metrics = result.metrics;
  double clock = 0.0;
  double recovery_busy_until = 0.0;
  int epoch = 0;
  std::vector<Checkpoint> checkpoints{{0, config.edge_node_id, 0.0, 0.0}};
  std::set<int> departed;
  std::size_t next_dep = 0;
  std::size_t entry_idx = 0;
  const std::vector<PauseSpan> kNoPauses;

  auto spans_of = [&](int vehicle_id) -> const std::vector<PauseSpan>& {
    auto it = pauses.find(vehicle_id);
    return it == pauses.end() ? kNoPauses : it->second;
  };
  auto emit = [&](double t, SimEventKind kind, int pid, int vid, std::string detail) {
    events.push_back({t, kind, pid, vid, std::move(detail)});
  };
  auto one_way_s = [&](double bytes, int vehicle_id) {
    return bytes * cost.bandwidth_overhead /
           fleet_at(fleet, vehicle_id).link_bytes_per_s;
  };
  auto participates = [](const PipelineTemplate& t, int vehicle_id) {
    for (const StageAssignment& s : t.stages)
      if (s.vehicle_id == vehicle_id) return true;
    return false;
  };
  auto departed_ref = [&](const PipelineTemplate& t) {
    for (const StageAssignment& s : t.stages)
      if (departed.count(s.vehicle_id)) return s.vehicle_id;
    return -1;
  };
  auto template_ok = [&](const PipelineTemplate& t, int required_start) {
    if (t.stages.empty() || t.stages.front().vehicle_id != required_start)
      return false;
    for (const StageAssignment& s : t.stages) {
      if (fleet.find(s.vehicle_id) == fleet.end()) return false;
      if (departed.count(s.vehicle_id)) return false;
    }
    return validate_template(t, model, fleet, cost).empty();
  };
  auto survivor_fleet = [&]() {
    FleetMap out;
    for (const auto& [id, profile] : fleet)
      if (!departed.count(id)) out.emplace(id, profile);
    return out;
  };
  auto checkpoint_at = [&](double t) {
    const Checkpoint* best = &checkpoints.front();
    for (const Checkpoint& c : checkpoints)
      if (c.ready_time_s <= t && c.epoch > best->epoch) best = &c;
    return *best;
  };
  // A failure voids uploads still in flight.
  auto drop_inflight = [&](double t) {
    checkpoints.erase(std::remove_if(checkpoints.begin(), checkpoints.end(),
                                     [&](const Checkpoint& c) {
                                       return c.ready_time_s > t;
                                     }),
                      checkpoints.end());
  };
  auto rollback_epochs = [&](double t) {
    Checkpoint cp = checkpoint_at(t);
    drop_inflight(t);
    int lost = epoch - cp.epoch;
    metrics.lost_epochs += lost;
    epoch = cp.epoch;
    return lost;
  };

  auto assemble_relaunch = [&](std::optional<int> required_start) {
    RecoveryOutcome out;
    auto plan = relaunch_plan(survivor_fleet(), config.stability, model, cost,
                              required_start);
    if (!plan) {
      out.detail = "relaunch: no feasible plan over the survivors";
      return out;
    }
    for (const StageAssignment& s : plan->stages)
      out.transfer_time_s +=
          one_way_s(model.range_param_bytes(s.unit_begin, s.unit_end), s.vehicle_id);
    out.redistributed_bytes = model.total_param_bytes();
    out.recovery_time_s = config.overheads.relaunch_s + out.transfer_time_s;
    out.replacement = std::move(plan);
    out.detail = "mode=relaunch";
    return out;
  };
  auto assemble_elastic = [&](const PipelineTemplate& old_t, int failed_vehicle) {
    RecoveryOutcome out;
    auto patch = elastic_patch(old_t, failed_vehicle, fleet, model, cost);
    if (!patch) {
      out.detail = "elastic: neighbors cannot absorb the orphaned units";
      return out;
    }
    // Charge only the units that moved into each surviving stage.
    for (const StageAssignment& ns : patch->stages) {
      for (const StageAssignment& os : old_t.stages) {
        if (os.vehicle_id != ns.vehicle_id) continue;
        if (ns.unit_begin < os.unit_begin) {
          double bytes = model.range_param_bytes(ns.unit_begin, os.unit_begin);
          out.redistributed_bytes += bytes;
          out.transfer_time_s += one_way_s(bytes, ns.vehicle_id);
        }
        if (ns.unit_end > os.unit_end) {
          double bytes = model.range_param_bytes(os.unit_end, ns.unit_end);
          out.redistributed_bytes += bytes;
          out.transfer_time_s += one_way_s(bytes, ns.vehicle_id);
        }
      }
    }
    out.recovery_time_s = config.overheads.elastic_s + out.transfer_time_s;
    out.replacement = std::move(patch);
    out.detail = "mode=elastic";
    return out;
  };
  // Mode-appropriate replacement that must keep the entry's start vehicle;
  // templates and elastic fall back to relaunch when they cannot.
  auto derive = [&](const PipelineTemplate& old_t, int failed_vehicle,
                    int required_start, double t) {
    std::string note;
    if (config.recovery == RecoveryMode::kTemplates) {
      auto pit = template_pool.find(failed_vehicle);
      if (pit != template_pool.end() && !pit->second.pipelines.empty()) {
        RecoveryOutcome out = recover_with_template(
            old_t, failed_vehicle, pit->second.pipelines, checkpoint_at(t), epoch,
            fleet, model, cost, config.overheads.template_s);
        if (out.replacement && template_ok(*out.replacement, required_start))
          return out;
        note = "template pool unusable for vehicle " +
               std::to_string(failed_vehicle) + "; relaunch fallback";
      } else {
        note = "template pool missing for vehicle " +
               std::to_string(failed_vehicle) + "; relaunch fallback";
      }
    } else if (config.recovery == RecoveryMode::kElastic) {
      RecoveryOutcome out = assemble_elastic(old_t, failed_vehicle);
      if (out.replacement && template_ok(*out.replacement, required_start))
        return out;
      note = "elastic patch infeasible for vehicle " +
             std::to_string(failed_vehicle) + "; relaunch fallback";
    }
    RecoveryOutcome out = assemble_relaunch(required_start);
    if (out.replacement && !template_ok(*out.replacement, required_start)) {
      out = RecoveryOutcome{};
      out.detail = "relaunch: plan failed validation";
    }
    if (!note.empty()) {
      metrics.warnings.push_back(note);
      if (out.replacement) out.detail += ";fallback";
    }
    return out;
  };
  auto charge_recovery = [&](double t, int pid, int failed_vehicle,
                             const RecoveryOutcome& out, int lost) {
    emit(t, SimEventKind::kRecoveryStart, pid, failed_vehicle, out.detail);
    metrics.recovery_times_s.push_back(out.recovery_time_s);
    metrics.redistributed_bytes.push_back(out.redistributed_bytes);
    metrics.total_redistributed_bytes += out.redistributed_bytes;
    emit(t + out.recovery_time_s, SimEventKind::kRecoveryEnd, pid, failed_vehicle,
         "redistributed_bytes=" + format_double(out.redistributed_bytes) +
             ";transfer_s=" + format_double(out.transfer_time_s) +
             ";lost_epochs=" + std::to_string(lost));
    return t + out.recovery_time_s;
  };
  // Charge the departure against the earliest remaining rotation entry that
  // references the vehicle; later affected entries swap for free when their
  // turn comes (their replacements were prepared during the paid window).
  auto charge_first_affected = [&](double t, int failed_vehicle, std::size_t from,
                                   std::optional<int> pre_lost) {
    for (std::size_t j = from; j < rotation.size(); ++j) {
      Entry& affected = rotation[j];
      if (affected.start == failed_vehicle) continue;
      if (!participates(affected.tmpl, failed_vehicle)) continue;
      RecoveryOutcome out = derive(affected.tmpl, failed_vehicle, affected.start, t);
      if (out.replacement) {
        int lost = pre_lost ? *pre_lost : rollback_epochs(t);
        double end = charge_recovery(t, affected.start, failed_vehicle, out, lost);
        recovery_busy_until = std::max(recovery_busy_until, end);
        affected.tmpl = *out.replacement;
      } else {
        metrics.warnings.push_back(
            "start " + std::to_string(affected.start) +
            ": no replacement after vehicle " + std::to_string(failed_vehicle) +
            " departed");
      }
      return;
    }
  };
  auto handle_nonparticipant = [&](const Fault& d) {
    emit(d.time_s, SimEventKind::kDeparture, -1, d.vehicle_id, "");
    departed.insert(d.vehicle_id);
    charge_first_affected(d.time_s, d.vehicle_id, entry_idx, std::nullopt);
  };
  auto record_skip = [&](const Entry& entry) {
    metrics.pipeline_runs.push_back(
        {entry.start, path_time(entry.tmpl, fleet, model, cost), 0.0, false});
  };

  // Walks one execution from `clock`, emitting stage and transfer events.
  // Returns the departure that aborted it, if any; otherwise advances clock.
  auto execute_entry = [&](Entry& entry) -> std::optional<Fault> {
    auto timings = stage_timings(entry.tmpl, fleet, model, cost);
    double cursor = clock;
    int last = static_cast<int>(entry.tmpl.stages.size()) - 1;
    for (int i = 0; i <= last; ++i) {
      const StageAssignment& st = entry.tmpl.stages[static_cast<std::size_t>(i)];
      const StageTiming& tm = timings[static_cast<std::size_t>(i)];
      const auto& own = spans_of(st.vehicle_id);
      double eff = next_free(own, cursor);
      double end = finish_after(own, eff, tm.compute_s);
      while (next_dep < departures.size() && departures[next_dep].time_s < end) {
        Fault d = departures[next_dep];
        ++next_dep;
        if (participates(entry.tmpl, d.vehicle_id)) return d;
        handle_nonparticipant(d);
      }
      emit(eff, SimEventKind::kStageStart, entry.start, st.vehicle_id,
           "units=" + std::to_string(st.unit_begin) + ".." +
               std::to_string(st.unit_end));
      emit(end, SimEventKind::kStageEnd, entry.start, st.vehicle_id,
           "units=" + std::to_string(st.unit_begin) + ".." +
               std::to_string(st.unit_end));
      cursor = end;
      if (i < last) {
        int receiver = entry.tmpl.stages[static_cast<std::size_t>(i + 1)].vehicle_id;
        auto both = union_spans(own, spans_of(receiver));
        double ts = next_free(both, cursor);
        double te = finish_after(both, ts, tm.comm_s);
        while (next_dep < departures.size() && departures[next_dep].time_s < te) {
          Fault d = departures[next_dep];
          ++next_dep;
          if (participates(entry.tmpl, d.vehicle_id)) return d;
          handle_nonparticipant(d);
        }
        emit(ts, SimEventKind::kTransferStart, entry.start, st.vehicle_id,
             "to=" + std::to_string(receiver));
        emit(te, SimEventKind::kTransferEnd, entry.start, st.vehicle_id,
             "to=" + std::to_string(receiver));
        cursor = te;
      }
    }
    clock = cursor;
    return std::nullopt;
  };

  auto finalize_trace = [&]() {
    metrics.completed_epochs = epoch;
    metrics.throughput_samples_per_s =
        metrics.round_time_s > 0.0
            ? model.samples_per_epoch() * epoch / metrics.round_time_s
            : 0.0;
    for (const Fault& f : faults) {
      if (f.kind != FaultKind::kDisconnect || f.time_s > metrics.round_time_s)
        continue;
      emit(f.time_s, SimEventKind::kDisconnect, -1, f.vehicle_id,
           "duration=" + format_double(f.duration_s));
      emit(f.time_s + f.duration_s, SimEventKind::kReconnect, -1, f.vehicle_id, "");
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const SimEvent& a, const SimEvent& b) {
                       return a.timestamp_s < b.timestamp_s;
                     });
  };

  auto abort_round = [&](double t, int pid, int failed_vehicle) {
    emit(t, SimEventKind::kRecoveryStart, pid, failed_vehicle,
         "mode=" + to_string(config.recovery));
    emit(t, SimEventKind::kRecoveryEnd, pid, failed_vehicle, "unrecoverable");
    emit(t, SimEventKind::kRoundEnd, -1, -1, "aborted");
    metrics.aborted = true;
    metrics.status = "unrecoverable: vehicle " + std::to_string(failed_vehicle) +
                     " departed and no replacement plan exists";
    metrics.round_time_s = t;
    finalize_trace();
  };

  while (entry_idx < rotation.size()) {
    clock = std::max(clock, recovery_busy_until);
    while (next_dep < departures.size() &&
           departures[next_dep].time_s <= clock) {
      Fault d = departures[next_dep];
      ++next_dep;
      handle_nonparticipant(d);
      clock = std::max(clock, recovery_busy_until);
    }
    Entry& entry = rotation[entry_idx];
    if (departed.count(entry.start)) {
      record_skip(entry);
      ++entry_idx;
      continue;
    }
    bool skipped = false;
    int guard = 0;
    for (int v_ref = departed_ref(entry.tmpl); v_ref != -1;
         v_ref = departed_ref(entry.tmpl)) {
      RecoveryOutcome rep = ++guard > 2
                                ? assemble_relaunch(entry.start)
                                : derive(entry.tmpl, v_ref, entry.start, clock);
      if (rep.replacement) {
        entry.tmpl = *rep.replacement;
      } else if (!assemble_relaunch(std::nullopt).replacement) {
        // The survivors cannot host the model under any start: the cluster
        // is dead, not merely this rotation entry.
        abort_round(clock, entry.start, v_ref);
        return result;
      } else {
        metrics.warnings.push_back("start " + std::to_string(entry.start) +
                                   ": skipped; no replacement for departed vehicle " +
                                   std::to_string(v_ref));
        record_skip(entry);
        skipped = true;
        break;
      }
    }
    if (skipped) {
      ++entry_idx;
      continue;
    }

    double exec_start = clock;
    auto aborting = execute_entry(entry);
    if (!aborting) {
      metrics.pipeline_runs.push_back({entry.start,
                                       path_time(entry.tmpl, fleet, model, cost),
                                       clock - exec_start, true});
      ++epoch;
      if (config.checkpoint_interval_epochs > 0 &&
          epoch % config.checkpoint_interval_epochs == 0) {
        double bytes = model.total_param_bytes();
        int uploader = entry.tmpl.stages.front().vehicle_id;
        double ready = clock + one_way_s(bytes, uploader);
        checkpoints.push_back({epoch, config.edge_node_id, bytes, ready});
        emit(clock, SimEventKind::kCheckpoint, entry.start, uploader,
             "epoch=" + std::to_string(epoch) + ";bytes=" + format_double(bytes) +
                 ";ready=" + format_double(ready));
      }
      ++entry_idx;
      continue;
    }

    const Fault d = *aborting;
    emit(d.time_s, SimEventKind::kDeparture, entry.start, d.vehicle_id, "");
    departed.insert(d.vehicle_id);
    int lost = rollback_epochs(d.time_s);
    if (entry.start == d.vehicle_id) {
      // The data provider left: its pipeline cannot restart. Redeployment
      // is still charged if a later entry needs the vehicle replaced.
      record_skip(entry);
      charge_first_affected(d.time_s, d.vehicle_id, entry_idx + 1, lost);
      clock = d.time_s;
      ++entry_idx;
      continue;
    }
    RecoveryOutcome out = derive(entry.tmpl, d.vehicle_id, entry.start, d.time_s);
    if (out.replacement) {
      clock = charge_recovery(d.time_s, entry.start, d.vehicle_id, out, lost);
      entry.tmpl = *out.replacement;
      continue;  // restart this entry on the replacement
    }
    RecoveryOutcome any = assemble_relaunch(std::nullopt);
    if (!any.replacement) {
      abort_round(d.time_s, entry.start, d.vehicle_id);
      return result;
    }
    metrics.warnings.push_back("start " + std::to_string(entry.start) +
                               ": skipped; no same-start replacement, cluster "
                               "redeployed by relaunch");
    clock = charge_recovery(d.time_s, entry.start, d.vehicle_id, any, lost);
    record_skip(entry);
    ++entry_idx;
  }

  while (next_dep < departures.size() && departures[next_dep].time_s <= clock) {
    Fault d = departures[next_dep];
    ++next_dep;
    handle_nonparticipant(d);
  }
  emit(clock, SimEventKind::kRoundEnd, -1, -1, "epochs=" + std::to_string(epoch));
  metrics.round_time_s = clock;
  finalize_trace();
  return result;
}

double fl_round_accounting(const std::vector<double>& cluster_round_times_s,
                           double aggregation_overhead_s) {
  if (cluster_round_times_s.empty())
    throw std::invalid_argument("fl_round_accounting: no cluster round times");
  if (aggregation_overhead_s < 0.0)
    throw std::invalid_argument("fl_round_accounting: negative overhead");
  for (double t : cluster_round_times_s)
    if (!(t >= 0.0))
      throw std::invalid_argument(
          "fl_round_accounting: round times must be nonnegative");
  return *std::max_element(cluster_round_times_s.begin(),
                           cluster_round_times_s.end()) +
         aggregation_overhead_s;
}

void write_trace_csv(const std::vector<SimEvent>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file: " + path);
  out << "timestamp,kind,pipeline_id,vehicle_id,detail\n";
  for (const SimEvent& ev : events) {
    std::string detail = ev.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << format_double(ev.timestamp_s) << ',' << to_string(ev.kind) << ','
        << ev.pipeline_id << ',' << ev.vehicle_id << ',' << detail << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("failed writing trace file: " + path);
}

}  // namespace fhdp
