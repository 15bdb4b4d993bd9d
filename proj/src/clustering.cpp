#include "fhdp/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fhdp {

namespace {

constexpr double kInRangeThreshold = 0.5;

/// Per-pattern posterior weights, tolerating short histories (uniform).
std::vector<double> weights_or_uniform(const TrajectoryHistory& history,
                                       const std::vector<MobilityPattern>& patterns) {
  if (history.observed.size() >= 2)
    return posterior_pattern_weights(history, patterns);
  return std::vector<double>(patterns.size(), 1.0 / patterns.size());
}

/// 0/1 indicator matrix: cell pair within comm_radius_m of each other.
Eigen::MatrixXd range_indicator(const GridWorld& world, double comm_radius_m) {
  int n = world.cell_count();
  double radius_cells = comm_radius_m / world.unit_distance_m;
  Eigen::MatrixXd ind(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      ind(i, j) = world.cell_distance(i, j) <= radius_cells ? 1.0 : 0.0;
  return ind;
}

bool feasible_sums(double mem_sum, double budget_sum, const ModelProfile& model,
                   const ClusteringParams& params) {
  return params.beta * mem_sum > model.total_param_bytes() &&
         budget_sum > static_cast<double>(params.stable_epochs) *
                          params.alpha_prime * model.total_flops_per_epoch();
}

}  // namespace

void validate_clustering_params(const ClusteringParams& params) {
  if (params.alpha_prime <= 0.0 || params.alpha_prime > 1.0)
    throw std::invalid_argument("ClusteringParams: alpha_prime must lie in (0,1]");
  if (params.beta <= 0.0)
    throw std::invalid_argument("ClusteringParams: beta must be positive");
  if (params.stable_epochs < 1)
    throw std::invalid_argument("ClusteringParams: stable_epochs must be >= 1");
  if (params.lambda_size < 0.0)
    throw std::invalid_argument("ClusteringParams: lambda_size must be >= 0");
}

bool Cluster::contains(int vehicle_id) const {
  return std::any_of(members.begin(), members.end(),
                     [&](const ClusterMember& m) { return m.vehicle_id == vehicle_id; });
}

Eigen::MatrixXd joint_cell_probability(const Eigen::VectorXd& v_dist,
                                       const Eigen::VectorXd& nb_dist) {
  if (v_dist.size() == 0 || v_dist.size() != nb_dist.size())
    throw std::invalid_argument("joint_cell_probability: dimension mismatch");
  return v_dist * nb_dist.transpose();
}

double expected_proximity(const GridWorld& world, const Eigen::VectorXd& v_dist,
                          const Eigen::VectorXd& nb_dist, double comm_radius_m) {
  if (v_dist.size() != world.cell_count() || nb_dist.size() != world.cell_count())
    throw std::invalid_argument("expected_proximity: dimension mismatch");
  Eigen::MatrixXd ind = range_indicator(world, comm_radius_m);
  return v_dist.dot(ind * nb_dist);
}

std::vector<double> in_range_profile(const GridWorld& world,
                                     const std::vector<MobilityPattern>& patterns,
                                     const TrajectoryHistory& v_history,
                                     const TrajectoryHistory& nb_history,
                                     double comm_radius_m, int horizon_steps) {
  if (horizon_steps < 0)
    throw std::invalid_argument("in_range_profile: negative horizon");
  if (v_history.vehicle_id == nb_history.vehicle_id)
    return std::vector<double>(horizon_steps, 1.0);
  if (patterns.empty())
    throw std::invalid_argument("in_range_profile: no patterns");
  for (const auto& p : patterns) validate_pattern(world, p);

  int n = world.cell_count();
  auto wv = weights_or_uniform(v_history, patterns);
  auto wn = weights_or_uniform(nb_history, patterns);
  Eigen::MatrixXd ind = range_indicator(world, comm_radius_m);

  // Per-pattern predictive rows, propagated one step at a time.
  std::vector<Eigen::RowVectorXd> rows_v, rows_nb;
  for (std::size_t a = 0; a < patterns.size(); ++a) {
    Eigen::RowVectorXd rv = Eigen::RowVectorXd::Zero(n);
    rv(v_history.current_cell()) = 1.0;
    rows_v.push_back(rv);
    Eigen::RowVectorXd rn = Eigen::RowVectorXd::Zero(n);
    rn(nb_history.current_cell()) = 1.0;
    rows_nb.push_back(rn);
  }

  std::vector<double> profile;
  profile.reserve(horizon_steps);
  for (int t = 0; t < horizon_steps; ++t) {
    Eigen::RowVectorXd mix_v = Eigen::RowVectorXd::Zero(n);
    Eigen::RowVectorXd mix_nb = Eigen::RowVectorXd::Zero(n);
    for (std::size_t a = 0; a < patterns.size(); ++a) {
      mix_v += wv[a] * rows_v[a];
      mix_nb += wn[a] * rows_nb[a];
    }
    profile.push_back(mix_v * ind * mix_nb.transpose());
    for (std::size_t a = 0; a < patterns.size(); ++a) {
      rows_v[a] = rows_v[a] * patterns[a].transition;
      rows_nb[a] = rows_nb[a] * patterns[a].transition;
    }
  }
  return profile;
}

double stability_score_window(const GridWorld& world,
                              const std::vector<MobilityPattern>& patterns,
                              const TrajectoryHistory& v_history,
                              const TrajectoryHistory& nb_history,
                              double comm_radius_m, int t_begin, int t_end) {
  if (t_begin < 0 || t_begin > t_end)
    throw std::invalid_argument("stability_score_window: bad window");
  auto profile = in_range_profile(world, patterns, v_history, nb_history,
                                  comm_radius_m, t_end);
  double sum = 0.0;
  for (int t = t_begin; t < t_end; ++t) sum += profile[t];
  return sum;
}

StabilityScore stability_score(const GridWorld& world,
                               const std::vector<MobilityPattern>& patterns,
                               const VehicleProfile& v,
                               const TrajectoryHistory& v_history,
                               const TrajectoryHistory& nb_history,
                               double dwell_v_s) {
  if (dwell_v_s < 0.0)
    throw std::invalid_argument("stability_score: negative dwell");
  int steps = static_cast<int>(std::floor(dwell_v_s / world.step_seconds + 1e-9));
  auto profile = in_range_profile(world, patterns, v_history, nb_history,
                                  v.comm_radius_m, steps);
  // Precondition: the neighbor is inside comm range right now. With point
  // masses at t = 0 the expectation is exactly 0 or 1.
  if (v_history.vehicle_id != nb_history.vehicle_id) {
    double radius_cells = v.comm_radius_m / world.unit_distance_m;
    if (world.cell_distance(v_history.current_cell(), nb_history.current_cell()) >
        radius_cells)
      throw std::invalid_argument("stability_score: neighbor not in range at t=0");
  }
  StabilityScore s;
  s.subject_vehicle = v_history.vehicle_id;
  s.neighbor_vehicle = nb_history.vehicle_id;
  s.horizon_s = dwell_v_s;
  for (double p : profile) s.score += p;
  return s;
}

ClusterCandidate make_candidate(const GridWorld& world,
                                const std::vector<MobilityPattern>& patterns,
                                const VehicleProfile& anchor,
                                const TrajectoryHistory& anchor_history,
                                const VehicleProfile& nb,
                                const TrajectoryHistory& nb_history,
                                double nb_dwell_s, double anchor_dwell_s) {
  int steps =
      static_cast<int>(std::floor(anchor_dwell_s / world.step_seconds + 1e-9));
  ClusterCandidate c;
  c.vehicle_id = nb.vehicle_id;
  c.memory_bytes = nb.memory_bytes;
  c.work_budget_flops = nb_dwell_s * nb.compute_flops_per_s;
  c.in_range_prob = in_range_profile(world, patterns, anchor_history, nb_history,
                                     anchor.comm_radius_m, steps);
  for (double p : c.in_range_prob) c.stability += p;
  return c;
}

std::optional<Cluster> form_cluster(int anchor_vehicle,
                                    const std::vector<ClusterCandidate>& candidates,
                                    const ModelProfile& model,
                                    const ClusteringParams& params) {
  validate_clustering_params(params);
  if (candidates.empty())
    throw std::invalid_argument("form_cluster: no candidates");
  std::size_t horizon = candidates.front().in_range_prob.size();
  for (const auto& c : candidates)
    if (c.in_range_prob.size() != horizon)
      throw std::invalid_argument("form_cluster: candidates disagree on horizon");

  // c3 cap: the cluster can never be larger than the number of candidates
  // expected in range at the tightest step.
  int cap = static_cast<int>(candidates.size());
  for (std::size_t t = 0; t < horizon; ++t) {
    int in_range = 0;
    for (const auto& c : candidates)
      if (c.in_range_prob[t] > kInRangeThreshold) ++in_range;
    cap = std::min(cap, in_range);
  }
  if (cap == 0) return std::nullopt;

  std::vector<const ClusterCandidate*> order;
  for (const auto& c : candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(),
            [](const ClusterCandidate* a, const ClusterCandidate* b) {
              if (a->stability != b->stability) return a->stability > b->stability;
              return a->vehicle_id < b->vehicle_id;
            });

  std::vector<const ClusterCandidate*> members;
  double mem_sum = 0.0, budget_sum = 0.0;
  bool feasible = false;
  for (const ClusterCandidate* c : order) {
    if (static_cast<int>(members.size()) == cap) break;
    members.push_back(c);
    mem_sum += c->memory_bytes;
    budget_sum += c->work_budget_flops;
    if (feasible_sums(mem_sum, budget_sum, model, params)) {
      feasible = true;
      break;
    }
  }
  if (!feasible) return std::nullopt;

  // Pruning pass, ascending stability: drop members that cost more in size
  // penalty than they contribute in stability, whenever the remainder stays
  // feasible. Feasibility is monotone in the resource sums, so one pass
  // suffices and the result admits no equal-or-better strict subset.
  bool pruned = true;
  while (pruned) {
    pruned = false;
    std::sort(members.begin(), members.end(),
              [](const ClusterCandidate* a, const ClusterCandidate* b) {
                if (a->stability != b->stability) return a->stability < b->stability;
                return a->vehicle_id > b->vehicle_id;
              });
    for (auto it = members.begin(); it != members.end(); ++it) {
      if ((*it)->stability > params.lambda_size) break;
      if (feasible_sums(mem_sum - (*it)->memory_bytes,
                        budget_sum - (*it)->work_budget_flops, model, params)) {
        mem_sum -= (*it)->memory_bytes;
        budget_sum -= (*it)->work_budget_flops;
        members.erase(it);
        pruned = true;
        break;
      }
    }
  }

  Cluster cluster;
  cluster.anchor_vehicle = anchor_vehicle;
  cluster.stable_epochs = params.stable_epochs;
  for (const ClusterCandidate* c : members) {
    cluster.members.push_back(
        {c->vehicle_id, c->stability, c->memory_bytes, c->work_budget_flops});
    cluster.objective += c->stability;
  }
  std::sort(cluster.members.begin(), cluster.members.end(),
            [](const ClusterMember& a, const ClusterMember& b) {
              if (a.stability != b.stability) return a.stability > b.stability;
              return a.vehicle_id < b.vehicle_id;
            });
  cluster.aggregate_memory_bytes = mem_sum;
  cluster.aggregate_work_budget_flops = budget_sum;
  cluster.objective -= params.lambda_size * cluster.size();
  cluster.memory_margin = params.beta * mem_sum - model.total_param_bytes();
  cluster.budget_margin = budget_sum -
                          static_cast<double>(params.stable_epochs) *
                              params.alpha_prime * model.total_flops_per_epoch();
  return cluster;
}

ClusterConstraintReport check_cluster(const Cluster& cluster,
                                      const std::vector<ClusterCandidate>& candidates,
                                      const ModelProfile& model,
                                      const ClusteringParams& params) {
  ClusterConstraintReport report;
  if (cluster.members.empty()) return report;

  std::size_t horizon = 0;
  double mem_sum = 0.0, budget_sum = 0.0;
  for (const auto& m : cluster.members) {
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const ClusterCandidate& c) {
                             return c.vehicle_id == m.vehicle_id;
                           });
    if (it == candidates.end())
      throw std::invalid_argument("check_cluster: member missing from candidates");
    mem_sum += it->memory_bytes;
    budget_sum += it->work_budget_flops;
    horizon = it->in_range_prob.size();
  }

  report.memory_margin = params.beta * mem_sum - model.total_param_bytes();
  report.budget_margin = budget_sum -
                         static_cast<double>(params.stable_epochs) *
                             params.alpha_prime * model.total_flops_per_epoch();
  report.c1_memory = report.memory_margin > 0.0;
  report.c2_budget = report.budget_margin > 0.0;

  report.min_neighbor_count = static_cast<int>(candidates.size());
  for (std::size_t t = 0; t < horizon; ++t) {
    int in_range = 0;
    for (const auto& c : candidates)
      if (c.in_range_prob[t] > kInRangeThreshold) ++in_range;
    report.min_neighbor_count = std::min(report.min_neighbor_count, in_range);
  }
  report.c3_neighbors = cluster.size() <= report.min_neighbor_count;
  return report;
}

}  // namespace fhdp
