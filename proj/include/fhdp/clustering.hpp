#pragma once

#include <optional>
#include <vector>

#include "fhdp/admission.hpp"
#include "fhdp/cost_model.hpp"
#include "fhdp/vehicle.hpp"
#include "fhdp/world.hpp"

namespace fhdp {

/// Time-integrated expected proximity of a neighbor to the subject vehicle
/// over the subject's predicted dwell.
struct StabilityScore {
  int subject_vehicle = 0;
  int neighbor_vehicle = 0;
  double score = 0.0;
  double horizon_s = 0.0;
};

struct ClusteringParams {
  double alpha_prime = 0.5;  // fraction of the full task a cluster must cover
  double beta = 1.0;         // memory-to-model-capacity scaling
  int stable_epochs = 1;     // epochs the cluster must sustain (e)
  double lambda_size = 0.1;  // per-member size penalty in the objective
};

void validate_clustering_params(const ClusteringParams& params);

/// One admission-screened neighbor of an anchor, with everything cluster
/// formation needs: resources, work budget, and the per-step expected
/// in-range probability toward the anchor.
struct ClusterCandidate {
  int vehicle_id = 0;
  double memory_bytes = 0.0;
  double work_budget_flops = 0.0;       // predicted dwell x compute
  double stability = 0.0;               // = sum of in_range_prob
  std::vector<double> in_range_prob;    // per step t in [0, horizon_steps)
};

struct ClusterMember {
  int vehicle_id = 0;
  double stability = 0.0;
  double memory_bytes = 0.0;
  double work_budget_flops = 0.0;
};

/// A formed cluster: members sorted by descending stability (ties broken by
/// ascending vehicle id), with aggregate resources and constraint margins.
struct Cluster {
  int anchor_vehicle = 0;
  std::vector<ClusterMember> members;
  double aggregate_memory_bytes = 0.0;      // raw sum of member memory
  double aggregate_work_budget_flops = 0.0; // sum of member dwell x compute
  int stable_epochs = 0;
  double objective = 0.0;      // sum Stb - lambda x |members|
  double memory_margin = 0.0;  // beta x sum mem - M_cap (> 0 when feasible)
  double budget_margin = 0.0;  // sum budget - e x alpha' x M_cmp

  int size() const { return static_cast<int>(members.size()); }
  bool contains(int vehicle_id) const;
};

/// Independent re-evaluation of the three cluster-feasibility constraints
/// from raw candidate inputs.
struct ClusterConstraintReport {
  bool c1_memory = false;     // beta-scaled member memory exceeds M_cap
  bool c2_budget = false;     // member work budgets cover e x alpha' x M_cmp
  bool c3_neighbors = false;  // |members| never exceeds the in-range count
  double memory_margin = 0.0;
  double budget_margin = 0.0;
  int min_neighbor_count = 0;
  bool ok() const { return c1_memory && c2_budget && c3_neighbors; }
};

/// Outer product of two independent cell distributions; entry (i, j) is
/// P(subject at i, neighbor at j). Sums to 1.
Eigen::MatrixXd joint_cell_probability(const Eigen::VectorXd& v_dist,
                                       const Eigen::VectorXd& nb_dist);

/// Probability that two independently distributed vehicles are within
/// comm_radius_m of each other (cell-center distance).
double expected_proximity(const GridWorld& world, const Eigen::VectorXd& v_dist,
                          const Eigen::VectorXd& nb_dist, double comm_radius_m);

/// Per-step expected in-range probability for t in [0, horizon_steps),
/// propagating each vehicle's posterior pattern mixture forward.
/// A vehicle is always in range of itself. Histories with fewer than two
/// observations fall back to uniform pattern weights.
std::vector<double> in_range_profile(const GridWorld& world,
                                     const std::vector<MobilityPattern>& patterns,
                                     const TrajectoryHistory& v_history,
                                     const TrajectoryHistory& nb_history,
                                     double comm_radius_m, int horizon_steps);

/// Stability over a step window [t_begin, t_end): the partial sum of the
/// in-range profile.
double stability_score_window(const GridWorld& world,
                              const std::vector<MobilityPattern>& patterns,
                              const TrajectoryHistory& v_history,
                              const TrajectoryHistory& nb_history,
                              double comm_radius_m, int t_begin, int t_end);

/// Stability of nb toward v over v's predicted dwell: the sum of expected
/// in-range indicators for every step in [0, dwell / step_seconds).
/// Requires nb in range at t = 0.
StabilityScore stability_score(const GridWorld& world,
                               const std::vector<MobilityPattern>& patterns,
                               const VehicleProfile& v,
                               const TrajectoryHistory& v_history,
                               const TrajectoryHistory& nb_history,
                               double dwell_v_s);

/// Bundles the stability computation with the candidate resource fields.
ClusterCandidate make_candidate(const GridWorld& world,
                                const std::vector<MobilityPattern>& patterns,
                                const VehicleProfile& anchor,
                                const TrajectoryHistory& anchor_history,
                                const VehicleProfile& nb,
                                const TrajectoryHistory& nb_history,
                                double nb_dwell_s, double anchor_dwell_s);

/// Greedy cluster formation: add candidates in descending stability until
/// the memory and budget constraints both hold (early stopping is the size
/// penalty), capped by the minimum in-range neighbor count; then prune
/// members whose stability is at most lambda when removal keeps the cluster
/// feasible. Returns nothing when no feasible cluster exists.
std::optional<Cluster> form_cluster(int anchor_vehicle,
                                    const std::vector<ClusterCandidate>& candidates,
                                    const ModelProfile& model,
                                    const ClusteringParams& params);

/// Re-checks a cluster against the constraints from raw candidate data.
/// `candidates` must contain every member (by vehicle id).
ClusterConstraintReport check_cluster(const Cluster& cluster,
                                      const std::vector<ClusterCandidate>& candidates,
                                      const ModelProfile& model,
                                      const ClusteringParams& params);

}  // namespace fhdp
