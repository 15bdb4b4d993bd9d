#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace fhdp {

/// Square grid of unit cells covering the service area. Cells are indexed
/// row-major, 0 .. cell_count()-1. One DTMC step corresponds to
/// step_seconds of wall-clock time.
struct GridWorld {
  double area_range_m = 0.0;     // side length of the area
  double unit_distance_m = 0.0;  // side length of one cell
  double step_seconds = 1.0;

  GridWorld() = default;
  GridWorld(double area_range, double unit_distance, double step_s = 1.0);

  int side() const { return side_; }
  int cell_count() const { return side_ * side_; }

  int row_of(int cell) const { return cell / side_; }
  int col_of(int cell) const { return cell % side_; }
  int cell_at(int row, int col) const { return row * side_ + col; }
  bool valid_cell(int cell) const { return cell >= 0 && cell < cell_count(); }

  /// Euclidean distance between cell centers, in units of cells.
  double cell_distance(int a, int b) const;

  /// True when j is reachable from i in one step: j == i or within one
  /// grid step (Chebyshev distance <= 1).
  bool local_move(int i, int j) const;

 private:
  int side_ = 0;
};

/// One mobility pattern: a row-stochastic transition matrix over cells.
/// The matrix dimension need not match any particular world; validation
/// against a world's geometry is separate (validate_pattern).
struct MobilityPattern {
  int pattern_id = 0;
  Eigen::MatrixXd transition;  // transition(i, j) = P(i -> j | pattern)

  int dim() const { return static_cast<int>(transition.rows()); }
};

struct TrajectoryObservation {
  std::int64_t step = 0;
  int cell = 0;
};

/// Observed cell sequence of one vehicle plus its ground-truth presence
/// interval. departure_time_s is ground truth and must not leak into any
/// non-oracle predictor.
struct TrajectoryHistory {
  int vehicle_id = 0;
  std::vector<TrajectoryObservation> observed;
  double arrival_time_s = 0.0;
  double departure_time_s = 0.0;

  int current_cell() const;
  std::int64_t current_step() const;
};

/// Row sums within 1e-9 of one, entries in [0,1], and (when a world is
/// given) only local moves carry probability mass. Throws
/// std::invalid_argument on violation.
void validate_pattern(const MobilityPattern& pattern);
void validate_pattern(const GridWorld& world, const MobilityPattern& pattern);

void validate_history(const TrajectoryHistory& history, int cell_count);

/// A^n by repeated squaring; n >= 0 (n == 0 yields the identity).
Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& m, int n);

// Pattern factories used by scenario generation and tests.
MobilityPattern identity_pattern(int cells, int id = 0);
/// Uniform over {self} + one-step neighbors.
MobilityPattern random_walk_pattern(const GridWorld& world, int id);
/// Moves one step in (drow, dcol) with probability p_move (mass folded
/// onto staying put at the border), stays otherwise.
MobilityPattern drift_pattern(const GridWorld& world, int drow, int dcol,
                              double p_move, int id);

/// Sample the successor cell from the transition row of `current`.
int step_position(const MobilityPattern& pattern, int current,
                  std::mt19937_64& rng);
int step_position(const GridWorld& world, const MobilityPattern& pattern,
                  int current, std::mt19937_64& rng);

/// Roll a trajectory forward from start_cell for n_observations steps.
TrajectoryHistory generate_trajectory(const MobilityPattern& pattern,
                                      int vehicle_id, int start_cell,
                                      int n_observations, double arrival_s,
                                      double departure_s, std::mt19937_64& rng);

/// Posterior P(pattern | history) under a uniform prior: normalized
/// likelihood of the observed transitions. Gaps between observations are
/// bridged with matrix powers. If every pattern has zero likelihood the
/// posterior falls back to uniform.
std::vector<double> posterior_pattern_weights(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns);

/// Predictive cell distribution horizon_steps ahead of the last observed
/// cell: the posterior-weighted mixture of each pattern's matrix-power row.
Eigen::VectorXd future_cell_distribution(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns, int horizon_steps);
Eigen::VectorXd future_cell_distribution(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns, const GridWorld& world,
    int horizon_steps);

}  // namespace fhdp
