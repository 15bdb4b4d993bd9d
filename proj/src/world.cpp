#include "fhdp/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fhdp/util.hpp"

namespace fhdp {

GridWorld::GridWorld(double area_range, double unit_distance, double step_s)
    : area_range_m(area_range), unit_distance_m(unit_distance),
      step_seconds(step_s) {
  if (area_range <= 0.0 || unit_distance <= 0.0)
    throw std::invalid_argument("GridWorld: area and unit distance must be positive");
  if (step_s <= 0.0)
    throw std::invalid_argument("GridWorld: step_seconds must be positive");
  double ratio = area_range / unit_distance;
  side_ = static_cast<int>(std::lround(ratio));
  if (side_ < 1 || std::abs(ratio - side_) > 1e-9)
    throw std::invalid_argument("GridWorld: area_range must be an integer multiple of unit_distance");
}

double GridWorld::cell_distance(int a, int b) const {
  if (!valid_cell(a) || !valid_cell(b))
    throw std::invalid_argument("cell_distance: invalid cell index");
  double dr = row_of(a) - row_of(b);
  double dc = col_of(a) - col_of(b);
  return std::sqrt(dr * dr + dc * dc);
}

bool GridWorld::local_move(int i, int j) const {
  if (!valid_cell(i) || !valid_cell(j)) return false;
  return std::abs(row_of(i) - row_of(j)) <= 1 && std::abs(col_of(i) - col_of(j)) <= 1;
}

int TrajectoryHistory::current_cell() const {
  if (observed.empty())
    throw std::invalid_argument("TrajectoryHistory: empty history");
  return observed.back().cell;
}

std::int64_t TrajectoryHistory::current_step() const {
  if (observed.empty())
    throw std::invalid_argument("TrajectoryHistory: empty history");
  return observed.back().step;
}

namespace {

void check_rows_stochastic(const Eigen::MatrixXd& t) {
  if (t.rows() == 0 || t.rows() != t.cols())
    throw std::invalid_argument("MobilityPattern: transition matrix must be square and nonempty");
  for (int i = 0; i < t.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < t.cols(); ++j) {
      double p = t(i, j);
      if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("MobilityPattern: entries must lie in [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("MobilityPattern: row does not sum to 1");
  }
}

}  // namespace

void validate_pattern(const MobilityPattern& pattern) {
  check_rows_stochastic(pattern.transition);
}

void validate_pattern(const GridWorld& world, const MobilityPattern& pattern) {
  check_rows_stochastic(pattern.transition);
  if (pattern.dim() != world.cell_count())
    throw std::invalid_argument("MobilityPattern: dimension does not match world cell count");
  for (int i = 0; i < pattern.dim(); ++i)
    for (int j = 0; j < pattern.dim(); ++j)
      if (pattern.transition(i, j) > 0.0 && !world.local_move(i, j))
        throw std::invalid_argument("MobilityPattern: transition leaves the one-step neighborhood");
}

void validate_history(const TrajectoryHistory& history, int cell_count) {
  if (history.departure_time_s <= history.arrival_time_s)
    throw std::invalid_argument("TrajectoryHistory: departure must follow arrival");
  std::int64_t prev = std::numeric_limits<std::int64_t>::min();
  for (const auto& obs : history.observed) {
    if (obs.step <= prev)
      throw std::invalid_argument("TrajectoryHistory: timesteps must be strictly increasing");
    if (obs.cell < 0 || obs.cell >= cell_count)
      throw std::invalid_argument("TrajectoryHistory: observation outside the world");
    prev = obs.step;
  }
}

Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& m, int n) {
  if (n < 0) throw std::invalid_argument("matrix_power: negative exponent");
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::MatrixXd base = m;
  while (n > 0) {
    if (n & 1) result = result * base;
    base = base * base;
    n >>= 1;
  }
  return result;
}

MobilityPattern identity_pattern(int cells, int id) {
  if (cells < 1) throw std::invalid_argument("identity_pattern: need at least one cell");
  return MobilityPattern{id, Eigen::MatrixXd::Identity(cells, cells)};
}

MobilityPattern random_walk_pattern(const GridWorld& world, int id) {
  int n = world.cell_count();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> reachable;
    for (int j = 0; j < n; ++j)
      if (world.local_move(i, j)) reachable.push_back(j);
    for (int j : reachable) t(i, j) = 1.0 / static_cast<double>(reachable.size());
  }
  return MobilityPattern{id, std::move(t)};
}

MobilityPattern drift_pattern(const GridWorld& world, int drow, int dcol,
                              double p_move, int id) {
  if (p_move < 0.0 || p_move > 1.0)
    throw std::invalid_argument("drift_pattern: p_move must lie in [0,1]");
  if (std::abs(drow) > 1 || std::abs(dcol) > 1)
    throw std::invalid_argument("drift_pattern: drift must be a one-step move");
  int n = world.cell_count();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int r = world.row_of(i) + drow;
    int c = world.col_of(i) + dcol;
    bool inside = r >= 0 && r < world.side() && c >= 0 && c < world.side();
    if (inside) {
      t(i, world.cell_at(r, c)) += p_move;
      t(i, i) += 1.0 - p_move;
    } else {
      t(i, i) = 1.0;  // drift folded onto staying at the border
    }
  }
  return MobilityPattern{id, std::move(t)};
}

int step_position(const MobilityPattern& pattern, int current,
                  std::mt19937_64& rng) {
  if (current < 0 || current >= pattern.dim())
    throw std::invalid_argument("step_position: invalid cell index");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  double acc = 0.0;
  int last_positive = current;
  for (int j = 0; j < pattern.dim(); ++j) {
    double p = pattern.transition(current, j);
    if (p <= 0.0) continue;
    acc += p;
    last_positive = j;
    if (u < acc) return j;
  }
  // Row sums to 1 within tolerance; u landing in the residual gap picks
  // the last cell with positive mass.
  return last_positive;
}

int step_position(const GridWorld& world, const MobilityPattern& pattern,
                  int current, std::mt19937_64& rng) {
  if (pattern.dim() != world.cell_count())
    throw std::invalid_argument("step_position: pattern does not match world");
  if (!world.valid_cell(current))
    throw std::invalid_argument("step_position: invalid cell index");
  return step_position(pattern, current, rng);
}

TrajectoryHistory generate_trajectory(const MobilityPattern& pattern,
                                      int vehicle_id, int start_cell,
                                      int n_observations, double arrival_s,
                                      double departure_s, std::mt19937_64& rng) {
  if (n_observations < 1)
    throw std::invalid_argument("generate_trajectory: need at least one observation");
  if (start_cell < 0 || start_cell >= pattern.dim())
    throw std::invalid_argument("generate_trajectory: invalid start cell");
  TrajectoryHistory h;
  h.vehicle_id = vehicle_id;
  h.arrival_time_s = arrival_s;
  h.departure_time_s = departure_s;
  h.observed.reserve(static_cast<std::size_t>(n_observations));
  int cell = start_cell;
  for (int step = 0; step < n_observations; ++step) {
    h.observed.push_back({step, cell});
    if (step + 1 < n_observations) cell = step_position(pattern, cell, rng);
  }
  return h;
}

std::vector<double> posterior_pattern_weights(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns) {
  if (history.observed.size() < 2)
    throw std::invalid_argument("posterior_pattern_weights: history needs >= 2 observations");
  if (patterns.empty())
    throw std::invalid_argument("posterior_pattern_weights: need at least one pattern");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> log_lik(patterns.size(), 0.0);
  for (std::size_t a = 0; a < patterns.size(); ++a) {
    const auto& p = patterns[a];
    for (std::size_t k = 0; k + 1 < history.observed.size(); ++k) {
      const auto& from = history.observed[k];
      const auto& to = history.observed[k + 1];
      std::int64_t gap = to.step - from.step;
      double prob;
      if (gap == 1) {
        prob = p.transition(from.cell, to.cell);
      } else {
        prob = matrix_power(p.transition, static_cast<int>(gap))(from.cell, to.cell);
      }
      if (prob <= 0.0) {
        log_lik[a] = neg_inf;
        break;
      }
      log_lik[a] += std::log(prob);
    }
  }

  double max_ll = *std::max_element(log_lik.begin(), log_lik.end());
  std::vector<double> weights(patterns.size(), 0.0);
  if (max_ll == neg_inf) {
    // No pattern explains the history; fall back to the uniform prior.
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(patterns.size()));
    return weights;
  }
  double total = 0.0;
  for (std::size_t a = 0; a < patterns.size(); ++a) {
    weights[a] = log_lik[a] == neg_inf ? 0.0 : std::exp(log_lik[a] - max_ll);
    total += weights[a];
  }
  for (double& w : weights) w /= total;
  return weights;
}

Eigen::VectorXd future_cell_distribution(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns, int horizon_steps) {
  if (horizon_steps < 0)
    throw std::invalid_argument("future_cell_distribution: negative horizon");
  if (patterns.empty())
    throw std::invalid_argument("future_cell_distribution: need at least one pattern");
  int n = patterns.front().dim();
  int current = history.current_cell();
  if (current < 0 || current >= n)
    throw std::invalid_argument("future_cell_distribution: current cell outside pattern");

  Eigen::VectorXd dist = Eigen::VectorXd::Zero(n);
  if (horizon_steps == 0 || patterns.size() == 1) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    row(current) = 1.0;
    if (horizon_steps > 0)
      row = row * matrix_power(patterns.front().transition, horizon_steps);
    return row.transpose();
  }

  std::vector<double> weights =
      history.observed.size() >= 2
          ? posterior_pattern_weights(history, patterns)
          : std::vector<double>(patterns.size(), 1.0 / static_cast<double>(patterns.size()));
  for (std::size_t a = 0; a < patterns.size(); ++a) {
    if (patterns[a].dim() != n)
      throw std::invalid_argument("future_cell_distribution: pattern dimension mismatch");
    if (weights[a] == 0.0) continue;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
    row(current) = 1.0;
    row = row * matrix_power(patterns[a].transition, horizon_steps);
    dist += weights[a] * row.transpose();
  }
  return dist;
}

Eigen::VectorXd future_cell_distribution(
    const TrajectoryHistory& history,
    const std::vector<MobilityPattern>& patterns, const GridWorld& world,
    int horizon_steps) {
  for (const auto& p : patterns)
    if (p.dim() != world.cell_count())
      throw std::invalid_argument("future_cell_distribution: pattern does not match world");
  return future_cell_distribution(history, patterns, horizon_steps);
}

}  // namespace fhdp
