#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "fhdp/util.hpp"
#include "fhdp/world.hpp"

using namespace fhdp;

namespace {

MobilityPattern flip_pattern() {
  MobilityPattern p;
  p.pattern_id = 1;
  p.transition.resize(2, 2);
  p.transition << 0.0, 1.0, 1.0, 0.0;
  return p;
}

MobilityPattern two_cell(double stay0, int id) {
  MobilityPattern p;
  p.pattern_id = id;
  p.transition.resize(2, 2);
  p.transition << stay0, 1.0 - stay0, 1.0 - stay0, stay0;
  return p;
}

TrajectoryHistory history_of(std::vector<int> cells) {
  TrajectoryHistory h;
  h.vehicle_id = 1;
  for (std::size_t i = 0; i < cells.size(); ++i)
    h.observed.push_back({static_cast<std::int64_t>(i), cells[i]});
  h.arrival_time_s = 0.0;
  h.departure_time_s = 1e9;
  return h;
}

}  // namespace

TEST_SUITE("world") {

TEST_CASE("grid geometry") {
  GridWorld w(1000.0, 100.0);
  CHECK(w.side() == 10);
  CHECK(w.cell_count() == 100);
  CHECK(w.cell_at(3, 7) == 37);
  CHECK(w.row_of(37) == 3);
  CHECK(w.col_of(37) == 7);
  CHECK(w.valid_cell(99));
  CHECK_FALSE(w.valid_cell(100));
  // Diagonal neighbors are one local move away; two columns apart is not.
  CHECK(w.local_move(w.cell_at(4, 4), w.cell_at(5, 5)));
  CHECK(w.local_move(w.cell_at(4, 4), w.cell_at(4, 4)));
  CHECK_FALSE(w.local_move(w.cell_at(4, 4), w.cell_at(4, 6)));
  CHECK(w.cell_distance(w.cell_at(0, 0), w.cell_at(3, 4)) == doctest::Approx(5.0));
  CHECK_THROWS_AS(GridWorld(1000.0, 300.0), std::invalid_argument);
  CHECK_THROWS_AS(GridWorld(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("pattern factories validate") {
  GridWorld w(500.0, 100.0);
  validate_pattern(w, identity_pattern(w.cell_count()));
  validate_pattern(w, random_walk_pattern(w, 1));
  validate_pattern(w, drift_pattern(w, 0, 1, 0.8, 2));
  MobilityPattern bad;
  bad.transition.resize(2, 2);
  bad.transition << 0.5, 0.4, 0.5, 0.5;
  CHECK_THROWS_AS(validate_pattern(bad), std::invalid_argument);
}

TEST_CASE("drift pattern folds border mass onto staying") {
  GridWorld w(300.0, 100.0);
  auto p = drift_pattern(w, 0, 1, 0.8, 0);
  int interior = w.cell_at(1, 1);
  CHECK(p.transition(interior, w.cell_at(1, 2)) == doctest::Approx(0.8));
  CHECK(p.transition(interior, interior) == doctest::Approx(0.2));
  int edge = w.cell_at(1, 2);  // rightmost column: the move is off-grid
  CHECK(p.transition(edge, edge) == doctest::Approx(1.0));
}

TEST_CASE("step_position on absorbing and deterministic rows") {
  auto rng = make_rng(7, "step");
  auto ident = identity_pattern(9);
  for (int i = 0; i < 20; ++i) CHECK(step_position(ident, 5, rng) == 5);

  MobilityPattern forced;
  forced.transition.resize(2, 2);
  forced.transition << 0.0, 1.0, 0.0, 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto r = make_rng(seed, "step");
    CHECK(step_position(forced, 0, r) == 1);
  }
  CHECK_THROWS_AS(step_position(ident, 9, rng), std::invalid_argument);
  CHECK_THROWS_AS(step_position(ident, -1, rng), std::invalid_argument);
}

TEST_CASE("step_position uniform row frequencies within 0.01") {
  MobilityPattern uniform;
  uniform.transition = Eigen::MatrixXd::Constant(4, 4, 0.25);
  auto rng = make_rng(2024, "uniform-freq");
  std::map<int, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[step_position(uniform, 0, rng)];
  for (int c = 0; c < 4; ++c)
    CHECK(std::abs(counts[c] / static_cast<double>(n) - 0.25) < 0.01);
}

TEST_CASE("posterior weights: single, zero-likelihood, symmetric") {
  auto hist = history_of({0, 1, 0, 1});
  std::vector<MobilityPattern> single{flip_pattern()};
  auto w1 = posterior_pattern_weights(hist, single);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == doctest::Approx(1.0));

  // Pattern B (identity) assigns probability 0 to the observed flips.
  std::vector<MobilityPattern> pair{flip_pattern(), identity_pattern(2, 2)};
  auto w2 = posterior_pattern_weights(hist, pair);
  CHECK(w2[0] == doctest::Approx(1.0));
  CHECK(w2[1] == doctest::Approx(0.0));

  // Two patterns assigning identical likelihood to a symmetric history.
  std::vector<MobilityPattern> sym{two_cell(0.5, 0), two_cell(0.5, 1)};
  auto w3 = posterior_pattern_weights(hist, sym);
  CHECK(w3[0] == doctest::Approx(0.5));
  CHECK(w3[1] == doctest::Approx(0.5));

  TrajectoryHistory tooShort = history_of({0});
  CHECK_THROWS_AS(posterior_pattern_weights(tooShort, single),
                  std::invalid_argument);
  CHECK_THROWS_AS(posterior_pattern_weights(hist, {}), std::invalid_argument);
}

TEST_CASE("posterior handles observation gaps via matrix powers") {
  // Observations at steps 0 and 2 with a flip pattern: two flips return to
  // the start cell, so the gap-bridged likelihood is 1 for flip, 1 for
  // identity -> both get 0.5; staying at step 2 is impossible after an odd
  // number of flips when the gap is 1.
  TrajectoryHistory h;
  h.vehicle_id = 1;
  h.observed = {{0, 0}, {2, 0}};
  h.departure_time_s = 100.0;
  std::vector<MobilityPattern> ps{flip_pattern(), identity_pattern(2, 2)};
  auto w = posterior_pattern_weights(h, ps);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));
}

TEST_CASE("posterior falls back to uniform when all likelihoods vanish") {
  auto hist = history_of({0, 1});
  std::vector<MobilityPattern> ps{identity_pattern(2, 0), identity_pattern(2, 1)};
  auto w = posterior_pattern_weights(hist, ps);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.5));
}

TEST_CASE("future distribution: horizon 0 and identity are point masses") {
  auto hist = history_of({0, 1, 1});
  std::vector<MobilityPattern> ps{two_cell(0.7, 0)};
  auto d0 = future_cell_distribution(hist, ps, 0);
  CHECK(d0(1) == doctest::Approx(1.0));
  std::vector<MobilityPattern> ident{identity_pattern(2)};
  auto d5 = future_cell_distribution(history_of({1, 1}), ident, 5);
  CHECK(d5(1) == doctest::Approx(1.0));
}

TEST_CASE("future distribution: flip pattern horizon 3 lands on the other cell") {
  auto hist = history_of({1, 0, 1, 0});
  std::vector<MobilityPattern> ps{flip_pattern()};
  auto d = future_cell_distribution(hist, ps, 3);
  CHECK(d(0) == doctest::Approx(0.0));
  CHECK(d(1) == doctest::Approx(1.0));
}

TEST_CASE("future distribution equals the matrix power row for one pattern") {
  GridWorld w(400.0, 100.0);
  auto p = random_walk_pattern(w, 0);
  auto hist = history_of({5, 6});
  for (int horizon : {1, 2, 3, 7}) {
    auto d = future_cell_distribution(hist, {p}, horizon);
    Eigen::MatrixXd powr = matrix_power(p.transition, horizon);
    for (int c = 0; c < w.cell_count(); ++c)
      CHECK(d(c) == doctest::Approx(powr(6, c)).epsilon(1e-12));
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("row stochasticity preserved under powers 1..10") {
  GridWorld w(600.0, 100.0);
  auto p = drift_pattern(w, 1, 1, 0.6, 0);
  for (int n = 1; n <= 10; ++n) {
    Eigen::MatrixXd m = matrix_power(p.transition, n);
    for (int i = 0; i < m.rows(); ++i) {
      CHECK(std::abs(m.row(i).sum() - 1.0) < 1e-6);
      CHECK(m.row(i).minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("posterior recovers the generating pattern on long histories") {
  GridWorld w(500.0, 100.0);
  std::vector<MobilityPattern> ps{random_walk_pattern(w, 0),
                                  drift_pattern(w, 0, 1, 0.9, 1)};
  auto rng = make_rng(11, "recover");
  auto hist = generate_trajectory(ps[1], 3, w.cell_at(2, 0), 50, 0.0, 1e6, rng);
  auto weights = posterior_pattern_weights(hist, ps);
  CHECK(weights[1] > 0.9);
}

TEST_CASE("generate_trajectory respects pattern support and bookkeeping") {
  GridWorld w(500.0, 100.0);
  auto p = random_walk_pattern(w, 0);
  auto rng = make_rng(3, "traj");
  auto hist = generate_trajectory(p, 9, 12, 40, 5.0, 500.0, rng);
  CHECK(hist.vehicle_id == 9);
  CHECK(hist.observed.size() == 40);
  CHECK(hist.observed.front().cell == 12);
  for (std::size_t i = 1; i < hist.observed.size(); ++i) {
    CHECK(hist.observed[i].step == hist.observed[i - 1].step + 1);
    CHECK(w.local_move(hist.observed[i - 1].cell, hist.observed[i].cell));
  }
  validate_history(hist, w.cell_count());
  CHECK(hist.current_cell() == hist.observed.back().cell);
}

TEST_CASE("derived seeds differ across streams and match across calls") {
  CHECK(derive_seed(7, "a") != derive_seed(7, "b"));
  CHECK(derive_seed(7, "a") == derive_seed(7, "a"));
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(to_hex(0x1234abcdull) == "000000001234abcd");
}

}  // TEST_SUITE
