#include <doctest.h>

#include <cmath>
#include <vector>

#include "fhdp/admission.hpp"
#include "fhdp/util.hpp"

using namespace fhdp;

namespace {

ModelProfile flat_model(double flops_per_epoch, double param_bytes) {
  // Single unit, one batch of one sample: total_flops_per_epoch equals
  // flops_per_epoch directly.
  return ModelProfile({{"M", {{flops_per_epoch, param_bytes, 1.0}}}}, 1, 1);
}

TrajectoryHistory static_history(int vehicle_id, std::int64_t now_step,
                                 double departure_s) {
  TrajectoryHistory h;
  h.vehicle_id = vehicle_id;
  for (std::int64_t s = 0; s <= now_step; ++s) h.observed.push_back({s, 0});
  h.arrival_time_s = 0.0;
  h.departure_time_s = departure_s;
  return h;
}

MobilityPattern flip2(int id) {
  MobilityPattern p;
  p.pattern_id = id;
  p.transition.resize(2, 2);
  p.transition << 0.0, 1.0, 1.0, 0.0;
  return p;
}

}  // namespace

TEST_SUITE("admission") {

TEST_CASE("oracle predictor returns departure minus now") {
  OracleDwellPredictor oracle(1.0);
  auto h = static_history(4, 100, 300.0);
  auto est = predict_dwell(h, oracle);
  CHECK(est.predicted_dwell_s == doctest::Approx(200.0));
  CHECK(est.predictor_name == "oracle");
  CHECK(est.vehicle_id == 4);

  TrajectoryHistory empty;
  CHECK_THROWS_AS(predict_dwell(empty, oracle), std::invalid_argument);
}

TEST_CASE("mean predictor: global mean of completed dwells") {
  MeanDwellPredictor mean({100.0, 200.0, 300.0});
  auto h = static_history(1, 5, 1e9);
  CHECK(predict_dwell(h, mean).predicted_dwell_s == doctest::Approx(200.0));
  CHECK(mean.name() == "mean");
}

TEST_CASE("mean predictor: posterior-weighted per-pattern means") {
  std::vector<MobilityPattern> ps{identity_pattern(2, 0), flip2(1)};
  MeanDwellPredictor mean(ps, {{0, {100.0}}, {1, {300.0}}});
  // A flipping history has zero likelihood under the identity pattern.
  TrajectoryHistory h;
  h.vehicle_id = 2;
  h.observed = {{0, 0}, {1, 1}, {2, 0}};
  h.departure_time_s = 1e9;
  CHECK(predict_dwell(h, mean).predicted_dwell_s == doctest::Approx(300.0));
  // One observation cannot support a posterior: fall back to global mean.
  TrajectoryHistory one;
  one.vehicle_id = 2;
  one.observed = {{0, 0}};
  one.departure_time_s = 1e9;
  CHECK(predict_dwell(one, mean).predicted_dwell_s == doctest::Approx(200.0));
}

TEST_CASE("mape: oracle predictor scores zero") {
  OracleDwellPredictor oracle(1.0);
  std::vector<double> predicted, actual;
  for (double dep : {250.0, 400.0, 1000.0}) {
    auto h = static_history(1, 10, dep);
    predicted.push_back(predict_dwell(h, oracle).predicted_dwell_s);
    actual.push_back(dep - 10.0);
  }
  CHECK(mape(predicted, actual) == doctest::Approx(0.0));
  CHECK(mape({110.0}, {100.0}) == doctest::Approx(0.1));
  CHECK_THROWS_AS(mape({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(mape({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("participation floor worked example") {
  auto model = flat_model(200e12, 1e9);  // M_cmp x e_req = 200e12 with e_req=1
  CHECK_FALSE(meets_participation_floor(100.0, 0.472e12, model, 0.5, 1));
  // 47.2e12 raw budget < 100e12 floor.
  CHECK(meets_participation_floor(100.0, 0.472e12, model, 1e-12, 1));
  // Exactly at the threshold: closed inequality.
  CHECK(meets_participation_floor(100.0, 1e12, model, 0.5, 1));
  CHECK_FALSE(meets_participation_floor(100.0 - 1e-6, 1e12, model, 0.5, 1));
  CHECK_THROWS_AS(meets_participation_floor(1.0, 1.0, model, 0.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(meets_participation_floor(1.0, 1.0, model, 0.5, 0),
                  std::invalid_argument);
}

TEST_CASE("classify: sufficient, limited, ineligible") {
  CostParams cost;  // footprint x10
  AdmissionParams adm{0.5, 1};
  auto model = flat_model(1e12, 2e9);  // footprint 20 GB

  VehicleProfile agx{1, 32e9, 3.85e12, 25e6, 300.0};
  DwellEstimate ample{1, 1000.0, "oracle"};
  CHECK(classify(agx, ample, model, adm, cost) ==
        VehicleClass::kResourceSufficient);

  VehicleProfile nano{2, 8e9, 0.472e12, 25e6, 300.0};
  DwellEstimate huge{2, 1e6, "oracle"};
  CHECK(classify(nano, huge, model, adm, cost) ==
        VehicleClass::kResourceLimited);  // memory below the 20 GB footprint

  DwellEstimate zero{1, 0.0, "oracle"};
  CHECK(classify(agx, zero, model, adm, cost) == VehicleClass::kIneligible);
}

TEST_CASE("classify: sufficiency respects the cost model, not raw compute") {
  CostParams cost;  // mu=0.5, nu=1.2 -> effective rate = cmp / 2.4
  AdmissionParams adm{0.1, 2};
  auto model = flat_model(1e12, 1e8);
  VehicleProfile v{1, 32e9, 1e12, 25e6, 300.0};
  // Raw budget covers 2 epochs in 2 s, but the cost model needs
  // 2 x 1e12 x 1.2 / (1e12 x 0.5) = 4.8 s.
  DwellEstimate just_raw{1, 2.0, "oracle"};
  CHECK(classify(v, just_raw, model, adm, cost) ==
        VehicleClass::kResourceLimited);
  DwellEstimate enough{1, 4.8, "oracle"};
  CHECK(classify(v, enough, model, adm, cost) ==
        VehicleClass::kResourceSufficient);
}

TEST_CASE("classify is monotone in memory and dwell") {
  CostParams cost;
  AdmissionParams adm{0.3, 2};
  auto model = flat_model(5e12, 1.5e9);
  auto rng = make_rng(99, "monotone");
  std::uniform_real_distribution<double> mem_d(1e9, 40e9);
  std::uniform_real_distribution<double> dwell_d(0.0, 500.0);
  std::uniform_real_distribution<double> cmp_d(0.1e12, 4e12);
  for (int i = 0; i < 500; ++i) {
    VehicleProfile v{1, mem_d(rng), cmp_d(rng), 25e6, 300.0};
    DwellEstimate d{1, dwell_d(rng), "test"};
    auto base = classify(v, d, model, adm, cost);
    VehicleProfile more_mem = v;
    more_mem.memory_bytes *= 2.0;
    CHECK(static_cast<int>(classify(more_mem, d, model, adm, cost)) >=
          static_cast<int>(base));
    DwellEstimate more_dwell{1, d.predicted_dwell_s * 2.0 + 1.0, "test"};
    CHECK(static_cast<int>(classify(v, more_dwell, model, adm, cost)) >=
          static_cast<int>(base));
  }
}

TEST_CASE("sufficient vehicles can always finish the task solo") {
  CostParams cost;
  AdmissionParams adm{0.5, 3};
  auto model = flat_model(2e12, 0.8e9);
  auto rng = make_rng(7, "solo");
  std::uniform_real_distribution<double> mem_d(1e9, 40e9);
  std::uniform_real_distribution<double> dwell_d(0.0, 100.0);
  std::uniform_real_distribution<double> cmp_d(0.1e12, 4e12);
  int sufficient_seen = 0;
  for (int i = 0; i < 2000; ++i) {
    VehicleProfile v{1, mem_d(rng), cmp_d(rng), 25e6, 300.0};
    DwellEstimate d{1, dwell_d(rng), "oracle"};
    if (classify(v, d, model, adm, cost) == VehicleClass::kResourceSufficient) {
      ++sufficient_seen;
      double solo = 3.0 * compute_time(model.total_flops_per_epoch(),
                                       v.compute_flops_per_s, cost);
      CHECK(d.predicted_dwell_s >= solo);
      CHECK(v.memory_bytes >= 10.0 * model.total_param_bytes());
    }
  }
  CHECK(sufficient_seen > 0);  // the sweep actually exercises the class
}

TEST_CASE("class names") {
  CHECK(to_string(VehicleClass::kIneligible) == "ineligible");
  CHECK(to_string(VehicleClass::kResourceLimited) == "resource_limited");
  CHECK(to_string(VehicleClass::kResourceSufficient) == "resource_sufficient");
}

}  // TEST_SUITE
