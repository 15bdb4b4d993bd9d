#include "fhdp/admission.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fhdp {

namespace {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample set");
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

}  // namespace

OracleDwellPredictor::OracleDwellPredictor(double step_seconds)
    : step_seconds_(step_seconds) {
  if (step_seconds <= 0.0)
    throw std::invalid_argument("OracleDwellPredictor: step_seconds must be positive");
}

double OracleDwellPredictor::predict_seconds(const TrajectoryHistory& history) const {
  double now = static_cast<double>(history.current_step()) * step_seconds_;
  return history.departure_time_s - now;
}

MeanDwellPredictor::MeanDwellPredictor(std::vector<double> completed_dwells)
    : global_mean_(mean_of(completed_dwells)) {}

MeanDwellPredictor::MeanDwellPredictor(
    std::vector<MobilityPattern> patterns,
    std::map<int, std::vector<double>> dwells_by_pattern)
    : patterns_(std::move(patterns)) {
  if (patterns_.empty())
    throw std::invalid_argument("MeanDwellPredictor: no patterns");
  std::vector<double> all;
  for (const auto& pattern : patterns_) {
    auto it = dwells_by_pattern.find(pattern.pattern_id);
    if (it == dwells_by_pattern.end() || it->second.empty())
      throw std::invalid_argument(
          "MeanDwellPredictor: missing dwell samples for a pattern");
    pattern_means_.push_back(mean_of(it->second));
    all.insert(all.end(), it->second.begin(), it->second.end());
  }
  global_mean_ = mean_of(all);
}

double MeanDwellPredictor::predict_seconds(const TrajectoryHistory& history) const {
  if (patterns_.empty() || history.observed.size() < 2) return global_mean_;
  auto weights = posterior_pattern_weights(history, patterns_);
  double prediction = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    prediction += weights[k] * pattern_means_[k];
  return prediction;
}

DwellEstimate predict_dwell(const TrajectoryHistory& history,
                            const DwellPredictor& predictor) {
  if (history.observed.empty())
    throw std::invalid_argument("predict_dwell: empty history");
  DwellEstimate est;
  est.vehicle_id = history.vehicle_id;
  est.predicted_dwell_s = std::max(0.0, predictor.predict_seconds(history));
  est.predictor_name = predictor.name();
  return est;
}

double mape(const std::vector<double>& predicted,
            const std::vector<double>& actual) {
  if (predicted.empty() || predicted.size() != actual.size())
    throw std::invalid_argument("mape: size mismatch or empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (actual[i] <= 0.0)
      throw std::invalid_argument("mape: actual values must be positive");
    total += std::abs(predicted[i] - actual[i]) / actual[i];
  }
  return total / static_cast<double>(predicted.size());
}

void validate_admission_params(const AdmissionParams& params) {
  if (params.alpha <= 0.0 || params.alpha > 1.0)
    throw std::invalid_argument("AdmissionParams: alpha must lie in (0,1]");
  if (params.e_req < 1)
    throw std::invalid_argument("AdmissionParams: e_req must be >= 1");
}

std::string to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::kIneligible: return "ineligible";
    case VehicleClass::kResourceLimited: return "resource_limited";
    case VehicleClass::kResourceSufficient: return "resource_sufficient";
  }
  return "unknown";
}

bool meets_participation_floor(double dwell_s, double compute_flops_per_s,
                               const ModelProfile& model, double alpha,
                               int e_req) {
  validate_admission_params({alpha, e_req});
  if (dwell_s < 0.0 || compute_flops_per_s <= 0.0)
    throw std::invalid_argument("participation floor: bad dwell or compute");
  return dwell_s * compute_flops_per_s >=
         alpha * model.total_flops_per_epoch() * static_cast<double>(e_req);
}

VehicleClass classify(const VehicleProfile& vehicle, const DwellEstimate& dwell,
                      const ModelProfile& model, const AdmissionParams& admission,
                      const CostParams& cost) {
  validate_vehicle(vehicle);
  validate_admission_params(admission);
  validate_cost_params(cost);
  if (!meets_participation_floor(dwell.predicted_dwell_s,
                                 vehicle.compute_flops_per_s, model,
                                 admission.alpha, admission.e_req))
    return VehicleClass::kIneligible;
  // Sufficiency = can finish the task solo: e_req epochs of the full model
  // at this vehicle's effective compute rate fit inside the dwell, and the
  // training footprint fits in memory.
  double solo_time = static_cast<double>(admission.e_req) *
                     compute_time(model.total_flops_per_epoch(),
                                  vehicle.compute_flops_per_s, cost);
  bool enough_time = dwell.predicted_dwell_s >= solo_time;
  bool enough_memory = vehicle.memory_bytes >=
                       cost.footprint_multiplier * model.total_param_bytes();
  if (enough_time && enough_memory) return VehicleClass::kResourceSufficient;
  return VehicleClass::kResourceLimited;
}

}  // namespace fhdp
