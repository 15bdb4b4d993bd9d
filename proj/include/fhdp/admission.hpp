#pragma once

#include <map>
#include <string>
#include <vector>

#include "fhdp/cost_model.hpp"
#include "fhdp/vehicle.hpp"
#include "fhdp/world.hpp"

namespace fhdp {

/// Predicted remaining time a vehicle stays inside edge coverage.
struct DwellEstimate {
  int vehicle_id = 0;
  double predicted_dwell_s = 0.0;
  std::string predictor_name;
};

/// Pluggable dwell-time predictor. Implementations must be internally
/// synchronized if stateful; the built-ins are immutable after construction.
class DwellPredictor {
 public:
  virtual ~DwellPredictor() = default;
  virtual std::string name() const = 0;
  virtual double predict_seconds(const TrajectoryHistory& history) const = 0;
};

/// Reads the ground-truth departure time: predicts departure - now, where
/// now is the last observed step times step_seconds.
class OracleDwellPredictor : public DwellPredictor {
 public:
  explicit OracleDwellPredictor(double step_seconds = 1.0);
  std::string name() const override { return "oracle"; }
  double predict_seconds(const TrajectoryHistory& history) const override;

 private:
  double step_seconds_;
};

/// Historical mean of completed dwells. When mobility patterns and
/// per-pattern samples are supplied, predicts the posterior-weighted mean
/// of per-pattern means; otherwise (or when the history is too short to
/// compute a posterior) falls back to the global mean.
class MeanDwellPredictor : public DwellPredictor {
 public:
  explicit MeanDwellPredictor(std::vector<double> completed_dwells);
  MeanDwellPredictor(std::vector<MobilityPattern> patterns,
                     std::map<int, std::vector<double>> dwells_by_pattern);
  std::string name() const override { return "mean"; }
  double predict_seconds(const TrajectoryHistory& history) const override;

 private:
  std::vector<MobilityPattern> patterns_;
  std::vector<double> pattern_means_;  // aligned with patterns_
  double global_mean_ = 0.0;
};

/// Validates the history and wraps the predictor output (clamped at 0).
DwellEstimate predict_dwell(const TrajectoryHistory& history,
                            const DwellPredictor& predictor);

/// Mean absolute percentage error as a fraction (0 = perfect).
double mape(const std::vector<double>& predicted,
            const std::vector<double>& actual);

struct AdmissionParams {
  double alpha = 0.5;  // minimum completable fraction of the training task
  int e_req = 1;       // epochs a participant must sustain
};

void validate_admission_params(const AdmissionParams& params);

enum class VehicleClass { kIneligible, kResourceLimited, kResourceSufficient };

std::string to_string(VehicleClass c);

/// Participation floor: the vehicle's raw work budget dwell x compute must
/// reach at least the fraction alpha of the full task M_cmp x e_req
/// (closed inequality).
bool meets_participation_floor(double dwell_s, double compute_flops_per_s,
                               const ModelProfile& model, double alpha,
                               int e_req);

/// Three-way classification. resource_sufficient demands that the vehicle
/// can finish e_req epochs solo under the cost model within its dwell AND
/// hosts the full training footprint in memory; resource_limited passes
/// the participation floor but fails sufficiency; everything else is
/// ineligible.
VehicleClass classify(const VehicleProfile& vehicle, const DwellEstimate& dwell,
                      const ModelProfile& model, const AdmissionParams& admission,
                      const CostParams& cost);

}  // namespace fhdp
