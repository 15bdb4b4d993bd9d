#include "fhdp/cost_model.hpp"

#include <stdexcept>

namespace fhdp {

ModelProfile::ModelProfile(std::vector<NamedComponent> components,
                           int batches_per_epoch, int batch_size)
    : components_(std::move(components)), batches_per_epoch_(batches_per_epoch),
      batch_size_(batch_size) {
  if (batches_per_epoch_ < 1 || batch_size_ < 1)
    throw std::invalid_argument("ModelProfile: batch counts must be positive");
  for (const auto& comp : components_) {
    for (const auto& unit : comp.units) {
      if (unit.flops_per_sample <= 0.0 || unit.param_bytes <= 0.0 ||
          unit.activation_bytes_per_sample <= 0.0)
        throw std::invalid_argument("ModelUnit: all fields must be positive");
      topo_order_.push_back(unit);
      total_param_bytes_ += unit.param_bytes;
      total_flops_per_epoch_ +=
          unit.flops_per_sample * static_cast<double>(samples_per_epoch());
    }
  }
  if (topo_order_.empty())
    throw std::invalid_argument("ModelProfile: no units");
}

double ModelProfile::range_param_bytes(int unit_begin, int unit_end) const {
  if (unit_begin < 0 || unit_end > unit_count() || unit_begin > unit_end)
    throw std::invalid_argument("range_param_bytes: bad unit range");
  double sum = 0.0;
  for (int k = unit_begin; k < unit_end; ++k) sum += topo_order_[k].param_bytes;
  return sum;
}

double ModelProfile::range_flops_per_epoch(int unit_begin, int unit_end) const {
  if (unit_begin < 0 || unit_end > unit_count() || unit_begin > unit_end)
    throw std::invalid_argument("range_flops_per_epoch: bad unit range");
  double sum = 0.0;
  for (int k = unit_begin; k < unit_end; ++k)
    sum += topo_order_[k].flops_per_sample;
  return sum * static_cast<double>(samples_per_epoch());
}

double ModelProfile::boundary_activation_bytes(int unit_end) const {
  if (unit_end < 1 || unit_end > unit_count())
    throw std::invalid_argument("boundary_activation_bytes: bad boundary");
  return topo_order_[unit_end - 1].activation_bytes_per_sample;
}

void validate_cost_params(const CostParams& params) {
  if (params.gpu_utilization <= 0.0 || params.gpu_utilization > 1.0)
    throw std::invalid_argument("CostParams: gpu_utilization must lie in (0,1]");
  if (params.bandwidth_overhead < 1.0)
    throw std::invalid_argument("CostParams: bandwidth_overhead must be >= 1");
  if (params.footprint_multiplier < 1.0)
    throw std::invalid_argument("CostParams: footprint_multiplier must be >= 1");
}

double module_compute_per_epoch(double component_flops_per_sample, int n_batch,
                                int batch_size) {
  if (component_flops_per_sample <= 0.0 || n_batch < 1 || batch_size < 1)
    throw std::invalid_argument("module_compute_per_epoch: inputs must be positive");
  return component_flops_per_sample * static_cast<double>(batch_size) *
         static_cast<double>(n_batch);
}

double compute_time(double work_flops, double vehicle_compute_flops_per_s,
                    const CostParams& params) {
  if (vehicle_compute_flops_per_s <= 0.0)
    throw std::invalid_argument("compute_time: vehicle compute must be positive");
  if (work_flops < 0.0)
    throw std::invalid_argument("compute_time: negative work");
  validate_cost_params(params);
  return work_flops * params.bandwidth_overhead /
         (vehicle_compute_flops_per_s * params.gpu_utilization);
}

double comm_time(double partition_param_bytes, int n_batch,
                 double vehicle_link_bytes_per_s, const CostParams& params) {
  if (vehicle_link_bytes_per_s <= 0.0)
    throw std::invalid_argument("comm_time: vehicle link rate must be positive");
  if (partition_param_bytes < 0.0 || n_batch < 1)
    throw std::invalid_argument("comm_time: bad transfer volume");
  validate_cost_params(params);
  return 2.0 * partition_param_bytes * static_cast<double>(n_batch) *
         params.bandwidth_overhead / vehicle_link_bytes_per_s;
}

std::vector<StageTiming> stage_timings(const PipelineTemplate& t,
                                       const FleetMap& fleet,
                                       const ModelProfile& model,
                                       const CostParams& params) {
  if (t.stages.empty())
    throw std::invalid_argument("stage_timings: empty template");
  std::vector<StageTiming> timings;
  timings.reserve(t.stages.size());
  double clock = 0.0;
  for (const auto& stage : t.stages) {
    const VehicleProfile& v = fleet_at(fleet, stage.vehicle_id);
    double work = model.range_flops_per_epoch(stage.unit_begin, stage.unit_end);
    double volume =
        params.comm_volume == CommVolumeMode::kPartitionParams
            ? model.range_param_bytes(stage.unit_begin, stage.unit_end)
            : model.boundary_activation_bytes(stage.unit_end) *
                  static_cast<double>(model.batch_size());
    StageTiming timing;
    timing.vehicle_id = stage.vehicle_id;
    timing.compute_s = compute_time(work, v.compute_flops_per_s, params);
    timing.comm_s = comm_time(volume, model.batches_per_epoch(),
                              v.link_bytes_per_s, params);
    timing.start_s = clock;
    timing.end_s = clock + timing.compute_s;
    clock = timing.end_s + timing.comm_s;
    timings.push_back(timing);
  }
  return timings;
}

double path_time(const PipelineTemplate& t, const FleetMap& fleet,
                 const ModelProfile& model, const CostParams& params) {
  auto timings = stage_timings(t, fleet, model, params);
  double total = 0.0;
  for (std::size_t i = 0; i < timings.size(); ++i) {
    total += timings[i].compute_s;
    if (i + 1 < timings.size()) total += timings[i].comm_s;
  }
  return total;
}

}  // namespace fhdp
