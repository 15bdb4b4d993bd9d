#pragma once

#include <string>
#include <vector>

#include "fhdp/pipeline.hpp"
#include "fhdp/vehicle.hpp"

namespace fhdp {

/// Smallest schedulable model fragment, profiled per sample.
struct ModelUnit {
  double flops_per_sample = 0.0;
  double param_bytes = 0.0;
  double activation_bytes_per_sample = 0.0;
};

struct NamedComponent {
  std::string name;
  std::vector<ModelUnit> units;
};

/// Profiled model DAG after topological sorting: the component list is the
/// topological order and topo_order() is its flattened unit sequence.
class ModelProfile {
 public:
  ModelProfile() = default;
  ModelProfile(std::vector<NamedComponent> components, int batches_per_epoch,
               int batch_size);

  const std::vector<NamedComponent>& components() const { return components_; }
  const std::vector<ModelUnit>& topo_order() const { return topo_order_; }
  int unit_count() const { return static_cast<int>(topo_order_.size()); }
  int batches_per_epoch() const { return batches_per_epoch_; }
  int batch_size() const { return batch_size_; }
  int samples_per_epoch() const { return batches_per_epoch_ * batch_size_; }

  /// Sum of unit parameter bytes (the model capacity).
  double total_param_bytes() const { return total_param_bytes_; }
  /// Sum over units of flops_per_sample x samples_per_epoch.
  double total_flops_per_epoch() const { return total_flops_per_epoch_; }

  double range_param_bytes(int unit_begin, int unit_end) const;
  double range_flops_per_epoch(int unit_begin, int unit_end) const;
  /// Activation bytes crossing the boundary after unit_end-1, per sample.
  double boundary_activation_bytes(int unit_end) const;

 private:
  std::vector<NamedComponent> components_;
  std::vector<ModelUnit> topo_order_;
  int batches_per_epoch_ = 0;
  int batch_size_ = 0;
  double total_param_bytes_ = 0.0;
  double total_flops_per_epoch_ = 0.0;
};

enum class CommVolumeMode {
  kPartitionParams,       // 2 x partition param bytes per batch
  kBoundaryActivations,   // 2 x boundary activation bytes per batch
};

struct CostParams {
  double gpu_utilization = 0.5;     // mu, paper range [0.3, 0.7]
  double bandwidth_overhead = 1.2;  // nu, paper range [1.1, 1.5]
  double footprint_multiplier = 10.0;
  CommVolumeMode comm_volume = CommVolumeMode::kPartitionParams;
};

void validate_cost_params(const CostParams& params);

/// FLOPs one component contributes per epoch:
/// flops_per_sample x batch_size x batches_per_epoch.
double module_compute_per_epoch(double component_flops_per_sample, int n_batch,
                                int batch_size);

/// Seconds to execute `work` FLOPs on a vehicle:
/// work x nu / (vehicle_compute x mu).
double compute_time(double work_flops, double vehicle_compute_flops_per_s,
                    const CostParams& params);

/// Seconds to move one stage's traffic for an epoch:
/// 2 x partition_param_bytes x n_batch x nu / vehicle_link.
double comm_time(double partition_param_bytes, int n_batch,
                 double vehicle_link_bytes_per_s, const CostParams& params);

struct StageTiming {
  int vehicle_id = 0;
  double compute_s = 0.0;
  double comm_s = 0.0;   // outbound transfer; still computed for the last stage
  double start_s = 0.0;
  double end_s = 0.0;    // start + compute
};

/// Per-stage compute/communication times of a template under serial
/// chaining: stage i+1 starts at end_i + comm_i.
std::vector<StageTiming> stage_timings(const PipelineTemplate& t,
                                       const FleetMap& fleet,
                                       const ModelProfile& model,
                                       const CostParams& params);

/// Path execution time: sum of stage compute times plus every transfer
/// except the last stage's.
double path_time(const PipelineTemplate& t, const FleetMap& fleet,
                 const ModelProfile& model, const CostParams& params);

}  // namespace fhdp
