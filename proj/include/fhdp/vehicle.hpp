#pragma once

#include <map>
#include <stdexcept>

namespace fhdp {

/// Static resources of one vehicle.
struct VehicleProfile {
  int vehicle_id = 0;
  double memory_bytes = 0.0;
  double compute_flops_per_s = 0.0;
  double link_bytes_per_s = 0.0;
  double comm_radius_m = 0.0;
};

inline void validate_vehicle(const VehicleProfile& v) {
  if (v.memory_bytes <= 0.0 || v.compute_flops_per_s <= 0.0 ||
      v.link_bytes_per_s <= 0.0 || v.comm_radius_m <= 0.0)
    throw std::invalid_argument("VehicleProfile: all resources must be positive");
}

using FleetMap = std::map<int, VehicleProfile>;

inline const VehicleProfile& fleet_at(const FleetMap& fleet, int vehicle_id) {
  auto it = fleet.find(vehicle_id);
  if (it == fleet.end())
    throw std::invalid_argument("unknown vehicle id");
  return it->second;
}

}  // namespace fhdp
