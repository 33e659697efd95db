#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "cnatlas/core/labels.hpp"

namespace cnatlas {

/// UKF tracking parameters for one nerve, emitted for external trackers.
struct TrackingPreset {
  NerveGroup nerve = NerveGroup::CN_II;
  double seeding_fa = 0.0;
  double stopping_fa = 0.0;
  double qm = 0.0;  // rate of change of tensor direction
  double ql = 0.0;  // rate of change of eigenvalues
  int seeds_per_voxel = 1;

  /// Throws InvalidConfig when a field is out of range.
  void validate() const;
};

/// The four per-nerve presets used to generate the atlas tractography.
std::vector<TrackingPreset> default_tracking_presets();

nlohmann::json presets_to_json(const std::vector<TrackingPreset>& presets);
/// Strict: unknown keys or out-of-range values throw InvalidConfig.
std::vector<TrackingPreset> presets_from_json(const nlohmann::json& j);

}  // namespace cnatlas
