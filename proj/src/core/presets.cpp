#include "cnatlas/core/presets.hpp"

#include <set>
#include <string>

#include "cnatlas/core/error.hpp"

namespace cnatlas {

void TrackingPreset::validate() const {
  auto fail = [this](const std::string& what) {
    raise(ErrorCode::InvalidConfig,
          std::string("tracking preset ") + std::string(group_display_name(nerve)) + ": " + what);
  };
  if (!(seeding_fa >= 0.0 && seeding_fa <= 1.0)) fail("seedingFA outside [0, 1]");
  if (!(stopping_fa >= 0.0 && stopping_fa <= 1.0)) fail("stoppingFA outside [0, 1]");
  if (!(qm > 0.0)) fail("Qm must be positive");
  if (!(ql > 0.0)) fail("Ql must be positive");
  if (seeds_per_voxel < 1) fail("seeds_per_voxel must be >= 1");
}

std::vector<TrackingPreset> default_tracking_presets() {
  return {
      {NerveGroup::CN_II, 0.02, 0.01, 0.001, 50.0, 6},
      {NerveGroup::CN_III, 0.01, 0.01, 0.001, 150.0, 6},
      {NerveGroup::CN_V, 0.06, 0.05, 0.001, 300.0, 6},
      {NerveGroup::CN_VII_VIII, 0.02, 0.05, 0.001, 50.0, 6},
  };
}

nlohmann::json presets_to_json(const std::vector<TrackingPreset>& presets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : presets) {
    arr.push_back({{"nerve", std::string(group_key(p.nerve))},
                   {"seedingFA", p.seeding_fa},
                   {"stoppingFA", p.stopping_fa},
                   {"Qm", p.qm},
                   {"Ql", p.ql},
                   {"seeds_per_voxel", p.seeds_per_voxel}});
  }
  return arr;
}

std::vector<TrackingPreset> presets_from_json(const nlohmann::json& j) {
  if (!j.is_array()) raise(ErrorCode::InvalidConfig, "tracking presets must be an array");
  static const std::set<std::string> keys = {"nerve", "seedingFA", "stoppingFA",
                                             "Qm",    "Ql",        "seeds_per_voxel"};
  std::vector<TrackingPreset> out;
  for (const auto& item : j) {
    if (!item.is_object()) raise(ErrorCode::InvalidConfig, "tracking preset must be an object");
    for (const auto& [k, v] : item.items()) {
      if (!keys.count(k)) raise(ErrorCode::InvalidConfig, "unknown tracking preset key '" + k + "'");
    }
    for (const auto& k : keys) {
      if (!item.contains(k)) raise(ErrorCode::InvalidConfig, "tracking preset missing '" + k + "'");
    }
    TrackingPreset p;
    const auto nerve = item.at("nerve").get<std::string>();
    bool found = false;
    for (auto g : kNerveGroups) {
      if (group_key(g) == nerve) {
        p.nerve = g;
        found = true;
      }
    }
    if (!found) raise(ErrorCode::InvalidConfig, "unknown nerve '" + nerve + "'");
    try {
      p.seeding_fa = item.at("seedingFA").get<double>();
      p.stopping_fa = item.at("stoppingFA").get<double>();
      p.qm = item.at("Qm").get<double>();
      p.ql = item.at("Ql").get<double>();
      p.seeds_per_voxel = item.at("seeds_per_voxel").get<int>();
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorCode::InvalidConfig, std::string("tracking preset: ") + e.what());
    }
    p.validate();
    out.push_back(p);
  }
  return out;
}

}  // namespace cnatlas
