#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnatlas/apply/identify.hpp"
#include "cnatlas/atlas/atlas.hpp"
#include "cnatlas/core/presets.hpp"
#include "cnatlas/metrics/metrics.hpp"
#include "cnatlas/registration/groupwise.hpp"

namespace cnatlas::pipeline {

namespace fs = std::filesystem;

/// Mask files for one nerve, resolved to absolute paths.
struct MaskPaths {
  std::vector<fs::path> rois;
  std::vector<fs::path> roas;
};
using MaskConfig = std::map<ClusterLabel, MaskPaths>;

struct ScreeningSection {
  double theta = atlas::kScreeningFraction;
  MaskConfig masks;
};

struct ApplySection {
  std::optional<fs::path> atlas;  // defaults to <output_dir>/atlas
  std::vector<fs::path> subjects;
  apply::ApplyConfig config;
};

struct EvalSubject {
  std::string id;
  std::optional<fs::path> automated;  // defaults to <output_dir>/apply/<id>
  std::optional<fs::path> manual;     // directory of <label>.tck bundles
  std::optional<fs::path> manual_tractogram;
  MaskConfig manual_masks;  // selects manual bundles from manual_tractogram
};

struct EvalSection {
  std::string dataset = "Subjects";
  double voxel_mm = metrics::kDefaultVoxelMm;
  metrics::TableOptions table;
  std::vector<EvalSubject> subjects;
};

struct PipelineConfig {
  fs::path base_dir;  // relative paths resolve against this
  fs::path output_dir;
  std::optional<int> workers;
  std::vector<fs::path> subjects;  // expanded: directories yield their *.tck files, sorted
  std::optional<registration::RegistrationConfig> registration;
  std::optional<atlas::AtlasStageConfig> stage1;
  std::optional<atlas::AtlasStageConfig> stage2;
  std::optional<ScreeningSection> screening;
  std::optional<ApplySection> apply;
  std::optional<EvalSection> eval;
  std::vector<TrackingPreset> presets = default_tracking_presets();
  nlohmann::json document;  // the validated document, overrides applied
};

/// Validates the whole document before anything runs. Unknown keys, wrong
/// types and missing seeds throw InvalidConfig.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const fs::path& base_dir);

/// Reads `file`, applies dotted-key overrides ({"registration.seed": 4}) and
/// parses. Unreadable file: IoError; malformed JSON: InvalidConfig.
PipelineConfig load_pipeline_config(const fs::path& file, const nlohmann::json& overrides = nlohmann::json::object());

void apply_overrides(nlohmann::json& doc, const nlohmann::json& overrides);

nlohmann::json registration_config_to_json(const registration::RegistrationConfig& c);
/// Strict; "seed" is required.
registration::RegistrationConfig registration_config_from_json(const nlohmann::json& j);

/// ROI/ROA config: {"CN_II_D": {"rois": [...], "roas": [...]}}. Paths resolve
/// against `base_dir`.
MaskConfig parse_mask_config(const nlohmann::json& j, const fs::path& base_dir);
MaskConfig load_mask_config(const fs::path& file);
std::vector<atlas::NerveMasks> load_masks(const MaskConfig& config);

/// Output layout below PipelineConfig::output_dir.
struct Layout {
  fs::path root;
  fs::path registration() const { return root / "registration"; }
  fs::path atlas_stage1() const { return root / "atlas_stage1"; }
  fs::path atlas_screened() const { return root / "atlas_screened"; }
  fs::path atlas() const { return root / "atlas"; }
  fs::path apply() const { return root / "apply"; }
  fs::path eval() const { return root / "eval"; }
  fs::path runs() const { return root / "runs"; }
};

}  // namespace cnatlas::pipeline
