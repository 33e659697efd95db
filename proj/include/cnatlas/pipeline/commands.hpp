#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnatlas/core/error.hpp"
#include "cnatlas/pipeline/config.hpp"

namespace cnatlas::pipeline {

/// Process exit codes shared by the CLI and the C API.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;     // config or input format
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitUsage = 64;

int exit_code_for(ErrorCode code);

struct TractogramStats {
  std::size_t streamlines = 0;
  std::size_t points = 0;
  double min_length_mm = 0.0;
  double mean_length_mm = 0.0;
  double max_length_mm = 0.0;
};
TractogramStats tractogram_stats(const Tractogram& t);
nlohmann::json stats_to_json(const TractogramStats& s);

/// Reads .tck or .vtk by extension; anything else throws FormatError.
Tractogram read_tractogram(const fs::path& path);
void write_tractogram(const Tractogram& t, const fs::path& path);

enum class ConvertFormat { by_extension, tck, vtk };

/// TCK <-> VTK. With one input `out` is the output file; with several it is
/// a directory and each output keeps the input stem. Returns per-file stats.
nlohmann::json cmd_convert(const std::vector<fs::path>& inputs, const fs::path& out, ConvertFormat to);

/// Each pipeline command writes its artifacts below config.output_dir and a
/// run manifest to runs/<command>.json. The return value is that manifest.
nlohmann::json cmd_register(const PipelineConfig& config);
nlohmann::json cmd_build_atlas(const PipelineConfig& config, int stage);
nlohmann::json cmd_screen_roi(const PipelineConfig& config);
nlohmann::json cmd_apply(const PipelineConfig& config);
nlohmann::json cmd_eval(const PipelineConfig& config);

nlohmann::json cmd_emit_presets(const fs::path& out, const std::vector<TrackingPreset>& presets = default_tracking_presets());

struct LabelBatchOptions {
  std::string rater = "batch";
  std::string timestamp;  // empty: wall clock per label
};

/// Labels from {"labels": [{"cluster": 3, "label": "CN_II_D"}, ...]}, each
/// persisted before the next is applied.
nlohmann::json cmd_label_batch(const fs::path& atlas_dir, const fs::path& batch, const LabelBatchOptions& options);
/// Label-by-construction from a phantom truth file (see cmd_phantom).
nlohmann::json cmd_label_construction(const fs::path& atlas_dir, const fs::path& truth, const LabelBatchOptions& options);

struct PhantomOptions {
  std::uint64_t seed = 7;
  std::size_t subjects = 4;
  std::size_t held_out = 1;
};

/// Writes a synthetic cohort with masks, truth bundles and a ready-to-run
/// pipeline.json into `out`.
nlohmann::json cmd_phantom(const fs::path& out, const PhantomOptions& options);

}  // namespace cnatlas::pipeline
