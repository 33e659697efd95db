#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cnatlas/atlas/atlas.hpp"

namespace cnatlas::io {

inline constexpr int kAtlasFormatVersion = 1;

/// Directory layout: manifest.json, embedding_basis.mat, landmarks.mat,
/// centroids.mat, clusters/cluster_%05d.tck, labels.json, audit.jsonl.
/// Everything except the two label files is checksummed in the manifest.
void save_atlas(const atlas::Atlas& a, const std::filesystem::path& dir);

/// Verifies checksums (CorruptAtlas) and format version (VersionError), then
/// replays audit entries newer than the labels snapshot.
atlas::Atlas load_atlas(const std::filesystem::path& dir);

/// Durably records the newest audit entry of `a`: appends it to audit.jsonl,
/// then atomically rewrites labels.json.
void persist_last_label(const atlas::Atlas& a, const std::filesystem::path& dir);

nlohmann::json labels_to_json(const atlas::Atlas& a);
nlohmann::json label_event_to_json(const atlas::LabelEvent& e);

nlohmann::json stage_config_to_json(const atlas::AtlasStageConfig& c);
/// Strict: unknown keys throw InvalidConfig. Missing keys keep `defaults`,
/// except "seed", which is required.
atlas::AtlasStageConfig stage_config_from_json(const nlohmann::json& j, const atlas::AtlasStageConfig& defaults);

}  // namespace cnatlas::io
