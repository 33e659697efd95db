#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnatlas/apply/identify.hpp"
#include "cnatlas/core/geometry.hpp"
#include "cnatlas/core/labels.hpp"

namespace cnatlas::metrics {

inline constexpr double kDefaultVoxelMm = 1.25;

/// Per-voxel streamline visitation counts; a fiber counts once per voxel.
struct VisitationMap {
  VoxelGrid grid;
  std::vector<std::uint32_t> counts;
  std::uint64_t total = 0;  // sum of counts

  double weight(std::size_t voxel) const;
  std::size_t support_size() const;
};

/// Axis-aligned grid covering every point of `bundles` plus `margin_mm`.
VoxelGrid grid_for(std::span<const Tractogram> bundles, double voxel_mm = kDefaultVoxelMm, double margin_mm = 2.0);

/// Samples each fiber by arc length at half the smallest voxel edge.
VisitationMap voxelize_bundle(const Tractogram& bundle, const VoxelGrid& grid);

/// Weighted Dice of two visitation maps on the same grid. Throws GridMismatch.
/// Two empty maps score 0.
double wdice(const VisitationMap& a, const VisitationMap& b);

/// Fibers passing every ROI and no ROA. Throws InvalidConfig if `rois` is empty.
Tractogram select_ground_truth(const Tractogram& t, std::span<const MaskVolume> rois,
                               std::span<const MaskVolume> roas);

/// One subject's outcome per nerve label.
struct SubjectOutcome {
  std::string subject;
  std::map<ClusterLabel, bool> automated;
  std::map<ClusterLabel, bool> manual;  // ground-truth (manual) identification succeeded
  std::map<ClusterLabel, double> wdice;   // only where both exist
};

struct Fraction {
  std::size_t k = 0;
  std::size_t n = 0;
  std::string str() const { return std::to_string(k) + "/" + std::to_string(n); }
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) deviation, 0 for a single value
  std::size_t n = 0;
  std::string str() const;  // "0.7445±0.0915", "n/a" when n == 0
};

MeanStd mean_std(std::span<const double> values);

struct TableRow {
  std::string stratum;
  std::map<ClusterLabel, Fraction> automated;
  std::map<ClusterLabel, Fraction> manual;
};

enum class WdiceInclusion {
  per_nerve,          // every subject whose manual selection found that nerve
  complete_subjects,  // only subjects where manual selection found every column nerve
};

struct TableOptions {
  std::string dataset = "Subjects";
  std::vector<ClusterLabel> columns{kNerveLabels.begin(), kNerveLabels.end()};
  /// Split rows by manual success; otherwise one row over all subjects.
  bool stratified = true;
  WdiceInclusion inclusion = WdiceInclusion::per_nerve;
};

struct IdentificationReport {
  TableOptions options;
  std::vector<TableRow> rows;
  std::map<NerveGroup, MeanStd> group_wdice;
  MeanStd overall;  // per-subject mean over nerves, then across subjects

  std::string table1_text() const;
  std::string table1_csv() const;
  std::string table2_text() const;
  std::string table2_csv() const;
  nlohmann::json to_json() const;
};

IdentificationReport identification_table(std::span<const SubjectOutcome> outcomes, const TableOptions& options = {});

/// Joins identification results with per-subject manual presence and wDice.
/// Throws ArityError when the lists differ in length.
IdentificationReport identification_table(std::span<const apply::IdentificationResult> results,
                                          std::span<const SubjectOutcome> truth, const TableOptions& options = {});

}  // namespace cnatlas::metrics
