#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnatlas/core/geometry.hpp"
#include "cnatlas/core/labels.hpp"
#include "cnatlas/core/presets.hpp"
#include "cnatlas/spectral/embedding.hpp"

namespace cnatlas::atlas {

enum class AtlasStage { initial, enhanced };
enum class ReviewStatus { pending, ambiguous, reviewed };

std::string_view stage_name(AtlasStage stage);
std::string_view status_name(ReviewStatus status);

struct AtlasStageConfig {
  std::size_t k = 6000;
  double outlier_std = 2.0;
  std::size_t outlier_iterations = 2;
  /// Stage 1 samples this many fibers per subject; stage 2 samples this many
  /// from the merged CN clusters in total.
  std::size_t sample_per_subject = 20000;
  double min_length_mm = 20.0;
  std::uint64_t seed = 0;
  spectral::AffinityParams affinity{};
  std::size_t embedding_dim = spectral::kDefaultEmbeddingDim;
  std::size_t landmarks = 2000;  // Nystrom m, clamped to the pooled count

  /// Throws InvalidConfig.
  void validate() const;

  static AtlasStageConfig stage1_defaults();
  static AtlasStageConfig stage2_defaults();
};

/// Nonrigid refinement parameters kept as provenance; the transform itself is identity.
struct BsplineRecord {
  std::array<int, 3> grid{8, 8, 8};
  std::vector<double> sigma_schedule{20.0, 10.0, 5.0, 2.0};
  std::string status = "identity";

  bool operator==(const BsplineRecord&) const = default;
};

struct LabelEvent {
  std::uint64_t seq = 0;
  std::int64_t cluster = 0;
  ClusterLabel label = ClusterLabel::unlabeled;
  ReviewStatus status = ReviewStatus::reviewed;
  std::string rater;
  std::string timestamp;

  bool operator==(const LabelEvent&) const = default;
};

struct FiberCluster {
  std::int64_t id = 0;
  std::vector<std::size_t> members;  // indices into Atlas::fibers
  Eigen::RowVectorXd centroid;       // unit row in embedding space, zero when pruned
  ClusterLabel label = ClusterLabel::unlabeled;
  ReviewStatus status = ReviewStatus::pending;
  bool pruned = false;
  /// Nerves that qualified during screening; more than one marks ambiguity.
  std::vector<ClusterLabel> candidates;
};

struct Atlas {
  AtlasStage stage = AtlasStage::initial;
  /// Landmark factorization. Its per-fiber fields are cleared; member
  /// coordinates live in `coordinates`.
  spectral::SpectralEmbedding embedding;
  /// Member geometry in atlas space, cluster after cluster, ids 0..n-1. Each
  /// fiber's origin names its source subject and id.
  Tractogram fibers;
  /// Embedding rows aligned with `fibers`. Empty after load_atlas().
  Eigen::MatrixXd coordinates;
  std::vector<FiberCluster> clusters;
  AtlasStageConfig stage1;
  std::optional<AtlasStageConfig> stage2;
  std::vector<TrackingPreset> presets = default_tracking_presets();
  BsplineRecord bspline;
  bool screened = false;
  std::vector<LabelEvent> audit;

  const FiberCluster* find(std::int64_t cluster_id) const;
  FiberCluster* find(std::int64_t cluster_id);
};

struct OutlierResult {
  FiberCluster cluster;
  std::vector<std::size_t> removed;  // removed member indices, ascending
  bool singleton = false;
};

/// Drops members whose mean embedding similarity to the other members falls
/// below mean - std_c * std. At most half of the members go in one pass.
OutlierResult remove_outliers(const FiberCluster& c, const Eigen::MatrixXd& coordinates, double std_c);

/// Per-subject length filter and sampling, pooled Nystrom embedding, k-means,
/// then outlier passes. Throws EmptySubject, InvalidK.
Atlas build_stage1(std::span<const Tractogram> registered_subjects, const AtlasStageConfig& cfg);

struct NerveMasks {
  ClusterLabel nerve = ClusterLabel::unlabeled;
  std::vector<MaskVolume> rois;
  std::vector<MaskVolume> roas;
};

inline constexpr double kScreeningFraction = 0.6;
inline constexpr const char* kScreeningRater = "roi-screening";
inline constexpr const char* kAutomaticTimestamp = "1970-01-01T00:00:00Z";

struct ScreeningReport {
  std::map<ClusterLabel, std::size_t> per_label;
  std::size_t ambiguous = 0;
  std::size_t rejected = 0;
  std::string summary;  // per nerve group, e.g. "CN II (18 clusters), ..."
};

/// Assigns each cluster the nerve whose ROIs at least `theta` of its members
/// pass entirely while at most half hit any of that nerve's ROAs. Clusters
/// with several qualifying nerves are flagged ambiguous; clusters with none are
/// rejected.
ScreeningReport screen_clusters_by_roi(Atlas& atlas, std::span<const NerveMasks> masks,
                                       double theta = kScreeningFraction);

/// Re-clusters the members of the CN-labeled clusters. Throws EmptyInput.
Atlas build_stage2(const Atlas& screened, const AtlasStageConfig& cfg2);

/// Records a label with rater and timestamp; relabeling keeps the history.
/// Throws NotFound for an unknown cluster and InvalidArgument for `unlabeled`.
void apply_label(Atlas& atlas, std::int64_t cluster_id, ClusterLabel label, const std::string& rater,
                 const std::string& timestamp);

/// Clusters per nerve group carrying a nerve label.
std::map<NerveGroup, std::size_t> group_counts(const Atlas& atlas);
/// "CN II (14 clusters), CN III (6 clusters), ..."
std::string format_group_counts(const std::map<NerveGroup, std::size_t>& counts);

/// UTC wall-clock timestamp for interactive labeling.
std::string utc_timestamp();

}  // namespace cnatlas::atlas
