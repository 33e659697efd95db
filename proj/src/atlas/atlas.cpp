#include "cnatlas/atlas/atlas.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/random.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/registration/groupwise.hpp"
#include "cnatlas/spectral/kmeans.hpp"

namespace cnatlas::atlas {
namespace {

// Seed streams derived from a stage seed.
constexpr std::uint64_t kLandmarkStream = 0x4c414e44;
constexpr std::uint64_t kKmeansStream = 0x4b4d4e53;
constexpr std::uint64_t kMergeStream = 0x4d455247;

// Outlier scores this close to the threshold are kept; guards against
// removing members of a zero-variance cluster over rounding noise.
constexpr double kScoreTolerance = 1e-12;

Atlas cluster_pool(const Tractogram& pooled, const AtlasStageConfig& cfg, bool clamp_k) {
  const std::size_t n = pooled.size();
  if (n == 0) raise(ErrorCode::EmptyInput, "no fibers to cluster");
  if (!clamp_k && n < cfg.k) {
    raise(ErrorCode::InvalidK, "K=" + std::to_string(cfg.k) + " exceeds " + std::to_string(n) + " pooled fibers");
  }
  if (n < 2) raise(ErrorCode::EmptyInput, "at least 2 fibers are needed to build an embedding");
  const std::size_t m = std::min(cfg.landmarks, n);
  const std::size_t t = std::min(cfg.embedding_dim, m - 1);
  spectral::SpectralEmbedding emb =
      spectral::nystrom_embed(pooled, m, cfg.affinity, t, mix_seed(cfg.seed, kLandmarkStream));

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (!emb.low_confidence[i]) keep.push_back(i);
  }
  const std::size_t k = clamp_k ? std::min(cfg.k, keep.size()) : cfg.k;
  if (keep.size() < k || k == 0) {
    raise(ErrorCode::InvalidK, "K=" + std::to_string(cfg.k) + " exceeds " + std::to_string(keep.size()) +
                                   " confidently embedded fibers");
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keep.size()), emb.coordinates.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = emb.coordinates.row(static_cast<Eigen::Index>(keep[i]));
  }
  const spectral::ClusteringResult km = spectral::kmeans_embedding(rows, k, mix_seed(cfg.seed, kKmeansStream));

  std::vector<FiberCluster> clusters(k);
  for (std::size_t c = 0; c < k; ++c) clusters[c].id = static_cast<std::int64_t>(c);
  for (std::size_t i = 0; i < keep.size(); ++i) clusters[static_cast<std::size_t>(km.labels[i])].members.push_back(i);

  parallel_for(k, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      for (std::size_t pass = 0; pass < cfg.outlier_iterations; ++pass) {
        OutlierResult r = remove_outliers(clusters[c], rows, cfg.outlier_std);
        const bool changed = !r.removed.empty();
        clusters[c] = std::move(r.cluster);
        if (!changed) break;
      }
    }
  });

  // Compact: the atlas keeps only cluster members, renumbered cluster by cluster.
  Atlas out;
  out.fibers.subject_id = "atlas";
  out.fibers.space = SpaceTag::atlas;
  std::size_t total = 0;
  for (const auto& c : clusters) total += c.members.size();
  out.coordinates.resize(static_cast<Eigen::Index>(total), rows.cols());
  for (auto& c : clusters) {
    std::vector<std::size_t> renumbered;
    for (std::size_t row : c.members) {
      const std::size_t next = out.fibers.size();
      Streamline s = pooled.streamlines[keep[row]];
      s.id = static_cast<std::int64_t>(next);
      out.fibers.streamlines.push_back(std::move(s));
      out.coordinates.row(static_cast<Eigen::Index>(next)) = rows.row(static_cast<Eigen::Index>(row));
      renumbered.push_back(next);
    }
    c.members = std::move(renumbered);
    c.pruned = c.members.empty();
    c.centroid = c.pruned ? Eigen::RowVectorXd::Zero(rows.cols()) : spectral::normalized_mean(out.coordinates, c.members);
  }
  out.clusters = std::move(clusters);
  emb.coordinates.resize(0, 0);
  emb.fiber_ids.clear();
  emb.low_confidence.clear();
  out.embedding = std::move(emb);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::uint64_t next_seq(const Atlas& a) { return a.audit.empty() ? 1 : a.audit.back().seq + 1; }

}  // namespace

std::string_view stage_name(AtlasStage stage) {
  return stage == AtlasStage::initial ? "initial" : "enhanced";
}

std::string_view status_name(ReviewStatus status) {
  switch (status) {
    case ReviewStatus::pending: return "pending";
    case ReviewStatus::ambiguous: return "ambiguous";
    case ReviewStatus::reviewed: return "reviewed";
  }
  return "pending";
}

void AtlasStageConfig::validate() const {
  if (k < 1) raise(ErrorCode::InvalidConfig, "K must be >= 1");
  if (!(outlier_std > 0.0)) raise(ErrorCode::InvalidConfig, "outlier_std must be positive");
  if (sample_per_subject < 1) raise(ErrorCode::InvalidConfig, "sample_per_subject must be >= 1");
  if (!(min_length_mm >= 0.0)) raise(ErrorCode::InvalidConfig, "min_length_mm must be >= 0");
  if (embedding_dim < 1) raise(ErrorCode::InvalidConfig, "embedding_dim must be >= 1");
  if (landmarks < 2) raise(ErrorCode::InvalidConfig, "landmarks must be >= 2");
  try {
    affinity.validate();
  } catch (const Error& e) {
    raise(ErrorCode::InvalidConfig, e.what());
  }
}

AtlasStageConfig AtlasStageConfig::stage1_defaults() { return AtlasStageConfig{}; }

AtlasStageConfig AtlasStageConfig::stage2_defaults() {
  AtlasStageConfig c;
  c.k = 200;
  c.outlier_std = 1.0;
  c.outlier_iterations = 1;
  c.affinity.sigma = 20.0;
  return c;
}

const FiberCluster* Atlas::find(std::int64_t cluster_id) const {
  for (const auto& c : clusters) {
    if (c.id == cluster_id) return &c;
  }
  return nullptr;
}

FiberCluster* Atlas::find(std::int64_t cluster_id) {
  return const_cast<FiberCluster*>(static_cast<const Atlas&>(*this).find(cluster_id));
}

OutlierResult remove_outliers(const FiberCluster& c, const Eigen::MatrixXd& coordinates, double std_c) {
  OutlierResult out;
  out.cluster = c;
  const std::size_t n = c.members.size();
  if (n < 2) {
    out.singleton = true;
    return out;
  }
  const std::vector<double> scores = spectral::member_similarity(coordinates, c.members);
  const double mean = mean_of(scores);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double threshold = mean - std_c * std::sqrt(var / static_cast<double>(n)) - kScoreTolerance;

  std::vector<std::size_t> below;
  for (std::size_t i = 0; i < n; ++i) {
    if (scores[i] < threshold) below.push_back(i);
  }
  std::sort(below.begin(), below.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] < scores[b] : a < b;
  });
  if (below.size() > n / 2) below.resize(n / 2);
  std::vector<std::uint8_t> drop(n, 0);
  for (std::size_t i : below) drop[i] = 1;

  out.cluster.members.clear();
  for (std::size_t i = 0; i < n; ++i) {
    (drop[i] ? out.removed : out.cluster.members).push_back(c.members[i]);
  }
  std::sort(out.removed.begin(), out.removed.end());
  out.cluster.centroid = spectral::normalized_mean(coordinates, out.cluster.members);
  return out;
}

Atlas build_stage1(std::span<const Tractogram> subjects, const AtlasStageConfig& cfg) {
  cfg.validate();
  if (subjects.empty()) raise(ErrorCode::EmptyInput, "no subjects given");
  std::vector<Tractogram> prepared;
  prepared.reserve(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    Tractogram kept = filter_by_length(subjects[s], cfg.min_length_mm);
    if (kept.empty()) {
      raise(ErrorCode::EmptySubject, "subject '" + subjects[s].subject_id + "' has no fibers of at least " +
                                         std::to_string(cfg.min_length_mm) + " mm");
    }
    prepared.push_back(sample_tractogram(kept, cfg.sample_per_subject, mix_seed(cfg.seed, s)));
  }
  Atlas a = cluster_pool(registration::concatenate_subjects(prepared), cfg, false);
  a.stage = AtlasStage::initial;
  a.stage1 = cfg;
  return a;
}

ScreeningReport screen_clusters_by_roi(Atlas& atlas, std::span<const NerveMasks> masks, double theta) {
  if (!(theta > 0.0 && theta <= 1.0)) raise(ErrorCode::InvalidConfig, "screening fraction must be in (0, 1]");
  for (const auto& nm : masks) {
    if (!is_nerve(nm.nerve)) raise(ErrorCode::InvalidConfig, "screening masks must name a nerve label");
    if (nm.rois.empty()) {
      raise(ErrorCode::InvalidConfig, "nerve " + std::string(label_name(nm.nerve)) + " has no ROI");
    }
  }
  ScreeningReport report;
  std::vector<std::vector<ClusterLabel>> qualifying(atlas.clusters.size());
  parallel_for(atlas.clusters.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t ci = b; ci < e; ++ci) {
      const FiberCluster& c = atlas.clusters[ci];
      if (c.pruned || c.members.empty()) continue;
      const double n = static_cast<double>(c.members.size());
      for (const auto& nm : masks) {
        std::size_t through = 0;
        std::vector<std::size_t> roa_hits(nm.roas.size(), 0);
        for (std::size_t idx : c.members) {
          const Streamline& s = atlas.fibers.streamlines[idx];
          bool all = true;
          for (const auto& roi : nm.rois) {
            if (!streamline_passes_mask(s, roi)) {
              all = false;
              break;
            }
          }
          through += all ? 1 : 0;
          for (std::size_t r = 0; r < nm.roas.size(); ++r) roa_hits[r] += streamline_passes_mask(s, nm.roas[r]);
        }
        bool blocked = false;
        for (std::size_t h : roa_hits) blocked = blocked || static_cast<double>(h) > 0.5 * n;
        if (!blocked && static_cast<double>(through) >= theta * n) qualifying[ci].push_back(nm.nerve);
      }
    }
  });

  for (std::size_t ci = 0; ci < atlas.clusters.size(); ++ci) {
    FiberCluster& c = atlas.clusters[ci];
    if (c.pruned) continue;
    c.candidates = qualifying[ci];
    LabelEvent ev;
    ev.seq = next_seq(atlas);
    ev.cluster = c.id;
    ev.rater = kScreeningRater;
    ev.timestamp = kAutomaticTimestamp;
    if (qualifying[ci].size() == 1) {
      ev.label = qualifying[ci][0];
      ev.status = ReviewStatus::pending;
      ++report.per_label[ev.label];
    } else if (qualifying[ci].empty()) {
      ev.label = ClusterLabel::rejected;
      ev.status = ReviewStatus::pending;
      ++report.rejected;
    } else {
      ev.label = ClusterLabel::unlabeled;
      ev.status = ReviewStatus::ambiguous;
      ++report.ambiguous;
    }
    c.label = ev.label;
    c.status = ev.status;
    atlas.audit.push_back(std::move(ev));
  }
  atlas.screened = true;
  report.summary = format_group_counts(group_counts(atlas));
  return report;
}

Atlas build_stage2(const Atlas& screened, const AtlasStageConfig& cfg2) {
  cfg2.validate();
  Tractogram merged;
  merged.subject_id = "merged";
  merged.space = SpaceTag::atlas;
  for (const auto& c : screened.clusters) {
    if (!is_nerve(c.label)) continue;
    for (std::size_t idx : c.members) merged.streamlines.push_back(screened.fibers.streamlines[idx]);
  }
  if (merged.empty()) raise(ErrorCode::EmptyInput, "no CN-labeled clusters to merge");
  const Tractogram sample = sample_tractogram(merged, cfg2.sample_per_subject, mix_seed(cfg2.seed, kMergeStream));
  Atlas a = cluster_pool(sample, cfg2, true);
  a.stage = AtlasStage::enhanced;
  a.stage1 = screened.stage1;
  a.stage2 = cfg2;
  a.presets = screened.presets;
  a.bspline = screened.bspline;
  return a;
}

void apply_label(Atlas& atlas, std::int64_t cluster_id, ClusterLabel label, const std::string& rater,
                 const std::string& timestamp) {
  FiberCluster* c = atlas.find(cluster_id);
  if (c == nullptr) raise(ErrorCode::NotFound, "no cluster with id " + std::to_string(cluster_id));
  if (label == ClusterLabel::unlabeled) raise(ErrorCode::InvalidArgument, "cannot assign the unlabeled state");
  c->label = label;
  c->status = ReviewStatus::reviewed;
  atlas.audit.push_back({next_seq(atlas), cluster_id, label, ReviewStatus::reviewed, rater, timestamp});
}

std::map<NerveGroup, std::size_t> group_counts(const Atlas& atlas) {
  std::map<NerveGroup, std::size_t> counts;
  for (NerveGroup g : kNerveGroups) counts[g] = 0;
  for (const auto& c : atlas.clusters) {
    if (is_nerve(c.label)) ++counts[nerve_group(c.label)];
  }
  return counts;
}

std::string format_group_counts(const std::map<NerveGroup, std::size_t>& counts) {
  std::string out;
  for (NerveGroup g : kNerveGroups) {
    const auto it = counts.find(g);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    if (!out.empty()) out += ", ";
    out += std::string(group_display_name(g)) + " (" + std::to_string(n) + (n == 1 ? " cluster)" : " clusters)");
  }
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cnatlas::atlas
