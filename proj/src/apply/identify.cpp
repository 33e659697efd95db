#include "cnatlas/apply/identify.hpp"

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/streamline_ops.hpp"

namespace cnatlas::apply {

void ApplyConfig::validate() const {
  registration.validate();
  if (!(min_length_mm >= 0.0)) raise(ErrorCode::InvalidConfig, "min_length_mm must be >= 0");
  if (min_streamlines < 1) raise(ErrorCode::InvalidConfig, "min_streamlines must be >= 1");
  if (!(low_confidence_kernel >= 0.0 && low_confidence_kernel < 1.0)) {
    raise(ErrorCode::InvalidConfig, "low_confidence_kernel must be in [0, 1)");
  }
}

AffineTransform register_subject_to_atlas(const Tractogram& subject, const atlas::Atlas& atlas,
                                          const ApplyConfig& cfg) {
  const Tractogram moving = filter_by_length(subject, cfg.min_length_mm);
  if (moving.empty()) {
    raise(ErrorCode::EmptySubject, "subject '" + subject.subject_id + "' has no fibers of at least " +
                                       std::to_string(cfg.min_length_mm) + " mm");
  }
  Tractogram reference;
  reference.subject_id = "atlas-landmarks";
  reference.space = SpaceTag::atlas;
  const auto& lm = atlas.embedding.landmarks;
  if (lm.empty()) raise(ErrorCode::EmptyInput, "atlas has no landmark fibers");
  for (std::size_t i = 0; i < lm.size(); ++i) reference.streamlines.push_back({static_cast<std::int64_t>(i), lm[i], {}});
  return registration::register_to_reference(moving, reference, cfg.registration).transforms.at(0);
}

AssignmentResult assign_streamlines(const Tractogram& fibers, const atlas::Atlas& atlas, double low_confidence_kernel) {
  AssignmentResult out;
  out.fibers.resize(fibers.size());
  if (fibers.empty()) return out;
  const spectral::NewFiberEmbedding e = spectral::embed_new_fibers(atlas.embedding, fibers);
  out.coordinates = e.coordinates;
  const auto& clusters = atlas.clusters;
  parallel_for(fibers.size(), [&](std::size_t b, std::size_t end) {
    for (std::size_t j = b; j < end; ++j) {
      Assignment& a = out.fibers[j];
      a.low_confidence = e.low_confidence[j] != 0 || e.max_kernel[j] < low_confidence_kernel;
      if (a.low_confidence) continue;
      const auto row = e.coordinates.row(static_cast<Eigen::Index>(j));
      std::size_t best = clusters.size();
      double best_sim = -2.0;
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (clusters[c].pruned || clusters[c].centroid.size() != row.size()) continue;
        const double s = row.dot(clusters[c].centroid);
        if (s > best_sim) {
          best_sim = s;
          best = c;
        }
      }
      if (best == clusters.size()) continue;
      a.cluster = clusters[best].id;
      a.score = best_sim;
      a.kept = is_nerve(clusters[best].label);
    }
  });
  return out;
}

IdentificationResult identify(const Tractogram& subject, const atlas::Atlas& atlas, const ApplyConfig& cfg) {
  IdentificationResult r;
  Tractogram filtered;
  try {
    cfg.validate();
    filtered = filter_by_length(subject, cfg.min_length_mm);
    r.considered = filtered.size();
  } catch (...) {
    rethrow_tagged("config");
  }
  try {
    r.subject_to_atlas = register_subject_to_atlas(filtered, atlas, cfg);
  } catch (...) {
    rethrow_tagged("registration");
  }
  AssignmentResult assigned;
  try {
    assigned = assign_streamlines(transform_tractogram(filtered, r.subject_to_atlas), atlas, cfg.low_confidence_kernel);
  } catch (...) {
    rethrow_tagged("assignment");
  }

  // Group kept fibers per winning cluster.
  std::map<std::int64_t, atlas::FiberCluster> groups;
  for (std::size_t j = 0; j < assigned.fibers.size(); ++j) {
    const Assignment& a = assigned.fibers[j];
    if (a.low_confidence) {
      ++r.low_confidence;
    } else if (!a.kept) {
      ++r.discarded;
    } else {
      auto& g = groups[a.cluster];
      g.id = a.cluster;
      g.label = atlas.find(a.cluster)->label;
      g.members.push_back(j);
    }
  }

  try {
    if (cfg.outlier_removal) {
      const atlas::AtlasStageConfig& params = atlas.stage2 ? *atlas.stage2 : atlas.stage1;
      for (auto& [id, g] : groups) {
        for (std::size_t pass = 0; pass < params.outlier_iterations; ++pass) {
          atlas::OutlierResult o = atlas::remove_outliers(g, assigned.coordinates, params.outlier_std);
          r.outliers_removed += o.removed.size();
          const bool changed = !o.removed.empty();
          g = std::move(o.cluster);
          if (!changed) break;
        }
      }
    }
  } catch (...) {
    rethrow_tagged("outlier-removal");
  }

  for (ClusterLabel nerve : kNerveLabels) {
    NerveBundle& nb = r.nerves[nerve];
    nb.bundle.subject_id = subject.subject_id;
    nb.bundle.space = SpaceTag::subject;
  }
  std::vector<std::vector<std::size_t>> per_nerve(kNerveLabels.size());
  for (const auto& [id, g] : groups) {
    for (std::size_t k = 0; k < kNerveLabels.size(); ++k) {
      if (kNerveLabels[k] == g.label) per_nerve[k].insert(per_nerve[k].end(), g.members.begin(), g.members.end());
    }
  }
  for (std::size_t k = 0; k < kNerveLabels.size(); ++k) {
    std::sort(per_nerve[k].begin(), per_nerve[k].end());
    NerveBundle& nb = r.nerves[kNerveLabels[k]];
    for (std::size_t j : per_nerve[k]) nb.bundle.streamlines.push_back(filtered.streamlines[j]);
    nb.count = nb.bundle.size();
    nb.identified = nb.count >= cfg.min_streamlines;
  }
  return r;
}

}  // namespace cnatlas::apply
