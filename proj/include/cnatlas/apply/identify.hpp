#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "cnatlas/atlas/atlas.hpp"
#include "cnatlas/registration/groupwise.hpp"

namespace cnatlas::apply {

struct ApplyConfig {
  registration::RegistrationConfig registration{};
  double min_length_mm = 20.0;
  std::size_t min_streamlines = 1;
  double low_confidence_kernel = spectral::kLowConfidenceKernel;
  bool outlier_removal = true;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Subject -> atlas affine, fitted against the atlas landmark fibers held
/// fixed. Throws EmptySubject when nothing survives the length filter.
AffineTransform register_subject_to_atlas(const Tractogram& subject, const atlas::Atlas& atlas,
                                          const ApplyConfig& cfg);

struct Assignment {
  std::int64_t cluster = -1;  // nearest centroid, -1 when low-confidence
  double score = 0.0;         // embedding similarity to that centroid
  bool low_confidence = false;
  bool kept = false;          // nearest cluster carries a nerve label
};

struct AssignmentResult {
  std::vector<Assignment> fibers;
  Eigen::MatrixXd coordinates;  // embedding rows, aligned with `fibers`
};

AssignmentResult assign_streamlines(const Tractogram& in_atlas_space, const atlas::Atlas& atlas,
                                    double low_confidence_kernel = spectral::kLowConfidenceKernel);

struct NerveBundle {
  Tractogram bundle;  // subject space, original ids
  std::size_t count = 0;
  bool identified = false;
};

struct IdentificationResult {
  std::map<ClusterLabel, NerveBundle> nerves;  // every nerve label
  AffineTransform subject_to_atlas;
  std::size_t considered = 0;       // fibers after the length filter
  std::size_t low_confidence = 0;
  std::size_t discarded = 0;        // nearest a rejected or unlabeled cluster
  std::size_t outliers_removed = 0;
};

/// register -> assign -> per-cluster outlier removal -> group by nerve.
/// Errors carry the failing stage name as a "[stage] " message prefix.
IdentificationResult identify(const Tractogram& subject, const atlas::Atlas& atlas, const ApplyConfig& cfg);

}  // namespace cnatlas::apply
