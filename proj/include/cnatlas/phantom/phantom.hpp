#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnatlas/atlas/atlas.hpp"
#include "cnatlas/core/geometry.hpp"
#include "cnatlas/core/random.hpp"

namespace cnatlas::phantom {

/// Tube bundle around a quadratic Bezier centerline in atlas space.
struct BundleSpec {
  ClusterLabel label = ClusterLabel::unlabeled;
  std::array<Point3, 3> control{};
  double radius_mm = 2.0;

  Point3 at(double u) const;
  /// Centerline polyline with `n` points.
  std::vector<Point3> centerline(std::size_t n = 200) const;
};

/// Five curved, well-separated bundles labeled as cranial nerves.
std::vector<BundleSpec> phantom_bundles();

struct PhantomConfig {
  std::uint64_t seed = 0;
  std::size_t min_fibers = 50;
  std::size_t max_fibers = 200;
  double junk_fraction = 0.1;
  std::size_t points_per_fiber = 40;
  double max_rotation_deg = 10.0;
  double max_translation_mm = 10.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  std::vector<ClusterLabel> omit;  // bundles left out of every subject
};

struct PhantomSubject {
  Tractogram tractogram;  // subject space
  AffineTransform atlas_to_subject;
  std::map<ClusterLabel, Tractogram> truth;  // subject-space bundles by construction
  std::vector<std::int64_t> junk_ids;
};

/// Random rotation about a random axis, translation and per-axis scale, applied
/// about `center`.
AffineTransform random_perturbation(Rng& rng, const PhantomConfig& cfg, const Point3& center);

/// Fibers generated in atlas space, then mapped by `atlas_to_subject`.
PhantomSubject make_subject(const PhantomConfig& cfg, std::size_t index, const AffineTransform& atlas_to_subject);

/// `n` perturbed subjects. With `gauge_centered` the perturbations are
/// adjusted so their inverses average to the identity (scaled to unit mean
/// log-determinant), which puts the groupwise common space on the atlas frame.
std::vector<PhantomSubject> make_cohort(const PhantomConfig& cfg, std::size_t n, bool gauge_centered = true,
                                        std::size_t first_index = 0);

/// Centroid of all bundle centerlines.
Point3 bundles_center();

/// Binary ball of `radius_mm` on a local axis-aligned grid.
MaskVolume sphere_mask(const Point3& center, double radius_mm, double voxel_mm = 1.0);

/// Two ROI spheres per bundle at 25% and 75% of its centerline.
std::vector<atlas::NerveMasks> phantom_masks(double radius_mm = 5.0, double voxel_mm = 1.0);

/// Per-subject fiber id -> bundle label. Fibers absent from the map are junk.
using TruthLabels = std::map<std::string, std::map<std::int64_t, ClusterLabel>>;

TruthLabels truth_labels(std::span<const PhantomSubject> subjects);

/// Majority label of each cluster's members looked up by origin; junk votes
/// count as rejected and ties go to the earlier label in enum order.
std::vector<std::pair<std::int64_t, ClusterLabel>> construction_labels(const atlas::Atlas& atlas,
                                                                       const TruthLabels& truth);

}  // namespace cnatlas::phantom
