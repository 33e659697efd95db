#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cnatlas/core/geometry.hpp"

namespace cnatlas {

inline constexpr std::size_t kDefaultResamplePoints = 15;
/// Streamlines shorter than this are treated as degenerate at ingest.
inline constexpr double kDegenerateLengthMm = 1e-3;

enum class DistanceKind { pointwise_mean, mean_closest };

double streamline_length(std::span<const Point3> points);
inline double streamline_length(const Streamline& s) { return streamline_length(s.points); }

bool is_degenerate(const Streamline& s);

/// `p` points equally spaced by arc length; endpoints exact. Throws
/// DegenerateFiber for zero-length input, InvalidArgument for p < 2.
std::vector<Point3> resample_points(std::span<const Point3> points, std::size_t p);
Streamline resample_streamline(const Streamline& s, std::size_t p);
Tractogram resample_tractogram(const Tractogram& t, std::size_t p);

Tractogram filter_by_length(const Tractogram& t, double min_len_mm);

/// Mean of corresponding point distances, minimised over the two orderings of
/// `b`. Both spans must have equal length.
inline double pointwise_mean_distance(std::span<const Point3> a, std::span<const Point3> b) {
  const std::size_t n = a.size();
  double forward = 0.0;
  double backward = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    forward += distance(a[k], b[k]);
    backward += distance(a[k], b[n - 1 - k]);
  }
  return (forward < backward ? forward : backward) / static_cast<double>(n);
}
/// Average of the two directed mean-closest-point distances.
double mean_closest_distance(std::span<const Point3> a, std::span<const Point3> b);
/// Throws PointCountMismatch for pointwise_mean on unequal point counts.
double fiber_distance(std::span<const Point3> a, std::span<const Point3> b, DistanceKind kind);
inline double fiber_distance(const Streamline& a, const Streamline& b, DistanceKind kind) {
  return fiber_distance(a.points, b.points, kind);
}

/// Throws SingularTransform if `x` is not invertible.
Tractogram transform_tractogram(const Tractogram& t, const AffineTransform& x);

/// Uniform sample without replacement of min(n, |t|) streamlines, returned in
/// ascending id order. The result depends only on the id set and the seed.
Tractogram sample_tractogram(const Tractogram& t, std::size_t n, std::uint64_t seed);
/// Same selection rule on bare indices [0, count), ascending.
std::vector<std::size_t> sample_indices(std::size_t count, std::size_t n, std::uint64_t seed);

/// Vertices plus per-segment subdivision so that consecutive samples are at
/// most `step` apart.
std::vector<Point3> densify(std::span<const Point3> points, double step);
/// Samples at arc length 0, step, 2*step, ... plus the final endpoint. Unlike
/// densify() the result does not depend on how the curve is split into
/// segments.
std::vector<Point3> arc_length_samples(std::span<const Point3> points, double step);

/// True iff some sample of densify(s, step) lands in an occupied voxel. Throws
/// InvalidArgument if step <= 0.
bool streamline_passes_mask(const Streamline& s, const MaskVolume& m, double step);
/// Uses half the smallest voxel edge of `m` as the step.
bool streamline_passes_mask(const Streamline& s, const MaskVolume& m);

}  // namespace cnatlas
