#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cnatlas/core/geometry.hpp"
#include "cnatlas/core/streamline_ops.hpp"

namespace cnatlas::spectral {

struct AffinityParams {
  double sigma = 30.0;  // kernel width, mm
  DistanceKind kind = DistanceKind::pointwise_mean;
  std::size_t points = kDefaultResamplePoints;

  void validate() const;
};

/// exp(-d^2 / sigma^2).
double affinity(double d_mm, const AffinityParams& params);

inline constexpr std::size_t kExactSizeGuard = 5000;
inline constexpr std::size_t kDefaultEmbeddingDim = 10;
/// A fiber whose largest kernel value against the landmarks is below this is
/// flagged low-confidence.
inline constexpr double kLowConfidenceKernel = 1e-6;
inline constexpr double kRankCollapseEigenvalue = 1e-12;

/// Normalized-cuts embedding backed by a landmark factorization that can embed
/// fibers it has not seen.
struct SpectralEmbedding {
  AffinityParams params;

  /// Landmark fibers, resampled to params.points, in ascending id order.
  std::vector<std::vector<Point3>> landmarks;
  std::vector<std::int64_t> landmark_ids;

  /// Full spectrum of the normalized landmark kernel, descending.
  Eigen::VectorXd spectrum;
  /// Eigenvalues 2..t+1 and the matching eigenvectors (m x t), sign-canonical.
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd basis;
  /// Degree estimate of any fiber with kernel row a is max(a.w, a.1), where
  /// w = 1 + A^+ (B 1) folds in the non-landmark mass.
  Eigen::VectorXd degree_weights;
  Eigen::VectorXd landmark_degrees;
  bool rank_reduced = false;

  /// Unit rows for the fibers the embedding was fitted on, in input order.
  Eigen::MatrixXd coordinates;
  std::vector<std::int64_t> fiber_ids;
  std::vector<std::uint8_t> low_confidence;

  std::size_t dimension() const { return static_cast<std::size_t>(basis.cols()); }
  std::size_t landmark_count() const { return landmarks.size(); }
};

struct NewFiberEmbedding {
  Eigen::MatrixXd coordinates;  // unit rows
  std::vector<std::uint8_t> low_confidence;
  std::vector<double> max_kernel;
};

/// Full-affinity embedding. Throws InvalidArgument above `size_guard` fibers
/// or when t >= |fibers|.
SpectralEmbedding exact_embed(const Tractogram& fibers, const AffinityParams& params,
                              std::size_t t = kDefaultEmbeddingDim,
                              std::size_t size_guard = kExactSizeGuard);

/// One-shot Nystrom embedding with `m` seeded uniform landmarks. With
/// m == |fibers| it reduces to exact_embed.
SpectralEmbedding nystrom_embed(const Tractogram& fibers, std::size_t m, const AffinityParams& params,
                                std::size_t t, std::uint64_t seed);

/// Nystrom extension of `newcomers` through the stored factorization.
NewFiberEmbedding embed_new_fibers(const SpectralEmbedding& e, const Tractogram& newcomers);
NewFiberEmbedding embed_resampled(const SpectralEmbedding& e,
                                  const std::vector<std::vector<Point3>>& resampled);

}  // namespace cnatlas::spectral
