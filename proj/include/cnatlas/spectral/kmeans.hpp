#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cnatlas/spectral/embedding.hpp"

namespace cnatlas::spectral {

inline constexpr std::size_t kKmeansMaxIterations = 300;

struct ClusteringResult {
  std::size_t k = 0;
  std::vector<int> labels;      // per row, in [0, k)
  Eigen::MatrixXd centroids;    // k x t, unit rows for non-empty clusters
  std::vector<double> scores;   // mean dot-product similarity to own-cluster members
  std::size_t iterations = 0;
  bool converged = false;
};

/// Spherical k-means on unit rows: k-means++ seeding, Lloyd iterations until
/// the assignment is a fixpoint or `max_iterations`. Empty clusters are
/// re-seeded with the point farthest from its centroid. Throws InvalidK when
/// k == 0 or k > rows.
ClusteringResult kmeans_embedding(const Eigen::MatrixXd& rows, std::size_t k, std::uint64_t seed,
                                  std::size_t max_iterations = kKmeansMaxIterations);
inline ClusteringResult kmeans_embedding(const SpectralEmbedding& e, std::size_t k, std::uint64_t seed) {
  return kmeans_embedding(e.coordinates, k, seed);
}

/// Normalized mean of the selected rows (zero vector if the mean vanishes).
Eigen::RowVectorXd normalized_mean(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& members);

/// Mean dot product of each member with the other members (1 for singletons).
std::vector<double> member_similarity(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& members);

}  // namespace cnatlas::spectral
