#include "cnatlas/spectral/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"

namespace cnatlas::spectral {
namespace {

using Geometry = std::vector<std::vector<Point3>>;

Geometry resample_all(const Tractogram& t, std::size_t p) {
  Geometry g(t.size());
  parallel_for(t.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) g[i] = resample_points(t.streamlines[i].points, p);
  });
  return g;
}

/// Kernel rows of `fibers` against `landmarks`: result is m x n.
Eigen::MatrixXd kernel_block(const Geometry& landmarks, const Geometry& fibers,
                             const AffinityParams& params) {
  const auto m = static_cast<Eigen::Index>(landmarks.size());
  Eigen::MatrixXd k(m, static_cast<Eigen::Index>(fibers.size()));
  parallel_for(fibers.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d = fiber_distance(landmarks[static_cast<std::size_t>(i)], fibers[j], params.kind);
        k(i, static_cast<Eigen::Index>(j)) = affinity(d, params);
      }
    }
  });
  return k;
}

void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-8) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

/// Shared between exact and Nystrom: `landmark_pos[i]` is the column of the
/// i-th landmark inside `geometry`.
SpectralEmbedding fit(const Tractogram& fibers, const Geometry& geometry,
                      const std::vector<std::size_t>& landmark_pos, const AffinityParams& params,
                      std::size_t t) {
  const std::size_t m = landmark_pos.size();
  const std::size_t n = geometry.size();
  if (t < 1) raise(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
  if (t >= m) raise(ErrorCode::InvalidArgument, "embedding dimension must be below the landmark count");

  SpectralEmbedding e;
  e.params = params;
  for (std::size_t pos : landmark_pos) {
    e.landmarks.push_back(geometry[pos]);
    e.landmark_ids.push_back(fibers.streamlines[pos].id);
  }

  const Eigen::MatrixXd k = kernel_block(e.landmarks, geometry, params);
  const auto mi = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd a(mi, mi);
  std::vector<std::uint8_t> is_landmark(n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    a.col(static_cast<Eigen::Index>(i)) = k.col(static_cast<Eigen::Index>(landmark_pos[i]));
    is_landmark[landmark_pos[i]] = 1;
  }
  a = 0.5 * (a + a.transpose());

  // Landmark-to-rest mass, folded through the pseudo-inverse of A.
  Eigen::VectorXd rest_mass = Eigen::VectorXd::Zero(mi);
  for (std::size_t j = 0; j < n; ++j) {
    if (!is_landmark[j]) rest_mass += k.col(static_cast<Eigen::Index>(j));
  }
  Eigen::VectorXd w = Eigen::VectorXd::Ones(mi);
  if (rest_mass.squaredNorm() > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) raise(ErrorCode::NumericalFailure, "landmark kernel eigensolver failed");
    const Eigen::VectorXd& lam = solver.eigenvalues();
    const double cutoff = 1e-10 * lam.cwiseAbs().maxCoeff();
    Eigen::VectorXd proj = solver.eigenvectors().transpose() * rest_mass;
    for (Eigen::Index i = 0; i < lam.size(); ++i) proj(i) = lam(i) > cutoff ? proj(i) / lam(i) : 0.0;
    w += solver.eigenvectors() * proj;
  }
  e.degree_weights = w;

  Eigen::VectorXd degree(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = k.col(static_cast<Eigen::Index>(j));
    degree(static_cast<Eigen::Index>(j)) = std::max(col.dot(w), col.sum());
  }
  e.landmark_degrees.resize(mi);
  for (std::size_t i = 0; i < m; ++i) {
    e.landmark_degrees(static_cast<Eigen::Index>(i)) = degree(static_cast<Eigen::Index>(landmark_pos[i]));
  }
  const Eigen::VectorXd inv_sqrt_dl = e.landmark_degrees.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd normalized = inv_sqrt_dl.asDiagonal() * a * inv_sqrt_dl.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized);
  if (solver.info() != Eigen::Success) raise(ErrorCode::NumericalFailure, "normalized kernel eigensolver failed");
  // Eigen returns ascending order.
  e.spectrum = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

  std::size_t kept = 0;
  while (kept < t && e.spectrum(static_cast<Eigen::Index>(kept + 1)) > kRankCollapseEigenvalue) ++kept;
  if (kept == 0) raise(ErrorCode::NumericalFailure, "normalized kernel has no usable eigenvectors");
  e.rank_reduced = kept < t;
  const auto ti = static_cast<Eigen::Index>(kept);
  e.eigenvalues = e.spectrum.segment(1, ti);
  e.basis = vectors.middleCols(1, ti);
  for (Eigen::Index c = 0; c < ti; ++c) canonicalize_sign(e.basis.col(c));

  e.coordinates.resize(static_cast<Eigen::Index>(n), ti);
  e.low_confidence.assign(n, 0);
  std::vector<std::ptrdiff_t> landmark_row(n, -1);
  for (std::size_t i = 0; i < m; ++i) landmark_row[landmark_pos[i]] = static_cast<std::ptrdiff_t>(i);
  parallel_for(n, [&](std::size_t b, std::size_t end) {
    for (std::size_t j = b; j < end; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      Eigen::RowVectorXd row;
      if (landmark_row[j] >= 0) {
        row = e.basis.row(landmark_row[j]).cwiseProduct(e.eigenvalues.transpose());
      } else {
        const Eigen::VectorXd an = k.col(jj).cwiseProduct(inv_sqrt_dl) / std::sqrt(degree(jj));
        row = an.transpose() * e.basis;
        if (k.col(jj).maxCoeff() < kLowConfidenceKernel) e.low_confidence[j] = 1;
      }
      const double norm = row.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        row = Eigen::RowVectorXd::Zero(ti);
        row(0) = 1.0;
        e.low_confidence[j] = 1;
      } else {
        row /= norm;
      }
      e.coordinates.row(jj) = row;
    }
  });
  e.fiber_ids.reserve(n);
  for (const auto& s : fibers.streamlines) e.fiber_ids.push_back(s.id);
  return e;
}

std::vector<std::size_t> order_by_id(const Tractogram& t) {
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return t.streamlines[a].id < t.streamlines[b].id;
  });
  return idx;
}

}  // namespace

void AffinityParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) raise(ErrorCode::InvalidArgument, "affinity sigma must be positive");
  if (points < 2) raise(ErrorCode::InvalidArgument, "affinity point count must be >= 2");
}

double affinity(double d_mm, const AffinityParams& params) {
  const double r = d_mm / params.sigma;
  return std::exp(-r * r);
}

SpectralEmbedding exact_embed(const Tractogram& fibers, const AffinityParams& params, std::size_t t,
                              std::size_t size_guard) {
  params.validate();
  if (fibers.size() > size_guard) {
    raise(ErrorCode::InvalidArgument, "exact embedding refused above " + std::to_string(size_guard) +
                                          " fibers; use the Nystrom embedding");
  }
  if (fibers.empty()) raise(ErrorCode::EmptyInput, "no fibers to embed");
  const Geometry g = resample_all(fibers, params.points);
  return fit(fibers, g, order_by_id(fibers), params, t);
}

SpectralEmbedding nystrom_embed(const Tractogram& fibers, std::size_t m, const AffinityParams& params,
                                std::size_t t, std::uint64_t seed) {
  params.validate();
  if (fibers.empty()) raise(ErrorCode::EmptyInput, "no fibers to embed");
  if (m > fibers.size()) raise(ErrorCode::InvalidArgument, "landmark count exceeds fiber count");
  const auto by_id = order_by_id(fibers);
  std::vector<std::size_t> pos;
  pos.reserve(m);
  for (std::size_t k : sample_indices(fibers.size(), m, seed)) pos.push_back(by_id[k]);
  const Geometry g = resample_all(fibers, params.points);
  return fit(fibers, g, pos, params, t);
}

NewFiberEmbedding embed_resampled(const SpectralEmbedding& e, const Geometry& fibers) {
  NewFiberEmbedding out;
  const auto n = static_cast<Eigen::Index>(fibers.size());
  const auto t = static_cast<Eigen::Index>(e.dimension());
  out.coordinates.resize(n, t);
  out.low_confidence.assign(fibers.size(), 0);
  out.max_kernel.assign(fibers.size(), 0.0);
  const Eigen::VectorXd inv_sqrt_dl = e.landmark_degrees.cwiseSqrt().cwiseInverse();
  parallel_for(fibers.size(), [&](std::size_t b, std::size_t end) {
    Eigen::VectorXd a(static_cast<Eigen::Index>(e.landmarks.size()));
    for (std::size_t j = b; j < end; ++j) {
      for (std::size_t i = 0; i < e.landmarks.size(); ++i) {
        a(static_cast<Eigen::Index>(i)) =
            affinity(fiber_distance(e.landmarks[i], fibers[j], e.params.kind), e.params);
      }
      const double degree = std::max(a.dot(e.degree_weights), a.sum());
      out.max_kernel[j] = a.size() ? a.maxCoeff() : 0.0;
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(t);
      if (degree > 0.0) row = (a.cwiseProduct(inv_sqrt_dl) / std::sqrt(degree)).transpose() * e.basis;
      const double norm = row.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        row = Eigen::RowVectorXd::Zero(t);
        row(0) = 1.0;
        out.low_confidence[j] = 1;
      } else {
        row /= norm;
      }
      if (out.max_kernel[j] < kLowConfidenceKernel) out.low_confidence[j] = 1;
      out.coordinates.row(static_cast<Eigen::Index>(j)) = row;
    }
  });
  return out;
}

NewFiberEmbedding embed_new_fibers(const SpectralEmbedding& e, const Tractogram& newcomers) {
  return embed_resampled(e, resample_all(newcomers, e.params.points));
}

}  // namespace cnatlas::spectral
