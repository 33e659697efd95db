#include "cnatlas/core/streamline_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/random.hpp"

namespace cnatlas {

double streamline_length(std::span<const Point3> points) {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) len += distance(points[i - 1], points[i]);
  return len;
}

bool is_degenerate(const Streamline& s) {
  return s.points.size() < 2 || streamline_length(s) < kDegenerateLengthMm;
}

std::vector<Point3> resample_points(std::span<const Point3> points, std::size_t p) {
  if (p < 2) raise(ErrorCode::InvalidArgument, "resample point count must be >= 2");
  if (points.size() < 2) raise(ErrorCode::DegenerateFiber, "streamline has fewer than 2 points");
  std::vector<double> cumulative(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i) {
    cumulative[i] = cumulative[i - 1] + distance(points[i - 1], points[i]);
  }
  const double total = cumulative.back();
  if (!(total > 0.0)) raise(ErrorCode::DegenerateFiber, "streamline has zero length");

  std::vector<Point3> out;
  out.reserve(p);
  out.push_back(points.front());
  std::size_t seg = 1;
  for (std::size_t k = 1; k + 1 < p; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(p - 1);
    while (seg + 1 < points.size() && cumulative[seg] < target) ++seg;
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double f = seg_len > 0.0 ? (target - cumulative[seg - 1]) / seg_len : 0.0;
    out.push_back(points[seg - 1] + (points[seg] - points[seg - 1]) * std::clamp(f, 0.0, 1.0));
  }
  out.push_back(points.back());
  return out;
}

Streamline resample_streamline(const Streamline& s, std::size_t p) {
  Streamline r;
  r.id = s.id;
  r.origin = s.origin;
  r.points = resample_points(s.points, p);
  return r;
}

Tractogram resample_tractogram(const Tractogram& t, std::size_t p) {
  Tractogram out;
  out.subject_id = t.subject_id;
  out.space = t.space;
  out.streamlines.reserve(t.size());
  for (const auto& s : t.streamlines) out.streamlines.push_back(resample_streamline(s, p));
  return out;
}

Tractogram filter_by_length(const Tractogram& t, double min_len_mm) {
  if (!(min_len_mm >= 0.0)) raise(ErrorCode::InvalidArgument, "min length must be >= 0");
  Tractogram out;
  out.subject_id = t.subject_id;
  out.space = t.space;
  for (const auto& s : t.streamlines) {
    if (streamline_length(s) >= min_len_mm) out.streamlines.push_back(s);
  }
  return out;
}

namespace {

double directed_mean_closest(std::span<const Point3> from, std::span<const Point3> to) {
  double sum = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, (p - q).dot(p - q));
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double mean_closest_distance(std::span<const Point3> a, std::span<const Point3> b) {
  // Point-set distance; reversing either fiber leaves it unchanged.
  return 0.5 * (directed_mean_closest(a, b) + directed_mean_closest(b, a));
}

double fiber_distance(std::span<const Point3> a, std::span<const Point3> b, DistanceKind kind) {
  if (a.empty() || b.empty()) raise(ErrorCode::InvalidGeometry, "empty streamline");
  if (kind == DistanceKind::pointwise_mean) {
    if (a.size() != b.size()) {
      raise(ErrorCode::PointCountMismatch,
            "pointwise_mean needs equal point counts (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
    }
    return pointwise_mean_distance(a, b);
  }
  return mean_closest_distance(a, b);
}

Tractogram transform_tractogram(const Tractogram& t, const AffineTransform& x) {
  if (!x.invertible()) raise(ErrorCode::SingularTransform, "transform is not invertible");
  Tractogram out = t;
  for (auto& s : out.streamlines) {
    for (auto& p : s.points) p = x.apply(p);
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t count, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n >= count) return idx;
  // Partial Fisher-Yates.
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(count - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tractogram sample_tractogram(const Tractogram& t, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> by_id(t.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
    return t.streamlines[a].id < t.streamlines[b].id;
  });
  Tractogram out;
  out.subject_id = t.subject_id;
  out.space = t.space;
  for (std::size_t k : sample_indices(t.size(), n, seed)) {
    out.streamlines.push_back(t.streamlines[by_id[k]]);
  }
  return out;
}

std::vector<Point3> densify(std::span<const Point3> points, double step) {
  if (!(step > 0.0)) raise(ErrorCode::InvalidArgument, "sampling step must be positive");
  std::vector<Point3> out;
  if (points.empty()) return out;
  out.push_back(points.front());
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Point3 a = points[i - 1];
    const Point3 d = points[i] - a;
    const double len = d.norm();
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / step)));
    for (std::size_t k = 1; k < pieces; ++k) {
      out.push_back(a + d * (static_cast<double>(k) / static_cast<double>(pieces)));
    }
    out.push_back(points[i]);
  }
  return out;
}

std::vector<Point3> arc_length_samples(std::span<const Point3> points, double step) {
  if (!(step > 0.0)) raise(ErrorCode::InvalidArgument, "sampling step must be positive");
  std::vector<Point3> out;
  if (points.empty()) return out;
  out.push_back(points.front());
  double next = step;  // arc length of the next sample
  double walked = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Point3 a = points[i - 1];
    const Point3 d = points[i] - a;
    const double len = d.norm();
    while (len > 0.0 && next <= walked + len) {
      out.push_back(a + d * ((next - walked) / len));
      next += step;
    }
    walked += len;
  }
  out.push_back(points.back());
  return out;
}

bool streamline_passes_mask(const Streamline& s, const MaskVolume& m, double step) {
  if (!(step > 0.0)) raise(ErrorCode::InvalidArgument, "sampling step must be positive");
  if (s.points.empty()) return false;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (m.contains(s.points[i])) return true;
    if (i + 1 == s.points.size()) break;
    const Point3 a = s.points[i];
    const Point3 d = s.points[i + 1] - a;
    const double len = d.norm();
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / step)));
    for (std::size_t k = 1; k < pieces; ++k) {
      if (m.contains(a + d * (static_cast<double>(k) / static_cast<double>(pieces)))) return true;
    }
  }
  return false;
}

bool streamline_passes_mask(const Streamline& s, const MaskVolume& m) {
  return streamline_passes_mask(s, m, 0.5 * m.grid().min_voxel_edge());
}

}  // namespace cnatlas
