#include "cnatlas/core/geometry.hpp"

#include <algorithm>
#include <unordered_set>

#include "cnatlas/core/error.hpp"

namespace cnatlas {

void validate_tractogram(const Tractogram& t) {
  std::unordered_set<std::int64_t> ids;
  ids.reserve(t.size());
  for (const auto& s : t.streamlines) {
    if (!ids.insert(s.id).second) {
      raise(ErrorCode::InvalidGeometry, "duplicate streamline id " + std::to_string(s.id));
    }
    if (s.points.size() < 2) {
      raise(ErrorCode::InvalidGeometry,
            "streamline " + std::to_string(s.id) + " has fewer than 2 points");
    }
    for (const auto& p : s.points) {
      if (!p.finite()) {
        raise(ErrorCode::InvalidGeometry,
              "streamline " + std::to_string(s.id) + " contains a non-finite point");
      }
    }
  }
}

AffineTransform::AffineTransform() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0} {}

AffineTransform::AffineTransform(const std::array<double, 12>& row_major) : m_(row_major) {}

AffineTransform AffineTransform::translation(const Point3& t) {
  return AffineTransform({1, 0, 0, t.x, 0, 1, 0, t.y, 0, 0, 1, t.z});
}

AffineTransform AffineTransform::scaling(double sx, double sy, double sz) {
  return AffineTransform({sx, 0, 0, 0, 0, sy, 0, 0, 0, 0, sz, 0});
}

AffineTransform AffineTransform::rotation(const Point3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  const Point3 u = axis * (1.0 / n);
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  const double C = 1.0 - c;
  return AffineTransform({c + u.x * u.x * C, u.x * u.y * C - u.z * s, u.x * u.z * C + u.y * s, 0,
                          u.y * u.x * C + u.z * s, c + u.y * u.y * C, u.y * u.z * C - u.x * s, 0,
                          u.z * u.x * C - u.y * s, u.z * u.y * C + u.x * s, c + u.z * u.z * C, 0});
}

AffineTransform AffineTransform::about(const AffineTransform& linear, const Point3& center) {
  return translation(center) * linear * translation(center * -1.0);
}

Point3 AffineTransform::apply(const Point3& p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2] * p.z + m_[3],
          m_[4] * p.x + m_[5] * p.y + m_[6] * p.z + m_[7],
          m_[8] * p.x + m_[9] * p.y + m_[10] * p.z + m_[11]};
}

Point3 AffineTransform::apply_linear(const Point3& v) const {
  return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z,
          m_[4] * v.x + m_[5] * v.y + m_[6] * v.z,
          m_[8] * v.x + m_[9] * v.y + m_[10] * v.z};
}

AffineTransform AffineTransform::operator*(const AffineTransform& o) const {
  std::array<double, 12> r{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += (*this)(i, k) * o(k, j);
      if (j == 3) v += (*this)(i, 3);
      r[i * 4 + j] = v;
    }
  }
  return AffineTransform(r);
}

double AffineTransform::linear_determinant() const {
  const auto& a = m_;
  return a[0] * (a[5] * a[10] - a[6] * a[9]) - a[1] * (a[4] * a[10] - a[6] * a[8]) +
         a[2] * (a[4] * a[9] - a[5] * a[8]);
}

bool AffineTransform::invertible() const {
  const double det = linear_determinant();
  return std::isfinite(det) && std::abs(det) > kSingularDeterminant;
}

AffineTransform AffineTransform::inverse() const {
  const double det = linear_determinant();
  if (!std::isfinite(det) || std::abs(det) <= kSingularDeterminant) {
    raise(ErrorCode::SingularTransform, "affine linear part is singular (det=" +
                                            std::to_string(det) + ")");
  }
  const auto& a = m_;
  const double inv = 1.0 / det;
  std::array<double, 12> r{};
  r[0] = (a[5] * a[10] - a[6] * a[9]) * inv;
  r[1] = (a[2] * a[9] - a[1] * a[10]) * inv;
  r[2] = (a[1] * a[6] - a[2] * a[5]) * inv;
  r[4] = (a[6] * a[8] - a[4] * a[10]) * inv;
  r[5] = (a[0] * a[10] - a[2] * a[8]) * inv;
  r[6] = (a[2] * a[4] - a[0] * a[6]) * inv;
  r[8] = (a[4] * a[9] - a[5] * a[8]) * inv;
  r[9] = (a[1] * a[8] - a[0] * a[9]) * inv;
  r[10] = (a[0] * a[5] - a[1] * a[4]) * inv;
  for (int i = 0; i < 3; ++i) {
    r[i * 4 + 3] = -(r[i * 4] * a[3] + r[i * 4 + 1] * a[7] + r[i * 4 + 2] * a[11]);
  }
  return AffineTransform(r);
}

double AffineTransform::max_abs_diff(const AffineTransform& o) const {
  double d = 0.0;
  for (std::size_t i = 0; i < m_.size(); ++i) d = std::max(d, std::abs(m_[i] - o.m_[i]));
  return d;
}

VoxelGrid::VoxelGrid(std::array<int, 3> dims, const AffineTransform& voxel_to_world)
    : dims_(dims), voxel_to_world_(voxel_to_world), world_to_voxel_(voxel_to_world.inverse()) {
  for (int d : dims_) {
    if (d <= 0) raise(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  }
}

VoxelGrid VoxelGrid::covering(const Point3& lo, const Point3& hi, double voxel_mm) {
  if (!(voxel_mm > 0.0)) raise(ErrorCode::InvalidArgument, "voxel size must be positive");
  std::array<int, 3> dims{};
  const double extent[3] = {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z};
  for (int i = 0; i < 3; ++i) {
    dims[i] = std::max(1, static_cast<int>(std::ceil(std::max(0.0, extent[i]) / voxel_mm)) + 1);
  }
  AffineTransform a({voxel_mm, 0, 0, lo.x, 0, voxel_mm, 0, lo.y, 0, 0, voxel_mm, lo.z});
  return VoxelGrid(dims, a);
}

std::size_t VoxelGrid::voxel_count() const {
  return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
}

std::optional<std::size_t> VoxelGrid::voxel_of(const Point3& p) const {
  const Point3 c = world_to_voxel_.apply(p);
  const double f[3] = {std::floor(c.x + 0.5), std::floor(c.y + 0.5), std::floor(c.z + 0.5)};
  for (int i = 0; i < 3; ++i) {
    if (!(f[i] >= 0.0) || f[i] >= static_cast<double>(dims_[i])) return std::nullopt;
  }
  const auto i = static_cast<std::size_t>(f[0]);
  const auto j = static_cast<std::size_t>(f[1]);
  const auto k = static_cast<std::size_t>(f[2]);
  return i + static_cast<std::size_t>(dims_[0]) * (j + static_cast<std::size_t>(dims_[1]) * k);
}

std::array<int, 3> VoxelGrid::unravel(std::size_t index) const {
  const auto nx = static_cast<std::size_t>(dims_[0]);
  const auto ny = static_cast<std::size_t>(dims_[1]);
  return {static_cast<int>(index % nx), static_cast<int>((index / nx) % ny),
          static_cast<int>(index / (nx * ny))};
}

Point3 VoxelGrid::voxel_center(std::size_t index) const {
  const auto ijk = unravel(index);
  return voxel_to_world_.apply({static_cast<double>(ijk[0]), static_cast<double>(ijk[1]),
                                static_cast<double>(ijk[2])});
}

std::array<double, 3> VoxelGrid::voxel_size() const {
  std::array<double, 3> s{};
  for (int c = 0; c < 3; ++c) {
    s[c] = std::sqrt(voxel_to_world_(0, c) * voxel_to_world_(0, c) +
                     voxel_to_world_(1, c) * voxel_to_world_(1, c) +
                     voxel_to_world_(2, c) * voxel_to_world_(2, c));
  }
  return s;
}

double VoxelGrid::min_voxel_edge() const {
  const auto s = voxel_size();
  return std::min({s[0], s[1], s[2]});
}

bool VoxelGrid::same_geometry(const VoxelGrid& o, double tol) const {
  return dims_ == o.dims_ && voxel_to_world_.max_abs_diff(o.voxel_to_world_) <= tol;
}

MaskVolume::MaskVolume(std::array<int, 3> dims, const AffineTransform& voxel_to_world,
                       std::vector<std::uint8_t> occupancy)
    : grid_(dims, voxel_to_world), data_(std::move(occupancy)) {
  if (data_.size() != grid_.voxel_count()) {
    raise(ErrorCode::InvalidArgument, "mask data length does not match dimensions");
  }
  for (auto& v : data_) v = v != 0 ? 1 : 0;
}

bool MaskVolume::contains(const Point3& world) const {
  const auto idx = grid_.voxel_of(world);
  return idx && data_[*idx] != 0;
}

std::size_t MaskVolume::occupied_count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

}  // namespace cnatlas
