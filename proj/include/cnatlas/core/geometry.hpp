#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cnatlas {

/// World-space point in millimeters, scanner RAS.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr bool operator==(const Point3&) const = default;

  constexpr double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

/// Where a fiber came from before pooling: subject id and the fiber id inside
/// that subject's tractogram. Empty subject means "this tractogram is the source".
struct FiberOrigin {
  std::string subject;
  std::int64_t id = -1;

  bool operator==(const FiberOrigin&) const = default;
};

struct Streamline {
  std::int64_t id = 0;
  std::vector<Point3> points;
  FiberOrigin origin;
};

enum class SpaceTag { subject, atlas };

struct Tractogram {
  std::string subject_id;
  SpaceTag space = SpaceTag::subject;
  std::vector<Streamline> streamlines;

  std::size_t size() const { return streamlines.size(); }
  bool empty() const { return streamlines.empty(); }
};

/// Checks id uniqueness and the point invariants (>= 2 points, all finite).
/// Throws InvalidGeometry on violation.
void validate_tractogram(const Tractogram& t);

/// 3x4 affine map x -> L x + t, stored row-major.
class AffineTransform {
 public:
  AffineTransform();
  explicit AffineTransform(const std::array<double, 12>& row_major);

  static AffineTransform identity() { return AffineTransform(); }
  static AffineTransform translation(const Point3& t);
  static AffineTransform scaling(double sx, double sy, double sz);
  /// Rotation by `angle_rad` about the unit `axis` (Rodrigues).
  static AffineTransform rotation(const Point3& axis, double angle_rad);
  /// `linear` applied about `center`: x -> center + L (x - center).
  static AffineTransform about(const AffineTransform& linear, const Point3& center);

  Point3 apply(const Point3& p) const;
  Point3 apply_linear(const Point3& v) const;

  /// this ∘ other: first `other`, then `this`.
  AffineTransform operator*(const AffineTransform& other) const;

  double linear_determinant() const;
  bool invertible() const;
  /// Throws SingularTransform when |det L| <= 1e-8.
  AffineTransform inverse() const;

  double operator()(int row, int col) const { return m_[row * 4 + col]; }
  double& operator()(int row, int col) { return m_[row * 4 + col]; }
  const std::array<double, 12>& row_major() const { return m_; }
  Point3 translation_part() const { return {m_[3], m_[7], m_[11]}; }

  double max_abs_diff(const AffineTransform& o) const;
  bool operator==(const AffineTransform&) const = default;

 private:
  std::array<double, 12> m_;
};

inline constexpr double kSingularDeterminant = 1e-8;

/// Regular voxel lattice with a voxel-to-world affine. Voxel (i, j, k) covers
/// the continuous index box [i-0.5, i+0.5) x ... around its center.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(std::array<int, 3> dims, const AffineTransform& voxel_to_world);

  /// Axis-aligned grid at isotropic `voxel_mm` covering [lo, hi] with voxel
  /// centers starting at `lo`.
  static VoxelGrid covering(const Point3& lo, const Point3& hi, double voxel_mm);

  const std::array<int, 3>& dims() const { return dims_; }
  const AffineTransform& voxel_to_world() const { return voxel_to_world_; }
  const AffineTransform& world_to_voxel() const { return world_to_voxel_; }
  std::size_t voxel_count() const;

  /// Linear index of the voxel containing `p`, or nullopt outside the grid.
  std::optional<std::size_t> voxel_of(const Point3& p) const;
  std::array<int, 3> unravel(std::size_t index) const;
  Point3 voxel_center(std::size_t index) const;
  /// Length of each voxel edge in mm (column norms of the linear part).
  std::array<double, 3> voxel_size() const;
  double min_voxel_edge() const;

  bool same_geometry(const VoxelGrid& o, double tol = 1e-9) const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  AffineTransform voxel_to_world_;
  AffineTransform world_to_voxel_;
};

/// Binary ROI/ROA volume.
class MaskVolume {
 public:
  MaskVolume() = default;
  /// Throws InvalidArgument if `occupancy.size()` differs from the voxel count
  /// and SingularTransform if the affine is not invertible.
  MaskVolume(std::array<int, 3> dims, const AffineTransform& voxel_to_world,
             std::vector<std::uint8_t> occupancy);

  const VoxelGrid& grid() const { return grid_; }
  const std::array<int, 3>& dims() const { return grid_.dims(); }
  const AffineTransform& voxel_to_world() const { return grid_.voxel_to_world(); }
  std::span<const std::uint8_t> data() const { return data_; }

  bool occupied(std::size_t index) const { return data_[index] != 0; }
  bool contains(const Point3& world) const;
  std::size_t occupied_count() const;

 private:
  VoxelGrid grid_;
  std::vector<std::uint8_t> data_;
};

}  // namespace cnatlas
