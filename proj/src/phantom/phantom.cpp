#include "cnatlas/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/registration/groupwise.hpp"

namespace cnatlas::phantom {
namespace {

Point3 cross(const Point3& a, const Point3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

Point3 unit(const Point3& v) { return v * (1.0 / v.norm()); }

Point3 random_unit(Rng& rng) {
  Point3 v{rng.normal(), rng.normal(), rng.normal()};
  while (v.norm() < 1e-9) v = {rng.normal(), rng.normal(), rng.normal()};
  return unit(v);
}

Streamline tube_fiber(const BundleSpec& b, Rng& rng, std::size_t points) {
  // Fixed cross-section offset, mild endpoint trimming and point jitter.
  const double r = b.radius_mm * std::sqrt(rng.uniform01());
  const double phi = 2.0 * std::numbers::pi * rng.uniform01();
  const double u0 = rng.uniform(0.0, 0.04);
  const double u1 = rng.uniform(0.96, 1.0);
  const Point3 tangent0 = unit(b.control[2] - b.control[0]);
  Point3 helper = std::abs(tangent0.z) < 0.9 ? Point3{0, 0, 1} : Point3{1, 0, 0};
  Streamline s;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = u0 + (u1 - u0) * static_cast<double>(i) / static_cast<double>(points - 1);
    const Point3 c = b.at(u);
    const Point3 d = (b.control[1] - b.control[0]) * (2.0 * (1.0 - u)) + (b.control[2] - b.control[1]) * (2.0 * u);
    const Point3 t = unit(d);
    const Point3 n = unit(cross(t, helper));
    const Point3 bn = cross(t, n);
    const Point3 jitter{rng.normal() * 0.1, rng.normal() * 0.1, rng.normal() * 0.1};
    s.points.push_back(c + n * (r * std::cos(phi)) + bn * (r * std::sin(phi)) + jitter);
  }
  if (rng.uniform01() < 0.5) std::reverse(s.points.begin(), s.points.end());
  return s;
}

/// Smooth random walk of 25-60 mm anywhere in the phantom volume.
Streamline junk_fiber(Rng& rng, std::size_t points) {
  const double length = rng.uniform(25.0, 60.0);
  Point3 p{rng.uniform(-55.0, 55.0), rng.uniform(-55.0, 55.0), rng.uniform(-55.0, 55.0)};
  Point3 dir = random_unit(rng);
  const double step = length / static_cast<double>(points - 1);
  Streamline s;
  for (std::size_t i = 0; i < points; ++i) {
    s.points.push_back(p);
    dir = unit(dir + random_unit(rng) * 0.15);
    p = p + dir * step;
  }
  return s;
}

AffineTransform mean_transform(const std::vector<AffineTransform>& xs) {
  std::array<double, 12> m{};
  for (const auto& x : xs) {
    for (std::size_t i = 0; i < 12; ++i) m[i] += x.row_major()[i] / static_cast<double>(xs.size());
  }
  return AffineTransform(m);
}

}  // namespace

Point3 BundleSpec::at(double u) const {
  const double a = (1.0 - u) * (1.0 - u);
  const double b = 2.0 * u * (1.0 - u);
  const double c = u * u;
  return control[0] * a + control[1] * b + control[2] * c;
}

std::vector<Point3> BundleSpec::centerline(std::size_t n) const {
  std::vector<Point3> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(at(static_cast<double>(i) / static_cast<double>(n - 1)));
  return out;
}

std::vector<BundleSpec> phantom_bundles() {
  return {
      {ClusterLabel::CN_II_D, {{{-25, 35, 10}, {0, 50, 22}, {25, 35, 10}}}, 2.0},
      {ClusterLabel::CN_III_L, {{{-35, 0, 22}, {-42, -10, 0}, {-30, -15, -22}}}, 2.0},
      {ClusterLabel::CN_III_R, {{{35, -2, 22}, {42, -12, 0}, {30, -17, -22}}}, 2.0},
      {ClusterLabel::CN_V_L, {{{-8, -18, 32}, {-2, -38, 12}, {-14, -48, -10}}}, 2.0},
      {ClusterLabel::CN_VII_VIII_L, {{{0, 18, -30}, {18, 2, -44}, {34, 12, -36}}}, 2.0},
  };
}

Point3 bundles_center() {
  Point3 sum;
  std::size_t n = 0;
  for (const auto& b : phantom_bundles()) {
    for (const auto& p : b.centerline()) {
      sum = sum + p;
      ++n;
    }
  }
  return sum * (1.0 / static_cast<double>(n));
}

AffineTransform random_perturbation(Rng& rng, const PhantomConfig& cfg, const Point3& center) {
  const Point3 axis = random_unit(rng);
  const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * std::numbers::pi / 180.0;
  const Point3 tdir = random_unit(rng);
  const double tmag = cfg.max_translation_mm * std::cbrt(rng.uniform01());
  const double sx = rng.uniform(cfg.min_scale, cfg.max_scale);
  const double sy = rng.uniform(cfg.min_scale, cfg.max_scale);
  const double sz = rng.uniform(cfg.min_scale, cfg.max_scale);
  const AffineTransform linear = AffineTransform::rotation(axis, angle) * AffineTransform::scaling(sx, sy, sz);
  return AffineTransform::translation(tdir * tmag) * AffineTransform::about(linear, center);
}

PhantomSubject make_subject(const PhantomConfig& cfg, std::size_t index, const AffineTransform& atlas_to_subject) {
  if (cfg.min_fibers < 1 || cfg.max_fibers < cfg.min_fibers) raise(ErrorCode::InvalidConfig, "bad phantom fiber range");
  if (cfg.points_per_fiber < 2) raise(ErrorCode::InvalidConfig, "phantom fibers need >= 2 points");
  Rng rng(mix_seed(cfg.seed, index));
  PhantomSubject out;
  char name[32];
  std::snprintf(name, sizeof name, "phantom_%02zu", index);
  out.tractogram.subject_id = name;
  out.atlas_to_subject = atlas_to_subject;

  std::size_t bundle_total = 0;
  std::int64_t next = 0;
  for (const auto& b : phantom_bundles()) {
    const std::size_t count = cfg.min_fibers + rng.uniform_index(cfg.max_fibers - cfg.min_fibers + 1);
    const bool omitted = std::find(cfg.omit.begin(), cfg.omit.end(), b.label) != cfg.omit.end();
    Tractogram& truth = out.truth[b.label];
    truth.subject_id = name;
    for (std::size_t f = 0; f < count; ++f) {
      Streamline s = tube_fiber(b, rng, cfg.points_per_fiber);
      if (omitted) continue;
      for (auto& p : s.points) p = atlas_to_subject.apply(p);
      s.id = next++;
      truth.streamlines.push_back(s);
      out.tractogram.streamlines.push_back(std::move(s));
      ++bundle_total;
    }
  }
  const auto junk = static_cast<std::size_t>(std::llround(cfg.junk_fraction * static_cast<double>(bundle_total)));
  for (std::size_t j = 0; j < junk; ++j) {
    Streamline s = junk_fiber(rng, cfg.points_per_fiber);
    for (auto& p : s.points) p = atlas_to_subject.apply(p);
    s.id = next++;
    out.junk_ids.push_back(s.id);
    out.tractogram.streamlines.push_back(std::move(s));
  }
  return out;
}

std::vector<PhantomSubject> make_cohort(const PhantomConfig& cfg, std::size_t n, bool gauge_centered,
                                        std::size_t first_index) {
  const Point3 center = bundles_center();
  std::vector<AffineTransform> to_subject;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(cfg.seed ^ 0x70657274ULL, first_index + i));
    to_subject.push_back(random_perturbation(rng, cfg, center));
  }
  if (gauge_centered && n > 0) {
    std::vector<AffineTransform> to_atlas;
    for (const auto& x : to_subject) to_atlas.push_back(x.inverse());
    const AffineTransform fix = mean_transform(to_atlas).inverse();
    for (auto& x : to_atlas) x = fix * x;
    const double c = std::exp(-registration::mean_log_determinant(to_atlas) / 3.0);
    const AffineTransform scale = AffineTransform::about(AffineTransform::scaling(c, c, c), center);
    for (std::size_t i = 0; i < n; ++i) to_subject[i] = (scale * to_atlas[i]).inverse();
  }
  std::vector<PhantomSubject> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_subject(cfg, first_index + i, to_subject[i]));
  return out;
}

MaskVolume sphere_mask(const Point3& center, double radius_mm, double voxel_mm) {
  if (!(radius_mm > 0.0) || !(voxel_mm > 0.0)) raise(ErrorCode::InvalidArgument, "sphere radius and voxel size must be positive");
  const Point3 r{radius_mm + voxel_mm, radius_mm + voxel_mm, radius_mm + voxel_mm};
  const VoxelGrid grid = VoxelGrid::covering(center - r, center + r, voxel_mm);
  std::vector<std::uint8_t> occ(grid.voxel_count(), 0);
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = distance(grid.voxel_center(i), center) <= radius_mm;
  return MaskVolume(grid.dims(), grid.voxel_to_world(), std::move(occ));
}

std::vector<atlas::NerveMasks> phantom_masks(double radius_mm, double voxel_mm) {
  std::vector<atlas::NerveMasks> out;
  for (const auto& b : phantom_bundles()) {
    atlas::NerveMasks m;
    m.nerve = b.label;
    m.rois.push_back(sphere_mask(b.at(0.25), radius_mm, voxel_mm));
    m.rois.push_back(sphere_mask(b.at(0.75), radius_mm, voxel_mm));
    out.push_back(std::move(m));
  }
  return out;
}

TruthLabels truth_labels(std::span<const PhantomSubject> subjects) {
  TruthLabels out;
  for (const auto& s : subjects) {
    auto& m = out[s.tractogram.subject_id];
    for (const auto& [label, bundle] : s.truth) {
      for (const auto& f : bundle.streamlines) m[f.id] = label;
    }
  }
  return out;
}

std::vector<std::pair<std::int64_t, ClusterLabel>> construction_labels(const atlas::Atlas& atlas,
                                                                       const TruthLabels& truth) {
  std::vector<std::pair<std::int64_t, ClusterLabel>> out;
  for (const auto& c : atlas.clusters) {
    std::map<ClusterLabel, std::size_t> votes;
    for (std::size_t m : c.members) {
      const FiberOrigin& o = atlas.fibers.streamlines[m].origin;
      ClusterLabel vote = ClusterLabel::rejected;
      if (auto s = truth.find(o.subject); s != truth.end()) {
        if (auto f = s->second.find(o.id); f != s->second.end()) vote = f->second;
      }
      ++votes[vote];
    }
    ClusterLabel best = ClusterLabel::rejected;
    std::size_t best_votes = 0;
    for (const auto& [label, n] : votes) {
      if (n > best_votes) {
        best = label;
        best_votes = n;
      }
    }
    out.emplace_back(c.id, best);
  }
  return out;
}

}  // namespace cnatlas::phantom
