#pragma once

#include <algorithm>
#include <vector>

#include "cnatlas/atlas/atlas.hpp"
#include "cnatlas/phantom/phantom.hpp"
#include "cnatlas/spectral/embedding.hpp"
#include "cnatlas/spectral/kmeans.hpp"

namespace cnatlas::testing {

/// Unperturbed phantom subjects (subject space equals atlas space).
inline phantom::PhantomConfig aligned_phantom(std::uint64_t seed = 21) {
  phantom::PhantomConfig pc;
  pc.seed = seed;
  pc.max_rotation_deg = 0.0;
  pc.max_translation_mm = 0.0;
  pc.min_scale = 1.0;
  pc.max_scale = 1.0;
  pc.min_fibers = 40;
  pc.max_fibers = 60;
  return pc;
}

inline std::vector<phantom::PhantomSubject> aligned_cohort(std::size_t n = 2, std::uint64_t seed = 21) {
  return phantom::make_cohort(aligned_phantom(seed), n, false);
}

inline atlas::AtlasStageConfig small_stage1(std::uint64_t seed = 3) {
  atlas::AtlasStageConfig c;
  c.k = 12;
  c.sample_per_subject = 150;
  c.affinity.sigma = 10.0;
  c.landmarks = 150;
  c.seed = seed;
  return c;
}

/// Small stage-1 atlas over two aligned phantom subjects.
inline const atlas::Atlas& small_atlas() {
  static const atlas::Atlas a = [] {
    std::vector<Tractogram> subjects;
    for (auto& s : aligned_cohort()) {
      s.tractogram.space = SpaceTag::atlas;
      subjects.push_back(s.tractogram);
    }
    return atlas::build_stage1(subjects, small_stage1());
  }();
  return a;
}

/// `per_bundle` fibers from each of four phantom bundles, no junk, atlas space.
inline Tractogram four_bundles(std::size_t per_bundle, std::uint64_t seed) {
  phantom::PhantomConfig pc = aligned_phantom(seed);
  pc.min_fibers = per_bundle;
  pc.max_fibers = per_bundle;
  pc.junk_fraction = 0.0;
  pc.omit = {ClusterLabel::CN_VII_VIII_L};
  return phantom::make_subject(pc, 0, AffineTransform::identity()).tractogram;
}

/// Best agreement between two labelings over all label permutations (k <= 6).
inline double matched_agreement(const std::vector<int>& a, const std::vector<int>& b, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::size_t best = 0;
  do {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += perm[static_cast<std::size_t>(a[i])] == b[i] ? 1 : 0;
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

/// Coherent 100-fiber cluster plus 3 copies of its fibers displaced 30 mm,
/// embedded with three other bundles for context.
struct OutlierFixture {
  Eigen::MatrixXd coordinates;
  atlas::FiberCluster cluster;
  std::vector<std::size_t> displaced;  // member indices of the displaced copies
};

inline OutlierFixture outlier_fixture(std::uint64_t seed = 12) {
  Tractogram t = four_bundles(100, seed);
  OutlierFixture f;
  const AffineTransform up = AffineTransform::translation({0.0, 0.0, 30.0});
  for (std::size_t i = 0; i < 3; ++i) {
    Streamline s = t.streamlines[i * 7];
    for (auto& q : s.points) q = up.apply(q);
    s.id = static_cast<std::int64_t>(t.size());
    f.displaced.push_back(t.size());
    t.streamlines.push_back(std::move(s));
  }
  spectral::AffinityParams p;
  p.sigma = 10.0;
  f.coordinates = spectral::exact_embed(t, p, 4).coordinates;
  for (std::size_t i = 0; i < 100; ++i) f.cluster.members.push_back(i);
  for (std::size_t i : f.displaced) f.cluster.members.push_back(i);
  f.cluster.centroid = spectral::normalized_mean(f.coordinates, f.cluster.members);
  return f;
}

}  // namespace cnatlas::testing
