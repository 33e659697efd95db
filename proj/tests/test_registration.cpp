#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/registration/groupwise.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cnatlas;
using namespace cnatlas::registration;
using cnatlas::testing::line;

namespace {

Tractogram small_subject(Rng& rng, const std::string& id, std::size_t fibers) {
  Tractogram t;
  t.subject_id = id;
  for (std::size_t i = 0; i < fibers; ++i) {
    const Point3 a{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const Point3 b = a + Point3{rng.uniform(5, 20), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    t.streamlines.push_back(line(static_cast<std::int64_t>(i), a, b, 4));
  }
  return t;
}

/// Direct evaluation of the objective definition.
double brute_objective(const std::vector<Tractogram>& subjects, const std::vector<AffineTransform>& xs,
                       double sigma) {
  std::vector<Tractogram> moved;
  for (std::size_t s = 0; s < subjects.size(); ++s) moved.push_back(transform_tractogram(subjects[s], xs[s]));
  double total = 0.0;
  for (std::size_t s = 0; s < moved.size(); ++s) {
    for (const auto& f : moved[s].streamlines) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t o = 0; o < moved.size(); ++o) {
        if (o == s) continue;
        for (const auto& g : moved[o].streamlines) {
          const double d = fiber_distance(f, g, DistanceKind::pointwise_mean);
          sum += std::exp(-d * d / (sigma * sigma));
          ++count;
        }
      }
      total += -std::log(sum / static_cast<double>(count));
    }
  }
  return total;
}

AffineTransform random_affine(Rng& rng) {
  std::array<double, 12> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[static_cast<std::size_t>(4 * i + j)] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.1, 0.1);
    m[static_cast<std::size_t>(4 * i + 3)] = rng.uniform(-3, 3);
  }
  return AffineTransform(m);
}

RegistrationConfig quick_config(Dof dof) {
  RegistrationConfig c;
  c.dof = dof;
  c.fibers_per_subject = 60;
  c.sigma_schedule = {20.0, 10.0, 5.0};
  c.max_iters_per_level = 10;
  c.seed = 2;
  return c;
}

std::vector<Tractogram> perturbed_cohort(std::size_t n, std::uint64_t seed) {
  phantom::PhantomConfig pc = cnatlas::testing::aligned_phantom(seed);
  pc.max_rotation_deg = 5.0;
  pc.max_translation_mm = 4.0;
  pc.min_scale = 0.95;
  pc.max_scale = 1.05;
  pc.junk_fraction = 0.0;
  pc.min_fibers = 30;
  pc.max_fibers = 30;
  std::vector<Tractogram> out;
  for (auto& s : phantom::make_cohort(pc, n, true)) out.push_back(s.tractogram);
  return out;
}

}  // namespace

TEST(Objective, MatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tractogram> subjects;
    std::vector<AffineTransform> xs;
    const std::size_t S = 2 + rng.uniform_index(3);
    for (std::size_t s = 0; s < S; ++s) {
      subjects.push_back(small_subject(rng, "s" + std::to_string(s), 1 + rng.uniform_index(4)));
      xs.push_back(random_affine(rng));
    }
    const double sigma = rng.uniform(2.0, 20.0);
    const double expected = brute_objective(subjects, xs, sigma);
    EXPECT_NEAR(registration_objective(subjects, xs, sigma), expected, 1e-9 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Objective, HandComputedPair) {
  // One fiber each, 3 mm apart everywhere: each term is -log exp(-9/sigma^2).
  Tractogram a, b;
  a.streamlines = {line(0, {0, 0, 0}, {10, 0, 0}, 3)};
  b.streamlines = {line(0, {0, 3, 0}, {10, 3, 0}, 3)};
  const std::vector<Tractogram> s{a, b};
  const std::vector<AffineTransform> id(2);
  EXPECT_NEAR(registration_objective(s, id, 6.0), 2.0 * 9.0 / 36.0, 1e-14);
}

TEST(Objective, InvariantToSubjectAndFiberOrder) {
  Rng rng(6);
  std::vector<Tractogram> subjects;
  std::vector<AffineTransform> xs;
  for (int s = 0; s < 4; ++s) {
    subjects.push_back(small_subject(rng, "s" + std::to_string(s), 5));
    xs.push_back(random_affine(rng));
  }
  const double base = registration_objective(subjects, xs, 8.0);
  std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<Tractogram> ps;
  std::vector<AffineTransform> px;
  for (auto p : perm) {
    Tractogram t = subjects[p];
    std::reverse(t.streamlines.begin(), t.streamlines.end());
    ps.push_back(t);
    px.push_back(xs[p]);
  }
  EXPECT_NEAR(registration_objective(ps, px, 8.0), base, 1e-9 * std::abs(base));
}

TEST(Objective, TypedErrors) {
  Rng rng(7);
  const Tractogram a = small_subject(rng, "a", 3);
  Tractogram empty;
  empty.subject_id = "e";
  const std::vector<AffineTransform> id2(2);
  EXPECT_THROW(registration_objective(std::vector<Tractogram>{a}, std::vector<AffineTransform>(1), 5.0), Error);
  try {
    registration_objective(std::vector<Tractogram>{a, empty}, id2, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySubject);
  }
  Tractogram b = a;
  b.streamlines[0].points.push_back({1, 1, 1});
  try {
    registration_objective(std::vector<Tractogram>{a, b}, id2, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PointCountMismatch);
  }
}

TEST(Config, Validation) {
  RegistrationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sigma_schedule = {10.0, 10.0};
  EXPECT_THROW(c.validate(), Error);
  c = RegistrationConfig{};
  c.fibers_per_subject = 5;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_dof("rigid"), Dof::rigid);
  EXPECT_THROW(parse_dof("warp"), Error);
}

TEST(Groupwise, TraceIsMonotoneBetweenGaugeSteps) {
  const auto subjects = perturbed_cohort(3, 31);
  const auto r = groupwise_affine_register(subjects, quick_config(Dof::affine));
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& e = r.trace[i];
    if (!e.gauge) {
      EXPECT_LT(e.after, e.before);
    }
    if (i > 0 && r.trace[i - 1].level == e.level) {
      EXPECT_EQ(e.before, r.trace[i - 1].after);
    }
  }
  EXPECT_EQ(r.level_objectives.size(), 3u);
}

TEST(Groupwise, AffineGaugeHasZeroMeanLogDeterminant) {
  const auto r = groupwise_affine_register(perturbed_cohort(3, 32), quick_config(Dof::affine));
  EXPECT_NEAR(mean_log_determinant(r.transforms), 0.0, 1e-9);
}

TEST(Groupwise, RigidGaugeCentersTranslationsWithoutChangingObjective) {
  const auto r = groupwise_affine_register(perturbed_cohort(3, 33), quick_config(Dof::rigid));
  Point3 mean;
  for (const auto& x : r.transforms) mean = mean + x.translation_part() * (1.0 / 3.0);
  EXPECT_LT(std::abs(mean.x) + std::abs(mean.y) + std::abs(mean.z), 1e-9);
  for (const auto& e : r.trace) {
    if (e.gauge) {
      EXPECT_NEAR(e.after, e.before, 1e-9 * std::abs(e.before));
    }
  }
  for (const auto& x : r.transforms) EXPECT_NEAR(mean_log_determinant(std::vector<AffineTransform>{x}), 0.0, 1e-9);
}

TEST(Groupwise, DeterministicAcrossWorkerCounts) {
  const auto subjects = perturbed_cohort(3, 34);
  const auto cfg = quick_config(Dof::affine);
  const int prev = worker_count();
  set_worker_count(1);
  const auto a = groupwise_affine_register(subjects, cfg);
  set_worker_count(4);
  const auto b = groupwise_affine_register(subjects, cfg);
  set_worker_count(prev);
  ASSERT_EQ(a.transforms.size(), b.transforms.size());
  for (std::size_t s = 0; s < a.transforms.size(); ++s) EXPECT_EQ(a.transforms[s], b.transforms[s]);
  EXPECT_EQ(a.final_objective, b.final_objective);
}

TEST(Groupwise, ImprovesAlignment) {
  const auto subjects = perturbed_cohort(3, 35);
  const auto cfg = quick_config(Dof::affine);
  std::vector<Tractogram> resampled;
  for (const auto& s : subjects) resampled.push_back(resample_tractogram(s, cfg.points_per_fiber));
  const std::vector<AffineTransform> id(3);
  const auto r = groupwise_affine_register(subjects, cfg);
  EXPECT_LT(registration_objective(resampled, r.transforms, 5.0), registration_objective(resampled, id, 5.0));
}

TEST(ToReference, RecoversKnownPerturbation) {
  phantom::PhantomConfig pc = cnatlas::testing::aligned_phantom(40);
  pc.min_fibers = pc.max_fibers = 30;
  const Tractogram reference = phantom::make_subject(pc, 0, AffineTransform::identity()).tractogram;
  phantom::PhantomConfig moved = pc;
  moved.max_rotation_deg = 5.0;
  moved.max_translation_mm = 5.0;
  moved.min_scale = 0.95;
  moved.max_scale = 1.05;
  Rng rng(41);
  const AffineTransform x = phantom::random_perturbation(rng, moved, phantom::bundles_center());
  const phantom::PhantomSubject subject = phantom::make_subject(pc, 1, x);

  RegistrationConfig cfg;
  cfg.fibers_per_subject = 150;
  cfg.min_neighbors = 3;
  cfg.seed = 5;
  const auto r = register_to_reference(subject.tractogram, reference, cfg);
  ASSERT_EQ(r.transforms.size(), 2u);
  EXPECT_EQ(r.transforms[1], AffineTransform::identity());
  // Composite subject -> atlas map applied to subject-space truth.
  double err = 0.0;
  std::size_t count = 0;
  for (const auto& [label, bundle] : subject.truth) {
    for (const auto& f : bundle.streamlines) {
      for (const auto& q : f.points) {
        err += distance(r.transforms[0].apply(q), x.inverse().apply(q));
        ++count;
      }
    }
  }
  EXPECT_LT(err / static_cast<double>(count), 1.0);
}

TEST(Pooling, ConcatenateKeepsOrigins) {
  Rng rng(8);
  Tractogram a = small_subject(rng, "a", 2);
  Tractogram b = small_subject(rng, "b", 3);
  b.streamlines[0].id = 17;
  const auto pooled = concatenate_subjects(std::vector<Tractogram>{a, b});
  ASSERT_EQ(pooled.size(), 5u);
  for (std::size_t i = 0; i < pooled.size(); ++i) EXPECT_EQ(pooled.streamlines[i].id, static_cast<std::int64_t>(i));
  EXPECT_EQ(pooled.streamlines[2].origin.subject, "b");
  EXPECT_EQ(pooled.streamlines[2].origin.id, 17);
}
