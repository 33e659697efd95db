#include <gtest/gtest.h>

#include <set>
#include <string>

#include "cnatlas/apply/identify.hpp"
#include "cnatlas/core/error.hpp"
#include "cnatlas/phantom/phantom.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cnatlas;
using namespace cnatlas::apply;
using cnatlas::testing::code_of;

namespace {

const atlas::Atlas& labeled_atlas() {
  static const atlas::Atlas a = [] {
    atlas::Atlas out = cnatlas::testing::small_atlas();
    const auto cohort = cnatlas::testing::aligned_cohort();
    for (const auto& [id, label] : phantom::construction_labels(out, phantom::truth_labels(cohort))) {
      atlas::apply_label(out, id, label, "construction", atlas::kAutomaticTimestamp);
    }
    return out;
  }();
  return a;
}

phantom::PhantomSubject held_out() { return phantom::make_cohort(cnatlas::testing::aligned_phantom(), 1, false, 2)[0]; }

ApplyConfig quick_apply() {
  ApplyConfig c;
  c.registration.fibers_per_subject = 80;
  c.registration.min_neighbors = 3;
  c.registration.seed = 5;
  return c;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Identify, FindsPhantomBundlesInHeldOutSubject) {
  const auto subject = held_out();
  const auto r = identify(subject.tractogram, labeled_atlas(), quick_apply());
  ASSERT_EQ(r.nerves.size(), kNerveLabels.size());
  std::set<std::int64_t> ids;
  for (const auto& s : subject.tractogram.streamlines) ids.insert(s.id);
  for (const auto& [label, nb] : r.nerves) {
    const bool present = subject.truth.count(label) > 0 && !subject.truth.at(label).empty();
    EXPECT_EQ(nb.identified, present) << label_name(label);
    EXPECT_EQ(nb.count, nb.bundle.size());
    EXPECT_EQ(nb.bundle.space, SpaceTag::subject);
    for (const auto& f : nb.bundle.streamlines) EXPECT_TRUE(ids.count(f.id));
  }
  EXPECT_EQ(r.considered, filter_by_length(subject.tractogram, 20.0).size());
  std::size_t kept = 0;
  for (const auto& [label, nb] : r.nerves) kept += nb.count;
  EXPECT_EQ(kept + r.low_confidence + r.discarded + r.outliers_removed, r.considered);
  // Subject space equals atlas space here, so the fitted map should barely move points.
  double moved = 0.0;
  std::size_t points = 0;
  for (const auto& f : subject.tractogram.streamlines) {
    for (const auto& q : f.points) {
      moved += distance(r.subject_to_atlas.apply(q), q);
      ++points;
    }
  }
  EXPECT_LT(moved / static_cast<double>(points), 1.0);
}

TEST(Identify, MinStreamlinesGatesTheFlag) {
  auto cfg = quick_apply();
  cfg.min_streamlines = 100000;
  const auto r = identify(held_out().tractogram, labeled_atlas(), cfg);
  for (const auto& [label, nb] : r.nerves) EXPECT_FALSE(nb.identified);
}

TEST(Identify, ErrorsCarryStage) {
  Tractogram tiny;
  tiny.subject_id = "tiny";
  tiny.streamlines = {cnatlas::testing::line(0, {0, 0, 0}, {3, 0, 0})};
  const std::string msg = message_of([&] { identify(tiny, labeled_atlas(), quick_apply()); });
  EXPECT_EQ(msg.rfind("[registration] ", 0), 0u) << msg;
  EXPECT_EQ(code_of([&] { identify(tiny, labeled_atlas(), quick_apply()); }), ErrorCode::EmptySubject);

  auto bad = quick_apply();
  bad.min_streamlines = 0;
  const std::string cfg_msg = message_of([&] { identify(held_out().tractogram, labeled_atlas(), bad); });
  EXPECT_EQ(cfg_msg.rfind("[config] ", 0), 0u) << cfg_msg;
}

TEST(Assign, FarFibersAreLowConfidence) {
  Tractogram far;
  far.streamlines = {cnatlas::testing::line(0, {900, 900, 900}, {950, 900, 900})};
  const auto r = assign_streamlines(far, labeled_atlas());
  ASSERT_EQ(r.fibers.size(), 1u);
  EXPECT_TRUE(r.fibers[0].low_confidence);
  EXPECT_EQ(r.fibers[0].cluster, -1);
  EXPECT_FALSE(r.fibers[0].kept);
}

TEST(Assign, AtlasFibersLandInTheirCluster) {
  const atlas::Atlas& a = labeled_atlas();
  std::size_t agree = 0, total = 0;
  for (const auto& c : a.clusters) {
    if (c.pruned) continue;
    Tractogram t;
    for (std::size_t m : c.members) t.streamlines.push_back(a.fibers.streamlines[m]);
    const auto r = assign_streamlines(t, a);
    for (const auto& f : r.fibers) {
      agree += f.cluster == c.id;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.95);
}

TEST(ApplyConfig, Validation) {
  ApplyConfig c;
  EXPECT_NO_THROW(c.validate());
  c.low_confidence_kernel = 1.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidConfig);
}
