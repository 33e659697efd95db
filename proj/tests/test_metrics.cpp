#include <gtest/gtest.h>

#include <cmath>

#include "cnatlas/core/error.hpp"
#include "cnatlas/metrics/metrics.hpp"
#include "cnatlas/phantom/phantom.hpp"
#include "expect_error.hpp"
#include "support.hpp"

using namespace cnatlas;
using namespace cnatlas::metrics;
using cnatlas::testing::code_of;
using cnatlas::testing::line;

namespace {

VisitationMap map_on(const VoxelGrid& g, std::vector<std::uint32_t> counts) {
  VisitationMap m{g, std::move(counts), 0};
  for (auto c : m.counts) m.total += c;
  return m;
}

Tractogram of(std::vector<Streamline> s) {
  Tractogram t;
  t.streamlines = std::move(s);
  return t;
}

const ClusterLabel kII = ClusterLabel::CN_II_D;
const ClusterLabel kIII = ClusterLabel::CN_III_L;

}  // namespace

TEST(Visitation, CountsEachFiberOncePerVoxel) {
  const VoxelGrid g({10, 3, 3}, AffineTransform::identity());
  // Two fibers along x through voxel row y=1, z=1; the second doubles back.
  Streamline there_and_back = line(1, {0, 1, 1}, {9, 1, 1});
  for (int k = 8; k >= 0; --k) there_and_back.points.push_back({static_cast<double>(k), 1, 1});
  const auto m = voxelize_bundle(of({line(0, {0, 1, 1}, {9, 1, 1}), there_and_back}), g);
  EXPECT_EQ(m.total, 20u);
  EXPECT_EQ(m.support_size(), 10u);
  EXPECT_EQ(m.counts[g.voxel_count() / 2], 2u);  // voxel (5,1,1) lies in the row
  EXPECT_DOUBLE_EQ(m.weight(0), 0.0);
}

TEST(Visitation, GridCoversBundlesWithMargin) {
  const std::vector<Tractogram> b{of({line(0, {0, 0, 0}, {10, 0, 0})}), of({line(0, {0, 5, 5}, {1, 6, 7})})};
  const VoxelGrid g = grid_for(b, 1.0, 2.0);
  for (const auto& t : b) {
    for (const auto& s : t.streamlines) {
      for (const auto& p : s.points) EXPECT_TRUE(g.voxel_of(p).has_value());
    }
  }
  EXPECT_TRUE(g.voxel_of({-1.5, -1.5, -1.5}).has_value());
  EXPECT_FALSE(g.voxel_of({-3.5, 0, 0}).has_value());
  EXPECT_EQ(code_of([&] { grid_for(b, 0.0); }), ErrorCode::InvalidArgument);
}

TEST(Wdice, IdenticalDisjointHalf) {
  const VoxelGrid g({4, 1, 1}, AffineTransform::identity());
  const auto a = map_on(g, {3, 1, 0, 0});
  EXPECT_EQ(wdice(a, a), 1.0);
  EXPECT_EQ(wdice(a, map_on(g, {0, 0, 2, 5})), 0.0);
  EXPECT_NEAR(wdice(map_on(g, {1, 1, 0, 0}), map_on(g, {0, 1, 1, 0})), 0.5, 1e-12);
  EXPECT_EQ(wdice(map_on(g, {0, 0, 0, 0}), map_on(g, {0, 0, 0, 0})), 0.0);
  EXPECT_EQ(wdice(a, map_on(g, {0, 0, 0, 0})), 0.0);
}

TEST(Wdice, WeightedOracle) {
  // a weights {0.5, 0.25, 0.25, 0}, b weights {0, 0.5, 0, 0.5}; shared voxel 1.
  const VoxelGrid g({4, 1, 1}, AffineTransform::identity());
  EXPECT_NEAR(wdice(map_on(g, {2, 1, 1, 0}), map_on(g, {0, 3, 0, 3})), (0.25 + 0.5) / 2.0, 1e-15);
}

TEST(Wdice, SymmetricAndBounded) {
  Rng rng(9);
  const VoxelGrid g({5, 4, 3}, AffineTransform::identity());
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint32_t> x(g.voxel_count()), y(g.voxel_count());
    for (auto& c : x) c = static_cast<std::uint32_t>(rng.uniform_index(2) ? rng.uniform_index(9) : 0);
    for (auto& c : y) c = static_cast<std::uint32_t>(rng.uniform_index(2) ? rng.uniform_index(9) : 0);
    const auto a = map_on(g, x), b = map_on(g, y);
    const double ab = wdice(a, b);
    EXPECT_EQ(ab, wdice(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(Wdice, GridMismatch) {
  const auto a = map_on(VoxelGrid({4, 1, 1}, AffineTransform::identity()), {1, 0, 0, 0});
  const auto b = map_on(VoxelGrid({4, 1, 1}, AffineTransform::translation({1, 0, 0})), {1, 0, 0, 0});
  EXPECT_EQ(code_of([&] { wdice(a, b); }), ErrorCode::GridMismatch);
}

TEST(GroundTruth, RoiAndRoaSelection) {
  const Tractogram t = of({line(0, {0, 0, 0}, {20, 0, 0}, 21), line(1, {0, 0, 0}, {9, 0, 0}, 10),
                           line(2, {0, 30, 0}, {20, 30, 0}, 21)});
  const std::vector<MaskVolume> rois{phantom::sphere_mask({2, 0, 0}, 2.0), phantom::sphere_mask({18, 0, 0}, 2.0)};
  const auto sel = select_ground_truth(t, rois, {});
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel.streamlines[0].id, 0);
  const std::vector<MaskVolume> roas{phantom::sphere_mask({10, 0, 0}, 1.0)};
  EXPECT_TRUE(select_ground_truth(t, rois, roas).empty());
  EXPECT_EQ(code_of([&] { select_ground_truth(t, {}, {}); }), ErrorCode::InvalidConfig);
}

TEST(Tables, MeanStdFormatting) {
  const std::vector<double> v{0.6, 0.8, 1.0};
  const auto m = mean_std(v);
  EXPECT_NEAR(m.mean, 0.8, 1e-15);
  EXPECT_NEAR(m.std, 0.2, 1e-15);
  EXPECT_EQ(m.str(), "0.8000±0.2000");
  EXPECT_EQ(mean_std(std::vector<double>{0.7445}).str(), "0.7445±0.0000");
  EXPECT_EQ(mean_std(std::vector<double>{}).str(), "n/a");
}

TEST(Tables, StratifiedCounts) {
  std::vector<SubjectOutcome> o;
  for (int i = 0; i < 10; ++i) o.push_back({"u" + std::to_string(i), {{kII, i < 8}}, {{kII, false}}, {}});
  for (int i = 0; i < 5; ++i) o.push_back({"s" + std::to_string(i), {{kII, i != 0}}, {{kII, true}}, {{kII, 0.9}}});
  TableOptions opt;
  opt.dataset = "HCP";
  opt.columns = {kII};
  const auto rep = identification_table(o, opt);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].stratum, "HCP Successful subjects");
  EXPECT_EQ(rep.rows[0].automated.at(kII).str(), "4/5");
  EXPECT_EQ(rep.rows[0].manual.at(kII).str(), "5/5");
  EXPECT_EQ(rep.rows[1].automated.at(kII).str(), "8/10");
  EXPECT_EQ(rep.rows[1].manual.at(kII).str(), "0/10");
  EXPECT_EQ(rep.table1_text(),
            "Dataset                  CN II-D Auto.  CN II-D Manu.\n"
            "HCP Successful subjects  4/5            5/5\n"
            "Unsuccessful subjects    8/10           0/10\n");
  EXPECT_EQ(rep.table1_csv(),
            "stratum,label,auto,manual\n\"HCP Successful subjects\",CN_II_D,4/5,5/5\n"
            "\"Unsuccessful subjects\",CN_II_D,8/10,0/10\n");
}

TEST(Tables, UnstratifiedRow) {
  std::vector<SubjectOutcome> o{{"a", {{kII, true}}, {{kII, true}}, {}}, {"b", {{kII, false}}, {{kII, true}}, {}},
                                {"c", {}, {}, {}}};
  TableOptions opt;
  opt.dataset = "Patients";
  opt.columns = {kII};
  opt.stratified = false;
  const auto rep = identification_table(o, opt);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].stratum, "Patients (n=3)");
  EXPECT_EQ(rep.rows[0].automated.at(kII).str(), "1/3");
  EXPECT_EQ(rep.rows[0].manual.at(kII).str(), "2/3");
}

TEST(Tables, WdiceGroupsAndInclusion) {
  // Subject a: both nerves found; subject b: only CN III found manually.
  std::vector<SubjectOutcome> o{
      {"a", {}, {{kII, true}, {kIII, true}}, {{kII, 0.9}, {kIII, 0.7}}},
      {"b", {}, {{kII, false}, {kIII, true}}, {{kII, 0.1}, {kIII, 0.5}}},
  };
  TableOptions opt;
  opt.columns = {kII, kIII};
  const auto per = identification_table(o, opt);
  EXPECT_EQ(per.group_wdice.at(NerveGroup::CN_II).n, 1u);  // b's CN II wDice is ignored
  EXPECT_NEAR(per.group_wdice.at(NerveGroup::CN_III).mean, 0.6, 1e-15);
  EXPECT_NEAR(per.overall.mean, (0.8 + 0.5) / 2.0, 1e-15);
  EXPECT_EQ(per.group_wdice.at(NerveGroup::CN_V).str(), "n/a");

  opt.inclusion = WdiceInclusion::complete_subjects;
  const auto complete = identification_table(o, opt);
  EXPECT_EQ(complete.group_wdice.at(NerveGroup::CN_III).n, 1u);
  EXPECT_NEAR(complete.overall.mean, 0.8, 1e-15);
  EXPECT_EQ(complete.table2_csv(),
            "group,mean,std,n\nCN_II,0.9000,0.0000,1\nCN_III,0.7000,0.0000,1\nCN_V,,,0\nCN_VII_VIII,,,0\n"
            "all,0.8000,0.0000,1\n");
  EXPECT_NE(complete.table2_text().find("All CNs"), std::string::npos);
}

TEST(Tables, JoinedResultsArity) {
  std::vector<apply::IdentificationResult> results(2);
  results[0].nerves[kII].identified = true;
  std::vector<SubjectOutcome> truth{{"a", {}, {{kII, true}}, {}}, {"b", {}, {{kII, true}}, {}}};
  const auto rep = identification_table(results, truth, TableOptions{"X", {kII}, true, WdiceInclusion::per_nerve});
  EXPECT_EQ(rep.rows[0].automated.at(kII).str(), "1/2");
  EXPECT_EQ(code_of([&] { identification_table(std::span(results).first(1), truth); }), ErrorCode::ArityError);
}
