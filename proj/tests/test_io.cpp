#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/atlas_store.hpp"
#include "cnatlas/io/bytes.hpp"
#include "cnatlas/io/matrix_blob.hpp"
#include "cnatlas/io/nifti.hpp"
#include "cnatlas/io/tck.hpp"
#include "cnatlas/io/vtk.hpp"
#include "cnatlas/phantom/phantom.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cnatlas;
using cnatlas::testing::TempDir;
using cnatlas::testing::code_of;

namespace {

void append_f32(std::string& s, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

std::string hand_tck(const std::vector<std::vector<Point3>>& fibers, bool terminator = true) {
  std::string header = "mrtrix tracks\ndatatype: Float32LE\nfile: . 64\ncount: " + std::to_string(fibers.size()) + "\n";
  header += "END\n";
  header.resize(64, ' ');
  for (const auto& f : fibers) {
    for (const auto& p : f) {
      append_f32(header, static_cast<float>(p.x));
      append_f32(header, static_cast<float>(p.y));
      append_f32(header, static_cast<float>(p.z));
    }
    for (int i = 0; i < 3; ++i) append_f32(header, std::numeric_limits<float>::quiet_NaN());
  }
  if (terminator) {
    for (int i = 0; i < 3; ++i) append_f32(header, std::numeric_limits<float>::infinity());
  }
  return header;
}

}  // namespace

TEST(Tck, ParsesHandWrittenFile) {
  const auto bytes = hand_tck({{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{5, 5, 5}, {5, 6, 5}}});
  const Tractogram t = io::parse_tck(bytes);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.streamlines[0].points.size(), 3u);
  EXPECT_EQ(t.streamlines[1].points[1], (Point3{5, 6, 5}));
  EXPECT_EQ(t.streamlines[1].id, 1);
}

TEST(Tck, DegenerateStreamlinesSkippedKeepingIds) {
  const auto bytes = hand_tck({{{0, 0, 0}, {1, 0, 0}}, {{3, 3, 3}}, {{0, 0, 0}, {0, 0, 2}}});
  const Tractogram t = io::parse_tck(bytes);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.streamlines[0].id, 0);
  EXPECT_EQ(t.streamlines[1].id, 2);
}

TEST(Tck, TypedHeaderErrors) {
  EXPECT_EQ(code_of([] { io::parse_tck("hello\nEND\n"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { io::parse_tck("mrtrix tracks\ndatatype: Float32LE\nfile: . 40\n"); }), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of([] { io::parse_tck("mrtrix tracks\ndatatype: Float64BE\nfile: . 44\nEND\n"); }),
            ErrorCode::UnsupportedDatatype);
  EXPECT_EQ(code_of([] { io::parse_tck("mrtrix tracks\ndatatype: Float32LE\nfile: other.dat 0\nEND\n"); }),
            ErrorCode::UnsupportedVariant);
  EXPECT_EQ(code_of([] { io::parse_tck(hand_tck({{{0, 0, 0}, {1, 1, 1}}}, false)); }), ErrorCode::TruncatedFile);
}

TEST(Tck, RoundTripByteIdentical) {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    Tractogram t = cnatlas::testing::random_tractogram(rng);
    t.subject_id = "s" + std::to_string(trial);
    const std::string first = io::encode_tck(t);
    const Tractogram back = io::parse_tck(first);
    EXPECT_EQ(back.subject_id, t.subject_id);
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back.streamlines[i].points, t.streamlines[i].points);
    EXPECT_EQ(io::encode_tck(back), first);
  }
}

TEST(Tck, RejectsNonFiniteOnWrite) {
  Tractogram t;
  t.streamlines = {cnatlas::testing::line(0, {0, 0, 0}, {1, 0, 0})};
  t.streamlines[0].points[2].x = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { io::encode_tck(t); }), ErrorCode::InvalidGeometry);
}

TEST(Tck, MutatedHeadersGiveTypedErrors) {
  Rng rng(7);
  const Tractogram t = cnatlas::testing::random_tractogram(rng, 5, 10);
  const std::string good = io::encode_tck(t);
  const std::size_t header_len = good.find("END\n") + 4;
  for (int trial = 0; trial < 500; ++trial) {
    std::string bad = good;
    const std::size_t at = rng.uniform_index(header_len);
    switch (rng.uniform_index(3)) {
      case 0: bad[at] = static_cast<char>(rng.uniform_index(256)); break;
      case 1: bad.erase(at, 1 + rng.uniform_index(8)); break;
      default: bad.resize(at); break;
    }
    try {
      (void)io::parse_tck(bad);
    } catch (const Error&) {
    } catch (...) {
      FAIL() << "untyped exception on trial " << trial;
    }
  }
}

TEST(Vtk, RoundTripPreservesGeometry) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Tractogram t = cnatlas::testing::random_tractogram(rng);
    const Tractogram back = io::parse_vtk_polydata(io::encode_vtk_polydata(t));
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      ASSERT_EQ(back.streamlines[i].points.size(), t.streamlines[i].points.size());
      for (std::size_t k = 0; k < t.streamlines[i].points.size(); ++k) {
        EXPECT_LT(distance(back.streamlines[i].points[k], t.streamlines[i].points[k]), 1e-5);
      }
    }
  }
}

TEST(Vtk, ParsesHandWrittenPolydata) {
  const std::string text =
      "# vtk DataFile Version 3.0\nfibers\nASCII\nDATASET POLYDATA\nPOINTS 4 float\n"
      "0 0 0 1 0 0 2 0 0 9 9 9\nLINES 1 4\n3 0 1 2\nPOINT_DATA 4\nSCALARS x float\n";
  const Tractogram t = io::parse_vtk_polydata(text);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.streamlines[0].points[2], (Point3{2, 0, 0}));
}

TEST(Vtk, TypedErrors) {
  EXPECT_EQ(code_of([] { io::parse_vtk_polydata("not vtk\n"); }), ErrorCode::FormatError);
  EXPECT_EQ(code_of([] { io::parse_vtk_polydata("# vtk DataFile Version 3.0\nx\nBINARY\nDATASET POLYDATA\n"); }),
            ErrorCode::UnsupportedVariant);
  EXPECT_EQ(code_of([] {
              io::parse_vtk_polydata(
                  "# vtk DataFile Version 3.0\nx\nASCII\nDATASET POLYDATA\nPOINTS 2 float\n0 0 0 1 1 1\nLINES 1 3\n2 0 7\n");
            }),
            ErrorCode::FormatError);
}

TEST(Nifti, RoundTripKeepsGeometryAndOccupancy) {
  const MaskVolume m = phantom::sphere_mask({3, -4, 5}, 4.0, 1.0);
  const MaskVolume back = io::parse_nifti_mask(io::encode_nifti_mask(m));
  EXPECT_EQ(back.dims(), m.dims());
  EXPECT_EQ(back.occupied_count(), m.occupied_count());
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), m.data().begin()));
  EXPECT_LT(back.voxel_to_world().max_abs_diff(m.voxel_to_world()), 1e-5);
  EXPECT_TRUE(back.contains({3, -4, 5}));
}

TEST(Nifti, SphereVoxelCountNearAnalyticVolume) {
  for (double r : {4.0, 6.0, 10.0}) {
    TempDir dir("nifti");
    io::write_nifti_mask(phantom::sphere_mask({0, 0, 0}, r, 1.0), dir / "s.nii");
    const MaskVolume m = io::read_nifti_mask(dir / "s.nii");
    const double analytic = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    EXPECT_LT(std::abs(static_cast<double>(m.occupied_count()) - analytic) / analytic, 0.05) << r;
  }
}

TEST(Nifti, QformIdentityWithPixdims) {
  const auto a = io::qform_to_affine(0, 0, 0, 10, 20, 30, 2, 3, 4, 1);
  EXPECT_LT(a.max_abs_diff(AffineTransform({2, 0, 0, 10, 0, 3, 0, 20, 0, 0, 4, 30})), 1e-12);
  const auto flipped = io::qform_to_affine(0, 0, 0, 0, 0, 0, 1, 1, 1, -1);
  EXPECT_EQ(flipped(2, 2), -1.0);
  // 90 degrees about z: b = c = 0, d = sin(45 deg).
  const auto rz = io::qform_to_affine(0, 0, static_cast<float>(std::sqrt(0.5)), 0, 0, 0, 1, 1, 1, 1);
  EXPECT_NEAR(rz.apply({1, 0, 0}).y, 1.0, 1e-6);
}

TEST(Nifti, QformFallbackWhenNoSform) {
  std::string bytes = io::encode_nifti_mask(phantom::sphere_mask({0, 0, 0}, 2.0, 1.0));
  const std::int16_t zero = 0, one = 1;
  std::memcpy(bytes.data() + 254, &zero, 2);  // sform_code
  EXPECT_EQ(code_of([&] { io::parse_nifti_mask(bytes); }), ErrorCode::MissingAffine);
  std::memcpy(bytes.data() + 252, &one, 2);  // qform_code
  const float q[6] = {0, 0, 0, 7, 8, 9};
  std::memcpy(bytes.data() + 256, q, sizeof q);
  const MaskVolume m = io::parse_nifti_mask(bytes);
  EXPECT_EQ(m.voxel_to_world().translation_part(), (Point3{7, 8, 9}));
}

TEST(Nifti, TypedErrors) {
  std::string good = io::encode_nifti_mask(phantom::sphere_mask({0, 0, 0}, 2.0, 1.0));
  EXPECT_EQ(code_of([&] { io::parse_nifti_mask(good.substr(0, 100)); }), ErrorCode::TruncatedFile);
  std::string bad = good;
  std::memcpy(bad.data() + 344, "xx1\0", 4);
  EXPECT_EQ(code_of([&] { io::parse_nifti_mask(bad); }), ErrorCode::FormatError);
  bad = good;
  const std::int16_t f64 = 64;
  std::memcpy(bad.data() + 70, &f64, 2);
  EXPECT_EQ(code_of([&] { io::parse_nifti_mask(bad); }), ErrorCode::UnsupportedDatatype);
  EXPECT_EQ(code_of([&] { io::parse_nifti_mask(good.substr(0, good.size() - 10)); }), ErrorCode::TruncatedFile);
}

TEST(MatrixBlob, RoundTripAndErrors) {
  Eigen::MatrixXd m(3, 4);
  for (int i = 0; i < 12; ++i) m(i / 4, i % 4) = 0.25 * i - 1.0;
  const auto back = io::decode_matrix(io::encode_matrix(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(code_of([] { io::decode_matrix("NOTAMAT1xxxxxxxxxxxxxxxx"); }), ErrorCode::FormatError);
  const std::string enc = io::encode_matrix(m);
  EXPECT_EQ(code_of([&] { io::decode_matrix(enc.substr(0, enc.size() - 4)); }), ErrorCode::TruncatedFile);
}

TEST(Bytes, Sha256KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

class AtlasStore : public ::testing::Test {
 protected:
  TempDir dir{"atlas"};
  atlas::Atlas a = cnatlas::testing::small_atlas();
};

TEST_F(AtlasStore, SaveLoadRoundTrip) {
  io::save_atlas(a, dir.path());
  const atlas::Atlas b = io::load_atlas(dir.path());
  ASSERT_EQ(b.clusters.size(), a.clusters.size());
  EXPECT_EQ(b.fibers.size(), a.fibers.size());
  for (std::size_t c = 0; c < a.clusters.size(); ++c) {
    EXPECT_EQ(b.clusters[c].members, a.clusters[c].members);
    EXPECT_EQ(b.clusters[c].pruned, a.clusters[c].pruned);
    EXPECT_LT((b.clusters[c].centroid - a.clusters[c].centroid).cwiseAbs().maxCoeff(), 1e-6);
  }
  for (std::size_t i = 0; i < a.fibers.size(); ++i) EXPECT_EQ(b.fibers.streamlines[i].origin, a.fibers.streamlines[i].origin);
  EXPECT_EQ(b.stage1.k, a.stage1.k);
  EXPECT_EQ(b.stage1.seed, a.stage1.seed);
  EXPECT_EQ(b.embedding.landmark_ids, a.embedding.landmark_ids);
  EXPECT_EQ(b.bspline, a.bspline);
  EXPECT_EQ(b.presets.size(), 4u);
}

TEST_F(AtlasStore, SaveIsDeterministic) {
  TempDir other("atlas2");
  io::save_atlas(a, dir.path());
  io::save_atlas(a, other.path());
  EXPECT_EQ(io::read_file(dir / "manifest.json"), io::read_file(other / "manifest.json"));
}

TEST_F(AtlasStore, TamperingDetected) {
  io::save_atlas(a, dir.path());
  {
    std::ofstream f(dir / "centroids.mat", std::ios::app | std::ios::binary);
    f << "x";
  }
  EXPECT_EQ(code_of([&] { io::load_atlas(dir.path()); }), ErrorCode::CorruptAtlas);
}

TEST_F(AtlasStore, VersionMismatch) {
  io::save_atlas(a, dir.path());
  auto m = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  m["version"] = 99;
  io::write_file_atomic(dir / "manifest.json", m.dump());
  EXPECT_EQ(code_of([&] { io::load_atlas(dir.path()); }), ErrorCode::VersionError);
}

TEST_F(AtlasStore, MissingDirectoryIsIoError) {
  EXPECT_EQ(code_of([&] { io::load_atlas(dir / "nothing"); }), ErrorCode::IoError);
}

TEST_F(AtlasStore, AuditReplayAndTornLine) {
  io::save_atlas(a, dir.path());
  atlas::apply_label(a, a.clusters[0].id, ClusterLabel::CN_II_D, "r1", "t1");
  io::persist_last_label(a, dir.path());
  const std::string snapshot = io::read_file(dir / "labels.json");
  atlas::apply_label(a, a.clusters[1].id, ClusterLabel::CN_V_L, "r2", "t2");
  io::persist_last_label(a, dir.path());
  // Crash between the audit append and the snapshot rewrite.
  io::write_file_atomic(dir / "labels.json", snapshot);
  io::append_file_durable(dir / "audit.jsonl", "{\"seq\": 3, \"clus");
  const atlas::Atlas b = io::load_atlas(dir.path());
  EXPECT_EQ(b.clusters[0].label, ClusterLabel::CN_II_D);
  EXPECT_EQ(b.clusters[1].label, ClusterLabel::CN_V_L);
  EXPECT_EQ(b.clusters[1].status, atlas::ReviewStatus::reviewed);
  ASSERT_EQ(b.audit.size(), 2u);
  EXPECT_EQ(b.audit[1].rater, "r2");
}

TEST(StageConfigJson, StrictAndSeedRequired) {
  const auto c = cnatlas::testing::small_stage1(9);
  const auto j = io::stage_config_to_json(c);
  const auto back = io::stage_config_from_json(j, atlas::AtlasStageConfig{});
  EXPECT_EQ(back.k, c.k);
  EXPECT_EQ(back.seed, 9u);
  auto bad = j;
  bad["typo"] = 1;
  EXPECT_EQ(code_of([&] { io::stage_config_from_json(bad, {}); }), ErrorCode::InvalidConfig);
  bad = j;
  bad.erase("seed");
  EXPECT_EQ(code_of([&] { io::stage_config_from_json(bad, {}); }), ErrorCode::InvalidConfig);
}
