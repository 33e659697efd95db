// Exercises the shared library through its C header only, plus the CLI's exit codes.

#include <gtest/gtest.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "cnatlas/cnatlas.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Scratch {
 public:
  Scratch() {
    static int n = 0;
    path_ = fs::temp_directory_path() / ("cnatlas_capi_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

void put_f32(std::string& s, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

/// Two streamlines: (0,0,0)-(3,4,0) and (0,0,0)-(1,0,0)-(2,0,0).
std::string two_line_tck() {
  std::string h = "mrtrix tracks\ndatatype: Float32LE\ncount: 2\nfile: . 64\nEND\n";
  h.resize(64, ' ');
  const float pts[][3] = {{0, 0, 0}, {3, 4, 0}, {NAN, NAN, NAN}, {0, 0, 0}, {1, 0, 0}, {2, 0, 0},
                          {NAN, NAN, NAN}, {INFINITY, INFINITY, INFINITY}};
  for (const auto& p : pts) {
    for (float v : p) put_f32(h, v);
  }
  return h;
}

int exit_status(const std::string& args) {
  const std::string cmd = std::string(CNATLAS_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STRNE(cnatlas_version(), "");
  EXPECT_STREQ(cnatlas_status_name(CNATLAS_OK), "Ok");
  EXPECT_STREQ(cnatlas_status_name(CNATLAS_E_INTERNAL), "Internal");
  EXPECT_STREQ(cnatlas_status_name(-7), "Unknown");
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_OK), 0);
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_E_FORMAT), 2);
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_E_INVALID_CONFIG), 2);
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_E_NUMERICAL), 3);
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_E_SINGULAR_TRANSFORM), 3);
  EXPECT_EQ(cnatlas_exit_code(CNATLAS_E_IO), 4);
}

TEST(CApi, Workers) {
  const int before = cnatlas_workers();
  EXPECT_EQ(cnatlas_set_workers(3), CNATLAS_OK);
  EXPECT_EQ(cnatlas_workers(), 3);
  EXPECT_EQ(cnatlas_set_workers(0), CNATLAS_E_INVALID_ARGUMENT);
  cnatlas_set_workers(before);
}

TEST(CApi, TractogramReadStatsWrite) {
  Scratch dir;
  write_bytes(dir / "t.tck", two_line_tck());
  cnatlas_tractogram* t = nullptr;
  ASSERT_EQ(cnatlas_tractogram_read((dir / "t.tck").c_str(), &t), CNATLAS_OK);
  size_t n = 0;
  ASSERT_EQ(cnatlas_tractogram_size(t, &n), CNATLAS_OK);
  EXPECT_EQ(n, 2u);
  cnatlas_tractogram_stats s{};
  ASSERT_EQ(cnatlas_tractogram_stats_get(t, &s), CNATLAS_OK);
  EXPECT_EQ(s.points, 5u);
  EXPECT_DOUBLE_EQ(s.min_length_mm, 2.0);
  EXPECT_DOUBLE_EQ(s.max_length_mm, 5.0);
  EXPECT_DOUBLE_EQ(s.mean_length_mm, 3.5);

  ASSERT_EQ(cnatlas_tractogram_write(t, (dir / "t.vtk").c_str()), CNATLAS_OK);
  cnatlas_tractogram* v = nullptr;
  ASSERT_EQ(cnatlas_tractogram_read((dir / "t.vtk").c_str(), &v), CNATLAS_OK);
  cnatlas_tractogram_stats sv{};
  cnatlas_tractogram_stats_get(v, &sv);
  EXPECT_EQ(sv.streamlines, 2u);
  EXPECT_NEAR(sv.mean_length_mm, 3.5, 1e-6);
  cnatlas_tractogram_free(v);

  ASSERT_EQ(cnatlas_tractogram_write(t, (dir / "again.tck").c_str()), CNATLAS_OK);
  cnatlas_tractogram* again = nullptr;
  ASSERT_EQ(cnatlas_tractogram_read((dir / "again.tck").c_str(), &again), CNATLAS_OK);
  cnatlas_tractogram_free(again);
  cnatlas_tractogram_free(t);
  cnatlas_tractogram_free(nullptr);
}

TEST(CApi, TypedErrorsAndMessages) {
  Scratch dir;
  write_bytes(dir / "bad.tck", "not a track file\nEND\n");
  cnatlas_tractogram* t = nullptr;
  EXPECT_EQ(cnatlas_tractogram_read((dir / "bad.tck").c_str(), &t), CNATLAS_E_FORMAT);
  EXPECT_EQ(t, nullptr);
  EXPECT_STRNE(cnatlas_last_error(), "");
  EXPECT_EQ(cnatlas_tractogram_read((dir / "missing.tck").c_str(), &t), CNATLAS_E_IO);
  EXPECT_EQ(cnatlas_tractogram_read(nullptr, &t), CNATLAS_E_INVALID_ARGUMENT);
  EXPECT_EQ(cnatlas_tractogram_read((dir / "bad.tck").c_str(), nullptr), CNATLAS_E_INVALID_ARGUMENT);
  size_t n = 0;
  EXPECT_EQ(cnatlas_tractogram_size(nullptr, &n), CNATLAS_E_INVALID_ARGUMENT);
  cnatlas_atlas* a = nullptr;
  EXPECT_EQ(cnatlas_atlas_load((dir / "nowhere").c_str(), &a), CNATLAS_E_IO);
  EXPECT_EQ(cnatlas_run_register((dir / "nope.json").c_str(), nullptr, nullptr), CNATLAS_E_IO);
}

TEST(CApi, PipelineThroughHandles) {
  Scratch dir;
  const std::string root = dir / "ph";
  const char* result = nullptr;
  ASSERT_EQ(cnatlas_phantom(root.c_str(), 3, 3, 1, &result), CNATLAS_OK) << cnatlas_last_error();
  ASSERT_NE(result, nullptr);
  EXPECT_TRUE(json::parse(result).is_object());
  const std::string cfg = root + "/pipeline.json";
  const char* small = R"({"stage1.K": 10, "stage1.landmarks": 100, "stage1.sample_per_subject": 100})";
  ASSERT_EQ(cnatlas_run_register(cfg.c_str(), small, &result), CNATLAS_OK) << cnatlas_last_error();
  EXPECT_EQ(json::parse(result)["command"], "register");
  ASSERT_EQ(cnatlas_run_build_atlas(cfg.c_str(), 1, small, nullptr), CNATLAS_OK) << cnatlas_last_error();
  EXPECT_EQ(cnatlas_run_build_atlas(cfg.c_str(), 3, small, nullptr), CNATLAS_E_INVALID_ARGUMENT);
  EXPECT_EQ(cnatlas_run_build_atlas(cfg.c_str(), 1, "{oops", nullptr), CNATLAS_E_INVALID_CONFIG);

  cnatlas_atlas* a = nullptr;
  ASSERT_EQ(cnatlas_atlas_load((root + "/run/atlas_stage1").c_str(), &a), CNATLAS_OK);
  size_t clusters = 0;
  ASSERT_EQ(cnatlas_atlas_cluster_count(a, &clusters), CNATLAS_OK);
  EXPECT_GT(clusters, 0u);
  EXPECT_LE(clusters, 10u);
  const char* summary = nullptr;
  ASSERT_EQ(cnatlas_atlas_summary(a, &summary), CNATLAS_OK);
  EXPECT_STREQ(summary, "CN II (0 clusters), CN III (0 clusters), CN V (0 clusters), CN VII/VIII (0 clusters)");
  cnatlas_atlas_free(a);

  write_bytes(dir / "batch.json", R"({"labels": [{"cluster": 0, "label": "CN_III_R"}]})");
  ASSERT_EQ(cnatlas_label_batch((root + "/run/atlas_stage1").c_str(), (dir / "batch.json").c_str(), "me",
                                "2000-01-01T00:00:00Z", nullptr),
            CNATLAS_OK);
  ASSERT_EQ(cnatlas_atlas_load((root + "/run/atlas_stage1").c_str(), &a), CNATLAS_OK);
  cnatlas_atlas_summary(a, &summary);
  EXPECT_STREQ(summary, "CN II (0 clusters), CN III (1 cluster), CN V (0 clusters), CN VII/VIII (0 clusters)");
  cnatlas_atlas_free(a);

  ASSERT_EQ(cnatlas_emit_presets((dir / "presets.json").c_str(), nullptr, nullptr), CNATLAS_OK);
  EXPECT_TRUE(fs::exists(dir / "presets.json"));
}

TEST(Cli, ExitCodes) {
  Scratch dir;
  write_bytes(dir / "bad.tck", "garbage\n");
  EXPECT_EQ(exit_status("--version"), 0);
  EXPECT_EQ(exit_status("convert " + (dir / "bad.tck") + " -o " + (dir / "out.vtk")), 2);
  EXPECT_EQ(exit_status("convert -o " + (dir / "out.vtk")), 64);
  EXPECT_EQ(exit_status("no-such-command"), 64);
  write_bytes(dir / "t.tck", two_line_tck());
  EXPECT_EQ(exit_status("convert " + (dir / "t.tck") + " -o " + (dir / "t.vtk")), 0);
  EXPECT_TRUE(fs::exists(dir / "t.vtk"));

  write_bytes(dir / "noseed.json", R"({"output_dir": "out", "subjects": [], "registration": {"dof": "affine"}})");
  EXPECT_EQ(exit_status("register -c " + (dir / "noseed.json")), 2);
  write_bytes(dir / "seeded.json", R"({"output_dir": "out", "registration": {"dof": "affine"}})");
  EXPECT_EQ(exit_status("register -c " + (dir / "seeded.json") + " --set registration.seed=4"), 2);  // no subjects
  EXPECT_EQ(exit_status("register -c " + (dir / "missing.json")), 4);
}
