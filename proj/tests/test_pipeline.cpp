#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/atlas_store.hpp"
#include "cnatlas/io/bytes.hpp"
#include "cnatlas/io/tck.hpp"
#include "cnatlas/pipeline/commands.hpp"
#include "cnatlas/pipeline/config.hpp"
#include "expect_error.hpp"
#include "support.hpp"

using namespace cnatlas;
using namespace cnatlas::pipeline;
using cnatlas::testing::code_of;
using cnatlas::testing::TempDir;
using nlohmann::json;

namespace {

json minimal() { return json{{"output_dir", "out"}}; }

json read_json(const fs::path& p) { return json::parse(io::read_file(p)); }

}  // namespace

TEST(Config, MinimalAndRelativePaths) {
  TempDir dir("cfg");
  const auto cfg = parse_pipeline_config(minimal(), dir.path());
  EXPECT_EQ(cfg.output_dir, dir.path() / "out");
  EXPECT_FALSE(cfg.registration.has_value());
  EXPECT_EQ(cfg.presets.size(), default_tracking_presets().size());
}

TEST(Config, SubjectDirectoriesExpandSorted) {
  TempDir dir("cfg");
  fs::create_directories(dir / "subj");
  Rng rng(1);
  for (const char* name : {"b.tck", "a.tck", "c.vtk"}) io::write_tck(cnatlas::testing::random_tractogram(rng), dir / "subj" / name);
  json doc = minimal();
  doc["subjects"] = {"subj", "extra.tck"};
  const auto cfg = parse_pipeline_config(doc, dir.path());
  ASSERT_EQ(cfg.subjects.size(), 3u);
  EXPECT_EQ(cfg.subjects[0], dir / "subj" / "a.tck");
  EXPECT_EQ(cfg.subjects[1], dir / "subj" / "b.tck");
  EXPECT_EQ(cfg.subjects[2], dir / "extra.tck");
}

TEST(Config, StrictKeysAndTypes) {
  TempDir dir("cfg");
  auto bad = [&](json doc) { return code_of([&] { parse_pipeline_config(doc, dir.path()); }); };
  EXPECT_EQ(bad(json::object()), ErrorCode::InvalidConfig);
  json unknown = minimal();
  unknown["outptu_dir"] = "x";
  EXPECT_EQ(bad(unknown), ErrorCode::InvalidConfig);
  json typed = minimal();
  typed["workers"] = "four";
  EXPECT_EQ(bad(typed), ErrorCode::InvalidConfig);
  json nested = minimal();
  nested["stage1"] = {{"K", 10}, {"seed", 1}, {"sigmaa", 3}};
  EXPECT_EQ(bad(nested), ErrorCode::InvalidConfig);
}

TEST(Config, SeedsAreRequired) {
  TempDir dir("cfg");
  json doc = minimal();
  doc["registration"] = {{"fibers_per_subject", 100}};
  EXPECT_EQ(code_of([&] { parse_pipeline_config(doc, dir.path()); }), ErrorCode::InvalidConfig);
  doc["registration"]["seed"] = -3;
  EXPECT_EQ(code_of([&] { parse_pipeline_config(doc, dir.path()); }), ErrorCode::InvalidConfig);
  doc["registration"]["seed"] = 3;
  EXPECT_EQ(parse_pipeline_config(doc, dir.path()).registration->seed, 3u);
  doc["stage1"] = {{"K", 10}};
  EXPECT_EQ(code_of([&] { parse_pipeline_config(doc, dir.path()); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { registration_config_from_json(json{{"dof", "affine"}}); }), ErrorCode::InvalidConfig);
}

TEST(Config, RegistrationJsonRoundTrip) {
  registration::RegistrationConfig c;
  c.seed = 9;
  c.dof = registration::Dof::similarity;
  c.sigma_schedule = {8.0, 4.0};
  const auto back = registration_config_from_json(registration_config_to_json(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.dof, registration::Dof::similarity);
  EXPECT_EQ(back.sigma_schedule, c.sigma_schedule);
}

TEST(Config, DottedOverrides) {
  json doc = minimal();
  doc["stage1"] = {{"K", 10}, {"seed", 1}};
  apply_overrides(doc, json{{"stage1.K", 20}, {"registration.seed", 4}});
  EXPECT_EQ(doc["stage1"]["K"], 20);
  EXPECT_EQ(doc["stage1"]["seed"], 1);
  EXPECT_EQ(doc["registration"]["seed"], 4);

  TempDir dir("cfg");
  io::write_file_atomic(dir / "p.json", doc.dump());
  const auto cfg = load_pipeline_config(dir / "p.json", json{{"stage1.K", 7}});
  EXPECT_EQ(cfg.stage1->k, 7u);
  EXPECT_EQ(cfg.document["stage1"]["K"], 7);
  EXPECT_EQ(code_of([&] { load_pipeline_config(dir / "missing.json"); }), ErrorCode::IoError);
  io::write_file_atomic(dir / "broken.json", "{");
  EXPECT_EQ(code_of([&] { load_pipeline_config(dir / "broken.json"); }), ErrorCode::InvalidConfig);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::InvalidConfig), kExitConfig);
  EXPECT_EQ(exit_code_for(ErrorCode::FormatError), kExitConfig);
  EXPECT_EQ(exit_code_for(ErrorCode::NumericalFailure), kExitNumerical);
  EXPECT_EQ(exit_code_for(ErrorCode::SingularTransform), kExitNumerical);
  EXPECT_EQ(exit_code_for(ErrorCode::IoError), kExitIo);
}

TEST(Commands, ConvertRoundTrip) {
  TempDir dir("convert");
  Rng rng(3);
  Tractogram t = cnatlas::testing::random_tractogram(rng);
  while (t.empty()) t = cnatlas::testing::random_tractogram(rng);
  io::write_tck(t, dir / "a.tck");
  const json run = cmd_convert({dir / "a.tck"}, dir / "a.vtk", ConvertFormat::by_extension);
  const json& files = run["details"]["files"];
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0]["stats"]["streamlines"], t.size());
  cmd_convert({dir / "a.vtk"}, dir / "b.tck", ConvertFormat::by_extension);
  const Tractogram back = io::read_tck(dir / "b.tck");
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back.streamlines[i].points, t.streamlines[i].points);

  io::write_tck(t, dir / "c.tck");
  EXPECT_EQ(code_of([&] { cmd_convert({dir / "a.tck", dir / "c.tck"}, dir / "many", ConvertFormat::by_extension); }),
            ErrorCode::InvalidArgument);
  cmd_convert({dir / "a.tck", dir / "c.tck"}, dir / "many", ConvertFormat::vtk);
  EXPECT_TRUE(fs::exists(dir / "many" / "a.vtk"));
  EXPECT_TRUE(fs::exists(dir / "many" / "c.vtk"));
  EXPECT_EQ(code_of([&] { cmd_convert({dir / "a.tck"}, dir / "a.trk", ConvertFormat::by_extension); }),
            ErrorCode::FormatError);
  EXPECT_EQ(code_of([&] { cmd_convert({}, dir / "x.tck", ConvertFormat::tck); }), ErrorCode::InvalidArgument);
}

TEST(Commands, EmitPresets) {
  TempDir dir("presets");
  cmd_emit_presets(dir / "presets.json");
  const json j = read_json(dir / "presets.json");
  EXPECT_EQ(j["format"], "cnatlas-tracking-presets");
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["presets"].size(), default_tracking_presets().size());
}

TEST(Commands, PhantomPipelineEndToEnd) {
  TempDir dir("e2e");
  cmd_phantom(dir.path(), {});
  const auto cfg = load_pipeline_config(dir / "pipeline.json");
  const Layout layout{cfg.output_dir};

  EXPECT_EQ(code_of([&] { cmd_build_atlas(cfg, 1); }), ErrorCode::IoError);  // register has not run
  const json reg = cmd_register(cfg);
  EXPECT_EQ(reg["command"], "register");
  const json transforms = read_json(layout.registration() / "transforms.json");
  ASSERT_EQ(transforms["subjects"].size(), 4u);
  EXPECT_NEAR(transforms["mean_log_determinant"].get<double>(), 0.0, 1e-9);
  EXPECT_TRUE(fs::exists(layout.registration() / "trace.csv"));
  EXPECT_TRUE(fs::exists(layout.runs() / "register.json"));

  cmd_build_atlas(cfg, 1);
  EXPECT_EQ(code_of([&] { cmd_build_atlas(cfg, 2); }), ErrorCode::IoError);  // not screened yet
  const json screen = cmd_screen_roi(cfg);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "screening.json"));
  cmd_build_atlas(cfg, 2);
  const json labeled = cmd_label_construction(layout.atlas(), dir / "truth" / "labels.json", {"construction", "t0"});
  cmd_apply(cfg);
  cmd_eval(cfg);

  const atlas::Atlas a = io::load_atlas(layout.atlas());
  EXPECT_EQ(a.stage, atlas::AtlasStage::enhanced);
  std::size_t reviewed = 0;
  for (const auto& c : a.clusters) reviewed += c.status == atlas::ReviewStatus::reviewed;
  EXPECT_EQ(reviewed, a.clusters.size());
  for (const char* f : {"table1.txt", "table1.csv", "table2.txt", "table2.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(layout.eval() / f)) << f;
  }
  for (const char* r : {"register", "build-atlas-1", "screen-roi", "build-atlas-2", "apply", "eval"}) {
    const json m = read_json(layout.runs() / (std::string(r) + ".json"));
    EXPECT_EQ(m["command"], r);
    EXPECT_TRUE(m.contains("config"));
  }

  // A subject edited after registration is caught by its checksum.
  const fs::path first = cfg.subjects.front();
  Tractogram t = io::read_tck(first);
  t.streamlines.pop_back();
  io::write_tck(t, first);
  EXPECT_EQ(code_of([&] { cmd_build_atlas(cfg, 1); }), ErrorCode::InvalidConfig);
}

TEST(Commands, LabelBatch) {
  TempDir dir("batch");
  cmd_phantom(dir.path(), {});
  const auto cfg = load_pipeline_config(dir / "pipeline.json", json{{"stage1.K", 8}, {"stage1.landmarks", 100},
                                                                    {"stage1.sample_per_subject", 100}});
  cmd_register(cfg);
  cmd_build_atlas(cfg, 1);
  const fs::path atlas_dir = Layout{cfg.output_dir}.atlas_stage1();
  io::write_file_atomic(dir / "batch.json",
                        json{{"labels", {{{"cluster", 0}, {"label", "CN_V_L"}}, {{"cluster", 1}, {"label", "rejected"}}}}}.dump());
  cmd_label_batch(atlas_dir, dir / "batch.json", {"rater1", "2020-01-01T00:00:00Z"});
  const atlas::Atlas a = io::load_atlas(atlas_dir);
  EXPECT_EQ(a.find(0)->label, ClusterLabel::CN_V_L);
  EXPECT_EQ(a.find(1)->label, ClusterLabel::rejected);
  ASSERT_EQ(a.audit.size(), 2u);
  EXPECT_EQ(a.audit[1].rater, "rater1");

  io::write_file_atomic(dir / "bad.json", json{{"labels", {{{"cluster", 0}, {"label", "CN_XII"}}}}}.dump());
  EXPECT_EQ(code_of([&] { cmd_label_batch(atlas_dir, dir / "bad.json", {}); }), ErrorCode::InvalidConfig);
  io::write_file_atomic(dir / "missing.json", json{{"labels", {{{"cluster", 999}, {"label", "CN_V_L"}}}}}.dump());
  EXPECT_EQ(code_of([&] { cmd_label_batch(atlas_dir, dir / "missing.json", {}); }), ErrorCode::NotFound);
}
