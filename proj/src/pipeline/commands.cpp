#include "cnatlas/pipeline/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "cnatlas/core/parallel.hpp"
#include "cnatlas/core/streamline_ops.hpp"
#include "cnatlas/io/atlas_store.hpp"
#include "cnatlas/io/bytes.hpp"
#include "cnatlas/io/nifti.hpp"
#include "cnatlas/io/tck.hpp"
#include "cnatlas/io/vtk.hpp"
#include "cnatlas/phantom/phantom.hpp"
#include "cnatlas/version.hpp"

namespace cnatlas::pipeline {
using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string label_str(ClusterLabel l) { return std::string(label_name(l)); }

json transform_json(const AffineTransform& x) { return json(x.row_major()); }

std::string relative_to(const fs::path& p, const fs::path& base) {
  const fs::path r = p.lexically_relative(base);
  return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

json read_json(const fs::path& file, ErrorCode on_parse_error) {
  const std::string text = io::read_file(file);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    raise(on_parse_error, file.string() + ": " + e.what());
  }
}

/// Collects what a command read and wrote, then writes runs/<command>.json.
class RunRecorder {
 public:
  RunRecorder(std::string command, const PipelineConfig* config)
      : command_(std::move(command)), config_(config), start_(std::chrono::steady_clock::now()) {
    if (config_ && config_->workers) set_worker_count(*config_->workers);
  }

  void input(const fs::path& p) { inputs_.push_back(file_entry(p)); }
  void output(const fs::path& p) { outputs_.push_back(file_entry(p)); }
  void seed(const std::string& key, std::uint64_t value) { seeds_[key] = value; }
  json& details() { return details_; }

  json finish() {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m{{"command", command_},     {"version", kVersion},   {"workers", worker_count()},
           {"inputs", inputs_},       {"outputs", outputs_},   {"seeds", seeds_},
           {"wall_time_s", wall},     {"details", details_}};
    if (config_) {
      m["config"] = json{{"document", config_->document}, {"sha256", io::sha256_hex(config_->document.dump())}};
      const fs::path runs = Layout{config_->output_dir}.runs();
      make_dirs(runs);
      io::write_file_atomic(runs / (command_ + ".json"), dump(m));
    }
    return m;
  }

 private:
  json file_entry(const fs::path& p) const {
    const fs::path base = config_ ? config_->output_dir : fs::path{};
    return json{{"path", relative_to(p, base)}, {"sha256", io::sha256_hex(io::read_file(p))}};
  }

  std::string command_;
  const PipelineConfig* config_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json seeds_ = json::object();
  json details_ = json::object();
};

/// Reads the subject list; each gets its file stem as id when the header has none.
std::vector<Tractogram> load_subjects(const std::vector<fs::path>& paths, RunRecorder& run) {
  if (paths.empty()) raise(ErrorCode::InvalidConfig, "config.subjects lists no tractograms");
  std::vector<Tractogram> out;
  std::set<std::string> ids;
  for (const auto& p : paths) {
    Tractogram t = read_tractogram(p);
    run.input(p);
    if (t.subject_id.empty()) t.subject_id = p.stem().string();
    if (!ids.insert(t.subject_id).second) raise(ErrorCode::InvalidConfig, "duplicate subject id '" + t.subject_id + "'");
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
const T& need(const std::optional<T>& section, const char* name) {
  if (!section) raise(ErrorCode::InvalidConfig, std::string("config has no '") + name + "' section");
  return *section;
}

void save_atlas_recorded(const atlas::Atlas& a, const fs::path& dir, RunRecorder& run) {
  io::save_atlas(a, dir);
  run.output(dir / "manifest.json");
}

json cluster_tally(const atlas::Atlas& a) {
  std::size_t pruned = 0;
  for (const auto& c : a.clusters) pruned += c.pruned ? 1 : 0;
  return json{{"clusters", a.clusters.size()}, {"pruned", pruned}, {"fibers", a.fibers.size()}};
}

json apply_config_json(const apply::ApplyConfig& c) {
  return json{{"registration", registration_config_to_json(c.registration)},
              {"min_length_mm", c.min_length_mm},
              {"min_streamlines", c.min_streamlines},
              {"low_confidence_kernel", c.low_confidence_kernel},
              {"outlier_removal", c.outlier_removal}};
}

Tractogram bundle_or_empty(const fs::path& file) {
  std::error_code ec;
  if (!fs::exists(file, ec)) return {};
  return io::read_tck(file);
}

void apply_labels(const fs::path& atlas_dir, const std::vector<std::pair<std::int64_t, ClusterLabel>>& labels,
                  const LabelBatchOptions& options, json& summary) {
  atlas::Atlas a = io::load_atlas(atlas_dir);
  json applied = json::array();
  for (const auto& [id, label] : labels) {
    const std::string ts = options.timestamp.empty() ? atlas::utc_timestamp() : options.timestamp;
    atlas::apply_label(a, id, label, options.rater, ts);
    io::persist_last_label(a, atlas_dir);
    applied.push_back(json{{"cluster", id}, {"label", label_str(label)}});
  }
  json groups = json::object();
  for (const auto& [g, n] : atlas::group_counts(a)) groups[std::string(group_key(g))] = n;
  summary["labeled"] = applied;
  summary["groups"] = groups;
  summary["summary"] = atlas::format_group_counts(atlas::group_counts(a));
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NumericalFailure:
    case ErrorCode::SingularTransform:
      return kExitNumerical;
    case ErrorCode::IoError:
      return kExitIo;
    default:
      return kExitConfig;
  }
}

TractogramStats tractogram_stats(const Tractogram& t) {
  TractogramStats s;
  s.streamlines = t.size();
  if (t.empty()) return s;
  s.min_length_mm = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& f : t.streamlines) {
    const double len = streamline_length(f);
    s.points += f.points.size();
    s.min_length_mm = std::min(s.min_length_mm, len);
    s.max_length_mm = std::max(s.max_length_mm, len);
    sum += len;
  }
  s.mean_length_mm = sum / static_cast<double>(t.size());
  return s;
}

json stats_to_json(const TractogramStats& s) {
  return json{{"streamlines", s.streamlines},
              {"points", s.points},
              {"min_length_mm", s.min_length_mm},
              {"mean_length_mm", s.mean_length_mm},
              {"max_length_mm", s.max_length_mm}};
}

Tractogram read_tractogram(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".tck") return io::read_tck(path);
  if (ext == ".vtk") return io::read_vtk_polydata(path);
  raise(ErrorCode::FormatError, "unknown tractogram extension: " + path.string());
}

void write_tractogram(const Tractogram& t, const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".tck") return io::write_tck(t, path);
  if (ext == ".vtk") return io::write_vtk_polydata(t, path);
  raise(ErrorCode::FormatError, "unknown tractogram extension: " + path.string());
}

json cmd_convert(const std::vector<fs::path>& inputs, const fs::path& out, ConvertFormat to) {
  if (inputs.empty()) raise(ErrorCode::InvalidArgument, "no input files");
  RunRecorder run("convert", nullptr);
  const bool to_dir = inputs.size() > 1;
  if (to_dir && to == ConvertFormat::by_extension) {
    raise(ErrorCode::InvalidArgument, "several inputs need an explicit output format");
  }
  if (to_dir) make_dirs(out);
  json files = json::array();
  for (const auto& in : inputs) {
    const Tractogram t = read_tractogram(in);
    fs::path target = out;
    if (to_dir) target = out / in.stem();
    if (to == ConvertFormat::tck) target.replace_extension(".tck");
    if (to == ConvertFormat::vtk) target.replace_extension(".vtk");
    if (!target.parent_path().empty()) make_dirs(target.parent_path());
    write_tractogram(t, target);
    files.push_back(json{{"input", in.generic_string()}, {"output", target.generic_string()}, {"stats", stats_to_json(tractogram_stats(t))}});
  }
  run.details()["files"] = files;
  return run.finish();
}

json cmd_register(const PipelineConfig& config) {
  RunRecorder run("register", &config);
  const auto& cfg = need(config.registration, "registration");
  run.seed("registration", cfg.seed);
  const double min_len = config.stage1 ? config.stage1->min_length_mm : atlas::AtlasStageConfig{}.min_length_mm;

  std::vector<Tractogram> subjects = load_subjects(config.subjects, run);
  std::vector<Tractogram> filtered;
  for (const auto& s : subjects) filtered.push_back(filter_by_length(s, min_len));
  registration::GroupRegistrationResult r;
  try {
    r = registration::groupwise_affine_register(filtered, cfg);
  } catch (...) {
    rethrow_tagged("registration");
  }

  const Layout layout{config.output_dir};
  make_dirs(layout.registration());
  json subj = json::array();
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    subj.push_back(json{{"id", subjects[i].subject_id},
                        {"path", relative_to(config.subjects[i], config.base_dir)},
                        {"sha256", io::sha256_hex(io::read_file(config.subjects[i]))},
                        {"transform", transform_json(r.transforms[i])}});
  }
  const json transforms{{"config", registration_config_to_json(cfg)},
                        {"min_length_mm", min_len},
                        {"subjects", subj},
                        {"final_objective", r.final_objective},
                        {"level_objectives", r.level_objectives},
                        {"mean_log_determinant", registration::mean_log_determinant(r.transforms)}};
  const fs::path tfile = layout.registration() / "transforms.json";
  io::write_file_atomic(tfile, dump(transforms));
  run.output(tfile);

  std::string csv = "level,sigma,sweep,subject,parameter,step_mm,before,after,gauge\n";
  char line[256];
  for (const auto& e : r.trace) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%zu,%d,%d,%.17g,%.17g,%.17g,%d\n", e.level, e.sigma, e.sweep, e.subject,
                  e.parameter, e.step_mm, e.before, e.after, e.gauge ? 1 : 0);
    csv += line;
  }
  const fs::path trace = layout.registration() / "trace.csv";
  io::write_file_atomic(trace, csv);
  run.output(trace);
  run.details()["final_objective"] = r.final_objective;
  run.details()["accepted_steps"] = r.trace.size();
  return run.finish();
}

json cmd_build_atlas(const PipelineConfig& config, int stage) {
  const Layout layout{config.output_dir};
  if (stage == 1) {
    RunRecorder run("build-atlas-1", &config);
    const auto& cfg = need(config.stage1, "stage1");
    run.seed("stage1", cfg.seed);
    std::vector<Tractogram> subjects = load_subjects(config.subjects, run);
    const fs::path tfile = layout.registration() / "transforms.json";
    const json transforms = read_json(tfile, ErrorCode::FormatError);
    run.input(tfile);
    registration::GroupRegistrationResult r;
    try {
      const json& list = transforms.at("subjects");
      if (list.size() != subjects.size()) raise(ErrorCode::InvalidConfig, "registration covers a different subject list; rerun register");
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (list[i].at("sha256").get<std::string>() != io::sha256_hex(io::read_file(config.subjects[i]))) {
          raise(ErrorCode::InvalidConfig, "subject " + subjects[i].subject_id + " changed since register; rerun register");
        }
        r.transforms.emplace_back(list[i].at("transform").get<std::array<double, 12>>());
      }
    } catch (const json::exception& e) {
      raise(ErrorCode::FormatError, tfile.string() + ": " + e.what());
    }
    const auto registered = registration::apply_group_transforms(subjects, r);
    atlas::Atlas a;
    try {
      a = atlas::build_stage1(registered, cfg);
    } catch (...) {
      rethrow_tagged("stage1");
    }
    save_atlas_recorded(a, layout.atlas_stage1(), run);
    run.details() = cluster_tally(a);
    return run.finish();
  }
  if (stage == 2) {
    RunRecorder run("build-atlas-2", &config);
    const auto& cfg = need(config.stage2, "stage2");
    run.seed("stage2", cfg.seed);
    const atlas::Atlas screened = io::load_atlas(layout.atlas_screened());
    run.input(layout.atlas_screened() / "manifest.json");
    atlas::Atlas a;
    try {
      a = atlas::build_stage2(screened, cfg);
    } catch (...) {
      rethrow_tagged("stage2");
    }
    save_atlas_recorded(a, layout.atlas(), run);
    run.details() = cluster_tally(a);
    return run.finish();
  }
  raise(ErrorCode::InvalidArgument, "stage must be 1 or 2");
}

json cmd_screen_roi(const PipelineConfig& config) {
  RunRecorder run("screen-roi", &config);
  const auto& scr = need(config.screening, "screening");
  const Layout layout{config.output_dir};
  atlas::Atlas a = io::load_atlas(layout.atlas_stage1());
  run.input(layout.atlas_stage1() / "manifest.json");
  for (const auto& [nerve, paths] : scr.masks) {
    for (const auto& p : paths.rois) run.input(p);
    for (const auto& p : paths.roas) run.input(p);
  }
  const auto masks = load_masks(scr.masks);
  const auto report = atlas::screen_clusters_by_roi(a, masks, scr.theta);
  save_atlas_recorded(a, layout.atlas_screened(), run);

  json per_label = json::object();
  for (const auto& [l, n] : report.per_label) per_label[label_str(l)] = n;
  const json rep{{"theta", scr.theta},
                 {"per_label", per_label},
                 {"ambiguous", report.ambiguous},
                 {"rejected", report.rejected},
                 {"summary", report.summary}};
  const fs::path rfile = config.output_dir / "screening.json";
  io::write_file_atomic(rfile, dump(rep));
  run.output(rfile);
  run.details() = rep;
  return run.finish();
}

json cmd_apply(const PipelineConfig& config) {
  RunRecorder run("apply", &config);
  const auto& ap = need(config.apply, "apply");
  run.seed("apply.registration", ap.config.registration.seed);
  const Layout layout{config.output_dir};
  const fs::path atlas_dir = ap.atlas.value_or(layout.atlas());
  const atlas::Atlas a = io::load_atlas(atlas_dir);
  run.input(atlas_dir / "manifest.json");
  run.input(atlas_dir / "labels.json");

  const std::vector<Tractogram> subjects = load_subjects(ap.subjects, run);
  json timings = json::object();
  json per_subject = json::object();
  for (const auto& subject : subjects) {
    const auto t0 = std::chrono::steady_clock::now();
    const apply::IdentificationResult r = apply::identify(subject, a, ap.config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dir = layout.apply() / subject.subject_id;
    make_dirs(dir);
    json nerves = json::object();
    for (const auto& [label, nb] : r.nerves) {
      const std::string file = label_str(label) + ".tck";
      io::write_tck(nb.bundle, dir / file);
      run.output(dir / file);
      nerves[label_str(label)] = json{{"count", nb.count}, {"identified", nb.identified}, {"file", file}};
    }
    const json report{{"subject", subject.subject_id},
                      {"subject_to_atlas", transform_json(r.subject_to_atlas)},
                      {"considered", r.considered},
                      {"low_confidence", r.low_confidence},
                      {"discarded", r.discarded},
                      {"outliers_removed", r.outliers_removed},
                      {"config", apply_config_json(ap.config)},
                      {"nerves", nerves}};
    io::write_file_atomic(dir / "report.json", dump(report));
    run.output(dir / "report.json");
    timings[subject.subject_id] = seconds;
    json flags = json::object();
    for (const auto& [label, nb] : r.nerves) flags[label_str(label)] = nb.identified;
    per_subject[subject.subject_id] = flags;
  }
  run.details() = json{{"identified", per_subject}, {"timings_s", timings}};
  return run.finish();
}

json cmd_eval(const PipelineConfig& config) {
  RunRecorder run("eval", &config);
  const auto& ev = need(config.eval, "eval");
  const Layout layout{config.output_dir};
  std::vector<metrics::SubjectOutcome> outcomes;
  json per_subject = json::object();
  for (const auto& s : ev.subjects) {
    metrics::SubjectOutcome o;
    o.subject = s.id;
    const fs::path auto_dir = s.automated.value_or(layout.apply() / s.id);
    json report;
    if (fs::exists(auto_dir / "report.json")) {
      report = read_json(auto_dir / "report.json", ErrorCode::FormatError);
      run.input(auto_dir / "report.json");
    }
    std::optional<Tractogram> manual_source;
    std::map<ClusterLabel, atlas::NerveMasks> manual_masks;
    if (s.manual_tractogram) {
      manual_source = read_tractogram(*s.manual_tractogram);
      run.input(*s.manual_tractogram);
      for (auto& m : load_masks(s.manual_masks)) manual_masks[m.nerve] = std::move(m);
    }
    json detail = json::object();
    for (ClusterLabel label : ev.table.columns) {
      const std::string name = label_str(label);
      const Tractogram automated = bundle_or_empty(auto_dir / (name + ".tck"));
      bool auto_ok = !automated.empty();
      if (report.is_object()) {
        try {
          auto_ok = report.at("nerves").at(name).at("identified").get<bool>();
        } catch (const json::exception& e) {
          raise(ErrorCode::FormatError, (auto_dir / "report.json").string() + ": " + e.what());
        }
      }
      Tractogram manual;
      if (manual_source) {
        if (auto it = manual_masks.find(label); it != manual_masks.end()) {
          manual = metrics::select_ground_truth(*manual_source, it->second.rois, it->second.roas);
        }
      } else {
        manual = bundle_or_empty(*s.manual / (name + ".tck"));
      }
      o.automated[label] = auto_ok;
      o.manual[label] = !manual.empty();
      json d{{"automated", auto_ok}, {"manual", !manual.empty()}, {"automated_count", automated.size()},
             {"manual_count", manual.size()}};
      if (auto_ok && !manual.empty()) {
        const std::vector<Tractogram> pair{automated, manual};
        const VoxelGrid grid = metrics::grid_for(pair, ev.voxel_mm);
        const double w = metrics::wdice(metrics::voxelize_bundle(automated, grid), metrics::voxelize_bundle(manual, grid));
        o.wdice[label] = w;
        d["wdice"] = w;
      }
      detail[name] = d;
    }
    per_subject[s.id] = detail;
    outcomes.push_back(std::move(o));
  }
  const metrics::IdentificationReport rep = metrics::identification_table(outcomes, ev.table);
  make_dirs(layout.eval());
  const std::vector<std::pair<std::string, std::string>> files = {
      {"table1.txt", rep.table1_text()}, {"table1.csv", rep.table1_csv()}, {"table2.txt", rep.table2_text()},
      {"table2.csv", rep.table2_csv()},
      {"report.json", dump(json{{"tables", rep.to_json()}, {"subjects", per_subject}, {"voxel_mm", ev.voxel_mm}})}};
  for (const auto& [name, text] : files) {
    io::write_file_atomic(layout.eval() / name, text);
    run.output(layout.eval() / name);
  }
  run.details() = json{{"subjects", per_subject}, {"overall_wdice", rep.overall.str()}};
  return run.finish();
}

json cmd_emit_presets(const fs::path& out, const std::vector<TrackingPreset>& presets) {
  for (const auto& p : presets) p.validate();
  if (!out.parent_path().empty()) make_dirs(out.parent_path());
  io::write_file_atomic(out, dump(json{{"format", "cnatlas-tracking-presets"}, {"version", 1}, {"presets", presets_to_json(presets)}}));
  return json{{"command", "emit-presets"}, {"output", out.generic_string()}, {"presets", presets.size()}};
}

json cmd_label_batch(const fs::path& atlas_dir, const fs::path& batch, const LabelBatchOptions& options) {
  const json doc = read_json(batch, ErrorCode::InvalidConfig);
  std::vector<std::pair<std::int64_t, ClusterLabel>> labels;
  try {
    if (!doc.is_object() || doc.size() != 1 || !doc.contains("labels") || !doc["labels"].is_array()) {
      raise(ErrorCode::InvalidConfig, batch.string() + ": expected {\"labels\": [...]}");
    }
    for (const auto& item : doc["labels"]) {
      if (!item.is_object() || item.size() != 2) raise(ErrorCode::InvalidConfig, "label entries need exactly 'cluster' and 'label'");
      const auto label = parse_label(item.at("label").get<std::string>());
      if (!label || *label == ClusterLabel::unlabeled) {
        raise(ErrorCode::InvalidConfig, "unknown label '" + item.at("label").get<std::string>() + "'");
      }
      labels.emplace_back(item.at("cluster").get<std::int64_t>(), *label);
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, batch.string() + ": " + e.what());
  }
  json summary{{"command", "label"}, {"atlas", atlas_dir.generic_string()}};
  apply_labels(atlas_dir, labels, options, summary);
  return summary;
}

json cmd_label_construction(const fs::path& atlas_dir, const fs::path& truth, const LabelBatchOptions& options) {
  const json doc = read_json(truth, ErrorCode::InvalidConfig);
  phantom::TruthLabels labels;
  try {
    for (const auto& [subject, fibers] : doc.items()) {
      auto& m = labels[subject];
      for (const auto& [id, name] : fibers.items()) {
        const auto label = parse_label(name.get<std::string>());
        if (!label) raise(ErrorCode::InvalidConfig, "unknown label '" + name.get<std::string>() + "'");
        m[std::stoll(id)] = *label;
      }
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, truth.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    raise(ErrorCode::InvalidConfig, truth.string() + ": bad fiber id");
  }
  const atlas::Atlas a = io::load_atlas(atlas_dir);
  json summary{{"command", "label"}, {"atlas", atlas_dir.generic_string()}};
  apply_labels(atlas_dir, phantom::construction_labels(a, labels), options, summary);
  return summary;
}

json cmd_phantom(const fs::path& out, const PhantomOptions& options) {
  if (options.subjects < 2) raise(ErrorCode::InvalidArgument, "a phantom cohort needs at least 2 subjects");
  phantom::PhantomConfig pc;
  pc.seed = options.seed;
  const auto training = phantom::make_cohort(pc, options.subjects, true);
  const auto held = options.held_out ? phantom::make_cohort(pc, options.held_out, false, options.subjects)
                                     : std::vector<phantom::PhantomSubject>{};
  for (const char* d : {"subjects", "heldout", "masks", "truth"}) make_dirs(out / d);

  auto write_subject = [&](const phantom::PhantomSubject& s, const fs::path& dir) {
    const std::string& id = s.tractogram.subject_id;
    io::write_tck(s.tractogram, dir / (id + ".tck"));
    make_dirs(out / "truth" / id);
    for (const auto& [label, bundle] : s.truth) io::write_tck(bundle, out / "truth" / id / (label_str(label) + ".tck"));
    io::write_file_atomic(out / "truth" / id / "junk.json", dump(json(s.junk_ids)));
    io::write_file_atomic(out / "truth" / id / "atlas_to_subject.json", dump(transform_json(s.atlas_to_subject)));
  };
  for (const auto& s : training) write_subject(s, out / "subjects");
  for (const auto& s : held) write_subject(s, out / "heldout");

  std::vector<phantom::PhantomSubject> all(training);
  all.insert(all.end(), held.begin(), held.end());
  json truth = json::object();
  for (const auto& [subject, fibers] : phantom::truth_labels(all)) {
    json m = json::object();
    for (const auto& [id, label] : fibers) m[std::to_string(id)] = label_str(label);
    truth[subject] = m;
  }
  io::write_file_atomic(out / "truth" / "labels.json", dump(truth));

  json masks = json::object();
  json columns = json::array();
  for (const auto& nm : phantom::phantom_masks()) {
    json rois = json::array();
    for (std::size_t k = 0; k < nm.rois.size(); ++k) {
      const std::string file = label_str(nm.nerve) + "_roi" + std::to_string(k + 1) + ".nii";
      io::write_nifti_mask(nm.rois[k], out / "masks" / file);
      rois.push_back(file);
    }
    masks[label_str(nm.nerve)] = json{{"rois", rois}, {"roas", json::array()}};
    columns.push_back(label_str(nm.nerve));
  }
  io::write_file_atomic(out / "masks" / "masks.json", dump(masks));

  json eval_subjects = json::array();
  for (const auto& s : held) {
    eval_subjects.push_back(json{{"id", s.tractogram.subject_id}, {"manual", "truth/" + s.tractogram.subject_id}});
  }
  json config{{"output_dir", "run"},
              {"subjects", {"subjects"}},
              {"registration", {{"seed", 1}, {"fibers_per_subject", 100}, {"min_neighbors", 3}}},
              {"stage1", {{"seed", 3}, {"K", 50}, {"sample_per_subject", 500}, {"sigma", 10.0}, {"landmarks", 500}}},
              {"screening", {{"masks", "masks/masks.json"}}},
              {"stage2", {{"seed", 4}, {"K", 10}, {"sigma", 5.0}, {"landmarks", 500}}}};
  if (!held.empty()) {
    config["apply"] = {{"subjects", {"heldout"}},
                       {"registration", {{"seed", 5}, {"fibers_per_subject", 100}, {"min_neighbors", 3}}}};
    config["eval"] = {{"dataset", "Phantom"}, {"columns", columns}, {"subjects", eval_subjects}};
  }
  io::write_file_atomic(out / "pipeline.json", dump(config));
  return json{{"command", "phantom"}, {"output", out.generic_string()}, {"subjects", training.size()},
              {"held_out", held.size()}, {"config", (out / "pipeline.json").generic_string()}};
}

}  // namespace cnatlas::pipeline
