#include "cnatlas/pipeline/config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "cnatlas/core/error.hpp"
#include "cnatlas/io/atlas_store.hpp"
#include "cnatlas/io/nifti.hpp"

namespace cnatlas::pipeline {
using nlohmann::json;

namespace {

/// Strict view of one JSON object: every key must be read or the object is
/// rejected by finish().
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) raise(ErrorCode::InvalidConfig, where_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) raise(ErrorCode::InvalidConfig, where_ + " requires '" + key + "'");
    return j_.at(key);
  }

  template <typename T>
  T req(const std::string& key) {
    return convert<T>(key, raw(key));
  }

  template <typename T>
  void opt(const std::string& key, T& out) {
    if (has(key)) out = convert<T>(key, j_.at(key));
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) raise(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where_);
    }
  }

 private:
  template <typename T>
  T convert(const std::string& key, const json& v) const {
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
          throw std::invalid_argument("expected a non-negative integer");
        }
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      }
      return v.get<T>();
    } catch (const std::exception& e) {
      raise(ErrorCode::InvalidConfig, where_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::vector<fs::path> path_list(const json& j, const fs::path& base, const std::string& where) {
  if (!j.is_array()) raise(ErrorCode::InvalidConfig, where + " must be an array of paths");
  std::vector<fs::path> out;
  for (const auto& v : j) {
    if (!v.is_string()) raise(ErrorCode::InvalidConfig, where + " entries must be strings");
    out.push_back(resolve(base, v.get<std::string>()));
  }
  return out;
}

/// Files stay as given; directories contribute their *.tck files sorted by name.
std::vector<fs::path> expand_subjects(const std::vector<fs::path>& entries) {
  std::vector<fs::path> out;
  for (const auto& e : entries) {
    std::error_code ec;
    if (fs::is_directory(e, ec)) {
      std::vector<fs::path> found;
      for (const auto& f : fs::directory_iterator(e)) {
        if (f.is_regular_file() && f.path().extension() == ".tck") found.push_back(f.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(e);
    }
  }
  return out;
}

ClusterLabel nerve_key(const std::string& key, const std::string& where) {
  const auto label = parse_label(key);
  if (!label || !is_nerve(*label)) raise(ErrorCode::InvalidConfig, where + ": '" + key + "' is not a nerve label");
  return *label;
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const fs::path& file) {
  try {
    return json::parse(read_text(file));
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, file.string() + ": " + e.what());
  }
}

apply::ApplyConfig apply_config_from(Section& s) {
  apply::ApplyConfig c;
  c.registration = registration_config_from_json(s.raw("registration"));
  s.opt("min_length_mm", c.min_length_mm);
  s.opt("min_streamlines", c.min_streamlines);
  s.opt("low_confidence_kernel", c.low_confidence_kernel);
  s.opt("outlier_removal", c.outlier_removal);
  c.validate();
  return c;
}

metrics::WdiceInclusion parse_inclusion(const std::string& s) {
  if (s == "per_nerve") return metrics::WdiceInclusion::per_nerve;
  if (s == "complete_subjects") return metrics::WdiceInclusion::complete_subjects;
  raise(ErrorCode::InvalidConfig, "eval.inclusion must be 'per_nerve' or 'complete_subjects'");
}

EvalSection eval_from(const json& j, const fs::path& base) {
  Section s(j, "eval");
  EvalSection e;
  s.opt("dataset", e.dataset);
  e.table.dataset = e.dataset;
  s.opt("voxel_mm", e.voxel_mm);
  if (!(e.voxel_mm > 0.0)) raise(ErrorCode::InvalidConfig, "eval.voxel_mm must be positive");
  s.opt("stratified", e.table.stratified);
  if (s.has("inclusion")) e.table.inclusion = parse_inclusion(s.req<std::string>("inclusion"));
  if (s.has("columns")) {
    e.table.columns.clear();
    for (const auto& v : s.raw("columns")) {
      if (!v.is_string()) raise(ErrorCode::InvalidConfig, "eval.columns entries must be label names");
      e.table.columns.push_back(nerve_key(v.get<std::string>(), "eval.columns"));
    }
    if (e.table.columns.empty()) raise(ErrorCode::InvalidConfig, "eval.columns must not be empty");
  }
  const json& subjects = s.raw("subjects");
  if (!subjects.is_array() || subjects.empty()) raise(ErrorCode::InvalidConfig, "eval.subjects must be a non-empty array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    Section es(subjects[i], "eval.subjects[" + std::to_string(i) + "]");
    EvalSubject sub;
    sub.id = es.req<std::string>("id");
    if (sub.id.empty() || !ids.insert(sub.id).second) {
      raise(ErrorCode::InvalidConfig, es.path("id") + " must be non-empty and unique");
    }
    if (es.has("automated")) sub.automated = resolve(base, es.req<std::string>("automated"));
    if (es.has("manual")) sub.manual = resolve(base, es.req<std::string>("manual"));
    if (es.has("manual_tractogram")) sub.manual_tractogram = resolve(base, es.req<std::string>("manual_tractogram"));
    if (es.has("manual_masks")) {
      const json& m = es.raw("manual_masks");
      sub.manual_masks = m.is_string() ? load_mask_config(resolve(base, m.get<std::string>())) : parse_mask_config(m, base);
    }
    es.finish();
    if (sub.manual.has_value() == sub.manual_tractogram.has_value()) {
      raise(ErrorCode::InvalidConfig, "eval.subjects[" + std::to_string(i) +
                                          "] needs exactly one of 'manual' or 'manual_tractogram'");
    }
    if (sub.manual_tractogram && sub.manual_masks.empty()) {
      raise(ErrorCode::InvalidConfig, "eval.subjects[" + std::to_string(i) + "].manual_tractogram needs manual_masks");
    }
    e.subjects.push_back(std::move(sub));
  }
  s.finish();
  return e;
}

}  // namespace

json registration_config_to_json(const registration::RegistrationConfig& c) {
  return json{{"sigma_schedule", c.sigma_schedule},
              {"points_per_fiber", c.points_per_fiber},
              {"fibers_per_subject", c.fibers_per_subject},
              {"dof", std::string(registration::dof_name(c.dof))},
              {"max_iters_per_level", c.max_iters_per_level},
              {"convergence_tol", c.convergence_tol},
              {"min_step_mm", c.min_step_mm},
              {"seed", c.seed},
              {"min_neighbors", c.min_neighbors},
              {"isolation_radius_mm", c.isolation_radius_mm}};
}

registration::RegistrationConfig registration_config_from_json(const json& j) {
  Section s(j, "registration");
  registration::RegistrationConfig c;
  c.seed = s.req<std::uint64_t>("seed");
  s.opt("sigma_schedule", c.sigma_schedule);
  s.opt("points_per_fiber", c.points_per_fiber);
  s.opt("fibers_per_subject", c.fibers_per_subject);
  if (s.has("dof")) c.dof = registration::parse_dof(s.req<std::string>("dof"));
  s.opt("max_iters_per_level", c.max_iters_per_level);
  s.opt("convergence_tol", c.convergence_tol);
  s.opt("min_step_mm", c.min_step_mm);
  s.opt("min_neighbors", c.min_neighbors);
  s.opt("isolation_radius_mm", c.isolation_radius_mm);
  s.finish();
  c.validate();
  return c;
}

MaskConfig parse_mask_config(const json& j, const fs::path& base) {
  if (!j.is_object() || j.empty()) raise(ErrorCode::InvalidConfig, "mask config must be a non-empty object");
  MaskConfig out;
  for (const auto& [key, value] : j.items()) {
    const ClusterLabel nerve = nerve_key(key, "mask config");
    Section s(value, "masks." + key);
    MaskPaths p;
    p.rois = path_list(s.raw("rois"), base, s.path("rois"));
    if (s.has("roas")) p.roas = path_list(s.raw("roas"), base, s.path("roas"));
    s.finish();
    if (p.rois.empty()) raise(ErrorCode::InvalidConfig, "masks." + key + ".rois must not be empty");
    out[nerve] = std::move(p);
  }
  return out;
}

MaskConfig load_mask_config(const fs::path& file) {
  return parse_mask_config(parse_json_file(file), file.parent_path());
}

std::vector<atlas::NerveMasks> load_masks(const MaskConfig& config) {
  std::vector<atlas::NerveMasks> out;
  for (const auto& [nerve, paths] : config) {
    atlas::NerveMasks m;
    m.nerve = nerve;
    for (const auto& p : paths.rois) m.rois.push_back(io::read_nifti_mask(p));
    for (const auto& p : paths.roas) m.roas.push_back(io::read_nifti_mask(p));
    out.push_back(std::move(m));
  }
  return out;
}

void apply_overrides(json& doc, const json& overrides) {
  if (!overrides.is_object()) raise(ErrorCode::InvalidConfig, "overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    if (key.empty()) raise(ErrorCode::InvalidConfig, "empty override key");
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    try {
      doc[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
      raise(ErrorCode::InvalidConfig, "override '" + key + "': " + e.what());
    }
  }
}

PipelineConfig parse_pipeline_config(const json& doc, const fs::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  c.document = doc;
  Section s(doc, "config");
  c.output_dir = resolve(base_dir, s.req<std::string>("output_dir"));
  if (s.has("workers")) {
    c.workers = s.req<int>("workers");
    if (*c.workers < 1) raise(ErrorCode::InvalidConfig, "config.workers must be >= 1");
  }
  if (s.has("subjects")) c.subjects = expand_subjects(path_list(s.raw("subjects"), base_dir, "config.subjects"));
  if (s.has("registration")) c.registration = registration_config_from_json(s.raw("registration"));
  if (s.has("stage1")) c.stage1 = io::stage_config_from_json(s.raw("stage1"), atlas::AtlasStageConfig::stage1_defaults());
  if (s.has("stage2")) c.stage2 = io::stage_config_from_json(s.raw("stage2"), atlas::AtlasStageConfig::stage2_defaults());
  if (s.has("screening")) {
    Section sc(s.raw("screening"), "screening");
    ScreeningSection scr;
    sc.opt("theta", scr.theta);
    if (!(scr.theta > 0.0 && scr.theta <= 1.0)) raise(ErrorCode::InvalidConfig, "screening.theta must be in (0, 1]");
    const json& m = sc.raw("masks");
    scr.masks = m.is_string() ? load_mask_config(resolve(base_dir, m.get<std::string>())) : parse_mask_config(m, base_dir);
    sc.finish();
    c.screening = std::move(scr);
  }
  if (s.has("apply")) {
    Section ap(s.raw("apply"), "apply");
    ApplySection a;
    if (ap.has("atlas")) a.atlas = resolve(base_dir, ap.req<std::string>("atlas"));
    a.subjects = expand_subjects(path_list(ap.raw("subjects"), base_dir, "apply.subjects"));
    a.config = apply_config_from(ap);
    ap.finish();
    c.apply = std::move(a);
  }
  if (s.has("eval")) c.eval = eval_from(s.raw("eval"), base_dir);
  if (s.has("presets")) c.presets = presets_from_json(s.raw("presets"));
  s.finish();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& file, const json& overrides) {
  json doc = parse_json_file(file);
  apply_overrides(doc, overrides);
  return parse_pipeline_config(doc, fs::absolute(file).parent_path());
}

}  // namespace cnatlas::pipeline
