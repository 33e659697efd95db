#include "cnatlas/cnatlas.h"

#include <exception>
#include <new>
#include <string>

#include "cnatlas/atlas/atlas.hpp"
#include "cnatlas/core/error.hpp"
#include "cnatlas/core/parallel.hpp"
#include "cnatlas/io/atlas_store.hpp"
#include "cnatlas/pipeline/commands.hpp"
#include "cnatlas/service/review_service.hpp"
#include "cnatlas/version.hpp"

struct cnatlas_tractogram {
  cnatlas::Tractogram value;
};

struct cnatlas_atlas {
  cnatlas::atlas::Atlas value;
};

namespace {

using nlohmann::json;
namespace pl = cnatlas::pipeline;

thread_local std::string g_error;
thread_local std::string g_result;

static_assert(static_cast<int>(cnatlas::ErrorCode::GridMismatch) + 1 == CNATLAS_E_GRID_MISMATCH,
              "status codes must track ErrorCode");

int status_of(cnatlas::ErrorCode code) { return static_cast<int>(code) + 1; }

template <typename F>
int guarded(F&& body) {
  g_error.clear();
  try {
    body();
    return CNATLAS_OK;
  } catch (const cnatlas::Error& e) {
    g_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return CNATLAS_E_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return CNATLAS_E_INTERNAL;
  } catch (...) {
    g_error = "unknown failure";
    return CNATLAS_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) cnatlas::raise(cnatlas::ErrorCode::InvalidArgument, what);
}

void publish(const json& j, const char** out) {
  if (out == nullptr) return;
  g_result = j.dump(2);
  *out = g_result.c_str();
}

json parse_overrides(const char* overrides) {
  if (overrides == nullptr || *overrides == '\0') return json::object();
  try {
    return json::parse(overrides);
  } catch (const json::exception& e) {
    cnatlas::raise(cnatlas::ErrorCode::InvalidConfig, std::string("overrides: ") + e.what());
  }
}

template <typename F>
int run_with_config(const char* config, const char* overrides, const char** result, F&& command) {
  return guarded([&] {
    require(config != nullptr, "config path is NULL");
    const pl::PipelineConfig cfg = pl::load_pipeline_config(config, parse_overrides(overrides));
    publish(command(cfg), result);
  });
}

pl::LabelBatchOptions label_options(const char* rater, const char* timestamp, const char* fallback_rater) {
  pl::LabelBatchOptions o;
  o.rater = (rater != nullptr && *rater != '\0') ? rater : fallback_rater;
  if (timestamp != nullptr) o.timestamp = timestamp;
  return o;
}

}  // namespace

extern "C" {

const char* cnatlas_version(void) { return cnatlas::kVersion; }

const char* cnatlas_last_error(void) { return g_error.c_str(); }

const char* cnatlas_status_name(int status) {
  if (status == CNATLAS_OK) return "Ok";
  if (status == CNATLAS_E_INTERNAL) return "Internal";
  if (status >= CNATLAS_E_INVALID_ARGUMENT && status <= CNATLAS_E_GRID_MISMATCH) {
    return cnatlas::error_code_name(static_cast<cnatlas::ErrorCode>(status - 1)).data();
  }
  return "Unknown";
}

int cnatlas_exit_code(int status) {
  if (status == CNATLAS_OK) return pl::kExitOk;
  if (status >= CNATLAS_E_INVALID_ARGUMENT && status <= CNATLAS_E_GRID_MISMATCH) {
    return pl::exit_code_for(static_cast<cnatlas::ErrorCode>(status - 1));
  }
  return 1;
}

int cnatlas_set_workers(int workers) {
  return guarded([&] {
    require(workers >= 1, "worker count must be >= 1");
    cnatlas::set_worker_count(workers);
  });
}

int cnatlas_workers(void) { return cnatlas::worker_count(); }

int cnatlas_tractogram_read(const char* path, cnatlas_tractogram** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    auto* t = new cnatlas_tractogram{pl::read_tractogram(path)};
    *out = t;
  });
}

int cnatlas_tractogram_write(const cnatlas_tractogram* t, const char* path) {
  return guarded([&] {
    require(t != nullptr && path != nullptr, "NULL argument");
    pl::write_tractogram(t->value, path);
  });
}

void cnatlas_tractogram_free(cnatlas_tractogram* t) { delete t; }

int cnatlas_tractogram_size(const cnatlas_tractogram* t, size_t* out) {
  return guarded([&] {
    require(t != nullptr && out != nullptr, "NULL argument");
    *out = t->value.size();
  });
}

int cnatlas_tractogram_stats_get(const cnatlas_tractogram* t, cnatlas_tractogram_stats* out) {
  return guarded([&] {
    require(t != nullptr && out != nullptr, "NULL argument");
    const auto s = pl::tractogram_stats(t->value);
    *out = {s.streamlines, s.points, s.min_length_mm, s.mean_length_mm, s.max_length_mm};
  });
}

int cnatlas_atlas_load(const char* dir, cnatlas_atlas** out) {
  return guarded([&] {
    require(dir != nullptr && out != nullptr, "NULL argument");
    *out = new cnatlas_atlas{cnatlas::io::load_atlas(dir)};
  });
}

void cnatlas_atlas_free(cnatlas_atlas* a) { delete a; }

int cnatlas_atlas_cluster_count(const cnatlas_atlas* a, size_t* out) {
  return guarded([&] {
    require(a != nullptr && out != nullptr, "NULL argument");
    *out = a->value.clusters.size();
  });
}

int cnatlas_atlas_summary(const cnatlas_atlas* a, const char** out) {
  return guarded([&] {
    require(a != nullptr && out != nullptr, "NULL argument");
    g_result = cnatlas::atlas::format_group_counts(cnatlas::atlas::group_counts(a->value));
    *out = g_result.c_str();
  });
}

int cnatlas_run_convert(const char* const* inputs, size_t n_inputs, const char* out, const char* format,
                        const char** result_json) {
  return guarded([&] {
    require(out != nullptr && (inputs != nullptr || n_inputs == 0), "NULL argument");
    std::vector<std::filesystem::path> in;
    for (size_t i = 0; i < n_inputs; ++i) {
      require(inputs[i] != nullptr, "NULL input path");
      in.emplace_back(inputs[i]);
    }
    pl::ConvertFormat to = pl::ConvertFormat::by_extension;
    const std::string f = format ? format : "";
    if (f == "tck") to = pl::ConvertFormat::tck;
    else if (f == "vtk") to = pl::ConvertFormat::vtk;
    else require(f.empty(), "format must be 'tck' or 'vtk'");
    publish(pl::cmd_convert(in, out, to), result_json);
  });
}

int cnatlas_run_register(const char* config, const char* overrides_json, const char** result_json) {
  return run_with_config(config, overrides_json, result_json, [](const auto& c) { return pl::cmd_register(c); });
}

int cnatlas_run_build_atlas(const char* config, int stage, const char* overrides_json, const char** result_json) {
  return run_with_config(config, overrides_json, result_json,
                         [stage](const auto& c) { return pl::cmd_build_atlas(c, stage); });
}

int cnatlas_run_screen_roi(const char* config, const char* overrides_json, const char** result_json) {
  return run_with_config(config, overrides_json, result_json, [](const auto& c) { return pl::cmd_screen_roi(c); });
}

int cnatlas_run_apply(const char* config, const char* overrides_json, const char** result_json) {
  return run_with_config(config, overrides_json, result_json, [](const auto& c) { return pl::cmd_apply(c); });
}

int cnatlas_run_eval(const char* config, const char* overrides_json, const char** result_json) {
  return run_with_config(config, overrides_json, result_json, [](const auto& c) { return pl::cmd_eval(c); });
}

int cnatlas_emit_presets(const char* out_path, const char* config, const char** result_json) {
  return guarded([&] {
    require(out_path != nullptr, "NULL output path");
    if (config != nullptr && *config != '\0') {
      publish(pl::cmd_emit_presets(out_path, pl::load_pipeline_config(config).presets), result_json);
    } else {
      publish(pl::cmd_emit_presets(out_path), result_json);
    }
  });
}

int cnatlas_phantom(const char* out_dir, uint64_t seed, size_t subjects, size_t held_out, const char** result_json) {
  return guarded([&] {
    require(out_dir != nullptr, "NULL output directory");
    publish(pl::cmd_phantom(out_dir, pl::PhantomOptions{seed, subjects, held_out}), result_json);
  });
}

int cnatlas_label_batch(const char* atlas_dir, const char* batch_path, const char* rater, const char* timestamp,
                        const char** result_json) {
  return guarded([&] {
    require(atlas_dir != nullptr && batch_path != nullptr, "NULL argument");
    publish(pl::cmd_label_batch(atlas_dir, batch_path, label_options(rater, timestamp, "batch")), result_json);
  });
}

int cnatlas_label_construction(const char* atlas_dir, const char* truth_path, const char* rater,
                               const char* timestamp, const char** result_json) {
  return guarded([&] {
    require(atlas_dir != nullptr && truth_path != nullptr, "NULL argument");
    publish(pl::cmd_label_construction(atlas_dir, truth_path, label_options(rater, timestamp, "construction")),
            result_json);
  });
}

int cnatlas_serve(const char* atlas_dir, const char* host, int port, const char* cors_origin,
                  cnatlas_ready_fn on_ready, void* user) {
  return guarded([&] {
    require(port >= 0 && port <= 65535, "port out of range");
    cnatlas::service::ServiceOptions o;
    if (host != nullptr && *host != '\0') o.host = host;
    if (cors_origin != nullptr && *cors_origin != '\0') o.cors_origin = cors_origin;
    o.port = port;
    cnatlas::service::ReviewService svc(atlas_dir ? atlas_dir : "", o);
    const int bound = svc.bind();
    if (on_ready != nullptr) on_ready(bound, user);
    svc.run();
  });
}

}  // extern "C"
