/* C interface to the cnatlas library. Every function returns a status code
 * (CNATLAS_OK on success); cnatlas_last_error() describes the most recent
 * failure on the calling thread. Handles are opaque and owned by the caller. */
#ifndef CNATLAS_H
#define CNATLAS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CNATLAS_API __declspec(dllexport)
#else
#define CNATLAS_API __attribute__((visibility("default")))
#endif

typedef enum cnatlas_status {
  CNATLAS_OK = 0,
  CNATLAS_E_INVALID_ARGUMENT,
  CNATLAS_E_INVALID_CONFIG,
  CNATLAS_E_DEGENERATE_FIBER,
  CNATLAS_E_POINT_COUNT_MISMATCH,
  CNATLAS_E_SINGULAR_TRANSFORM,
  CNATLAS_E_INVALID_GEOMETRY,
  CNATLAS_E_FORMAT,
  CNATLAS_E_UNSUPPORTED_DATATYPE,
  CNATLAS_E_UNSUPPORTED_VARIANT,
  CNATLAS_E_TRUNCATED_FILE,
  CNATLAS_E_MISSING_AFFINE,
  CNATLAS_E_IO,
  CNATLAS_E_CORRUPT_ATLAS,
  CNATLAS_E_VERSION,
  CNATLAS_E_EMPTY_SUBJECT,
  CNATLAS_E_EMPTY_INPUT,
  CNATLAS_E_NUMERICAL,
  CNATLAS_E_ARITY,
  CNATLAS_E_INVALID_K,
  CNATLAS_E_NOT_FOUND,
  CNATLAS_E_GRID_MISMATCH,
  CNATLAS_E_INTERNAL = 100
} cnatlas_status;

typedef struct cnatlas_tractogram cnatlas_tractogram;
typedef struct cnatlas_atlas cnatlas_atlas;

typedef struct cnatlas_tractogram_stats {
  size_t streamlines;
  size_t points;
  double min_length_mm;
  double mean_length_mm;
  double max_length_mm;
} cnatlas_tractogram_stats;

CNATLAS_API const char* cnatlas_version(void);
/* Message of the last failed call on this thread; "" when none. */
CNATLAS_API const char* cnatlas_last_error(void);
CNATLAS_API const char* cnatlas_status_name(int status);
/* Process exit code for a status: 0 ok, 2 config/format, 3 numerical, 4 I/O. */
CNATLAS_API int cnatlas_exit_code(int status);
CNATLAS_API int cnatlas_set_workers(int workers);
CNATLAS_API int cnatlas_workers(void);

/* .tck or .vtk, chosen by extension. */
CNATLAS_API int cnatlas_tractogram_read(const char* path, cnatlas_tractogram** out);
CNATLAS_API int cnatlas_tractogram_write(const cnatlas_tractogram* t, const char* path);
CNATLAS_API void cnatlas_tractogram_free(cnatlas_tractogram* t);
CNATLAS_API int cnatlas_tractogram_size(const cnatlas_tractogram* t, size_t* out);
CNATLAS_API int cnatlas_tractogram_stats_get(const cnatlas_tractogram* t, cnatlas_tractogram_stats* out);

CNATLAS_API int cnatlas_atlas_load(const char* dir, cnatlas_atlas** out);
CNATLAS_API void cnatlas_atlas_free(cnatlas_atlas* a);
CNATLAS_API int cnatlas_atlas_cluster_count(const cnatlas_atlas* a, size_t* out);
/* Label counts per nerve group, e.g. "CN II (3 clusters), ...". The buffer
 * stays valid until the next call on this thread. */
CNATLAS_API int cnatlas_atlas_summary(const cnatlas_atlas* a, const char** out);

/* Pipeline commands. `overrides_json` is NULL or a JSON object of dotted
 * config keys, e.g. {"registration.seed": 4}. When `result_json` is not NULL
 * it receives the run manifest; the buffer stays valid until the next call
 * on this thread. */
CNATLAS_API int cnatlas_run_convert(const char* const* inputs, size_t n_inputs, const char* out, const char* format,
                                    const char** result_json);
CNATLAS_API int cnatlas_run_register(const char* config, const char* overrides_json, const char** result_json);
CNATLAS_API int cnatlas_run_build_atlas(const char* config, int stage, const char* overrides_json,
                                        const char** result_json);
CNATLAS_API int cnatlas_run_screen_roi(const char* config, const char* overrides_json, const char** result_json);
CNATLAS_API int cnatlas_run_apply(const char* config, const char* overrides_json, const char** result_json);
CNATLAS_API int cnatlas_run_eval(const char* config, const char* overrides_json, const char** result_json);
CNATLAS_API int cnatlas_emit_presets(const char* out_path, const char* config, const char** result_json);
CNATLAS_API int cnatlas_phantom(const char* out_dir, uint64_t seed, size_t subjects, size_t held_out,
                                const char** result_json);
/* `timestamp` NULL or "" uses the wall clock. */
CNATLAS_API int cnatlas_label_batch(const char* atlas_dir, const char* batch_path, const char* rater,
                                    const char* timestamp, const char** result_json);
CNATLAS_API int cnatlas_label_construction(const char* atlas_dir, const char* truth_path, const char* rater,
                                           const char* timestamp, const char** result_json);

/* Serves the review API until the process ends. `on_ready` (may be NULL) is
 * called with the bound port once the listener is up; port 0 picks one. */
typedef void (*cnatlas_ready_fn)(int port, void* user);
CNATLAS_API int cnatlas_serve(const char* atlas_dir, const char* host, int port, const char* cors_origin,
                              cnatlas_ready_fn on_ready, void* user);

#ifdef __cplusplus
}
#endif

#endif /* CNATLAS_H */
