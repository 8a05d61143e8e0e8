/* C interface to the gist-detector library. Generated by cbindgen; do not edit. */

#ifndef GIST_FFI_H
#define GIST_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call.
 */
typedef enum GdStatus {
  /**
   * Success.
   */
  GD_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  GD_STATUS_NULL_ARG = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GD_STATUS_INVALID_UTF8 = 2,
  /**
   * The operation failed; gd_last_error() describes why.
   */
  GD_STATUS_FAIL = 3,
} GdStatus;

/**
 * Opaque handle to one document's gist weights.
 */
typedef struct GdGist GdGist;

/**
 * Opaque handle to a loaded gist detector.
 */
typedef struct GdStudent GdStudent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gd_version(void);

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gd_last_error(void);

/**
 * Load a gist-detector checkpoint. On success `*out` owns the handle;
 * release it with `gd_student_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GdStatus gd_student_load(const char *path, struct GdStudent **out);

/**
 * Release a handle from `gd_student_load`. NULL is a no-op.
 *
 * # Safety
 * `student` must be NULL or a pointer from `gd_student_load` not yet freed.
 */
void gd_student_free(struct GdStudent *student);

/**
 * Tokenize `text` and run the gist detector; `*out` receives a handle to
 * the resulting per-token weight distribution.
 *
 * # Safety
 * `student` must be a live handle, `text` a NUL-terminated string, and
 * `out` valid for writes.
 */
enum GdStatus gd_gist_infer(const struct GdStudent *student, const char *text, struct GdGist **out);

/**
 * Number of tokens (= number of weights) in a gist result. NULL gives 0.
 *
 * # Safety
 * `gist` must be NULL or a live handle from `gd_gist_infer`.
 */
size_t gd_gist_len(const struct GdGist *gist);

/**
 * Copy the weight distribution into `out`, which must hold at least
 * `gd_gist_len` doubles (`cap` says how many it holds).
 *
 * # Safety
 * `gist` must be a live handle; `out` must be valid for `cap` writes.
 */
enum GdStatus gd_gist_weights(const struct GdGist *gist, double *out, size_t cap);

/**
 * Token `i` as a NUL-terminated string owned by the handle, or NULL when
 * out of range. Valid until `gd_gist_free`.
 *
 * # Safety
 * `gist` must be NULL or a live handle from `gd_gist_infer`.
 */
const char *gd_gist_token(const struct GdGist *gist, size_t i);

/**
 * Render the gist result as a self-contained HTML heatmap. `*out` receives
 * a string to release with `gd_string_free`.
 *
 * # Safety
 * `gist` must be a live handle; `out` must be valid for writes.
 */
enum GdStatus gd_gist_heatmap_html(const struct GdGist *gist, char **out);

/**
 * Release a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string pointer returned by this library, not yet
 * freed.
 */
void gd_string_free(char *s);

/**
 * Release a gist handle. NULL is a no-op.
 *
 * # Safety
 * `gist` must be NULL or a pointer from `gd_gist_infer` not yet freed.
 */
void gd_gist_free(struct GdGist *gist);

/**
 * Blend extraction-style scores with gist weights:
 * out_i = (1 - lambda) * base_i + lambda * gist_i. All three arrays hold
 * `len` doubles; `lambda` must lie in [0, 1].
 *
 * # Safety
 * `base`, `gist`, and `out` must be valid for `len` reads/writes.
 */
enum GdStatus gd_blend_scores(const double *base,
                              const double *gist,
                              size_t len,
                              double lambda,
                              double *out);

/**
 * Blend a context vector with the gist-weighted sum of per-position
 * representations: out = (1 - lambda) * v + lambda * sum_i w_i * reps_i.
 * `v` and `out` hold `dim` doubles; `weights` holds `m`; `reps` is m*dim
 * doubles, row-major.
 *
 * # Safety
 * All pointers must be valid for the lengths described above.
 */
enum GdStatus gd_blend_context(const double *v,
                               size_t dim,
                               const double *weights,
                               size_t m,
                               const double *reps,
                               double lambda,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GIST_FFI_H */
