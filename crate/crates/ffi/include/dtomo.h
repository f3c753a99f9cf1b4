#ifndef DTOMO_H
#define DTOMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum DtMethod {
  DT_METHOD_CTG = 0,
  DT_METHOD_STD = 1,
  DT_METHOD_CTG_BB = 2,
  DT_METHOD_STD_BB = 3,
} DtMethod;

typedef enum DtSolveStatus {
  DT_SOLVE_STATUS_OPTIMAL = 0,
  DT_SOLVE_STATUS_GAP = 1,
  DT_SOLVE_STATUS_BOUND_ONLY = 2,
  DT_SOLVE_STATUS_INFEASIBLE = 3,
  DT_SOLVE_STATUS_TIMEOUT = 4,
} DtSolveStatus;

/**
 * Status code of every fallible call.
 */
typedef enum DtStatus {
  DT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DT_STATUS_NULL_POINTER = 1,
  DT_STATUS_IO = 2,
  DT_STATUS_PARSE = 3,
  DT_STATUS_VALIDATION = 4,
  DT_STATUS_INVALID_ARGUMENT = 5,
  /**
   * The caller's buffer is too small; the required length was written.
   */
  DT_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * The requested value does not exist (e.g. no primal labeling).
   */
  DT_STATUS_NOT_AVAILABLE = 7,
  /**
   * An internal panic was caught.
   */
  DT_STATUS_PANIC = 8,
} DtStatus;

/**
 * Opaque problem instance.
 */
typedef struct DtInstance DtInstance;

/**
 * Opaque solve result.
 */
typedef struct DtResult DtResult;

/**
 * Solver options; initialize with [`dt_solve_options_default`].
 */
typedef struct DtSolveOptions {
  uint32_t max_iters;
  /**
   * Wall-clock limit in seconds; `<= 0` means none.
   */
  double time_limit_seconds;
  /**
   * Non-zero for sequential, bit-reproducible runs.
   */
  int32_t deterministic;
  /**
   * Non-zero to keep iterating after the gap is closed.
   */
  int32_t no_early_stop;
} DtSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next `dt_*` call on the same thread.
 */
const char *dt_last_error_message(void);

/**
 * Loads an instance file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtStatus dt_instance_load(const char *path, struct DtInstance **out);

/**
 * Parses an instance from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtStatus dt_instance_from_json(const char *json, struct DtInstance **out);

/**
 * Generates a random instance. `directions` is a set of the letters
 * `h`, `v`, `d`, `u`. When `ground_truth` is non-null it receives the
 * `width * height` ground-truth labels (row-major).
 *
 * # Safety
 * `directions` must be a NUL-terminated string, `out` a valid pointer and
 * `ground_truth` null or valid for `width * height` writes.
 */
enum DtStatus dt_instance_generate(uint64_t seed,
                                   uint32_t width,
                                   uint32_t height,
                                   uint32_t k,
                                   const char *directions,
                                   uint32_t smoothing,
                                   uint32_t *ground_truth,
                                   struct DtInstance **out);

/**
 * Writes an instance file.
 *
 * # Safety
 * `instance` must be a live handle and `path` a NUL-terminated string.
 */
enum DtStatus dt_instance_save(const struct DtInstance *instance, const char *path);

/**
 * Releases an instance; null is ignored.
 *
 * # Safety
 * `instance` must be null or a handle not yet freed.
 */
void dt_instance_free(struct DtInstance *instance);

/**
 * Grid width, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
uint32_t dt_instance_width(const struct DtInstance *instance);

/**
 * Grid height, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
uint32_t dt_instance_height(const struct DtInstance *instance);

/**
 * Number of labels, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
uint32_t dt_instance_k(const struct DtInstance *instance);

/**
 * Number of rays, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or a live handle.
 */
uint32_t dt_instance_num_rays(const struct DtInstance *instance);

/**
 * Energy of a labeling and whether it meets every ray sum.
 *
 * # Safety
 * `instance` must be a live handle, `labels` valid for `len` reads and
 * `energy`, `feasible` valid pointers.
 */
enum DtStatus dt_instance_evaluate(const struct DtInstance *instance,
                                   const uint32_t *labels,
                                   size_t len,
                                   double *energy,
                                   int32_t *feasible);

/**
 * Fills `options` with the defaults.
 *
 * # Safety
 * `options` must be null or a valid pointer.
 */
void dt_solve_options_default(struct DtSolveOptions *options);

/**
 * Solves an instance. `options` may be null for the defaults. A timeout
 * still yields a result (status `DT_SOLVE_STATUS_TIMEOUT`).
 *
 * # Safety
 * `instance` must be a live handle, `options` null or valid, and `out` a
 * valid pointer.
 */
enum DtStatus dt_solve(const struct DtInstance *instance,
                       enum DtMethod method,
                       const struct DtSolveOptions *options,
                       struct DtResult **out);

/**
 * Releases a result; null is ignored.
 *
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void dt_result_free(struct DtResult *result);

/**
 * Best dual lower bound (`+inf` for infeasible instances, NaN for null).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double dt_result_lower_bound(const struct DtResult *result);

/**
 * Energy of the best feasible labeling.
 *
 * # Safety
 * `result` must be a live handle and `value` a valid pointer.
 */
enum DtStatus dt_result_primal_value(const struct DtResult *result, double *value);

/**
 * 1 when the primal value is proven optimal, else 0.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
int32_t dt_result_certified(const struct DtResult *result);

/**
 * Outcome class; `DT_SOLVE_STATUS_BOUND_ONLY` for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
enum DtSolveStatus dt_result_status(const struct DtResult *result);

/**
 * Ascent iterations (root iterations for branch and bound).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
uint32_t dt_result_iterations(const struct DtResult *result);

/**
 * Copies the best labeling into `buffer`. `written` always receives the
 * labeling length; with a too-small buffer nothing is copied and
 * `DT_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `result` must be a live handle, `buffer` null or valid for `len` writes
 * and `written` a valid pointer.
 */
enum DtStatus dt_result_labeling(const struct DtResult *result,
                                 uint32_t *buffer,
                                 size_t len,
                                 size_t *written);

/**
 * The result record as JSON; release with [`dt_string_free`]. Null on
 * failure.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
char *dt_result_to_json(const struct DtResult *result);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void dt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTOMO_H */
