#ifndef GATT_H
#define GATT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GattStatus {
  GattStatus_Ok = 0,
  GattStatus_NullArgument = 1,
  GattStatus_InvalidUtf8 = 2,
  GattStatus_InvalidConfiguration = 3,
  GattStatus_InvalidData = 4,
  GattStatus_EmptyConditioningStratum = 5,
  GattStatus_ContinuousTreatment = 6,
  GattStatus_NumericalFailure = 7,
  GattStatus_Io = 8,
  GattStatus_OutOfRange = 9,
  GattStatus_Panic = 99,
} GattStatus;

typedef enum GattFamily {
  GattFamily_Binomial = 0,
  GattFamily_Gaussian = 1,
} GattFamily;

/**
 * A longitudinal dataset.
 */
typedef struct GattFrame GattFrame;

/**
 * Estimates from one call to [`gatt_estimate`], one entry per estimator.
 */
typedef struct GattResults GattResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *gatt_last_error(void);

/**
 * Library version as a static string.
 */
const char *gatt_version(void);

/**
 * Reads a CSV with `L<t>_<name>`, `A<t>` and `Y` columns.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GattStatus gatt_frame_from_csv(const char *path,
                                    enum GattFamily family,
                                    struct GattFrame **out);

/**
 * Draws `n` units from a built-in law given as JSON, e.g. `{"kind":"sim1"}`.
 *
 * # Safety
 * `dgp_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GattStatus gatt_frame_simulate(const char *dgp_json,
                                    uintptr_t n,
                                    uint64_t seed,
                                    struct GattFrame **out);

/**
 * # Safety
 * `frame` must come from this library or be null.
 */
uintptr_t gatt_frame_n(const struct GattFrame *frame);

/**
 * # Safety
 * `frame` must come from this library or be null.
 */
uintptr_t gatt_frame_tau(const struct GattFrame *frame);

/**
 * # Safety
 * `frame` must come from this library or be null; it is invalid afterwards.
 */
void gatt_frame_free(struct GattFrame *frame);

/**
 * Runs the estimators of a task given as JSON (policy and conditioning
 * listed per time point).
 *
 * # Safety
 * `frame` must come from this library, `task_json` must be a NUL-terminated
 * string and `out` a valid pointer.
 */
enum GattStatus gatt_estimate(const struct GattFrame *frame,
                              const char *task_json,
                              struct GattResults **out);

/**
 * # Safety
 * `results` must come from this library or be null.
 */
uintptr_t gatt_results_len(const struct GattResults *results);

/**
 * Point estimate, standard error (NaN when the estimator has none) and 95%
 * interval bounds (NaN likewise) of entry `index`.
 *
 * # Safety
 * `results` must come from this library; the out pointers must be valid.
 */
enum GattStatus gatt_results_get(const struct GattResults *results,
                                 uintptr_t index,
                                 double *theta,
                                 double *se,
                                 double *ci_lower,
                                 double *ci_upper);

/**
 * All results as a JSON array. Release the string with [`gatt_string_free`].
 *
 * # Safety
 * `results` must come from this library and `out` be a valid pointer.
 */
enum GattStatus gatt_results_json(const struct GattResults *results, char **out);

/**
 * # Safety
 * `results` must come from this library or be null.
 */
void gatt_results_free(struct GattResults *results);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void gatt_string_free(char *s);

/**
 * Monte-Carlo truth for a truth config given as JSON.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; the out pointers must be valid.
 */
enum GattStatus gatt_true_gatt(const char *config_json, double *theta, double *mc_se);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GATT_H */
