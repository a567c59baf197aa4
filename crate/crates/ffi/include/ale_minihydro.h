#ifndef ALE_MINIHYDRO_H
#define ALE_MINIHYDRO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ALE_OK 0

#define ALE_ERR_NULL -1

#define ALE_ERR_INVALID_ARGUMENT -2

#define ALE_ERR_CONFIG -3

#define ALE_ERR_NUMERICAL -4

#define ALE_ERR_IO -5

#define ALE_ERR_BUFFER_TOO_SMALL -6

#define ALE_ERR_PANIC -7

/**
 * Run configuration; starts from the defaults.
 */
typedef struct AleConfig AleConfig;

/**
 * Result of a completed run.
 */
typedef struct AleRun AleRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ale_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the length the full message needs,
 * including the terminator.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t ale_last_error(char *buf, size_t len);

/**
 * New configuration with default values. Free with `ale_config_free`.
 */
struct AleConfig *ale_config_new(void);

/**
 * # Safety
 * `cfg` must be NULL or a handle from `ale_config_new` not yet freed.
 */
void ale_config_free(struct AleConfig *cfg);

/**
 * Set one key using the command-line flag name, e.g. `"remap-every"`.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
int32_t ale_config_set(struct AleConfig *cfg, const char *key, const char *value);

/**
 * Apply a key=value configuration file.
 *
 * # Safety
 * `cfg` must be a live handle; `path` a NUL-terminated string.
 */
int32_t ale_config_load(struct AleConfig *cfg, const char *path);

/**
 * Execute the run. On success `*out` receives a handle to free with
 * `ale_run_free`; on failure it is set to NULL.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
int32_t ale_run(const struct AleConfig *cfg, struct AleRun **out);

/**
 * # Safety
 * `run` must be NULL or a handle from `ale_run` not yet freed.
 */
void ale_run_free(struct AleRun *run);

/**
 * Completed cycles, remaps and the final time.
 *
 * # Safety
 * `run` must be a live handle; output pointers may be NULL.
 */
int32_t ale_run_summary(const struct AleRun *run, size_t *cycles, size_t *remaps, double *time);

/**
 * Relative mass and total-energy drift over the run.
 *
 * # Safety
 * `run` must be a live handle; output pointers may be NULL.
 */
int32_t ale_run_conservation(const struct AleRun *run, double *mass_drift, double *energy_drift);

/**
 * Copy a final-state field (`"x"`, `"v"`, `"e"`, `"rho_detj"`) into `buf`.
 * `*needed` receives the field length; `ALE_ERR_BUFFER_TOO_SMALL` is
 * returned when `len` is shorter. Pass `buf = NULL` to query the length.
 *
 * # Safety
 * `run` must be a live handle, `name` NUL-terminated, `buf` NULL or
 * `len` writable doubles, `needed` NULL or valid.
 */
int32_t ale_run_field(const struct AleRun *run,
                      const char *name,
                      double *buf,
                      size_t len,
                      size_t *needed);

/**
 * Write `cycles.csv`, `remaps.json`, `summary.json` and `state.bin` to `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` NUL-terminated.
 */
int32_t ale_run_write(const struct AleRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALE_MINIHYDRO_H */
