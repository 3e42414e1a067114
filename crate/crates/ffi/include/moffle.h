#ifndef MOFFLE_H
#define MOFFLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum MoffleStatus {
  MOFFLE_STATUS_OK = 0,
  MOFFLE_STATUS_NULL_POINTER = 1,
  MOFFLE_STATUS_INVALID_UTF8 = 2,
  MOFFLE_STATUS_INVALID_CONFIG = 3,
  MOFFLE_STATUS_INVALID_ARGUMENT = 4,
  MOFFLE_STATUS_IO = 5,
  MOFFLE_STATUS_PARSE = 6,
  MOFFLE_STATUS_GENERATION_FAILED = 7,
  MOFFLE_STATUS_NUMERICAL = 8,
  MOFFLE_STATUS_PANIC = 9,
} MoffleStatus;

// Experiment configuration.
typedef struct MoffleConfig MoffleConfig;

// A generated or loaded environment.
typedef struct MoffleEnv MoffleEnv;

// The report of a pipeline run.
typedef struct MoffleReport MoffleReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *moffle_last_error(void);

// Library version as a static NUL-terminated string.
const char *moffle_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void moffle_string_free(char *s);

// Default configuration.
//
// # Safety
// `out` must be a valid pointer.
enum MoffleStatus moffle_config_new(struct MoffleConfig **out);

// Defaults overlaid with a `key = value` file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MoffleStatus moffle_config_load(const char *path, struct MoffleConfig **out);

// Sets one configuration key, with the same syntax as the config file.
//
// # Safety
// `cfg` must be a live configuration; `key` and `value` NUL-terminated.
enum MoffleStatus moffle_config_set(struct MoffleConfig *cfg, const char *key, const char *value);

// The effective configuration as `key = value` text.
//
// # Safety
// `cfg` must be a live configuration and `out` a valid pointer.
enum MoffleStatus moffle_config_to_text(const struct MoffleConfig *cfg, char **out);

// # Safety
// `cfg` must come from this library and not have been freed. Null is
// ignored.
void moffle_config_free(struct MoffleConfig *cfg);

// Generates the environment described by `cfg` from its seed.
//
// # Safety
// `cfg` must be a live configuration and `out` a valid pointer.
enum MoffleStatus moffle_env_generate(const struct MoffleConfig *cfg, struct MoffleEnv **out);

// Parses an environment from its JSON form.
//
// # Safety
// `json` must be NUL-terminated and `out` a valid pointer.
enum MoffleStatus moffle_env_from_json(const char *json, struct MoffleEnv **out);

// JSON form of an environment.
//
// # Safety
// `env` must be a live environment and `out` a valid pointer.
enum MoffleStatus moffle_env_to_json(const struct MoffleEnv *env, char **out);

// Horizon, number of actions and latent dimension. Any output pointer
// may be null.
//
// # Safety
// `env` must be a live environment; non-null outputs must be valid.
enum MoffleStatus moffle_env_shape(const struct MoffleEnv *env,
                                   size_t *horizon,
                                   size_t *actions,
                                   size_t *dim);

// Smallest reachable latent probability under any policy.
//
// # Safety
// `env` must be a live environment and `out` a valid pointer.
enum MoffleStatus moffle_env_eta_min(const struct MoffleEnv *env, double *out);

// # Safety
// `env` must come from this library and not have been freed. Null is
// ignored.
void moffle_env_free(struct MoffleEnv *env);

// Runs the pipeline up to `stage` (`gen-env`, ..., `eval`, `verify` or
// `e2e`). With a null `out_dir` everything stays in memory; otherwise
// artifacts are written there exactly as by the command-line tool.
//
// # Safety
// `cfg` must be a live configuration, `stage` NUL-terminated, `out_dir`
// null or NUL-terminated, and `out` a valid pointer.
enum MoffleStatus moffle_run(const struct MoffleConfig *cfg,
                             const char *stage,
                             const char *out_dir,
                             struct MoffleReport **out);

// Whether every verification check in the report passed (vacuously true
// for stages that run none).
//
// # Safety
// `report` must be a live report and `out` a valid pointer.
enum MoffleStatus moffle_report_passed(const struct MoffleReport *report, bool *out);

// The report as JSON.
//
// # Safety
// `report` must be a live report and `out` a valid pointer.
enum MoffleStatus moffle_report_to_json(const struct MoffleReport *report, char **out);

// The report's `phase,index,metric,value` CSV.
//
// # Safety
// `report` must be a live report and `out` a valid pointer.
enum MoffleStatus moffle_report_metrics_csv(const struct MoffleReport *report, char **out);

// # Safety
// `report` must come from this library and not have been freed. Null is
// ignored.
void moffle_report_free(struct MoffleReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOFFLE_H */
