#ifndef AGRISENSE_H
#define AGRISENSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AgsLocale {
  AGS_LOCALE_EN = 0,
  AGS_LOCALE_LG = 1,
} AgsLocale;

typedef enum AgsStatus {
  AGS_STATUS_OK = 0,
  AGS_STATUS_NULL_POINTER = 1,
  AGS_STATUS_INVALID_UTF8 = 2,
  AGS_STATUS_INVALID_ARGUMENT = 3,
  AGS_STATUS_SCENARIO = 4,
  AGS_STATUS_SIMULATION = 5,
  AGS_STATUS_ALERTING = 6,
  AGS_STATUS_IO = 7,
  AGS_STATUS_BUFFER_TOO_SMALL = 8,
  AGS_STATUS_PANIC = 9,
} AgsStatus;

/**
 * Opaque scenario handle.
 */
typedef struct AgsScenario AgsScenario;

/**
 * Opaque handle to a completed two-arm season.
 */
typedef struct AgsSeasonRun AgsSeasonRun;

/**
 * Season totals plus the headline comparisons derived from them.
 */
typedef struct AgsTotals {
  double water_sensor_l_per_acre;
  double water_baseline_l_per_acre;
  double yield_sensor_kg_per_acre;
  double yield_baseline_kg_per_acre;
  uint64_t events_sensor;
  uint64_t events_baseline;
  double energy_pubsub_mwh;
  double energy_reqresp_mwh;
  double energy_efficiency_pct;
  double delivery_rate;
  double water_reduction_pct;
  double yield_improvement_pct;
  double energy_ratio;
} AgsTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ags_last_error(void);

/**
 * Static, NUL-terminated name for a status code.
 */
const char *ags_status_name(enum AgsStatus status);

/**
 * Bundled default scenario.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum AgsStatus ags_scenario_default(struct AgsScenario **out);

/**
 * Parse a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum AgsStatus ags_scenario_from_toml(const char *toml, struct AgsScenario **out);

/**
 * Load a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum AgsStatus ags_scenario_load(const char *path, struct AgsScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle or NULL.
 */
uint64_t ags_scenario_seed(const struct AgsScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum AgsStatus ags_scenario_set_seed(struct AgsScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a handle from this library, or NULL. It must not be
 * used afterwards.
 */
void ags_scenario_free(struct AgsScenario *scenario);

/**
 * Simulate both arms of a season.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_season_run(const struct AgsScenario *scenario, struct AgsSeasonRun **out);

/**
 * # Safety
 * `run` must be a live handle; `out` must point to writable storage.
 */
enum AgsStatus ags_season_totals(const struct AgsSeasonRun *run, struct AgsTotals *out);

/**
 * Write every run artifact and the manifest into `dir`.
 *
 * # Safety
 * `run` must be a live handle; `dir` a NUL-terminated path.
 */
enum AgsStatus ags_season_write(const struct AgsSeasonRun *run, const char *dir);

/**
 * Aligned-text report as an owned string; free with [`ags_string_free`].
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_season_report_text(const struct AgsSeasonRun *run, char **out);

/**
 * # Safety
 * `run` must be a handle from this library, or NULL.
 */
void ags_season_free(struct AgsSeasonRun *run);

/**
 * Render a message template into `buf`.
 *
 * `names` and `values` are parallel arrays of `count` parameters. On
 * success `*written` is the text length without the NUL. When `buf` is
 * too small nothing is copied, `*written` holds the required length and
 * the call returns `AGS_STATUS_BUFFER_TOO_SMALL`.
 *
 * # Safety
 * `template_id` must be NUL-terminated; `names` and `values` must each
 * hold `count` entries (or be NULL when `count` is 0); `buf` must hold
 * `buf_len` bytes; `written` must be writable.
 */
enum AgsStatus ags_render_message(const char *template_id,
                                  enum AgsLocale locale,
                                  const char *const *names,
                                  const double *values,
                                  size_t count,
                                  char *buf,
                                  size_t buf_len,
                                  size_t *written);

/**
 * Gateway request URL for `text` using the scenario's gateway settings.
 * Free the result with [`ags_string_free`].
 *
 * # Safety
 * `scenario` must be a live handle; `text` NUL-terminated; `out` writable.
 */
enum AgsStatus ags_gateway_request(const struct AgsScenario *scenario,
                                   const char *text,
                                   char **out);

/**
 * # Safety
 * `s` must be a string returned by this library, or NULL.
 */
void ags_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGRISENSE_H */
