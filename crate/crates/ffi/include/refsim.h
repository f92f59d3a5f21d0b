#ifndef REFSIM_H
#define REFSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum refsim_status {
  REFSIM_OK = 0,
  /**
   * A required pointer argument was null.
   */
  REFSIM_NULL_ARGUMENT = 1,
  /**
   * The configuration is invalid; details via `refsim_last_error_message`.
   */
  REFSIM_INVALID_CONFIG = 2,
  /**
   * The simulation failed at runtime.
   */
  REFSIM_RUNTIME_ERROR = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  REFSIM_INVALID_UTF8 = 4,
  /**
   * Writing an output file failed.
   */
  REFSIM_IO_ERROR = 5,
} refsim_status;

/**
 * Scenario configuration handle.
 */
typedef struct refsim_config refsim_config;

/**
 * A finished closed-loop run.
 */
typedef struct refsim_run refsim_run;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the calling thread's most recent error. The pointer stays valid
 * until the next failing call on the same thread. Never null.
 */
const char *refsim_last_error_message(void);

/**
 * Creates a configuration with the built-in defaults.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum refsim_status refsim_config_default(struct refsim_config **out);

/**
 * Parses a configuration from TOML text.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` writable.
 */
enum refsim_status refsim_config_from_toml(const char *text, struct refsim_config **out);

/**
 * Selects the controller: "pi", "linear", "greedy", or "oracle".
 *
 * # Safety
 * `config` must be a live handle from this library; `controller` a valid
 * NUL-terminated string.
 */
enum refsim_status refsim_config_set_controller(struct refsim_config *config,
                                                const char *controller);

/**
 * Sets the run duration in seconds.
 *
 * # Safety
 * `config` must be a live handle from this library.
 */
enum refsim_status refsim_config_set_duration_s(struct refsim_config *config, double duration_s);

/**
 * Sets the food-mass perturbation seed.
 *
 * # Safety
 * `config` must be a live handle from this library.
 */
enum refsim_status refsim_config_set_seed(struct refsim_config *config, uint64_t seed);

/**
 * Releases a configuration handle. Null is ignored.
 *
 * # Safety
 * `config` must be null or a live handle; it must not be used afterwards.
 */
void refsim_config_free(struct refsim_config *config);

/**
 * Runs the configured closed loop and returns a run handle.
 *
 * # Safety
 * `config` must be a live handle and `out` writable.
 */
enum refsim_status refsim_run_closed_loop(const struct refsim_config *config,
                                          struct refsim_run **out);

/**
 * Average electrical power of the run in watts.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
double refsim_run_average_power_w(const struct refsim_run *run);

/**
 * Compressor switchings counted at control-period boundaries.
 *
 * # Safety
 * `run` must be a live handle from this library.
 */
uint32_t refsim_run_switching_count(const struct refsim_run *run);

/**
 * Serializes the run's metrics as a JSON string owned by the caller; release
 * it with `refsim_string_free`.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum refsim_status refsim_run_metrics_json(const struct refsim_run *run, char **out);

/**
 * Writes the run's trajectory CSV to `path`. With `every_step` false, one
 * row per control period is written.
 *
 * # Safety
 * `run` must be a live handle and `path` a valid NUL-terminated string.
 */
enum refsim_status refsim_run_write_trajectory_csv(const struct refsim_run *run,
                                                   const char *path,
                                                   bool every_step);

/**
 * Releases a run handle. Null is ignored.
 *
 * # Safety
 * `run` must be null or a live handle; it must not be used afterwards.
 */
void refsim_run_free(struct refsim_run *run);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string obtained from this library, not yet freed.
 */
void refsim_string_free(char *s);

/**
 * Evaporation temperature of R134a in °C at the given suction pressure in bar.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one double.
 */
enum refsim_status refsim_evaporation_temperature_c(double p_suc_bar, double *out);

/**
 * Evaporation enthalpy of R134a [J/kg].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one double.
 */
enum refsim_status refsim_evaporation_enthalpy_j_per_kg(double p_suc_bar, double *out);

/**
 * Suction vapor density of R134a [kg/m³].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one double.
 */
enum refsim_status refsim_suction_density_kg_per_m3(double p_suc_bar, double *out);

/**
 * Density-pressure gradient of R134a [kg/(m³·bar)].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one double.
 */
enum refsim_status refsim_density_pressure_gradient(double p_suc_bar, double *out);

/**
 * Compressor specific power of R134a [J/m³].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one double.
 */
enum refsim_status refsim_compressor_specific_power_j_per_m3(double p_suc_bar, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFSIM_H */
