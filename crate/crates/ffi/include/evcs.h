/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef EVCS_H
#define EVCS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EVCS_METHOD_SG_ADMM 0

#define EVCS_METHOD_ADMM 1

#define EVCS_METHOD_CENTRALIZED 2

#define EVCS_METHOD_UNCONTROLLED 3

typedef enum EvcsStatus {
  EVCS_STATUS_OK = 0,
  EVCS_STATUS_NULL_POINTER = 1,
  EVCS_STATUS_INVALID_ARGUMENT = 2,
  EVCS_STATUS_INFEASIBLE = 3,
  EVCS_STATUS_PARSE = 4,
  EVCS_STATUS_IO = 5,
  EVCS_STATUS_SOLVER = 6,
  EVCS_STATUS_PANIC = 7,
} EvcsStatus;

/**
 * Station configuration.
 */
typedef struct EvcsConfig EvcsConfig;

/**
 * Stateful per-step controller.
 */
typedef struct EvcsController EvcsController;

/**
 * Scenario: sessions, PV and prices for one or more days.
 */
typedef struct EvcsScenario EvcsScenario;

/**
 * Result of one simulated run, with the schedule and configuration it used.
 */
typedef struct EvcsTrace EvcsTrace;

typedef struct EvcsDispatch {
  double p_grid;
  double p_bess;
  double gcp_violation;
  double reroute;
  bool crate_clipped;
} EvcsDispatch;

typedef struct EvcsMetrics {
  uint64_t minutes;
  uint64_t sessions;
  double energy_requested_kwh;
  double energy_delivered_kwh;
  double net_profit;
  double incentives_paid;
  double fairness_gini;
  double wear_per_day;
  uint64_t gcp_violation_minutes;
  uint64_t coupling_violation_minutes;
  uint64_t nonconverged_steps;
  uint64_t max_sg_iterations;
  double mean_controller_ms;
} EvcsMetrics;

/**
 * One connected vehicle for a controller step.
 */
typedef struct EvcsVehicle {
  uint32_t id;
  uint32_t column;
  /**
   * Requested power (kW).
   */
  double p_req;
  /**
   * Deliverable power this step (kW).
   */
  double p_max;
  /**
   * Peak of the vehicle's charging curve (kW).
   */
  double p_ref;
} EvcsVehicle;

typedef struct EvcsSlice {
  double c_budget;
  double p_bess_setpoint;
  double d_cap;
  double s_min;
  double s_max;
  double tariff_ev;
  double price_dam;
  double price_short;
  double price_long;
  double p_dp;
} EvcsSlice;

typedef struct EvcsStepInfo {
  double slack;
  double lambda;
  uint64_t admm_iterations;
  uint64_t sg_iterations;
  bool converged;
  bool feasible;
  bool fallback_scan;
} EvcsStepInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *evcs_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *evcs_last_error(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void evcs_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum EvcsStatus evcs_config_default(struct EvcsConfig **out);

/**
 * Parses and validates a JSON configuration; missing keys take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EvcsStatus evcs_config_from_json(const char *json, struct EvcsConfig **out);

/**
 * Serializes a configuration; release the string with `evcs_string_free`.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum EvcsStatus evcs_config_to_json(const struct EvcsConfig *config, char **out);

/**
 * # Safety
 * `config` must come from this library and not be freed twice.
 */
void evcs_config_free(struct EvcsConfig *config);

/**
 * Gini index of non-negative values.
 *
 * # Safety
 * `values` must point to `len` doubles and `out` must be valid.
 */
enum EvcsStatus evcs_gini(const double *values, size_t len, double *out);

/**
 * One real-time dispatch of grid, battery and PV for the configured station.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum EvcsStatus evcs_dispatch(const struct EvcsConfig *config,
                              double c_total,
                              double p_b_setpoint,
                              double pv_real,
                              struct EvcsDispatch *out);

/**
 * Loads a scenario directory or JSON bundle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `config` a live handle; `out` valid.
 */
enum EvcsStatus evcs_scenario_load(const char *path,
                                   const struct EvcsConfig *config,
                                   struct EvcsScenario **out);

/**
 * Synthetic one-day scenario with `n_sessions` sessions.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum EvcsStatus evcs_scenario_synthetic(uint64_t seed,
                                        uint32_t n_sessions,
                                        const struct EvcsConfig *config,
                                        struct EvcsScenario **out);

/**
 * Number of real-time steps, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t evcs_scenario_steps(const struct EvcsScenario *scenario);

/**
 * Number of charging sessions, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t evcs_scenario_sessions(const struct EvcsScenario *scenario);

/**
 * # Safety
 * `scenario` must come from this library and not be freed twice.
 */
void evcs_scenario_free(struct EvcsScenario *scenario);

/**
 * Simulates a scenario under one method with the heuristic schedule.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum EvcsStatus evcs_simulate(const struct EvcsScenario *scenario,
                              const struct EvcsConfig *config,
                              uint32_t method_code,
                              struct EvcsTrace **out);

/**
 * Number of station records, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t evcs_trace_steps(const struct EvcsTrace *trace);

/**
 * Headline metrics of a run.
 *
 * # Safety
 * `trace` must be a live handle and `out` a valid pointer.
 */
enum EvcsStatus evcs_trace_metrics(const struct EvcsTrace *trace, struct EvcsMetrics *out);

/**
 * Writes `trace_<method>.csv`, `evs_<method>.csv` and `metrics_<method>.json`
 * into `dir`, creating it if needed.
 *
 * # Safety
 * `trace` must be a live handle and `dir` a NUL-terminated string.
 */
enum EvcsStatus evcs_trace_write(const struct EvcsTrace *trace, const char *dir);

/**
 * # Safety
 * `trace` must come from this library and not be freed twice.
 */
void evcs_trace_free(struct EvcsTrace *trace);

/**
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum EvcsStatus evcs_controller_new(const struct EvcsConfig *config,
                                    uint32_t method_code,
                                    struct EvcsController **out);

/**
 * Solves one control step for `n` vehicles. `power` and `theta` receive `n`
 * values each, in vehicle order; `info` may be null.
 *
 * # Safety
 * `vehicles` must point to `n` entries, `power` and `theta` to room for `n`
 * doubles, and the other pointers must be valid.
 */
enum EvcsStatus evcs_controller_step(struct EvcsController *controller,
                                     const struct EvcsVehicle *vehicles,
                                     size_t n,
                                     const struct EvcsSlice *slice,
                                     double *power,
                                     double *theta,
                                     struct EvcsStepInfo *info);

/**
 * # Safety
 * `controller` must come from this library and not be freed twice.
 */
void evcs_controller_free(struct EvcsController *controller);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVCS_H */
