#ifndef REFSAFE_H
#define REFSAFE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Filter selector for `refsafe_scenario_set_filter`.
typedef enum RefsafeFilter {
  REFSAFE_FILTER_PLANT_QP = 0,
  REFSAFE_FILTER_REFERENCE_QP = 1,
  REFSAFE_FILTER_ROBUST_SOCP = 2,
  REFSAFE_FILTER_UNFILTERED = 3,
} RefsafeFilter;

// Result codes shared by every entry point.
typedef enum RefsafeStatus {
  REFSAFE_STATUS_OK = 0,
  REFSAFE_STATUS_NULL_POINTER = 1,
  REFSAFE_STATUS_INVALID_ARGUMENT = 2,
  REFSAFE_STATUS_CONFIG = 3,
  REFSAFE_STATUS_INFEASIBLE = 4,
  REFSAFE_STATUS_MAX_ITERS = 5,
  REFSAFE_STATUS_NUMERICAL = 6,
  REFSAFE_STATUS_IO = 7,
  REFSAFE_STATUS_PANIC = 8,
} RefsafeStatus;

// Scenario configuration handle.
typedef struct RefsafeScenario RefsafeScenario;

// SOCP filter handle.
typedef struct RefsafeSolver RefsafeSolver;

// Simulation result handle.
typedef struct RefsafeTrace RefsafeTrace;

// Summary metrics of a trace.
typedef struct RefsafeMetrics {
  double min_h_plant;
  double min_h_ref;
  double terminal_goal_distance;
  double terminal_tracking_error;
  double control_effort;
  double smoothness;
  size_t fault_count;
  size_t budget_violation_count;
} RefsafeMetrics;

// One sample of a quadrotor trace, in world coordinates.
typedef struct RefsafeSample {
  double t;
  double x_p[6];
  double x_m[6];
  double r_star[3];
  double r[3];
  double u[3];
  double h_plant;
  double h_ref;
  double delta;
  // Nonzero when the step carries a fault flag.
  int32_t fault;
} RefsafeSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *refsafe_last_error(void);

// Library version as a static nul-terminated string.
const char *refsafe_version(void);

// Scenario with the built-in benchmark defaults.
//
// # Safety
// `out` must be a valid pointer.
enum RefsafeStatus refsafe_scenario_default(struct RefsafeScenario **out);

// Parses and validates a TOML scenario.
//
// # Safety
// `toml` must be a nul-terminated string and `out` a valid pointer.
enum RefsafeStatus refsafe_scenario_from_toml(const char *toml, struct RefsafeScenario **out);

// # Safety
// `scenario` must come from this library and not be used afterwards.
void refsafe_scenario_free(struct RefsafeScenario *scenario);

// # Safety
// `scenario` must be a valid handle.
enum RefsafeStatus refsafe_scenario_set_filter(struct RefsafeScenario *scenario,
                                               enum RefsafeFilter filter);

// Sets the integration step and horizon in seconds.
//
// # Safety
// `scenario` must be a valid handle.
enum RefsafeStatus refsafe_scenario_set_time(struct RefsafeScenario *scenario,
                                             double dt,
                                             double horizon);

// Runs the scenario with its configured filter.
//
// # Safety
// `scenario` must be a valid handle and `out` a valid pointer.
enum RefsafeStatus refsafe_scenario_run(const struct RefsafeScenario *scenario,
                                        struct RefsafeTrace **out);

// # Safety
// `trace` must come from this library and not be used afterwards.
void refsafe_trace_free(struct RefsafeTrace *trace);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `trace` must be null or a valid handle.
size_t refsafe_trace_len(const struct RefsafeTrace *trace);

// # Safety
// `trace` must be a valid handle and `out` a valid pointer.
enum RefsafeStatus refsafe_trace_metrics(const struct RefsafeTrace *trace,
                                         struct RefsafeMetrics *out);

// Copies sample `index` into `out`.
//
// # Safety
// `trace` must be a valid handle and `out` a valid pointer.
enum RefsafeStatus refsafe_trace_sample(const struct RefsafeTrace *trace,
                                        size_t index,
                                        struct RefsafeSample *out);

// Writes the trace in the CLI's `trace.csv` layout.
//
// # Safety
// `trace` must be a valid handle and `path` a nul-terminated string.
enum RefsafeStatus refsafe_trace_write_csv(const struct RefsafeTrace *trace, const char *path);

// SOCP filter with tolerance `tol` and iteration cap `max_iters`; zero for
// either selects the default.
//
// # Safety
// `out` must be a valid pointer.
enum RefsafeStatus refsafe_solver_new(double tol, size_t max_iters, struct RefsafeSolver **out);

// # Safety
// `solver` must come from this library and not be used afterwards.
void refsafe_solver_free(struct RefsafeSolver *solver);

// Solves `min ‖r − r*‖ + ρ‖r‖  s.t.  aᵀr − c‖r‖ ≥ β` for `r` of length `p`.
//
// # Safety
// `r_star`, `a` and `r_out` must each point to `p` doubles; `eta_out` may be null.
enum RefsafeStatus refsafe_solver_solve(const struct RefsafeSolver *solver,
                                        size_t p,
                                        const double *r_star,
                                        const double *a,
                                        double c,
                                        double beta,
                                        double rho,
                                        double *r_out,
                                        double *eta_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFSAFE_H */
