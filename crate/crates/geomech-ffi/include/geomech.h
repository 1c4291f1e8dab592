/* C interface of the geomech toolkit (generated by cbindgen). */

#ifndef GEOMECH_H
#define GEOMECH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible entry points.
 */
typedef enum GmStatus {
  GM_STATUS_OK = 0,
  GM_STATUS_NULL_ARGUMENT = 1,
  GM_STATUS_INVALID_UTF8 = 2,
  GM_STATUS_IO = 3,
  GM_STATUS_SCHEMA = 4,
  GM_STATUS_DOMAIN = 5,
  GM_STATUS_NUMERIC = 6,
  GM_STATUS_PRECONDITION = 7,
  GM_STATUS_ORBIT_NOT_CLOSED = 8,
  GM_STATUS_UNSUPPORTED = 9,
  GM_STATUS_PANIC = 10,
} GmStatus;

/**
 * Opaque loaded system handle.
 */
typedef struct GmSystem GmSystem;

/**
 * Opaque trajectory handle.
 */
typedef struct GmTrajectory GmTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (truncated to `cap - 1` bytes,
 * always NUL-terminated when `cap > 0`). Returns the full message length.
 */
uintptr_t gm_last_error(char *buf, uintptr_t cap);

/**
 * Loads a system description from a JSON file; null on failure (see
 * `gm_last_error`).
 */
struct GmSystem *gm_system_load(const char *path);

/**
 * Loads a system description from a JSON string; null on failure.
 */
struct GmSystem *gm_system_load_json(const char *json);

void gm_system_free(struct GmSystem *sys);

/**
 * Number of configuration-space coordinates.
 */
uintptr_t gm_system_dim(const struct GmSystem *sys);

/**
 * Integrates the evolution field from the system's default seed. Pass
 * `has_energy = false` to seed at unit speed instead of an energy level.
 */
enum GmStatus gm_simulate(const struct GmSystem *sys,
                          double energy,
                          bool has_energy,
                          double span,
                          double rel_tol,
                          struct GmTrajectory **out);

void gm_trajectory_free(struct GmTrajectory *traj);

uintptr_t gm_trajectory_len(const struct GmTrajectory *traj);

/**
 * Number of values per sample row: `2*dim + 5` (parameter, coordinates,
 * velocities, action, duration, length, energy).
 */
uintptr_t gm_trajectory_row_len(const struct GmTrajectory *traj);

/**
 * Copies sample `index` into `buf`; `cap` must be at least the row length.
 */
enum GmStatus gm_trajectory_sample(const struct GmTrajectory *traj,
                                   uintptr_t index,
                                   double *buf,
                                   uintptr_t cap);

/**
 * Writes the trajectory CSV (same format as the CLI `simulate` artifact).
 */
enum GmStatus gm_trajectory_write_csv(const struct GmTrajectory *traj, const char *path);

/**
 * Closed-orbit functionals from the system's default seed at the energy
 * level: action, period and wave time around the cycle (`tau` is NaN on the
 * zero level).
 */
enum GmStatus gm_cycle(const struct GmSystem *sys,
                       double energy,
                       double max_span,
                       double *action_out,
                       double *period_out,
                       double *tau_out);

/**
 * Text form of the system's Schrodinger operator
 * (`-(hbar^2/2) Laplacian + U`). Free with `gm_string_free`; null on
 * failure.
 */
char *gm_schrodinger_text(const struct GmSystem *sys);

/**
 * Hertz-reduces the extended system (using its declared time coordinate and
 * momentum level) and returns the reduced description as a JSON string.
 * Free with `gm_string_free`; null on failure.
 */
char *gm_hertz_reduce_json(const struct GmSystem *sys);

void gm_string_free(char *s);

/**
 * Runs one verification criterion (ids 1-11). Returns `Ok` when it passes;
 * on failure the detail is available through `gm_last_error`.
 */
enum GmStatus gm_verify_criterion(uintptr_t id);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GEOMECH_H */
