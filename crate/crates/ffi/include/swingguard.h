#ifndef SWINGGUARD_H
#define SWINGGUARD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of an FFI call.
 */
typedef enum {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_UTF8 = 2,
  SG_STATUS_IO = 3,
  SG_STATUS_PARSE = 4,
  SG_STATUS_VALIDATION = 5,
  SG_STATUS_CONVERGENCE = 6,
  SG_STATUS_BLOWUP = 7,
  /**
   * Caller buffer too small or index out of range.
   */
  SG_STATUS_OUT_OF_RANGE = 8,
  SG_STATUS_PANIC = 9,
} SgStatus;

/**
 * Loaded power network.
 */
typedef struct SgNetwork SgNetwork;

/**
 * Simulated trajectory with its audit summary.
 */
typedef struct SgTrajectory SgTrajectory;

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sg_last_error(void);

/**
 * Library version as a static string.
 */
const char *sg_version(void);

/**
 * Loads a network from a JSON file path, or `builtin:ieee39` /
 * `builtin:two_bus`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
SgStatus sg_network_load(const char *path, SgNetwork **out);

/**
 * Parses a network from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
SgStatus sg_network_from_json(const char *json, SgNetwork **out);

/**
 * Releases a network. Null is ignored.
 *
 * # Safety
 * `net` must come from `sg_network_load` or `sg_network_from_json` and not
 * be used afterwards.
 */
void sg_network_free(SgNetwork *net);

/**
 * Number of buses and lines.
 *
 * # Safety
 * `net` must be a live handle; the outputs valid pointers.
 */
SgStatus sg_network_size(const SgNetwork *net, size_t *out_buses, size_t *out_lines);

/**
 * Synchronized equilibrium of the injections at time `t`: common frequency,
 * synchronization margin (the condition holds below 1) and line angle
 * differences. `lambda` may be null to query only the scalars; otherwise it
 * must hold one entry per line.
 *
 * # Safety
 * `net` must be a live handle; pointers valid or null as described.
 */
SgStatus sg_equilibrium(const SgNetwork *net,
                        double t,
                        double *out_omega_inf,
                        double *out_sync_margin,
                        double *lambda,
                        size_t lambda_capacity);

/**
 * Region-of-attraction level `c` at the equilibrium of time 0.
 *
 * # Safety
 * `net` must be a live handle and `out_c` a valid pointer.
 */
SgStatus sg_region_level(const SgNetwork *net, double *out_c);

/**
 * Worst-case input of controlled bus `bus` over the level set `V <= eta`,
 * with its relaxation bounds.
 *
 * # Safety
 * `net` must be a live handle and the outputs valid pointers.
 */
SgStatus sg_effort_bound(const SgNetwork *net,
                         uint32_t bus,
                         double eta,
                         double beta,
                         double *out_u_min,
                         double *out_lower,
                         double *out_upper);

/**
 * Integrates a scenario given as JSON text.
 *
 * # Safety
 * `net` must be a live handle, `scenario_json` NUL-terminated and `out` a
 * valid pointer.
 */
SgStatus sg_simulate(const SgNetwork *net, const char *scenario_json, SgTrajectory **out);

/**
 * Releases a trajectory. Null is ignored.
 *
 * # Safety
 * `traj` must come from `sg_simulate` and not be used afterwards.
 */
void sg_trajectory_free(SgTrajectory *traj);

/**
 * Sample times. Pass a null buffer to query the length.
 *
 * # Safety
 * `traj` must be a live handle; `buf` null or `capacity` entries long.
 */
SgStatus sg_trajectory_times(const SgTrajectory *traj,
                             double *buf,
                             size_t capacity,
                             size_t *out_len);

/**
 * Frequency samples of bus `bus_id`.
 *
 * # Safety
 * As [`sg_trajectory_times`].
 */
SgStatus sg_trajectory_omega(const SgTrajectory *traj,
                             uint32_t bus_id,
                             double *buf,
                             size_t capacity,
                             size_t *out_len);

/**
 * Input samples of controlled bus `bus_id`.
 *
 * # Safety
 * As [`sg_trajectory_times`].
 */
SgStatus sg_trajectory_input(const SgTrajectory *traj,
                             uint32_t bus_id,
                             double *buf,
                             size_t capacity,
                             size_t *out_len);

/**
 * Audit verdicts: energy monotonicity and safe-band invariance.
 *
 * # Safety
 * `traj` must be a live handle and the outputs valid pointers.
 */
SgStatus sg_trajectory_verdicts(const SgTrajectory *traj,
                                bool *out_energy_monotone,
                                bool *out_band_invariant);

/**
 * Full audit summary as JSON. Release with [`sg_string_free`].
 *
 * # Safety
 * `traj` must be a live handle and `out` a valid pointer.
 */
SgStatus sg_trajectory_audit_json(const SgTrajectory *traj, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sg_string_free(char *s);

#endif  /* SWINGGUARD_H */
