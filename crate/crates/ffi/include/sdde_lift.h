#ifndef SDDE_LIFT_H
#define SDDE_LIFT_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Simulation route for policy evaluation.
 */
typedef enum SddeRoute {
  SDDE_ROUTE_SDDE = 0,
  SDDE_ROUTE_LIFT = 1,
} SddeRoute;

/**
 * Result codes. Library errors are grouped by the module that owns the
 * violated invariant.
 */
typedef enum SddeStatus {
  SDDE_STATUS_OK = 0,
  SDDE_STATUS_NULL_POINTER = 1,
  SDDE_STATUS_INVALID_ARGUMENT = 2,
  SDDE_STATUS_BUFFER_TOO_SMALL = 3,
  SDDE_STATUS_MODEL = 10,
  SDDE_STATUS_SIMULATION = 11,
  SDDE_STATUS_LIFT = 12,
  SDDE_STATUS_OPERATORS = 13,
  SDDE_STATUS_HAMILTONIAN = 14,
  SDDE_STATUS_VALUE = 15,
  SDDE_STATUS_CONFIG = 16,
  SDDE_STATUS_PANIC = 99,
} SddeStatus;

/**
 * Discretized operators of a problem at a fixed shift.
 */
typedef struct SddeOperatorPack SddeOperatorPack;

/**
 * Model, cost and initial history built from a configuration.
 */
typedef struct SddeProblem SddeProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sdde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdde_version(void);

/**
 * Builds a problem from TOML text. `k = 0` keeps the grid of the file.
 *
 * # Safety
 * `toml` must be a valid NUL-terminated string and `out` writable.
 */
enum SddeStatus sdde_problem_from_toml(const char *toml, size_t k, struct SddeProblem **out);

/**
 * Builds a problem from a built-in template (`advertising`, `time-to-build`, `zero`).
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` writable.
 */
enum SddeStatus sdde_problem_from_template(const char *name, size_t k, struct SddeProblem **out);

/**
 * # Safety
 * `p` must come from `sdde_problem_from_*` and not be used afterwards.
 */
void sdde_problem_free(struct SddeProblem *p);

/**
 * State dimension `n`, grid subintervals `K` and number of lattice controls.
 *
 * # Safety
 * `p` must be a live problem handle; outputs may be null to skip them.
 */
enum SddeStatus sdde_problem_shape(const struct SddeProblem *p,
                                   size_t *n,
                                   size_t *k,
                                   size_t *controls);

/**
 * One Euler-Maruyama path under a constant lattice control. Writes
 * `n * (steps + 1)` values of `y`, step-major, and reports the count in
 * `written` even when the buffer is too small.
 *
 * # Safety
 * `p` must be a live handle; `out` must hold `cap` doubles.
 */
enum SddeStatus sdde_simulate_path(const struct SddeProblem *p,
                                   size_t control_index,
                                   double horizon,
                                   uint64_t seed,
                                   uint64_t path_index,
                                   double *out,
                                   size_t cap,
                                   size_t *written);

/**
 * Monte Carlo value of a constant lattice control from the problem's history.
 *
 * # Safety
 * `p` must be a live handle; `mean` and `std_error` writable.
 */
enum SddeStatus sdde_evaluate_constant_policy(const struct SddeProblem *p,
                                              size_t control_index,
                                              double horizon,
                                              size_t paths,
                                              uint64_t seed,
                                              enum SddeRoute route,
                                              double *mean,
                                              double *std_error);

/**
 * Operator pack at shift `mu`; pass NaN for the default `mu0 + 1`.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum SddeStatus sdde_pack_new(const struct SddeProblem *p,
                              double mu,
                              struct SddeOperatorPack **out);

/**
 * # Safety
 * `pack` must come from `sdde_pack_new` and not be used afterwards.
 */
void sdde_pack_free(struct SddeOperatorPack *pack);

/**
 * Grid dimension `n (K + 1)` and the shifts `mu0`, `mu`.
 *
 * # Safety
 * `pack` must be live; outputs may be null to skip them.
 */
enum SddeStatus sdde_pack_info(const struct SddeOperatorPack *pack,
                               size_t *dim,
                               double *mu0,
                               double *mu);

/**
 * Eigenvalues of `B`, decreasing.
 *
 * # Safety
 * `pack` must be live; `out` must hold `cap` doubles.
 */
enum SddeStatus sdde_pack_eigenvalues(const struct SddeOperatorPack *pack,
                                      double *out,
                                      size_t cap,
                                      size_t *written);

/**
 * `|x|_{-1}` of a grid state given as `n (K + 1)` values: `x0` then the
 * interior nodes of `x1`, the layout of the pack's vector space.
 *
 * # Safety
 * `pack` must be live; `x` must hold `len` doubles; `out` writable.
 */
enum SddeStatus sdde_pack_minus_one_norm(const struct SddeOperatorPack *pack,
                                         const double *x,
                                         size_t len,
                                         double *out);

/**
 * Sampled weak-B certificate; `pass` is 1 when every item holds.
 *
 * # Safety
 * `pack` must be live; `pass` and `iv_sup` writable.
 */
enum SddeStatus sdde_pack_weak_b_certificate(const struct SddeOperatorPack *pack,
                                             size_t samples,
                                             uint64_t seed,
                                             double iv_tol,
                                             int32_t *pass,
                                             double *iv_sup);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDDE_LIFT_H */
