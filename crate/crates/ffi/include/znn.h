#ifndef ZNN_H
#define ZNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum ZnnStatus {
  ZNN_STATUS_OK = 0,
  /**
   * I/O or plotting failure.
   */
  ZNN_STATUS_IO = 1,
  ZNN_STATUS_INVALID_CONFIG = 2,
  /**
   * Singular or rank-deficient matrix, or a diverged iterate.
   */
  ZNN_STATUS_NUMERICAL = 3,
  ZNN_STATUS_NULL_POINTER = 4,
  ZNN_STATUS_OUT_OF_RANGE = 5,
  ZNN_STATUS_BUFFER_TOO_SMALL = 6,
  ZNN_STATUS_PANIC = 7,
} ZnnStatus;

/**
 * A stepper advanced one sample at a time.
 */
typedef struct ZnnStepper ZnnStepper;

/**
 * A completed run's residual trace.
 */
typedef struct ZnnTrace ZnnTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *znn_last_error(void);

/**
 * Runs the configuration in `config` (`key = value` lines) to completion.
 *
 * # Safety
 * `config` must be a nul-terminated string and `out` a valid pointer.
 */
enum ZnnStatus znn_trace_run(const char *config, struct ZnnTrace **out);

/**
 * Number of rows in the trace; 0 for null.
 *
 * # Safety
 * `trace` must be null or a live handle from [`znn_trace_run`].
 */
size_t znn_trace_len(const struct ZnnTrace *trace);

/**
 * Copies row `index` into `k`, `t` and `residual`. Any output may be null.
 *
 * # Safety
 * `trace` must be a live handle; non-null outputs must be valid pointers.
 */
enum ZnnStatus znn_trace_row(const struct ZnnTrace *trace,
                             size_t index,
                             size_t *k,
                             double *t,
                             double *residual);

/**
 * Median residual over the final fifth of the trace; NaN for null.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double znn_trace_steady_state(const struct ZnnTrace *trace);

/**
 * Writes `PREFIX.csv` and `PREFIX.cfg`, plus the plots selected by the run's
 * `emit` setting.
 *
 * # Safety
 * `trace` must be a live handle and `prefix` a nul-terminated string.
 */
enum ZnnStatus znn_trace_write(const struct ZnnTrace *trace, const char *prefix);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void znn_trace_free(struct ZnnTrace *trace);

/**
 * Builds a stepper from `config` and seeds its warm-up history. `k_out`,
 * if non-null, receives the index of the newest seeded iterate.
 *
 * # Safety
 * `config` must be a nul-terminated string, `out` valid, `k_out` null or valid.
 */
enum ZnnStatus znn_stepper_new(const char *config, struct ZnnStepper **out, size_t *k_out);

/**
 * Advances one step; `residual`, if non-null, receives the new iterate's residual.
 *
 * # Safety
 * `stepper` must be a live handle; `residual` null or valid.
 */
enum ZnnStatus znn_stepper_step(struct ZnnStepper *stepper, double *residual);

/**
 * Current step index; 0 for null.
 *
 * # Safety
 * `stepper` must be null or a live handle.
 */
size_t znn_stepper_k(const struct ZnnStepper *stepper);

/**
 * Copies the current iterate row-major into `buf`. `rows` and `cols`
 * always receive the shape, so a call with `capacity = 0` queries it.
 *
 * # Safety
 * `stepper` must be a live handle; `buf` must hold `capacity` doubles;
 * `rows` and `cols` must be valid.
 */
enum ZnnStatus znn_stepper_iterate(const struct ZnnStepper *stepper,
                                   double *buf,
                                   size_t capacity,
                                   size_t *rows,
                                   size_t *cols);

/**
 * # Safety
 * `stepper` must be null or a handle not yet freed.
 */
void znn_stepper_free(struct ZnnStepper *stepper);

/**
 * Truncation order of a registered formula, computed exactly.
 *
 * # Safety
 * `name` must be a nul-terminated string and `order` valid.
 */
enum ZnnStatus znn_formula_order(const char *name, uint32_t *order);

/**
 * Roots of the characteristic polynomial of a one-step-ahead formula's
 * update. Writes up to `capacity` roots (real and imaginary parts) and the
 * 0-stability verdict; `count` receives the number of distinct roots.
 *
 * # Safety
 * `name` must be a nul-terminated string; `re` and `im` must hold
 * `capacity` doubles; `count` and `zero_stable` must be valid.
 */
enum ZnnStatus znn_stability_roots(const char *name,
                                   double *re,
                                   double *im,
                                   size_t capacity,
                                   size_t *count,
                                   bool *zero_stable);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZNN_H */
