#ifndef COAGKIN_H
#define COAGKIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Perturbation `W` in `K = 2 + eps * W`.
 */
typedef enum CoagFamily {
  COAG_FAMILY_ZERO = 0,
  COAG_FAMILY_ONE = 1,
  /**
   * `W = 2xy / (x^2 + y^2)`.
   */
  COAG_FAMILY_RATIO_SYM = 2,
  /**
   * `W = min(x, y) / max(x, y)`.
   */
  COAG_FAMILY_MIN_OVER_MAX = 3,
} CoagFamily;

/**
 * Node layout of a grid.
 */
typedef enum CoagGridKind {
  COAG_GRID_KIND_UNIFORM = 0,
  COAG_GRID_KIND_LOG_UNIFORM = 1,
} CoagGridKind;

/**
 * Status codes returned by every fallible call.
 */
typedef enum CoagStatus {
  COAG_STATUS_OK = 0,
  COAG_STATUS_NULL_POINTER = 1,
  COAG_STATUS_CONFIG = 2,
  COAG_STATUS_DOMAIN = 3,
  COAG_STATUS_GRID_MISMATCH = 4,
  COAG_STATUS_NON_CONVERGENCE = 5,
  COAG_STATUS_BLOW_UP = 6,
  COAG_STATUS_FIT = 7,
  COAG_STATUS_UNSUPPORTED = 8,
  COAG_STATUS_IO = 9,
  /**
   * Output buffer shorter than the data to copy.
   */
  COAG_STATUS_BUFFER_TOO_SMALL = 10,
  COAG_STATUS_PANIC = 11,
} CoagStatus;

/**
 * Opaque grid handle.
 */
typedef struct CoagGrid CoagGrid;

/**
 * Opaque kernel handle.
 */
typedef struct CoagKernel CoagKernel;

/**
 * Opaque handle to a solved self-similar profile.
 */
typedef struct CoagProfile CoagProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated and truncated
 * to `len` bytes, into `buf`. Returns the full message length excluding the
 * terminator, or 0 when no error is recorded.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
size_t coagkin_last_error_message(char *buf, size_t len);

/**
 * Creates a grid of `n` nodes on `[xmin, xmax]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CoagStatus coagkin_grid_new(enum CoagGridKind kind,
                                 double xmin,
                                 double xmax,
                                 size_t n,
                                 struct CoagGrid **out);

/**
 * Number of grid nodes, or 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t coagkin_grid_len(const struct CoagGrid *grid);

/**
 * Copies the grid nodes into `buf`.
 *
 * # Safety
 * `grid` must be a live handle and `buf` valid for `len` writes.
 */
enum CoagStatus coagkin_grid_nodes(const struct CoagGrid *grid, double *buf, size_t len);

/**
 * # Safety
 * `grid` must be null or a handle not yet freed.
 */
void coagkin_grid_free(struct CoagGrid *grid);

/**
 * Creates the kernel `K = 2 + epsilon * W`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CoagStatus coagkin_kernel_new(enum CoagFamily family, double epsilon, struct CoagKernel **out);

/**
 * Evaluates `K(x, y)` into `out`.
 *
 * # Safety
 * `kernel` must be a live handle and `out` valid for writes.
 */
enum CoagStatus coagkin_kernel_eval(const struct CoagKernel *kernel,
                                    double x,
                                    double y,
                                    double *out);

/**
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void coagkin_kernel_free(struct CoagKernel *kernel);

/**
 * Solves the self-similar profile of unit mass to relative residual `tol`
 * (`tol <= 0` selects the default).
 *
 * # Safety
 * `kernel` and `grid` must be live handles and `out` valid for writes.
 */
enum CoagStatus coagkin_profile_solve(const struct CoagKernel *kernel,
                                      const struct CoagGrid *grid,
                                      double tol,
                                      struct CoagProfile **out);

/**
 * Number of profile values, or 0 for a null handle.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
size_t coagkin_profile_len(const struct CoagProfile *profile);

/**
 * Copies the profile values at the grid nodes into `buf`.
 *
 * # Safety
 * `profile` must be a live handle and `buf` valid for `len` writes.
 */
enum CoagStatus coagkin_profile_values(const struct CoagProfile *profile, double *buf, size_t len);

/**
 * Zeroth moment of the profile.
 *
 * # Safety
 * `profile` must be a live handle and `out` valid for writes.
 */
enum CoagStatus coagkin_profile_m0(const struct CoagProfile *profile, double *out);

/**
 * Final relative residual of the profile solve.
 *
 * # Safety
 * `profile` must be a live handle and `out` valid for writes.
 */
enum CoagStatus coagkin_profile_residual(const struct CoagProfile *profile, double *out);

/**
 * # Safety
 * `profile` must be null or a handle not yet freed.
 */
void coagkin_profile_free(struct CoagProfile *profile);

/**
 * Worst observed decay rate in `L1_k` of the linearised operator around
 * `profile` (or of the unperturbed operator when `profile` is null), over
 * `trials` random mass-free seeds.
 *
 * # Safety
 * `grid` must be a live handle; `kernel` and `profile` must both be live or
 * both null; `out` must be valid for writes.
 */
enum CoagStatus coagkin_gap_rate_l1k(const struct CoagGrid *grid,
                                     const struct CoagKernel *kernel,
                                     const struct CoagProfile *profile,
                                     double k,
                                     size_t trials,
                                     uint64_t seed,
                                     double *out);

/**
 * Global Fourier modulus constant of a density sampled at `n` equispaced
 * points of `[a, b]` (`n` odd, at least 3).
 *
 * # Safety
 * `values` must be valid for `n` reads and `out` valid for writes.
 */
enum CoagStatus coagkin_fourier_alpha_global(const double *values,
                                             size_t n,
                                             double a,
                                             double b,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COAGKIN_H */
