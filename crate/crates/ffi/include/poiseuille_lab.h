#ifndef POISEUILLE_LAB_H
#define POISEUILLE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum PlStatus {
  PL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PL_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PL_STATUS_INVALID_UTF8 = 2,
  /**
   * Out-of-range parameter or malformed run document.
   */
  PL_STATUS_INVALID_INPUT = 3,
  /**
   * A solver failed or a numerical gate did not hold.
   */
  PL_STATUS_NUMERICAL = 4,
  /**
   * File system failure.
   */
  PL_STATUS_IO = 5,
  /**
   * An output buffer is shorter than `pl_mode_len`.
   */
  PL_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * The named quantity does not exist.
   */
  PL_STATUS_NOT_FOUND = 7,
  PL_STATUS_INTERNAL = 8,
} PlStatus;

/**
 * Linear solver selector.
 */
typedef enum PlSolver {
  PL_SOLVER_SLIP = 0,
  PL_SOLVER_CLAMPED = 1,
  PL_SOLVER_DECOMPOSITION = 2,
  PL_SOLVER_HIGH_FREQ = 3,
} PlSolver;

/**
 * Opaque solved Fourier mode.
 */
typedef struct PlMode PlMode;

/**
 * Opaque run document.
 */
typedef struct PlSpec PlSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pl_version(void);

/**
 * Message of the last failure on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *pl_last_error(void);

/**
 * Creates a run document with default settings for `command`
 * (for example `"sweep"`).
 *
 * # Safety
 * `command` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PlStatus pl_spec_new(const char *command, struct PlSpec **out);

/**
 * Parses and validates a TOML run document.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PlStatus pl_spec_from_toml(const char *text, struct PlSpec **out);

/**
 * Replaces the parameter grid. `n` values are streamwise mode numbers.
 *
 * # Safety
 * Each array must hold at least its stated number of elements.
 */
enum PlStatus pl_spec_set_grid(struct PlSpec *spec,
                               const double *phi,
                               size_t phi_len,
                               const double *l,
                               size_t l_len,
                               const int64_t *n,
                               size_t n_len);

/**
 * Sets the linear solver used by the linear commands.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum PlStatus pl_spec_set_solver(struct PlSpec *spec, enum PlSolver solver);

/**
 * Checks the document without running it.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum PlStatus pl_spec_validate(const struct PlSpec *spec);

/**
 * # Safety
 * `spec` must be null or a handle from this library not yet freed.
 */
void pl_spec_free(struct PlSpec *spec);

/**
 * Runs a document, writing artifacts and `summary.json` into `out_dir`.
 * `exit_code` receives the command-line exit status (0, 1 or 2). The call
 * returns `PL_STATUS_OK` when the run passed, `PL_STATUS_INVALID_INPUT`
 * for exit code 1 (invalid document or unwritable directory) and
 * `PL_STATUS_NUMERICAL` for exit code 2.
 *
 * # Safety
 * `spec` must be a live handle, `out_dir` NUL-terminated, and `exit_code`
 * null or valid.
 */
enum PlStatus pl_run(const struct PlSpec *spec, const char *out_dir, int32_t *exit_code);

/**
 * Solves one Fourier mode of the linearized problem. `forcing` names a
 * profile: `even_rhs`, `odd_rhs`, `streamwise` or `random_<k>`.
 *
 * # Safety
 * `forcing` must be NUL-terminated and `out` a valid pointer.
 */
enum PlStatus pl_mode_solve(double phi,
                            double l,
                            int64_t n,
                            enum PlSolver solver,
                            const char *forcing,
                            uint64_t seed,
                            struct PlMode **out);

/**
 * Number of collocation nodes of a solved mode.
 *
 * # Safety
 * `mode` must be a live handle.
 */
size_t pl_mode_len(const struct PlMode *mode);

/**
 * Copies nodes `y` and the real and imaginary parts of the stream
 * function into arrays of length `len`, which must equal
 * [`pl_mode_len`]. Any output pointer may be null to skip it.
 *
 * # Safety
 * Non-null arrays must hold `len` doubles.
 */
enum PlStatus pl_mode_stream_function(const struct PlMode *mode,
                                      double *y,
                                      double *re,
                                      double *im,
                                      size_t len);

/**
 * Looks up a measured quantity (for example `energy1`) or a bound ratio
 * (prefixed `ratio_`, for example `ratio_velocity_l2`).
 *
 * # Safety
 * `name` must be NUL-terminated and `value` a valid pointer.
 */
enum PlStatus pl_mode_quantity(const struct PlMode *mode, const char *name, double *value);

/**
 * # Safety
 * `mode` must be null or a handle from this library not yet freed.
 */
void pl_mode_free(struct PlMode *mode);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POISEUILLE_LAB_H */
