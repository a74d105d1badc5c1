#ifndef SVNLEARN_H
#define SVNLEARN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum SvnStatus {
  SVN_STATUS_OK = 0,
  SVN_STATUS_INVALID_ARGUMENT = 1,
  SVN_STATUS_UNSUPPORTED_ORDER = 2,
  SVN_STATUS_SHAPE = 3,
  SVN_STATUS_NO_CONVERGENCE = 4,
  SVN_STATUS_PARSE = 5,
  SVN_STATUS_CONFIG = 6,
  SVN_STATUS_IO = 7,
  SVN_STATUS_NULL_POINTER = 8,
  SVN_STATUS_BUFFER_TOO_SMALL = 9,
  SVN_STATUS_PANIC = 10,
} SvnStatus;

/**
 * Opaque operator handle.
 */
typedef struct SvnOperator SvnOperator;

/**
 * Solver diagnostics returned by [`svn_fit`].
 */
typedef struct SvnFitReport {
  size_t iterations;
  double final_risk;
  bool converged;
  bool active_constraint;
  double schatten_norm;
} SvnFitReport;

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *svn_last_error(void);

/**
 * Creates an operator from a row-major `d_y × d_x` matrix.
 *
 * # Safety
 * `data` must point to `d_y * d_x` doubles and `out` must be writable.
 */
enum SvnStatus svn_operator_from_dense(const double *data,
                                       size_t d_y,
                                       size_t d_x,
                                       struct SvnOperator **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `op` must be null or a handle returned by this library, freed only once.
 */
void svn_operator_free(struct SvnOperator *op);

/**
 * # Safety
 * `op` must be a valid handle; `d_y`, `d_x` must be writable.
 */
enum SvnStatus svn_operator_shape(const struct SvnOperator *op, size_t *d_y, size_t *d_x);

/**
 * Copies the operator into a row-major buffer of `d_y * d_x` doubles.
 *
 * # Safety
 * `op` must be a valid handle and `buf` must hold `cap` doubles.
 */
enum SvnStatus svn_operator_to_dense(const struct SvnOperator *op, double *buf, size_t cap);

/**
 * Schatten norm of order `p` (`INFINITY` for the spectral norm).
 *
 * # Safety
 * `op` must be a valid handle and `out` writable.
 */
enum SvnStatus svn_operator_schatten_norm(const struct SvnOperator *op, double p, double *out);

/**
 * Writes the `min(d_y, d_x)` singular values, in nonincreasing order, to
 * `buf` and their count to `len`. If `cap` is too small only `len` is set.
 *
 * # Safety
 * `op` must be a valid handle, `buf` must hold `cap` doubles, `len` writable.
 */
enum SvnStatus svn_operator_spectrum(const struct SvnOperator *op,
                                     double *buf,
                                     size_t cap,
                                     size_t *len);

/**
 * `y = T x`.
 *
 * # Safety
 * `x` must hold `d_x` doubles and `y` must hold `d_y` doubles.
 */
enum SvnStatus svn_operator_apply(const struct SvnOperator *op,
                                  const double *x,
                                  size_t d_x,
                                  double *y,
                                  size_t d_y);

/**
 * Euclidean projection onto the Schatten ball of order `p` and `radius`.
 *
 * # Safety
 * `op` must be a valid handle and `out` writable.
 */
enum SvnStatus svn_project_schatten(const struct SvnOperator *op,
                                    double p,
                                    double radius,
                                    double tol,
                                    struct SvnOperator **out);

/**
 * Euclidean projection of a vector onto the lp ball; `out` may alias `v`.
 *
 * # Safety
 * `v` and `out` must hold `len` doubles.
 */
enum SvnStatus svn_project_lp(const double *v,
                              size_t len,
                              double p,
                              double radius,
                              double tol,
                              double *out);

/**
 * Fits `min (1/N) Σ ‖y_n − T x_n‖²` over `‖T‖_{S_p} <= radius` with the
 * default solver settings. `x` is `n × d_x` and `y` is `n × d_y`, one sample
 * per row. Hitting the iteration cap is reported through
 * `report->converged`, not the status.
 *
 * # Safety
 * `x`, `y` must hold `n * d_x` and `n * d_y` doubles; `out` must be
 * writable; `report` may be null.
 */
enum SvnStatus svn_fit(const double *x,
                       const double *y,
                       size_t n,
                       size_t d_x,
                       size_t d_y,
                       double p,
                       double radius,
                       struct SvnOperator **out,
                       struct SvnFitReport *report);

/**
 * Rademacher-complexity and excess-risk bounds for `n` samples.
 *
 * # Safety
 * `rademacher` and `excess` must be writable.
 */
enum SvnStatus svn_theorem_bounds(size_t n,
                                  double p,
                                  double radius,
                                  double c_x,
                                  double c_y,
                                  double delta,
                                  double *rademacher,
                                  double *excess);

/**
 * Reads an operator file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SvnStatus svn_operator_read(const char *path, struct SvnOperator **out);

/**
 * Writes an operator file.
 *
 * # Safety
 * `op` must be a valid handle and `path` a NUL-terminated string.
 */
enum SvnStatus svn_operator_write(const struct SvnOperator *op, const char *path);

#endif  /* SVNLEARN_H */
