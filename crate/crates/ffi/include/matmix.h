#ifndef MATMIX_H
#define MATMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MATMIX_STATUS_OK = 0,
  MATMIX_STATUS_NULL_POINTER = 1,
  MATMIX_STATUS_INVALID_ARGUMENT = 2,
  MATMIX_STATUS_DIMENSION_MISMATCH = 3,
  MATMIX_STATUS_NOT_POSITIVE_DEFINITE = 4,
  MATMIX_STATUS_EMPTY_CLUSTER = 5,
  MATMIX_STATUS_NUMERIC_FAILURE = 6,
  MATMIX_STATUS_PANIC = 7,
} MatmixStatus;

/**
 * Values accepted in `MatmixFitOptions::penalty`.
 */
typedef enum {
  MATMIX_PENALTY_NONE = 0,
  MATMIX_PENALTY_L1 = 1,
  MATMIX_PENALTY_L2 = 2,
  MATMIX_PENALTY_NUCLEAR = 3,
} MatmixPenalty;

/**
 * A fitted mixture together with its fit summary.
 */
typedef struct MatmixModel MatmixModel;

/**
 * A validated stack of equally sized matrices.
 */
typedef struct MatmixStack MatmixStack;

typedef struct {
  /**
   * One of the `MatmixPenalty` values.
   */
  int32_t penalty;
  double lambda;
  size_t max_iter;
  size_t n_starts;
  uint64_t seed;
  /**
   * Threshold on the summed change of the means; negative selects the default.
   */
  double mean_tol;
} MatmixFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread; empty if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *matmix_last_error(void);

/**
 * Copy `n` row-major `r`×`p` samples into a new stack.
 *
 * # Safety
 * `data` must point to `n·r·p` readable doubles and `out` must be writable.
 */
MatmixStatus matmix_stack_new(const double *data, size_t n, size_t r, size_t p, MatmixStack **out);

/**
 * # Safety
 * `stack` must be null or a handle from `matmix_stack_new` not yet freed.
 */
void matmix_stack_free(MatmixStack *stack);

/**
 * # Safety
 * `stack` must be a live handle; each output pointer may be null.
 */
MatmixStatus matmix_stack_shape(const MatmixStack *stack, size_t *n, size_t *r, size_t *p);

MatmixFitOptions matmix_fit_options_default(void);

/**
 * Fit a `k`-component penalized mixture. A run that stops at `max_iter`
 * still succeeds; check `converged` in `matmix_model_summary`.
 *
 * # Safety
 * `stack` must be a live handle, `options` null (defaults) or readable, and `out` writable.
 */
MatmixStatus matmix_fit(const MatmixStack *stack,
                        size_t k,
                        const MatmixFitOptions *options,
                        MatmixModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `matmix_fit` not yet freed.
 */
void matmix_model_free(MatmixModel *model);

/**
 * Number of components, rows and columns of a fitted model.
 *
 * # Safety
 * `model` must be a live handle; each output pointer may be null.
 */
MatmixStatus matmix_model_shape(const MatmixModel *model, size_t *k, size_t *r, size_t *p);

/**
 * # Safety
 * `model` must be a live handle; each output pointer may be null.
 */
MatmixStatus matmix_model_summary(const MatmixModel *model,
                                  size_t *iterations,
                                  bool *converged,
                                  double *objective);

/**
 * Copy the `k` mixing weights into `out`.
 *
 * # Safety
 * `model` must be a live handle and `out` must hold `len` doubles.
 */
MatmixStatus matmix_model_weights(const MatmixModel *model, double *out, size_t len);

/**
 * Copy component `j` as row-major arrays of sizes `r·p`, `r·r` and `p·p`.
 * Null outputs are skipped.
 *
 * # Safety
 * `model` must be a live handle and each non-null output must have the stated size.
 */
MatmixStatus matmix_model_component(const MatmixModel *model,
                                    size_t j,
                                    double *mean,
                                    double *row_cov,
                                    double *col_cov);

/**
 * Hard cluster labels of the training samples.
 *
 * # Safety
 * `model` must be a live handle and `out` must hold `len` values.
 */
MatmixStatus matmix_model_labels(const MatmixModel *model, size_t *out, size_t len);

/**
 * Most probable component of every sample in `stack`.
 *
 * # Safety
 * `model` and `stack` must be live handles and `out` must hold `len` values.
 */
MatmixStatus matmix_model_predict(const MatmixModel *model,
                                  const MatmixStack *stack,
                                  size_t *out,
                                  size_t len);

/**
 * Matrix normal log-density of `y` given mean, row and column covariances.
 *
 * # Safety
 * `y` and `mean` must hold `r·p` doubles, `row_cov` `r·r`, `col_cov` `p·p`; `out` must be writable.
 */
MatmixStatus matmix_logpdf(const double *y,
                           const double *mean,
                           const double *row_cov,
                           const double *col_cov,
                           size_t r,
                           size_t p,
                           double *out);

/**
 * # Safety
 * `a` and `b` must hold `n` values and `out` must be writable.
 */
MatmixStatus matmix_adjusted_rand_index(const size_t *a, const size_t *b, size_t n, double *out);

/**
 * # Safety
 * `pred` and `truth` must hold `n` values and `out` must be writable.
 */
MatmixStatus matmix_clustering_accuracy(const size_t *pred,
                                        const size_t *truth,
                                        size_t n,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATMIX_H */
