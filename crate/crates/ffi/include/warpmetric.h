#ifndef WARPMETRIC_H
#define WARPMETRIC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WmStatus {
  WM_STATUS_OK = 0,
  WM_STATUS_NULL_POINTER = 1,
  WM_STATUS_INVALID_ARGUMENT = 2,
  WM_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Unreadable or malformed input data.
   */
  WM_STATUS_DATA = 4,
  WM_STATUS_NUMERICAL = 5,
  WM_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  WM_STATUS_PANIC = 7,
} WmStatus;

typedef enum WmStructure {
  WM_STRUCTURE_PSD = 0,
  WM_STRUCTURE_DIAGONAL_NONNEG = 1,
  WM_STRUCTURE_UNCONSTRAINED = 2,
} WmStructure;

typedef enum WmLoss {
  WM_LOSS_HAMMING = 0,
  WM_LOSS_SAL = 1,
} WmLoss;

/**
 * Opaque handle to a list of sequence pairs.
 */
typedef struct WmDataset WmDataset;

/**
 * Opaque metric handle.
 */
typedef struct WmMetric WmMetric;

/**
 * Losses between two paths on the same grid.
 */
typedef struct WmLosses {
  double hamming;
  double delta_abs;
  double delta_max;
  double sym_area;
} WmLosses;

/**
 * Training options. Fill with [`wm_train_config_default`] first.
 */
typedef struct WmTrainConfig {
  enum WmLoss loss;
  enum WmStructure structure;
  double lambda;
  size_t epochs;
  /**
   * Step budget; 0 means `epochs` passes over the data.
   */
  size_t steps;
  uint64_t seed;
  size_t eval_every;
  double gap_tolerance;
  /**
   * Decoding band; negative for none.
   */
  int64_t band;
} WmTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *wm_last_error(void);

/**
 * Builds a metric from `p * p` row-major values; `values` must already
 * satisfy `structure`.
 *
 * # Safety
 * `values` must point to `p * p` doubles and `out` must be writable.
 */
enum WmStatus wm_metric_new(const double *values,
                            size_t p,
                            enum WmStructure structure,
                            struct WmMetric **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum WmStatus wm_metric_identity(size_t p, enum WmStructure structure, struct WmMetric **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum WmStatus wm_metric_load(const char *path, struct WmMetric **out);

/**
 * # Safety
 * `metric` must come from this library and `path` be NUL-terminated.
 */
enum WmStatus wm_metric_save(const struct WmMetric *metric, const char *path);

/**
 * Dimension `p` of the metric, or 0 for a null handle.
 *
 * # Safety
 * `metric` must be null or come from this library.
 */
size_t wm_metric_dim(const struct WmMetric *metric);

/**
 * Copies the `p * p` values, row-major, into `out`.
 *
 * # Safety
 * `out` must have room for `len` doubles.
 */
enum WmStatus wm_metric_values(const struct WmMetric *metric, double *out, size_t len);

/**
 * # Safety
 * `metric` must be null or a handle not yet freed.
 */
void wm_metric_free(struct WmMetric *metric);

/**
 * Affinity matrix between `a` (`ta x p`) and `b` (`tb x p`), written
 * row-major into `out` (`ta * tb` doubles).
 *
 * # Safety
 * All pointers must reference buffers of the stated sizes.
 */
enum WmStatus wm_affinity(const double *a,
                          size_t ta,
                          const double *b,
                          size_t tb,
                          size_t p,
                          const struct WmMetric *metric,
                          double *out,
                          size_t out_len);

/**
 * Highest-scoring path through the `rows x cols` row-major affinity `c`.
 * `steps_out` receives up to `capacity` steps (`2 * capacity` entries);
 * `rows + cols - 1` steps always suffice.
 *
 * # Safety
 * `c` must hold `rows * cols` doubles, `steps_out` `2 * capacity` entries,
 * and `len_out` and `score_out` must be writable.
 */
enum WmStatus wm_decode(const double *c,
                        size_t rows,
                        size_t cols,
                        int64_t band_width,
                        size_t *steps_out,
                        size_t capacity,
                        size_t *len_out,
                        double *score_out);

/**
 * Losses between two paths on a `rows x cols` grid.
 *
 * # Safety
 * Each steps array must hold `2 * len` entries; `out` must be writable.
 */
enum WmStatus wm_losses(const size_t *steps1,
                        size_t len1,
                        const size_t *steps2,
                        size_t len2,
                        size_t rows,
                        size_t cols,
                        struct WmLosses *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum WmStatus wm_dataset_new(struct WmDataset **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum WmStatus wm_dataset_load_manifest(const char *path, struct WmDataset **out);

/**
 * Appends a pair with its ground-truth path (`truth_len` steps).
 *
 * # Safety
 * `a` and `b` must hold `ta * p` and `tb * p` doubles, `truth` `2 *
 * truth_len` entries, and `dataset` must come from this library.
 */
enum WmStatus wm_dataset_add_pair(struct WmDataset *dataset,
                                  const double *a,
                                  size_t ta,
                                  const double *b,
                                  size_t tb,
                                  size_t p,
                                  const size_t *truth,
                                  size_t truth_len);

/**
 * Number of pairs, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t wm_dataset_len(const struct WmDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void wm_dataset_free(struct WmDataset *dataset);

/**
 * # Safety
 * `out` must be writable.
 */
enum WmStatus wm_train_config_default(struct WmTrainConfig *out);

/**
 * Trains a metric on every pair of `dataset`.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum WmStatus wm_train(const struct WmDataset *dataset,
                       const struct WmTrainConfig *config,
                       struct WmMetric **out);

/**
 * Aligns every pair with `metric` and writes the mean losses against the
 * ground truth into `out` (`sym_area` is left at 0).
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum WmStatus wm_evaluate(const struct WmDataset *dataset,
                          const struct WmMetric *metric,
                          int64_t band_width,
                          struct WmLosses *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WARPMETRIC_H */
