#ifndef SPECTRAL_GNG_H
#define SPECTRAL_GNG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_POINTER = 1,
  SG_STATUS_INVALID_INPUT = 2,
  SG_STATUS_DIMENSION_MISMATCH = 3,
  SG_STATUS_PARSE = 4,
  SG_STATUS_IO = 5,
  SG_STATUS_NUMERICAL = 6,
  SG_STATUS_BUFFER_TOO_SMALL = 7,
  SG_STATUS_PANIC = 8,
} SgStatus;

typedef enum SgMetric {
  SG_METRIC_F_MEASURE = 0,
  SG_METRIC_COVERING = 1,
  SG_METRIC_PRI = 2,
  SG_METRIC_VI = 3,
  SG_METRIC_ACCURACY = 4,
} SgMetric;

/**
 * Run configuration handle.
 */
typedef struct SgConfig SgConfig;

/**
 * Clustering or segmentation result handle.
 */
typedef struct SgResult SgResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread ("" after a success).
 * Valid until the next call into this library on the same thread.
 */
const char *sg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sg_version(void);

/**
 * New configuration with default settings. Free with [`sg_config_free`].
 */
struct SgConfig *sg_config_new(void);

/**
 * Parses a JSON configuration (missing fields take defaults).
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SgStatus sg_config_from_json(const char *json, struct SgConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from this library not yet freed.
 */
void sg_config_free(struct SgConfig *config);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SgStatus sg_config_set_seed(struct SgConfig *config, uint64_t seed);

/**
 * Sets the GNG size; 0 selects it automatically.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum SgStatus sg_config_set_neurons(struct SgConfig *config, size_t m);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SgStatus sg_config_set_k_max(struct SgConfig *config, size_t k_max);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SgStatus sg_config_set_local_scale_k(struct SgConfig *config, size_t k);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum SgStatus sg_config_set_variance_threshold(struct SgConfig *config, double threshold);

/**
 * Clusters `n` points of dimension `dim` stored row-major in `data`.
 * `config` may be null for defaults. Free the result with [`sg_result_free`].
 *
 * # Safety
 * `data` must point to `n * dim` readable doubles and `out` must be valid.
 */
enum SgStatus sg_cluster_points(const double *data,
                                size_t n,
                                size_t dim,
                                const struct SgConfig *config,
                                struct SgResult **out);

/**
 * Segments a `width` x `height` RGB image stored row-major as 8-bit
 * triples. Labels are one per pixel.
 *
 * # Safety
 * `rgb` must point to `width * height * 3` readable bytes and `out` must be valid.
 */
enum SgStatus sg_segment_rgb(const uint8_t *rgb,
                             size_t width,
                             size_t height,
                             const struct SgConfig *config,
                             struct SgResult **out);

/**
 * # Safety
 * `result` must be null or a handle from this library not yet freed.
 */
void sg_result_free(struct SgResult *result);

/**
 * Number of labels (points or pixels); 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t sg_result_len(const struct SgResult *result);

/**
 * Chosen number of clusters; 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t sg_result_chosen_k(const struct SgResult *result);

/**
 * Neurons in the trained GNG; 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t sg_result_neuron_count(const struct SgResult *result);

/**
 * Copies the labels into `out`, which holds `capacity` entries.
 *
 * # Safety
 * `result` must be a live handle and `out` must have room for `capacity` entries.
 */
enum SgStatus sg_result_labels(const struct SgResult *result, size_t *out, size_t capacity);

/**
 * Copies the chosen eigenvector numbers (from 1) into `out` and stores
 * their count in `count`.
 *
 * # Safety
 * `result` and `count` must be valid; `out` must have room for `capacity` entries.
 */
enum SgStatus sg_result_chosen_eigenvectors(const struct SgResult *result,
                                            size_t *out,
                                            size_t capacity,
                                            size_t *count);

/**
 * Full JSON report, owned by the result handle.
 *
 * # Safety
 * `result` must be null or a live handle; the string lives as long as it.
 */
const char *sg_result_report_json(const struct SgResult *result);

/**
 * Compares two labellings of `n` elements. For the F-measure, non-zero
 * ground-truth labels are foreground.
 *
 * # Safety
 * `pred` and `gt` must point to `n` readable entries; `out` must be valid.
 */
enum SgStatus sg_metric(enum SgMetric metric,
                        const size_t *pred,
                        const size_t *gt,
                        size_t n,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRAL_GNG_H */
