#ifndef GRPCOLL_H
#define GRPCOLL_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  GRP_STATUS_OK = 0,
  GRP_STATUS_NULL_POINTER = 1,
  GRP_STATUS_INVALID_ARGUMENT = 2,
  GRP_STATUS_INVALID_DIMENSION = 3,
  /**
   * The output buffer is too small; the required length was written.
   */
  GRP_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * Malformed key or model blob.
   */
  GRP_STATUS_FORMAT = 5,
  /**
   * Degenerate matrix or unachievable numeric request.
   */
  GRP_STATUS_NUMERIC = 6,
  GRP_STATUS_PANIC = 7,
  GRP_STATUS_INTERNAL = 8,
} GrpStatus;

/**
 * A participant's projection key.
 */
typedef struct GrpKey GrpKey;

/**
 * A trained classifier loaded from a `GRPN` checkpoint.
 */
typedef struct GrpModel GrpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *grp_version(void);

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminating NUL; 0 if there is none.
 */
size_t grp_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `cap - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t grp_last_error_message(char *buf, size_t cap);

/**
 * Draws a `k x d` Gaussian key scaled by `1/sqrt(k)`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
GrpStatus grp_key_generate(size_t k, size_t d, uint64_t seed, GrpKey **out);

/**
 * Releases a key. Null is ignored.
 *
 * # Safety
 * `key` must be null or come from this library and not be freed twice.
 */
void grp_key_free(GrpKey *key);

/**
 * Writes the key's output and input dimensions.
 *
 * # Safety
 * `key` must be a live handle; `k` and `d` valid for one write each.
 */
GrpStatus grp_key_dims(const GrpKey *key, size_t *k, size_t *d);

/**
 * `d / k`, or NaN for a null key.
 *
 * # Safety
 * `key` must be null or a live handle.
 */
double grp_key_compression_ratio(const GrpKey *key);

/**
 * Projects `x` (length `d`) into `out` (length `k`).
 *
 * # Safety
 * `x` and `out` must be valid for `x_len` and `out_len` doubles.
 */
GrpStatus grp_key_project(const GrpKey *key,
                          const double *x,
                          size_t x_len,
                          double *out,
                          size_t out_len);

/**
 * Serializes the key matrix in the `GRPM` format. `written` receives the
 * blob length; if `buf` is null or `cap` is smaller, nothing is copied and
 * `GRP_STATUS_BUFFER_TOO_SMALL` is returned (null `buf` with a valid
 * `written` is the way to query the size).
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes; `written` valid for a write.
 */
GrpStatus grp_key_export(const GrpKey *key, uint8_t *buf, size_t cap, size_t *written);

/**
 * Parses a `GRPM` blob. `scaled` selects whether projection applies the
 * `1/sqrt(k)` factor, which the blob does not record.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes; `out` valid for a pointer write.
 */
GrpStatus grp_key_import(const uint8_t *bytes, size_t len, bool scaled, GrpKey **out);

/**
 * Adds i.i.d. Laplace noise of scale `sensitivity / epsilon` to `x`,
 * writing `len` values to `out`. The noise stream is determined by `seed`.
 *
 * # Safety
 * `x` and `out` must be valid for `len` doubles.
 */
GrpStatus grp_noisify(const double *x,
                      size_t len,
                      double epsilon,
                      double sensitivity,
                      uint64_t seed,
                      double *out);

/**
 * Per-element variance `(||x||^2 + x_i^2) / k` of the transpose
 * reconstruction of `x` from a `k`-row key.
 *
 * # Safety
 * `x` and `out` must be valid for `len` doubles.
 */
GrpStatus grp_predicted_variance(const double *x, size_t len, size_t k, double *out);

/**
 * Frobenius condition number `||M||_F ||M+||_F` of a row-major matrix.
 *
 * # Safety
 * `m` must be valid for `rows * cols` doubles; `out` for one write.
 */
GrpStatus grp_condition_number(const double *m, size_t rows, size_t cols, double *out);

/**
 * Loads a `GRPN` checkpoint.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes; `out` valid for a pointer write.
 */
GrpStatus grp_model_load(const uint8_t *bytes, size_t len, GrpModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from this library and not be freed twice.
 */
void grp_model_free(GrpModel *model);

/**
 * Writes the model's input dimension and class count.
 *
 * # Safety
 * `model` must be a live handle; `dim` and `classes` valid for a write.
 */
GrpStatus grp_model_shape(const GrpModel *model, size_t *dim, size_t *classes);

/**
 * Classifies one (already obfuscated) sample. `probs` receives the class
 * probabilities and may be null when `probs_len` is 0.
 *
 * # Safety
 * `x` must be valid for `x_len` doubles, `probs` for `probs_len`, `class`
 * for one write.
 */
GrpStatus grp_model_classify(const GrpModel *model,
                             const double *x,
                             size_t x_len,
                             size_t *class_,
                             double *probs,
                             size_t probs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRPCOLL_H */
