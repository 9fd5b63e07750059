#ifndef NELSON_IBC_H
#define NELSON_IBC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum NibStatus {
  NIB_STATUS_OK = 0,
  NIB_STATUS_NULL_POINTER = 1,
  NIB_STATUS_INVALID_UTF8 = 2,
  NIB_STATUS_INVALID_CONFIG = 3,
  NIB_STATUS_RESOURCE_LIMIT = 4,
  NIB_STATUS_BUFFER_TOO_SMALL = 5,
  NIB_STATUS_NUMERICAL = 6,
  NIB_STATUS_PANIC = 7,
} NibStatus;

/**
 * Opaque model handle.
 */
typedef struct NibModel NibModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a model from a NUL-terminated TOML string; an empty string gives the
 * reference configuration. On success `*out` owns a handle to release with
 * [`nib_model_free`].
 *
 * # Safety
 * `config_toml` must be a valid C string and `out` a writable pointer.
 */
enum NibStatus nib_model_new(const char *config_toml, struct NibModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`nib_model_new`] and not be used afterwards.
 */
void nib_model_free(struct NibModel *model);

/**
 * Basis dimension.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum NibStatus nib_model_dimension(const struct NibModel *model, size_t *out);

/**
 * Writes the measure weights (`dimension` values).
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum NibStatus nib_model_measure(const struct NibModel *model, double *buf, size_t len);

/**
 * Writes the Hamiltonian, `dimension²` values row-major.
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum NibStatus nib_model_hamiltonian(const struct NibModel *model, double *buf, size_t len);

/**
 * Writes `(H + λ)^{-1}`, `dimension²` values row-major. `-λ` must not be an
 * eigenvalue.
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum NibStatus nib_model_resolvent(const struct NibModel *model,
                                   double lambda,
                                   double *buf,
                                   size_t len);

/**
 * Lowest eigenvalue and, when `vec` is non-null, its eigenvector
 * (`dimension` values, unit norm in the measure, largest entry positive).
 *
 * # Safety
 * `energy` must be writable; `vec`, if non-null, must hold `len` doubles.
 */
enum NibStatus nib_model_ground_state(const struct NibModel *model,
                                      double *energy,
                                      double *vec,
                                      size_t len);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *nib_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *nib_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NELSON_IBC_H */
