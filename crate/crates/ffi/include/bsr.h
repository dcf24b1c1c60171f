#ifndef BSR_H
#define BSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum BsrStatus {
  BSR_STATUS_OK = 0,
  BSR_STATUS_INVALID_ARGUMENT = 1,
  BSR_STATUS_DIMENSION = 2,
  BSR_STATUS_NUMERICAL = 3,
  BSR_STATUS_IO = 4,
  BSR_STATUS_FORMAT = 5,
  BSR_STATUS_CONFIG = 6,
  BSR_STATUS_ZERO_GROUND_TRUTH = 7,
  BSR_STATUS_TOO_LARGE = 8,
  BSR_STATUS_NULL_POINTER = 9,
  BSR_STATUS_PANIC = 10,
} BsrStatus;

// Network weight sharing.
typedef enum BsrMode {
  BSR_MODE_TIED = 0,
  BSR_MODE_UNTIED = 1,
} BsrMode;

// Opaque linear measurement model.
typedef struct BsrModel BsrModel;

// Opaque LBISTA network.
typedef struct BsrParams BsrParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *bsr_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bsr_version(void);

// Convolution model with `n_taps` (odd) taps acting on `n_r x n_meas` signals.
//
// # Safety
// `taps` must point to `n_taps` doubles and `out` to writable storage.
enum BsrStatus bsr_model_conv_new(const double *taps,
                                  size_t n_taps,
                                  size_t n_r,
                                  size_t n_meas,
                                  struct BsrModel **out);

// Dense model from a row-major `n_d x (n_r * n_meas)` matrix.
//
// # Safety
// `entries` must point to `n_d * n_r * n_meas` doubles and `out` to
// writable storage.
enum BsrStatus bsr_model_dense_new(const double *entries,
                                   size_t n_d,
                                   size_t n_r,
                                   size_t n_meas,
                                   struct BsrModel **out);

// Loads a model from a manifest file or a directory holding `model.json`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum BsrStatus bsr_model_load(const char *path_, struct BsrModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from a `bsr_model_*` constructor and not be used again.
void bsr_model_free(struct BsrModel *model);

// Signal `(rows, cols)` and data `(rows, cols)` shapes of a model.
//
// # Safety
// All pointers must be valid; `model` must be a live handle.
enum BsrStatus bsr_model_shapes(const struct BsrModel *model,
                                size_t *signal_rows,
                                size_t *signal_cols,
                                size_t *data_rows,
                                size_t *data_cols);

// Upper bound on the squared operator norm.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum BsrStatus bsr_model_lipschitz(const struct BsrModel *model, double *out);

// Runs `iters` Block-ISTA iterations. `gamma <= 0` selects `1/L`.
// `data` has the model's data shape and `out` its signal shape.
//
// # Safety
// Buffers must hold `data_len` and `out_len` doubles.
enum BsrStatus bsr_bista_solve(const struct BsrModel *model,
                               const double *data,
                               size_t data_len,
                               double lambda,
                               double gamma,
                               size_t iters,
                               double *out,
                               size_t out_len);

// Untrained network reproducing Block-ISTA with `(lambda0, gamma)`.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum BsrStatus bsr_params_init(const struct BsrModel *model,
                               double gamma,
                               double lambda0,
                               size_t layers,
                               enum BsrMode mode,
                               struct BsrParams **out);

// Loads trained parameters from a directory or `params.json`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum BsrStatus bsr_params_load(const char *path_, struct BsrParams **out);

// Writes parameters into a directory.
//
// # Safety
// `params` must be a live handle and `path` NUL-terminated.
enum BsrStatus bsr_params_save(const struct BsrParams *params, const char *path_);

// Number of layers of a network, or 0 for a null handle.
//
// # Safety
// `params` must be null or a live handle.
size_t bsr_params_layers(const struct BsrParams *params);

// Releases a network. Null is ignored.
//
// # Safety
// `params` must come from a `bsr_params_*` constructor and not be used again.
void bsr_params_free(struct BsrParams *params);

// Network output after `depth` layers; a negative depth applies all layers.
//
// # Safety
// Buffers must hold `data_len` and `out_len` doubles.
enum BsrStatus bsr_lbista_forward(const struct BsrParams *params,
                                  const double *data,
                                  size_t data_len,
                                  int64_t depth,
                                  double *out,
                                  size_t out_len);

// Block soft threshold of a row-major `rows x cols` matrix; each row is a block.
//
// # Safety
// `values` and `out` must hold `rows * cols` doubles; they may alias.
enum BsrStatus bsr_block_soft_threshold(const double *values,
                                        size_t rows,
                                        size_t cols,
                                        double lambda,
                                        double *out);

// NMSE in dB of `estimate` against `truth`, both of length `len`.
// An exact match yields negative infinity.
//
// # Safety
// Both buffers must hold `len` doubles and `out` must be writable.
enum BsrStatus bsr_nmse_db(const double *estimate, const double *truth, size_t len, double *out);

// Normalized 1-Wasserstein distance between two nonnegative profiles.
//
// # Safety
// Both buffers must hold `len` doubles and `out` must be writable.
enum BsrStatus bsr_wasserstein1(const double *u, const double *v, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSR_H */
