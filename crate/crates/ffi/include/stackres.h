#ifndef STACKRES_H
#define STACKRES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StackresStatus {
  STACKRES_STATUS_OK = 0,
  STACKRES_STATUS_NULL_POINTER = 1,
  STACKRES_STATUS_INVALID_ARGUMENT = 2,
  // Malformed or incomplete loss data.
  STACKRES_STATUS_INVALID_DATA = 3,
  // A model could not be fitted or simulated.
  STACKRES_STATUS_ESTIMATION = 4,
  // An error measure or risk ratio is undefined.
  STACKRES_STATUS_EVALUATION = 5,
  STACKRES_STATUS_CONFIG = 6,
  STACKRES_STATUS_IO = 7,
  STACKRES_STATUS_PANIC = 8,
} StackresStatus;

typedef enum StackresQuantity {
  STACKRES_QUANTITY_RESERVE = 0,
  STACKRES_QUANTITY_NEXT_YEAR = 1,
  STACKRES_QUANTITY_ULTIMATE = 2,
} StackresQuantity;

// Simulated run-off outcomes.
typedef struct StackresDistribution StackresDistribution;

// Cumulative paid triangle.
typedef struct StackresTriangle StackresTriangle;

typedef struct StackresSummary {
  double mean;
  double sd;
  double percentile;
} StackresSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL
// terminated, truncated to `len`) and returns the full message length
// without the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t stackres_last_error(char *buf, size_t len);

// Builds an `n × n` cumulative triangle from row-major `cells`; values
// below the latest diagonal are ignored.
//
// # Safety
// `cells` must be valid for `len` reads and `out` for one write.
enum StackresStatus stackres_triangle_new(size_t n,
                                          const double *cells,
                                          size_t len,
                                          struct StackresTriangle **out);

// # Safety
// `t` must be null or a handle from `stackres_triangle_new` not yet freed.
void stackres_triangle_free(struct StackresTriangle *t);

// Side length, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
size_t stackres_triangle_size(const struct StackresTriangle *t);

// Volume-weighted age-to-age factors into `out[0..n]`; `out[0]` is 1.
//
// # Safety
// `t` must be a live handle and `out` valid for `len` writes.
enum StackresStatus stackres_dev_factors(const struct StackresTriangle *t, double *out, size_t len);

// Deterministic Chain Ladder reserve.
//
// # Safety
// `t` must be a live handle and `out` valid for one write.
enum StackresStatus stackres_chain_ladder_reserve(const struct StackresTriangle *t, double *out);

// ODP residual bootstrap with gamma process error.
//
// # Safety
// `t` must be a live handle and `out` valid for one write.
enum StackresStatus stackres_odp_bootstrap(const struct StackresTriangle *t,
                                           size_t n_sims,
                                           uint64_t seed,
                                           struct StackresDistribution **out);

// Mack residual bootstrap with normal process error.
//
// # Safety
// `t` must be a live handle and `out` valid for one write.
enum StackresStatus stackres_mack_bootstrap(const struct StackresTriangle *t,
                                            size_t n_sims,
                                            uint64_t seed,
                                            struct StackresDistribution **out);

// # Safety
// `d` must be null or a handle from a bootstrap call not yet freed.
void stackres_distribution_free(struct StackresDistribution *d);

// Number of simulated outcomes, or 0 for a null handle.
//
// # Safety
// `d` must be null or a live handle.
size_t stackres_distribution_len(const struct StackresDistribution *d);

// Mean, standard deviation and `level` percentile of one quantity.
//
// # Safety
// `d` must be a live handle and `out` valid for one write.
enum StackresStatus stackres_distribution_summary(const struct StackresDistribution *d,
                                                  enum StackresQuantity quantity,
                                                  double level,
                                                  struct StackresSummary *out);

// Kupiec proportion-of-failures p-value for `exceedances` out of `k`.
//
// # Safety
// `out` must be valid for one write.
enum StackresStatus stackres_kupiec_test(size_t exceedances, size_t k, double p, double *out);

// Percentage RMSE of `k` predictions against `k` actuals.
//
// # Safety
// `predictions` and `actuals` must be valid for `k` reads, `out` for one
// write.
enum StackresStatus stackres_pct_rmse(const double *predictions,
                                      const double *actuals,
                                      size_t k,
                                      double *out);

// Runs the full pipeline from a TOML config file and stores the number of
// companies evaluated.
//
// # Safety
// `config_path` must be a NUL-terminated string; `companies` null or valid
// for one write.
enum StackresStatus stackres_run(const char *config_path, size_t *companies);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STACKRES_H */
