#ifndef M4CORR_H
#define M4CORR_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define M4_OK 0

// The correlator accepted no candidate.
#define M4_NO_MATCH 1

#define M4_ERR_NULL -1

#define M4_ERR_INVALID -2

#define M4_ERR_IO -3

#define M4_ERR_PARSE -4

#define M4_ERR_UNDEFINED -5

#define M4_ERR_BUFFER -6

#define M4_ERR_PANIC -99

// A loaded set of series.
typedef struct M4Dataset M4Dataset;

typedef struct M4CorrelatorParams {
  uintptr_t window;
  double r_threshold;
  // Values `<= 0` or NaN disable the spread check.
  double std_ratio;
  bool bug1;
  bool bug2;
  bool past_only;
  bool include_self;
  // Forecast length; 0 means `window`.
  uintptr_t continuation;
} M4CorrelatorParams;

typedef struct M4Match {
  // File position of the source series.
  uintptr_t source;
  // End (exclusive) of the matched window in the source.
  uintptr_t tau;
  double r;
  // 1 if the source region reaches the target's forecast dates, 0 if not,
  // -1 when dates are unknown.
  int32_t used_future;
} M4Match;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *m4_last_error(void);

// Creates an empty dataset.
struct M4Dataset *m4_dataset_new(void);

// Loads an M4-format value file; `info_path` may be NULL.
//
// # Safety
// `path` and a non-NULL `info_path` must be NUL-terminated strings; `out`
// must be writable.
int32_t m4_dataset_load(const char *path, const char *info_path, struct M4Dataset **out);

// Appends a series. Ids must be unique.
//
// # Safety
// `ds` must come from this library; `id` must be NUL-terminated; `values`
// must hold `len` doubles.
int32_t m4_dataset_push(struct M4Dataset *ds, const char *id, const double *values, uintptr_t len);

// Number of series; 0 for NULL.
//
// # Safety
// `ds` must be NULL or come from this library.
uintptr_t m4_dataset_len(const struct M4Dataset *ds);

// Length of the series at file position `index`.
//
// # Safety
// `ds` must come from this library and `out_len` must be writable.
int32_t m4_dataset_series_len(const struct M4Dataset *ds, uintptr_t index, uintptr_t *out_len);

// # Safety
// `ds` must be NULL or come from this library, and is invalid afterwards.
void m4_dataset_free(struct M4Dataset *ds);

struct M4CorrelatorParams m4_correlator_params_default(void);

// Correlator forecast for the series at `target`. Writes `out_len` values
// (which must equal the continuation length) and returns `M4_OK`, or
// returns `M4_NO_MATCH` and leaves the outputs untouched.
//
// # Safety
// `ds` must come from this library, `params` must be readable, `out` must
// hold `out_len` doubles and `out_match` may be NULL.
int32_t m4_correlator_forecast(const struct M4Dataset *ds,
                               uintptr_t target,
                               const struct M4CorrelatorParams *params,
                               double *out,
                               uintptr_t out_len,
                               struct M4Match *out_match);

// Pearson correlation of two length-`n` arrays.
//
// # Safety
// `a` and `b` must hold `n` doubles; `out` must be writable.
int32_t m4_pearson(const double *a, const double *b, uintptr_t n, double *out);

// Repeats the last value `h` times.
//
// # Safety
// `values` must hold `n` doubles and `out` `h` doubles.
int32_t m4_naive_forecast(const double *values, uintptr_t n, uintptr_t h, double *out);

// Simple exponential smoothing with the smoothing constant chosen on a
// grid; the chosen value is written to `out_alpha` unless it is NULL.
//
// # Safety
// `values` must hold `n` doubles and `out` `h` doubles.
int32_t m4_ses_forecast(const double *values,
                        uintptr_t n,
                        uintptr_t h,
                        double *out,
                        double *out_alpha);

// Decomposition-based forecast.
//
// # Safety
// `values` must hold `n` doubles and `out` `h` doubles.
int32_t m4_custom_forecast(const double *values, uintptr_t n, uintptr_t h, double *out);

// Pointwise median of `m` forecasts stored row by row (`m * h` values).
//
// # Safety
// `forecasts` must hold `m * h` doubles and `out` `h` doubles.
int32_t m4_median_combine(const double *forecasts, uintptr_t m, uintptr_t h, double *out);

// Mean absolute scaled error with seasonal lag `m`.
//
// # Safety
// `train` must hold `n_train` doubles, `actual` and `forecast` `h` doubles.
int32_t m4_mase(const double *train,
                uintptr_t n_train,
                const double *actual,
                const double *forecast,
                uintptr_t h,
                uintptr_t m,
                double *out);

// Symmetric MAPE in percent.
//
// # Safety
// `actual` and `forecast` must hold `h` doubles.
int32_t m4_smape(const double *actual, const double *forecast, uintptr_t h, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* M4CORR_H */
