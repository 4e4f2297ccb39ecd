#ifndef TWOLEVEL_H
#define TWOLEVEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TlStatus {
  TL_STATUS_OK = 0,
  TL_STATUS_NULL_ARGUMENT = 1,
  TL_STATUS_INVALID_UTF8 = 2,
  TL_STATUS_IO = 3,
  TL_STATUS_DATA = 4,
  TL_STATUS_CONFIG = 5,
  TL_STATUS_SEARCH = 6,
  TL_STATUS_JSON = 7,
  TL_STATUS_ORACLE = 8,
  TL_STATUS_PANIC = 9,
} TlStatus;

// A labeled dataset.
typedef struct TlDataset TlDataset;

// A fitted explanation with its decision set.
typedef struct TlExplanation TlExplanation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *tl_last_error(void);

// Load a CSV whose `label_col` holds the black-box labels.
//
// # Safety
// String arguments are valid NUL-terminated strings; `out` is writable.
enum TlStatus tl_dataset_load_csv(const char *path, const char *label_col, struct TlDataset **out);

// Same as [`tl_dataset_load_csv`] with the CSV text in memory.
//
// # Safety
// String arguments are valid NUL-terminated strings; `out` is writable.
enum TlStatus tl_dataset_from_csv_text(const char *csv,
                                       const char *label_col,
                                       struct TlDataset **out);

// Number of instances; 0 for a null handle.
//
// # Safety
// `ds` is null or a live handle.
size_t tl_dataset_len(const struct TlDataset *ds);

// # Safety
// `ds` is null or a handle not yet freed.
void tl_dataset_free(struct TlDataset *ds);

// Fit an explanation. `request_json` may be null for the defaults.
//
// # Safety
// `ds` is a live handle; `request_json` is null or a valid string; `out` is writable.
enum TlStatus tl_explain(const struct TlDataset *ds,
                         const char *request_json,
                         struct TlExplanation **out);

// Parse explanation JSON as written by [`tl_explanation_to_json`] or the CLI.
//
// # Safety
// `json` is a valid string; `out` is writable.
enum TlStatus tl_explanation_from_json(const char *json, struct TlExplanation **out);

// # Safety
// `exp` is a live handle; `out` is writable.
enum TlStatus tl_explanation_to_json(const struct TlExplanation *exp, char **out);

// Number of rules; 0 for a null handle.
//
// # Safety
// `exp` is null or a live handle.
size_t tl_explanation_rule_count(const struct TlExplanation *exp);

// Agreement rate on the fitted data; NaN for a null handle.
//
// # Safety
// `exp` is null or a live handle.
double tl_explanation_agreement(const struct TlExplanation *exp);

// Predict an instance given as a JSON object. Writes
// `{"label":..,"provenance":..,"rule":..,"fired_rules":[..]}` to `out`.
//
// # Safety
// `exp` is a live handle; `instance_json` is a valid string; `out` is writable.
enum TlStatus tl_explanation_predict(const struct TlExplanation *exp,
                                     const char *instance_json,
                                     char **out);

// # Safety
// `exp` is null or a handle not yet freed.
void tl_explanation_free(struct TlExplanation *exp);

// Release a string returned by this library.
//
// # Safety
// `s` is null or a string from this library not yet freed.
void tl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWOLEVEL_H */
