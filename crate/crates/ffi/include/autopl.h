#ifndef AUTOPL_H
#define AUTOPL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AutoplStatus {
  AUTOPL_STATUS_OK = 0,
  // A required pointer argument was null.
  AUTOPL_STATUS_NULL_POINTER = 1,
  // An argument was malformed, e.g. a string that is not UTF-8.
  AUTOPL_STATUS_INVALID_ARGUMENT = 2,
  // Input data was rejected: domain, shape, I/O or parse failures.
  AUTOPL_STATUS_DATA = 3,
  // Training or constant fitting failed.
  AUTOPL_STATUS_TRAINING = 4,
  // A configuration value or expression was invalid.
  AUTOPL_STATUS_CONFIG = 5,
  // A bug inside the library; the message holds the panic text.
  AUTOPL_STATUS_INTERNAL = 6,
} AutoplStatus;

// Physical-validity verdict of an expression.
typedef enum AutoplVerdict {
  AUTOPL_VERDICT_VALID = 0,
  AUTOPL_VERDICT_INVALID = 1,
  AUTOPL_VERDICT_NOT_APPLICABLE = 2,
} AutoplVerdict;

// Opaque dataset handle.
typedef struct AutoplDataset AutoplDataset;

// Opaque expression handle.
typedef struct AutoplExpression AutoplExpression;

// Opaque KAN handle.
typedef struct AutoplKan AutoplKan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *autopl_version(void);

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into the library on this thread.
const char *autopl_last_error_message(void);

// Generates a synthetic dataset. `model` is "abg" or "ci".
//
// # Safety
// `model` must be a valid C string and `out` a valid pointer.
enum AutoplStatus autopl_dataset_synthetic(const char *model,
                                           size_t count,
                                           uint64_t seed,
                                           struct AutoplDataset **out);

// Reads a dataset CSV with a `pl_db` target column.
//
// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum AutoplStatus autopl_dataset_read_csv(const char *path, struct AutoplDataset **out);

// Writes a dataset CSV.
//
// # Safety
// `ds` must be a live handle and `path` a valid C string.
enum AutoplStatus autopl_dataset_write_csv(const struct AutoplDataset *ds, const char *path);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t autopl_dataset_rows(const struct AutoplDataset *ds);

// Number of feature columns, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t autopl_dataset_features(const struct AutoplDataset *ds);

// Copies the target column (`rows` values) into `out`.
//
// # Safety
// `out` must have room for `autopl_dataset_rows(ds)` values.
enum AutoplStatus autopl_dataset_target(const struct AutoplDataset *ds, double *out);

// Copies the raw feature matrix, row-major, into `out`.
//
// # Safety
// `out` must have room for `rows * features` values.
enum AutoplStatus autopl_dataset_matrix(const struct AutoplDataset *ds, double *out);

// # Safety
// `ds` must be null or a handle not yet freed.
void autopl_dataset_free(struct AutoplDataset *ds);

// Parses whitespace-separated pre-order tokens such as `add x0 const`.
// `constants` fills the `const` placeholders and may be null when
// `n_constants` is 0.
//
// # Safety
// `tokens` must be a valid C string, `constants` must point to
// `n_constants` values and `out` must be a valid pointer.
enum AutoplStatus autopl_expression_parse(const char *tokens,
                                          const double *constants,
                                          size_t n_constants,
                                          struct AutoplExpression **out);

// Number of `const` placeholders, or 0 for a null handle.
//
// # Safety
// `e` must be null or a live handle.
size_t autopl_expression_placeholders(const struct AutoplExpression *e);

// Evaluates on a row-major matrix and writes `n_rows` predictions.
//
// # Safety
// `rows` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
enum AutoplStatus autopl_expression_evaluate(const struct AutoplExpression *e,
                                             const double *rows,
                                             size_t n_rows,
                                             size_t n_cols,
                                             double *out);

// Writes the infix form into `buf` (NUL-terminated, truncated to fit) and
// the full length without the NUL into `len`. Pass a null `buf` to query
// the length.
//
// # Safety
// `buf` must be null or have room for `buf_len` bytes; `len` must be valid.
enum AutoplStatus autopl_expression_infix(const struct AutoplExpression *e,
                                          char *buf,
                                          size_t buf_len,
                                          size_t *len);

// # Safety
// `e` must be null or a handle not yet freed.
void autopl_expression_free(struct AutoplExpression *e);

// Runs the physical-validity check of `e` against the feature names and
// ranges of `ds`.
//
// # Safety
// Handles must be live and `out` valid.
enum AutoplStatus autopl_validity_check(const struct AutoplExpression *e,
                                        const struct AutoplDataset *ds,
                                        enum AutoplVerdict *out);

// Trains a KAN on `ds`. `preset` is "abg", "ci", "indoor", "outdoor" or
// null for defaults sized to the dataset. `steps` of 0 keeps the preset's.
// Features are max-normalised first; predictions take raw inputs.
//
// # Safety
// `ds` must be live, `preset` null or a valid C string, `out` valid.
enum AutoplStatus autopl_kan_train(const struct AutoplDataset *ds,
                                   const char *preset,
                                   size_t steps,
                                   uint64_t seed,
                                   struct AutoplKan **out);

// Loads a KAN checkpoint.
//
// # Safety
// `path` must be a valid C string and `out` valid.
enum AutoplStatus autopl_kan_load(const char *path, struct AutoplKan **out);

// Saves a KAN checkpoint.
//
// # Safety
// `k` must be live and `path` a valid C string.
enum AutoplStatus autopl_kan_save(const struct AutoplKan *k, const char *path);

// Number of network inputs, or 0 for a null handle.
//
// # Safety
// `k` must be null or a live handle.
size_t autopl_kan_inputs(const struct AutoplKan *k);

// Predicts pathloss for raw (unnormalised) feature rows.
//
// # Safety
// `rows` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
enum AutoplStatus autopl_kan_predict(const struct AutoplKan *k,
                                     const double *rows,
                                     size_t n_rows,
                                     size_t n_cols,
                                     double *out);

// # Safety
// `k` must be null or a handle not yet freed.
void autopl_kan_free(struct AutoplKan *k);

// Runs deep symbolic regression on `ds`. `policy` is "rspg", "vpg" or
// "pqt"; `samples` of 0 keeps the default budget, and a smaller budget
// also caps the batch size. The best expression is
// returned over raw inputs, with its reward in `reward`.
//
// # Safety
// `ds` must be live, `policy` a valid C string, `out` and `reward` valid.
enum AutoplStatus autopl_dsr_train(const struct AutoplDataset *ds,
                                   const char *policy,
                                   size_t samples,
                                   uint64_t seed,
                                   struct AutoplExpression **out,
                                   double *reward);

// Free-space pathloss at 1 m, dB.
//
// # Safety
// `out` must be valid.
enum AutoplStatus autopl_fspl_1m(double f_hz, double *out);

// Free-space pathloss with frequency in MHz and distance in km, dB.
//
// # Safety
// `out` must be valid.
enum AutoplStatus autopl_eval_fs(double f_mhz, double d_km, double *out);

// Close-in model pathloss, dB.
//
// # Safety
// `out` must be valid.
enum AutoplStatus autopl_eval_ci(double f_hz, double n, double d_m, double chi, double *out);

// Alpha-beta-gamma model pathloss, dB.
//
// # Safety
// `out` must be valid.
enum AutoplStatus autopl_eval_abg(double alpha,
                                  double beta,
                                  double gamma,
                                  double f_ghz,
                                  double d_m,
                                  double chi,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOPL_H */
