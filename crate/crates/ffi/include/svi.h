#ifndef SVI_H
#define SVI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum SviStatus {
  SVI_STATUS_OK = 0,
  SVI_STATUS_NULL_POINTER = 1,
  SVI_STATUS_INVALID_ARGUMENT = 2,
  SVI_STATUS_SHAPE = 3,
  SVI_STATUS_TRAINING = 4,
  SVI_STATUS_SELECTION = 5,
  SVI_STATUS_PARSE = 6,
  SVI_STATUS_IO = 7,
  SVI_STATUS_CONFIG = 8,
  SVI_STATUS_PANIC = 9,
} SviStatus;

/**
 * A regression dataset.
 */
typedef struct SviDataset SviDataset;

/**
 * A trained variational posterior with its network shape.
 */
typedef struct SviModel SviModel;

/**
 * A sparse teacher network.
 */
typedef struct SviTeacher SviTeacher;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or an empty string.
 * Valid until the next library call on the same thread.
 */
const char *svi_last_error(void);

/**
 * Releases a string returned by the library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void svi_string_free(char *s);

/**
 * Copies `n_rows` x `n_features` row-major inputs and `n_rows` targets.
 *
 * # Safety
 * `x` must hold `n_rows * n_features` values and `y` `n_rows` values.
 */
enum SviStatus svi_dataset_new(const double *x,
                               const double *y,
                               size_t n_rows,
                               size_t n_features,
                               struct SviDataset **out);

/**
 * Loads a numeric CSV with a header. `target` is a column name or an
 * integer index (negative counts from the end); null means the last column.
 *
 * # Safety
 * `path` and `target` (if non-null) must be NUL-terminated strings.
 */
enum SviStatus svi_dataset_load_csv(const char *path, const char *target, struct SviDataset **out);

/**
 * # Safety
 * `ds` must be a live dataset handle or null.
 */
size_t svi_dataset_rows(const struct SviDataset *ds);

/**
 * # Safety
 * `ds` must be a live dataset handle or null.
 */
size_t svi_dataset_features(const struct SviDataset *ds);

/**
 * # Safety
 * `ds` must come from this library and not have been freed.
 */
void svi_dataset_free(struct SviDataset *ds);

/**
 * Draws a teacher with weights from `U(weight_low, weight_high)`, each
 * zeroed with probability `zero_rate`.
 *
 * # Safety
 * `widths` must hold `n_hidden` values.
 */
enum SviStatus svi_teacher_generate(size_t input_dim,
                                    const size_t *widths,
                                    size_t n_hidden,
                                    double weight_low,
                                    double weight_high,
                                    double zero_rate,
                                    uint64_t seed,
                                    struct SviTeacher **out);

/**
 * Samples `n` rows from the teacher with Gaussian noise `sigma_eps`.
 *
 * # Safety
 * `teacher` must be a live handle.
 */
enum SviStatus svi_teacher_synthesize(const struct SviTeacher *teacher,
                                      size_t n,
                                      double sigma_eps,
                                      uint64_t seed,
                                      struct SviDataset **out);

/**
 * # Safety
 * `teacher` must be a live handle or null.
 */
size_t svi_teacher_nonzero_count(const struct SviTeacher *teacher);

/**
 * # Safety
 * `teacher` must come from this library and not have been freed.
 */
void svi_teacher_free(struct SviTeacher *teacher);

/**
 * Trains one architecture. `config_json` may be null or a JSON object with
 * optional `prior` and `train` sections.
 *
 * # Safety
 * `data` must be a live handle, `widths` must hold `n_hidden` values and
 * `config_json` must be null or NUL-terminated.
 */
enum SviStatus svi_train(const struct SviDataset *data,
                         const size_t *widths,
                         size_t n_hidden,
                         const char *config_json,
                         struct SviModel **out);

/**
 * Trains every entry of the config's `candidates` list (hidden widths)
 * and returns the model with the best penalized ELBO. The model's report
 * is the full selection report.
 *
 * # Safety
 * As for [`svi_train`].
 */
enum SviStatus svi_select(const struct SviDataset *data,
                          const char *config_json,
                          size_t parallel,
                          struct SviModel **out);

/**
 * Posterior-mean predictions averaged over `draws` samples, written to
 * `out_y` (length `n_rows`).
 *
 * # Safety
 * `x` must hold `n_rows * input_dim` values and `out_y` room for `n_rows`.
 */
enum SviStatus svi_model_predict(const struct SviModel *model,
                                 const double *x,
                                 size_t n_rows,
                                 size_t draws,
                                 uint64_t seed,
                                 double *out_y);

/**
 * # Safety
 * `model` must be a live handle or null.
 */
size_t svi_model_input_dim(const struct SviModel *model);

/**
 * # Safety
 * `model` must be a live handle or null.
 */
size_t svi_model_param_count(const struct SviModel *model);

/**
 * Sum of inclusion probabilities; NaN for a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
double svi_model_expected_edges(const struct SviModel *model);

/**
 * Training or selection report as JSON. Borrowed; valid while the model lives.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
const char *svi_model_report(const struct SviModel *model);

/**
 * Shape and variational parameters as a JSON string owned by the caller
 * (release with [`svi_string_free`]); null on failure.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
char *svi_model_to_json(const struct SviModel *model);

/**
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void svi_model_free(struct SviModel *model);

/**
 * Variational error `r_n` and estimation rate `eps_n` (constant 1,
 * log exponent 1) for depth `depth`, width `width`, sparsity `sparsity`,
 * sample size `n`, input dimension `input_dim` and weight bound `bound`.
 *
 * # Safety
 * `out_r` and `out_eps` must be valid for writes.
 */
enum SviStatus svi_rates(uint32_t depth,
                         double width,
                         double sparsity,
                         double n,
                         uint32_t input_dim,
                         double bound,
                         double *out_r,
                         double *out_eps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVI_H */
