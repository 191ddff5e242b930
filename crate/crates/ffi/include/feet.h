#ifndef FEET_H
#define FEET_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum FeetStatus {
  FEET_STATUS_OK = 0,
  FEET_STATUS_NULL_ARGUMENT = 1,
  FEET_STATUS_INVALID_UTF8 = 2,
  FEET_STATUS_IO = 3,
  // Malformed embedding or predictions file.
  FEET_STATUS_FORMAT = 4,
  // Manifest could not be parsed or failed validation.
  FEET_STATUS_MANIFEST = 5,
  FEET_STATUS_INVALID_ARGUMENT = 6,
  // The metric is undefined on this input (e.g. a single class).
  FEET_STATUS_UNDEFINED = 7,
  // Run directory is occupied, or belongs to a different manifest.
  FEET_STATUS_RUN_DIRECTORY = 8,
  // The run finished but some cells failed.
  FEET_STATUS_CELLS_FAILED = 9,
  FEET_STATUS_BUFFER_TOO_SMALL = 10,
  FEET_STATUS_INDEX_OUT_OF_RANGE = 11,
  FEET_STATUS_PANIC = 12,
} FeetStatus;

typedef enum FeetAveraging {
  FEET_AVERAGING_MACRO = 0,
  FEET_AVERAGING_MICRO = 1,
  // Scores of `pos_class` only.
  FEET_AVERAGING_BINARY = 2,
} FeetAveraging;

// Opaque embedding set.
typedef struct FeetEmbeddingSet FeetEmbeddingSet;

// Opaque prediction set.
typedef struct FeetPredictions FeetPredictions;

// A bootstrap estimate. Undefined values are NaN.
typedef struct FeetEstimate {
  double point;
  double ci_low;
  double ci_high;
  double half_width;
  size_t n;
  uint32_t replicates;
  uint32_t dropped;
} FeetEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *feet_version(void);

// Message of the last failure on this thread, or NULL if none. Valid until
// the next failing call on the same thread.
const char *feet_last_error(void);

// Loads a `.feet.jsonl` or `.feet.bin` file (detected by content).
//
// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum FeetStatus feet_embedding_set_load(const char *path, struct FeetEmbeddingSet **out);

// Writes `set` to `path`; the encoding follows the extension (`.bin` for
// binary, anything else canonical).
//
// # Safety
// `set` must come from [`feet_embedding_set_load`]; `path` must be a valid
// C string.
enum FeetStatus feet_embedding_set_save(const struct FeetEmbeddingSet *set, const char *path);

// Number of records; 0 for NULL.
//
// # Safety
// `set` must be NULL or come from [`feet_embedding_set_load`].
size_t feet_embedding_set_count(const struct FeetEmbeddingSet *set);

// Vector dimension; 0 for NULL.
//
// # Safety
// `set` must be NULL or come from [`feet_embedding_set_load`].
size_t feet_embedding_set_dim(const struct FeetEmbeddingSet *set);

// Number of classes; 0 for NULL.
//
// # Safety
// `set` must be NULL or come from [`feet_embedding_set_load`].
uint32_t feet_embedding_set_num_classes(const struct FeetEmbeddingSet *set);

// Copies record `index` into `buf` (at least `dim` floats) and its label
// into `label`.
//
// # Safety
// `set` must come from [`feet_embedding_set_load`]; `buf` must hold `len`
// floats; `label` must be a valid pointer.
enum FeetStatus feet_embedding_set_record(const struct FeetEmbeddingSet *set,
                                          size_t index,
                                          float *buf,
                                          size_t len,
                                          uint32_t *label);

// # Safety
// `set` must be NULL or come from [`feet_embedding_set_load`], and must
// not be used afterwards.
void feet_embedding_set_free(struct FeetEmbeddingSet *set);

// Loads a predictions JSONL file (`id`, `label`, `scores` per line).
//
// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum FeetStatus feet_predictions_load(const char *path, struct FeetPredictions **out);

// Number of predictions; 0 for NULL.
//
// # Safety
// `preds` must be NULL or come from [`feet_predictions_load`].
size_t feet_predictions_len(const struct FeetPredictions *preds);

// # Safety
// `preds` must be NULL or come from [`feet_predictions_load`], and must
// not be used afterwards.
void feet_predictions_free(struct FeetPredictions *preds);

// Point value and percentile-bootstrap 95% interval of `metric`
// (`accuracy`, `precision`, `recall`, `f1`, `auroc`, `auprc`).
//
// # Safety
// `preds` must come from [`feet_predictions_load`]; `metric` must be a
// valid C string; `out` a valid pointer.
enum FeetStatus feet_bootstrap_ci(const struct FeetPredictions *preds,
                                  const char *metric,
                                  enum FeetAveraging averaging,
                                  uint32_t pos_class,
                                  uint32_t replicates,
                                  uint64_t seed,
                                  struct FeetEstimate *out);

// Binary AUROC; `labels[i]` non-zero marks a positive.
//
// # Safety
// `scores` and `labels` must each hold `n` elements; `out` must be valid.
enum FeetStatus feet_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Binary average precision; `labels[i]` non-zero marks a positive.
//
// # Safety
// `scores` and `labels` must each hold `n` elements; `out` must be valid.
enum FeetStatus feet_auprc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Seed for the cell `key` (`model|task|regime|shot|replicate`).
//
// # Safety
// `key` must be a valid C string and `out` a valid pointer.
enum FeetStatus feet_derive_cell_seed(uint64_t master_seed, const char *key, uint64_t *out);

// Checks a manifest and the files it references. `errors` (may be NULL)
// receives the number of error findings; on failure the findings are the
// last-error message, one per line.
//
// # Safety
// `path` must be a valid C string; `errors` NULL or valid.
enum FeetStatus feet_validate_manifest(const char *path, size_t *errors);

// Executes (or with `resume`, continues) the run described by the manifest
// at `manifest_path`, writing into `out_dir`.
//
// # Safety
// Both paths must be valid C strings.
enum FeetStatus feet_run(const char *manifest_path,
                         const char *out_dir,
                         size_t parallelism,
                         bool resume);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEET_H */
