#ifndef METAOPT_H
#define METAOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MoStatus {
  MO_STATUS_OK = 0,
  MO_STATUS_NULL_POINTER = 1,
  MO_STATUS_INVALID_ARGUMENT = 2,
  MO_STATUS_PARSE = 3,
  MO_STATUS_VALIDATION = 4,
  MO_STATUS_IO = 5,
  MO_STATUS_RUNTIME = 6,
  MO_STATUS_PANIC = 7,
} MoStatus;

// Parsed LETOR file, densified to a common feature width.
typedef struct MoLetorDataset MoLetorDataset;

// Result of a completed experiment: per-run summaries and aggregates.
typedef struct MoRun MoRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread; do not free it.
const char *mo_last_error_message(void);

// Release a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must come from this library and not have been freed already.
void mo_string_free(char *s);

// NDCG@k of the ordering induced by `scores` (descending; ties by index).
//
// # Safety
// `scores` and `grades` must point to `n` readable elements; `out` must be writable.
enum MoStatus mo_ndcg_at_k(const double *scores,
                           const uint32_t *grades,
                           uintptr_t n,
                           uint32_t max_grade,
                           uintptr_t k,
                           double *out);

// Mean and normal-approximation CI half-width at `level` (0.90, 0.95 or 0.99).
//
// # Safety
// `values` must point to `n` readable doubles; both outputs must be writable.
enum MoStatus mo_confidence_interval(const double *values,
                                     uintptr_t n,
                                     double level,
                                     double *out_mean,
                                     double *out_half_width);

// Parse LETOR text into a new dataset handle.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum MoStatus mo_letor_parse(const char *text, struct MoLetorDataset **out);

// Read and parse a LETOR file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MoStatus mo_letor_parse_file(const char *path, struct MoLetorDataset **out);

// Number of records (lines) in the dataset.
//
// # Safety
// `ds` must be a live handle or NULL (returns 0).
uintptr_t mo_letor_len(const struct MoLetorDataset *ds);

// Dense feature width (largest feature id seen).
//
// # Safety
// `ds` must be a live handle or NULL (returns 0).
uintptr_t mo_letor_width(const struct MoLetorDataset *ds);

// Number of distinct query ids.
//
// # Safety
// `ds` must be a live handle or NULL (returns 0).
uintptr_t mo_letor_num_queries(const struct MoLetorDataset *ds);

// Serialize back to LETOR text. Free the result with `mo_string_free`.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum MoStatus mo_letor_serialize(const struct MoLetorDataset *ds, char **out);

// # Safety
// `ds` must come from `mo_letor_parse*` and not be used afterwards. NULL is a no-op.
void mo_letor_free(struct MoLetorDataset *ds);

// Run a full experiment from a JSON configuration, writing artifacts to
// `out_dir` (NULL: the configuration's `output_dir`). Relative LETOR paths
// resolve against the current directory.
//
// # Safety
// `config_json` must be a NUL-terminated string, `out_dir` NULL or one, and
// `out` writable.
enum MoStatus mo_meta_train_json(const char *config_json, const char *out_dir, struct MoRun **out);

// Number of (combination, seed) runs in the experiment.
//
// # Safety
// `run` must be a live handle or NULL (returns 0).
uintptr_t mo_run_count(const struct MoRun *run);

// Best heldout accuracy of run `index`.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum MoStatus mo_run_best_heldout(const struct MoRun *run, uintptr_t index, double *out);

// The experiment summary as JSON (same content as summary.json).
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum MoStatus mo_run_summary_json(const struct MoRun *run, char **out);

// # Safety
// `run` must come from `mo_meta_train_json` and not be used afterwards. NULL is a no-op.
void mo_run_free(struct MoRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METAOPT_H */
