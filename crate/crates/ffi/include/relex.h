#ifndef RELEX_H
#define RELEX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RelexMethod {
  RELEX_METHOD_ATTENTION = 0,
  RELEX_METHOD_SALIENCY = 1,
  RELEX_METHOD_GRAD_INPUT = 2,
  RELEX_METHOD_LEAVE_ONE_OUT = 3,
} RelexMethod;

typedef enum RelexStatus {
  RELEX_STATUS_OK = 0,
  RELEX_STATUS_NULL_POINTER = 1,
  RELEX_STATUS_INVALID_UTF8 = 2,
  RELEX_STATUS_NOT_FOUND = 3,
  RELEX_STATUS_IO = 4,
  RELEX_STATUS_PARSE = 5,
  RELEX_STATUS_OUT_OF_RANGE = 6,
  RELEX_STATUS_BUFFER_TOO_SMALL = 7,
  RELEX_STATUS_MODEL = 8,
  RELEX_STATUS_EVAL = 9,
  RELEX_STATUS_PANIC = 10,
} RelexStatus;

/**
 * A loaded bag corpus.
 */
typedef struct RelexCorpus RelexCorpus;

/**
 * A loaded checkpoint.
 */
typedef struct RelexModel RelexModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *relex_version(void);

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next relex call on the same thread.
 */
const char *relex_last_error(void);

/**
 * Loads a bag JSONL file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RelexStatus relex_corpus_load(const char *path, struct RelexCorpus **out);

/**
 * # Safety
 * `corpus` must come from [`relex_corpus_load`] and not be freed twice.
 */
void relex_corpus_free(struct RelexCorpus *corpus);

/**
 * Number of bags, 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t relex_corpus_len(const struct RelexCorpus *corpus);

/**
 * Number of sentences in bag `index`.
 *
 * # Safety
 * `corpus` must be a live handle and `out` a valid pointer.
 */
enum RelexStatus relex_corpus_bag_size(const struct RelexCorpus *corpus, size_t index, size_t *out);

/**
 * Loads a checkpoint (and its `.meta.json` sidecar) into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RelexStatus relex_model_load(const char *path, struct RelexModel **out);

/**
 * # Safety
 * `model` must come from [`relex_model_load`] and not be freed twice.
 */
void relex_model_free(struct RelexModel *model);

/**
 * Number of relation classes, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t relex_model_num_relations(const struct RelexModel *model);

/**
 * Writes the probability of every relation for bag `index` into `out`,
 * which must hold at least [`relex_model_num_relations`] values.
 *
 * # Safety
 * Handles must be live and `out` must point to `len` writable doubles.
 */
enum RelexStatus relex_model_predict(const struct RelexModel *model,
                                     const struct RelexCorpus *corpus,
                                     size_t index,
                                     double *out,
                                     size_t len);

/**
 * Writes one importance score per sentence of bag `index` for `relation`.
 * `*written` receives the sentence count even when `len` is too small.
 *
 * # Safety
 * Handles must be live, `out` must point to `len` writable doubles and
 * `written` must be valid.
 */
enum RelexStatus relex_model_explain(const struct RelexModel *model,
                                     const struct RelexCorpus *corpus,
                                     size_t index,
                                     size_t relation,
                                     enum RelexMethod method,
                                     double *out,
                                     size_t len,
                                     size_t *written);

/**
 * Area under the precision-recall curve up to recall 0.4, in percent.
 * `labels[i]` is nonzero for a correct prediction.
 *
 * # Safety
 * `scores` and `labels` must each point to `n` readable values.
 */
enum RelexStatus relex_pr_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Kendall tau over `n` ordering tuples: tuple `i` is concordant when
 * `rationale[i] > irrelevant[i]`, discordant when smaller, and a tie
 * counts as neither.
 *
 * # Safety
 * `rationale` and `irrelevant` must each point to `n` readable doubles.
 */
enum RelexStatus relex_kendall_tau(const double *rationale,
                                   const double *irrelevant,
                                   size_t n,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELEX_H */
