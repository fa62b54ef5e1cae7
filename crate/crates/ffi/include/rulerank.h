/* C ABI for the rulerank link prediction engine. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum RrStatus {
  RR_STATUS_OK = 0,
  /**
   * File could not be read or written.
   */
  RR_STATUS_IO = 1,
  /**
   * Input file or rule text failed to parse.
   */
  RR_STATUS_PARSE = 2,
  /**
   * Null pointer, bad UTF-8, unknown name, or out-of-range argument.
   */
  RR_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A required artifact is missing or stale.
   */
  RR_STATUS_MISSING = 4,
  /**
   * Unexpected internal failure.
   */
  RR_STATUS_INTERNAL = 5,
} RrStatus;

typedef enum RrSplit {
  RR_SPLIT_TRAIN = 0,
  RR_SPLIT_VALID = 1,
  RR_SPLIT_TEST = 2,
} RrSplit;

/**
 * Confidence aggregation strategy for `rr_predict`.
 */
typedef enum RrAggregation {
  RR_AGGREGATION_MAXIMUM = 0,
  RR_AGGREGATION_NOISY_OR = 1,
  /**
   * Requires a clusters handle; pairs without learned thresholds fall
   * back to Maximum.
   */
  RR_AGGREGATION_NRNO = 2,
} RrAggregation;

/**
 * Which slot of the triple to predict.
 */
typedef enum RrDirection {
  RR_DIRECTION_HEAD = 0,
  RR_DIRECTION_TAIL = 1,
} RrDirection;

/**
 * Clustering state for NRNO prediction: per (relation, direction) members
 * and cluster assignments derived from a signature cache and a learned
 * thresholds file.
 */
typedef struct RrClusters RrClusters;

typedef struct RrDataset RrDataset;

/**
 * A ranked candidate list; entity strings are owned by the handle.
 */
typedef struct RrRanking RrRanking;

typedef struct RrRuleSet RrRuleSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, do not free.
 */
const char *rr_version(void);

/**
 * Message for the most recent failure on this thread. Valid until the
 * next failing call on the same thread; do not free.
 */
const char *rr_last_error_message(void);

/**
 * Load train/valid/test TSV files into a dataset with a shared
 * vocabulary.
 *
 * # Safety
 * `train`, `valid`, `test` must be NUL-terminated strings; `out` must be
 * a valid pointer.
 */
enum RrStatus rr_dataset_load(const char *train,
                              const char *valid,
                              const char *test,
                              struct RrDataset **out);

/**
 * # Safety
 * `ds` must come from `rr_dataset_load` and not be freed twice.
 */
void rr_dataset_free(struct RrDataset *ds);

/**
 * # Safety
 * `ds` must be a valid dataset handle.
 */
uintptr_t rr_dataset_entity_count(const struct RrDataset *ds);

/**
 * # Safety
 * `ds` must be a valid dataset handle.
 */
uintptr_t rr_dataset_relation_count(const struct RrDataset *ds);

/**
 * # Safety
 * `ds` must be a valid dataset handle.
 */
uintptr_t rr_dataset_triple_count(const struct RrDataset *ds, enum RrSplit split);

/**
 * Load a rule file against the dataset's vocabulary.
 *
 * # Safety
 * `ds` must be valid; `path` NUL-terminated; `out` writable.
 */
enum RrStatus rr_ruleset_load(const struct RrDataset *ds, const char *path, struct RrRuleSet **out);

/**
 * Mine a rule set from the training split with a fixed iteration budget
 * (deterministic for a given seed).
 *
 * # Safety
 * `ds` must be valid; `out` writable.
 */
enum RrStatus rr_ruleset_mine(const struct RrDataset *ds,
                              uint64_t iterations,
                              uint64_t seed,
                              uint32_t max_len_cyclic,
                              uint32_t max_len_acyclic,
                              bool allow_reflexive,
                              struct RrRuleSet **out);

/**
 * # Safety
 * All handles must be valid; `path` NUL-terminated.
 */
enum RrStatus rr_ruleset_save(const struct RrDataset *ds,
                              const struct RrRuleSet *rules,
                              const char *path);

/**
 * # Safety
 * `rules` must be a valid handle.
 */
uintptr_t rr_ruleset_len(const struct RrRuleSet *rules);

/**
 * # Safety
 * `rules` must come from a ruleset constructor and not be freed twice.
 */
void rr_ruleset_free(struct RrRuleSet *rules);

/**
 * Build NRNO clustering state from a signature cache (`calc-sims` output)
 * and a thresholds file (`search` output).
 *
 * # Safety
 * Handles must be valid; paths NUL-terminated; `out` writable.
 */
enum RrStatus rr_clusters_load(const struct RrDataset *ds,
                               const struct RrRuleSet *rules,
                               const char *sims_path,
                               const char *thresholds_path,
                               struct RrClusters **out);

/**
 * # Safety
 * `clusters` must come from `rr_clusters_load` and not be freed twice.
 */
void rr_clusters_free(struct RrClusters *clusters);

/**
 * Rank candidates for one query. `direction` picks which slot of
 * `(?, relation, known)` / `(known, relation, ?)` to fill. When
 * `filter_known` is set, entities already linked to the query slot in any
 * split are removed before ranking. `clusters` may be null unless
 * `aggregation` is NRNO.
 *
 * # Safety
 * Handles must be valid; strings NUL-terminated; `out` writable.
 */
enum RrStatus rr_predict(const struct RrDataset *ds,
                         const struct RrRuleSet *rules,
                         const struct RrClusters *clusters,
                         enum RrAggregation aggregation,
                         const char *known_entity,
                         const char *relation,
                         enum RrDirection direction,
                         uint32_t top_k,
                         bool filter_known,
                         struct RrRanking **out);

/**
 * # Safety
 * `r` must be a valid ranking handle.
 */
uintptr_t rr_ranking_len(const struct RrRanking *r);

/**
 * Fetch one ranked entry. The entity pointer stays valid until the
 * ranking is freed.
 *
 * # Safety
 * `r` must be valid; `entity` and `score` must be writable.
 */
enum RrStatus rr_ranking_get(const struct RrRanking *r,
                             uintptr_t index,
                             const char **entity,
                             double *score);

/**
 * # Safety
 * `r` must come from `rr_predict` and not be freed twice.
 */
void rr_ranking_free(struct RrRanking *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
