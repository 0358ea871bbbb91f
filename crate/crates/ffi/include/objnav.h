#ifndef OBJNAV_H
#define OBJNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum ObjnavStatus {
  OBJNAV_STATUS_OK = 0,
  OBJNAV_STATUS_NULL_POINTER = 1,
  OBJNAV_STATUS_INVALID_ARGUMENT = 2,
  OBJNAV_STATUS_CONFIG = 3,
  OBJNAV_STATUS_IO = 4,
  OBJNAV_STATUS_CHECKPOINT = 5,
  OBJNAV_STATUS_RUNTIME = 6,
  OBJNAV_STATUS_PANIC = 7,
} ObjnavStatus;

/**
 * Which agent [`objnav_evaluate`] runs.
 */
typedef enum ObjnavAgent {
  OBJNAV_AGENT_MODEL = 0,
  OBJNAV_AGENT_RANDOM = 1,
  OBJNAV_AGENT_ORACLE = 2,
} ObjnavAgent;

/**
 * Trained (or loaded) policy parameters.
 */
typedef struct ObjnavModel ObjnavModel;

/**
 * Built world, knowledge graph and task data for one configuration.
 */
typedef struct ObjnavSetup ObjnavSetup;

/**
 * Overall SR and SPL with and without the short-path filters.
 */
typedef struct ObjnavScores {
  size_t episodes;
  double sr;
  double spl;
  double sr_l5;
  double spl_l5;
} ObjnavScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *objnav_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *objnav_version(void);

/**
 * Builds a setup from TOML text (null for defaults). `seed` overrides the
 * config's seed.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be valid
 * for a pointer write.
 */
enum ObjnavStatus objnav_setup_new(const char *config_toml,
                                   uint64_t seed,
                                   struct ObjnavSetup **out);

/**
 * # Safety
 * `setup` must be null or a handle from [`objnav_setup_new`] not yet freed.
 */
void objnav_setup_free(struct ObjnavSetup *setup);

/**
 * Number of object classes (graph nodes) in the setup.
 *
 * # Safety
 * `setup` must be a live handle; `out` valid for writes.
 */
enum ObjnavStatus objnav_setup_num_classes(const struct ObjnavSetup *setup, size_t *out);

/**
 * Trains with the setup's configuration. When `out_dir` is non-null, metrics
 * and the checkpoint are written there.
 *
 * # Safety
 * `setup` must be a live handle; `out_dir` null or NUL-terminated; `out`
 * valid for a pointer write.
 */
enum ObjnavStatus objnav_train(const struct ObjnavSetup *setup,
                               const char *out_dir,
                               struct ObjnavModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` valid for a pointer write.
 */
enum ObjnavStatus objnav_model_load(const char *path, struct ObjnavModel **out);

/**
 * Writes the model as a checkpoint file.
 *
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum ObjnavStatus objnav_model_save(const struct ObjnavModel *model, const char *path);

/**
 * Number of trainable parameters.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum ObjnavStatus objnav_model_num_params(const struct ObjnavModel *model, size_t *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void objnav_model_free(struct ObjnavModel *model);

/**
 * Evaluates an agent on the setup's test floorplans. `mode` is 0 for
 * sampled-Done termination, 1 to also stop when the target becomes visible.
 * `model` is required for [`ObjnavAgent::Model`] and ignored otherwise.
 *
 * # Safety
 * `setup` must be a live handle, `model` null or live, `out` valid for writes.
 */
enum ObjnavStatus objnav_evaluate(const struct ObjnavSetup *setup,
                                  enum ObjnavAgent agent,
                                  const struct ObjnavModel *model,
                                  uint32_t mode,
                                  size_t episodes_per_room,
                                  uint64_t seed,
                                  struct ObjnavScores *out);

/**
 * Success rate of `n` episodes given as parallel arrays.
 *
 * # Safety
 * Each array must hold `n` readable elements; `out` valid for writes.
 */
enum ObjnavStatus objnav_sr(const uint8_t *success,
                            const size_t *optimal,
                            const size_t *actions,
                            size_t n,
                            double *out);

/**
 * Success weighted by path length; `actions` excludes the final stop.
 *
 * # Safety
 * Each array must hold `n` readable elements; `out` valid for writes.
 */
enum ObjnavStatus objnav_spl(const uint8_t *success,
                             const size_t *optimal,
                             const size_t *actions,
                             size_t n,
                             double *out);

/**
 * Finite-difference gradient check over `seeds` seeds; writes the worst
 * relative error across all parameter blocks.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ObjnavStatus objnav_gradcheck(uint64_t seed, uint64_t seeds, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBJNAV_H */
