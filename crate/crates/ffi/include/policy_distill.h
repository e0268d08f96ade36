#ifndef POLICY_DISTILL_H
#define POLICY_DISTILL_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_ARGUMENT = 2,
  PD_STATUS_DIMENSION_MISMATCH = 3,
  PD_STATUS_NON_FINITE = 4,
  PD_STATUS_IO = 5,
  PD_STATUS_PARSE = 6,
  PD_STATUS_EPISODE_DONE = 7,
  PD_STATUS_UNSUPPORTED = 8,
  PD_STATUS_INTERNAL = 9,
  PD_STATUS_PANIC = 10,
} PdStatus;

/**
 * Opaque phase-gait environment together with its expert.
 */
typedef struct PdEnv PdEnv;

/**
 * Opaque distilled policy.
 */
typedef struct PdModel PdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in bytes
 * excluding the terminator, so a caller can size its buffer.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pd_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pd_version(void);

/**
 * Loads a `model.json` written by the distill command.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PdStatus pd_model_load(const char *path, struct PdModel **out);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum PdStatus pd_model_from_json(const char *json, struct PdModel **out);

/**
 * # Safety
 * `model` must come from a `pd_model_*` constructor (or be null); it must
 * not be used afterwards.
 */
void pd_model_free(struct PdModel *model);

/**
 * Writes the observation and action dimensions.
 *
 * # Safety
 * `model` must be a live handle; output pointers must be writable.
 */
enum PdStatus pd_model_dims(const struct PdModel *model, size_t *input_dim, size_t *output_dim);

/**
 * Acts on one observation; actions are clamped to [-1, 1].
 *
 * # Safety
 * `obs` must hold `obs_len` values and `action` `action_len` writable values.
 */
enum PdStatus pd_model_predict(const struct PdModel *model,
                               const double *obs,
                               size_t obs_len,
                               double *action,
                               size_t action_len);

/**
 * Creates an environment for `gait` ("walk", "trot", "pace" or "bound")
 * with default physics and the given episode length.
 *
 * # Safety
 * `gait` must be a NUL-terminated string; `out` must be writable.
 */
enum PdStatus pd_env_new(const char *gait, size_t episode_length, struct PdEnv **out);

/**
 * # Safety
 * `env` must come from `pd_env_new` (or be null); it must not be used
 * afterwards.
 */
void pd_env_free(struct PdEnv *env);

/**
 * Observation and action dimensions of the environment.
 *
 * # Safety
 * `env` must be a live handle; output pointers must be writable.
 */
enum PdStatus pd_env_dims(const struct PdEnv *env, size_t *obs_dim, size_t *action_dim);

/**
 * Sets the velocity command used from the next step on.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum PdStatus pd_env_set_command(struct PdEnv *env, double command);

/**
 * Starts an episode and writes the initial observation.
 *
 * # Safety
 * `env` must be a live handle; `obs` must hold `obs_len` writable values.
 */
enum PdStatus pd_env_reset(struct PdEnv *env, uint64_t seed, double *obs, size_t obs_len);

/**
 * Advances one tick. Writes the next observation, the reward and whether
 * the episode ended. Stepping after the end returns `EpisodeDone`.
 *
 * # Safety
 * `env` must be a live handle; buffers must have the stated lengths.
 */
enum PdStatus pd_env_step(struct PdEnv *env,
                          const double *action,
                          size_t action_len,
                          double *obs,
                          size_t obs_len,
                          double *reward,
                          bool *done);

/**
 * The environment's expert action for an observation.
 *
 * # Safety
 * `env` must be a live handle; buffers must have the stated lengths.
 */
enum PdStatus pd_expert_act(const struct PdEnv *env,
                            const double *obs,
                            size_t obs_len,
                            double *action,
                            size_t action_len);

/**
 * Alternation period for `episode` (numbered from 1): the expert acts on
 * every `n`-th step.
 *
 * # Safety
 * `n` must be writable.
 */
enum PdStatus pd_schedule_n(size_t n_f, size_t max_episodes, size_t episode, size_t *n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLICY_DISTILL_H */
