#ifndef CGFLOW_H
#define CGFLOW_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CGFLOW_OK 0

#define CGFLOW_ERR_CONFIG 2

#define CGFLOW_ERR_IO 3

#define CGFLOW_ERR_FORMAT 4

#define CGFLOW_ERR_NON_FINITE 5

#define CGFLOW_ERR_DOMAIN 6

#define CGFLOW_ERR_DATA_PIPELINE 7

#define CGFLOW_ERR_INVARIANT 8

#define CGFLOW_ERR_SHAPE 9

#define CGFLOW_ERR_NULL_POINTER 10

#define CGFLOW_ERR_INVALID_ARGUMENT 11

#define CGFLOW_ERR_PANIC 12

#define CGFLOW_INTEGRATOR_PAPER 0

#define CGFLOW_INTEGRATOR_RECTIFIED 1

/**
 * Opaque run: a validated configuration plus a worker-thread count.
 */
typedef struct CgflowRun CgflowRun;

/**
 * Opaque time schedule.
 */
typedef struct CgflowSchedule CgflowSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on the calling thread, or NULL. The pointer stays
 * valid until the next cgflow call on this thread.
 */
const char *cgflow_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cgflow_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a cgflow function and not be freed twice.
 */
void cgflow_string_free(char *s);

/**
 * Builds a schedule. `mode` is one of the `CGFLOW_INTEGRATOR_*` values.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
int cgflow_schedule_new(double lambda,
                        double t_window,
                        uint32_t n_steps,
                        size_t max_components,
                        int mode,
                        struct CgflowSchedule **out);

/**
 * # Safety
 * `s` must come from [`cgflow_schedule_new`] and not be freed twice.
 */
void cgflow_schedule_free(struct CgflowSchedule *s);

/**
 * Grid steps between consecutive actions.
 *
 * # Safety
 * Pointers must be valid.
 */
int cgflow_schedule_lambda_steps(const struct CgflowSchedule *s, uint32_t *out);

/**
 * Number of components present at grid step `step` of a trajectory with
 * `n` components.
 *
 * # Safety
 * Pointers must be valid.
 */
int cgflow_schedule_k_of_t(const struct CgflowSchedule *s, uint32_t step, size_t n, size_t *out);

/**
 * Local time at grid step `step` of the component inserted `index`-th
 * (1-based).
 *
 * # Safety
 * Pointers must be valid.
 */
int cgflow_schedule_t_local(const struct CgflowSchedule *s,
                            uint32_t step,
                            size_t index,
                            double *out);

/**
 * Copies the action steps into `buf` (capacity `cap`) and stores the full
 * count in `len`. Returns `CGFLOW_ERR_SHAPE` when `cap` is too small; `len`
 * is still written.
 *
 * # Safety
 * `buf` must hold `cap` elements (it may be NULL when `cap` is 0).
 */
int cgflow_schedule_action_steps(const struct CgflowSchedule *s,
                                 uint32_t *buf,
                                 size_t cap,
                                 size_t *len);

/**
 * Total-variation distance between two distributions of length `len`.
 *
 * # Safety
 * `p` and `q` must hold `len` elements.
 */
int cgflow_tv_distance(const double *p, const double *q, size_t len, double *out);

/**
 * Creates a run from a JSON configuration (NULL for built-in defaults).
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` must be valid.
 */
int cgflow_run_new(const char *config_json, size_t threads, struct CgflowRun **out);

/**
 * Creates a run from a configuration file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid.
 */
int cgflow_run_load(const char *path, size_t threads, struct CgflowRun **out);

/**
 * # Safety
 * `run` must come from a cgflow constructor and not be freed twice.
 */
void cgflow_run_free(struct CgflowRun *run);

/**
 * The run's configuration as pretty-printed JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
int cgflow_run_config_json(const struct CgflowRun *run, char **out);

/**
 * Runs a pipeline step by its command-line name: `gen-data`,
 * `train-stateflow`, `train-policy`, `oracle`, `evaluate` or `gradcheck`.
 * Artifacts go to the configured paths. When `summary` is not NULL it
 * receives the JSON summary.
 *
 * # Safety
 * `run` and `command` must be valid; `summary` may be NULL.
 */
int cgflow_run_command(const struct CgflowRun *run, const char *command, char **summary);

/**
 * Samples `n` trajectories into the configured samples file, from the
 * trained policy or, when `uniform` is true, the uniform policy.
 *
 * # Safety
 * `run` must be valid; `summary` may be NULL.
 */
int cgflow_run_sample(const struct CgflowRun *run, size_t n, bool uniform, char **summary);

/**
 * Runs the `cgflow` command line with `argc` arguments (`argv[0]` is the
 * program name) and returns its exit status.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings.
 */
int cgflow_main(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGFLOW_H */
