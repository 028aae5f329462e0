#ifndef BSDELAB_H
#define BSDELAB_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which adapted component of a solution to copy out.
 */
typedef enum BsdeComponent {
  BSDE_COMPONENT_Y = 0,
  BSDE_COMPONENT_M = 1,
  BSDE_COMPONENT_K = 2,
} BsdeComponent;

/**
 * Result codes.
 */
typedef enum BsdeStatus {
  BSDE_STATUS_OK = 0,
  BSDE_STATUS_NULL_POINTER = 1,
  BSDE_STATUS_INVALID_UTF8 = 2,
  BSDE_STATUS_INVALID_CONFIG = 3,
  BSDE_STATUS_SOLVER_ERROR = 4,
  BSDE_STATUS_OUT_OF_RANGE = 5,
  BSDE_STATUS_IO_ERROR = 6,
  BSDE_STATUS_PANIC = 7,
} BsdeStatus;

/**
 * A validated experiment configuration.
 */
typedef struct BsdeConfig BsdeConfig;

/**
 * A solved instance together with its tree.
 */
typedef struct BsdeSolution BsdeSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call on the same thread.
 */
const char *bsde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bsde_version(void);

/**
 * Parse and validate a JSON experiment configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum BsdeStatus bsde_config_from_json(const char *json, struct BsdeConfig **out);

/**
 * The built-in default configuration.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum BsdeStatus bsde_config_default(struct BsdeConfig **out);

/**
 * Replace the seed of a configuration.
 *
 * # Safety
 * `config` must come from this library and not be freed.
 */
enum BsdeStatus bsde_config_set_seed(struct BsdeConfig *config, uint64_t seed);

/**
 * Number of instances the configuration describes.
 *
 * # Safety
 * `config` must be live and `out` writable.
 */
enum BsdeStatus bsde_config_instance_count(const struct BsdeConfig *config, size_t *out);

/**
 * Release a configuration. Null is ignored.
 *
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void bsde_config_free(struct BsdeConfig *config);

/**
 * Solve instance `index` of the configuration, reflected on its obstacle
 * when `reflect` is non-zero.
 *
 * # Safety
 * `config` must be live and `out` writable.
 */
enum BsdeStatus bsde_solve(const struct BsdeConfig *config,
                           size_t index,
                           int reflect,
                           struct BsdeSolution **out);

/**
 * Release a solution. Null is ignored.
 *
 * # Safety
 * `solution` must come from this library and not be used afterwards.
 */
void bsde_solution_free(struct BsdeSolution *solution);

/**
 * Number of nodes of the tree, which is the length of each component.
 *
 * # Safety
 * `solution` must be live and `out` writable.
 */
enum BsdeStatus bsde_solution_node_count(const struct BsdeSolution *solution, size_t *out);

/**
 * Number of time steps of the tree.
 *
 * # Safety
 * `solution` must be live and `out` writable.
 */
enum BsdeStatus bsde_solution_n_steps(const struct BsdeSolution *solution, size_t *out);

/**
 * Value of `Y` at the root.
 *
 * # Safety
 * `solution` must be live and `out` writable.
 */
enum BsdeStatus bsde_solution_y0(const struct BsdeSolution *solution, double *out);

/**
 * Largest residual of the backward dynamics over all nodes.
 *
 * # Safety
 * `solution` must be live and `out` writable.
 */
enum BsdeStatus bsde_solution_residual(const struct BsdeSolution *solution, double *out);

/**
 * Copy one component, indexed by node, into `buf`. `len` must equal the
 * node count.
 *
 * # Safety
 * `solution` must be live and `buf` valid for `len` writes.
 */
enum BsdeStatus bsde_solution_copy(const struct BsdeSolution *solution,
                                   enum BsdeComponent component,
                                   double *buf,
                                   size_t len);

/**
 * Run an experiment. `command` is one of `solve`, `reflect`, `picard`,
 * `verify`, `counterexample` or `snell-check`; `suite` may be null. With a
 * non-null `out_dir` the artifacts and manifest are written there.
 * `passed` receives 1 when every check held, 0 otherwise.
 *
 * # Safety
 * String arguments must be NUL-terminated or null where allowed; `passed`
 * must be writable.
 */
enum BsdeStatus bsde_run(const struct BsdeConfig *config,
                         const char *command,
                         const char *suite,
                         const char *out_dir,
                         int *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSDELAB_H */
