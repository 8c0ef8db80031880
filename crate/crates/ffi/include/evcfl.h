#ifndef EVCFL_H
#define EVCFL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EvcflStatus {
  EVCFL_STATUS_OK = 0,
  EVCFL_STATUS_NULL_POINTER = 1,
  EVCFL_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed JSON or a value out of its domain.
   */
  EVCFL_STATUS_INVALID_INPUT = 3,
  EVCFL_STATUS_INFEASIBLE = 4,
  /**
   * The solver failed or stopped without an incumbent.
   */
  EVCFL_STATUS_BACKEND = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  EVCFL_STATUS_PANIC = 6,
} EvcflStatus;

typedef enum EvcflModel {
  EVCFL_MODEL_SP = 0,
  EVCFL_MODEL_MP = 1,
} EvcflModel;

/**
 * Opaque instance handle.
 */
typedef struct EvcflInstance EvcflInstance;

/**
 * Opaque solution handle.
 */
typedef struct EvcflSolution EvcflSolution;

/**
 * Service statistics of an evaluated solution.
 */
typedef struct EvcflReport {
  uint32_t stations;
  uint32_t quick;
  uint32_t fast;
  double reall_pct;
  double lost_pct;
  double max_lost_pct;
} EvcflReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next library call on the same thread.
 */
const char *evcfl_last_error(void);

/**
 * Library version as a static string.
 */
const char *evcfl_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void evcfl_string_free(char *s);

/**
 * Parses and validates an instance.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum EvcflStatus evcfl_instance_from_json(const char *json, struct EvcflInstance **out);

/**
 * Generates an instance from a JSON parameter object.
 *
 * # Safety
 * `params_json` must be a NUL-terminated string; `out` must be writable.
 */
enum EvcflStatus evcfl_instance_generate(const char *params_json, struct EvcflInstance **out);

/**
 * Builds the single-peak worst-case instance.
 *
 * # Safety
 * `out` must be writable.
 */
enum EvcflStatus evcfl_instance_worstcase(size_t periods,
                                          uint32_t demand_total,
                                          size_t peak,
                                          struct EvcflInstance **out);

/**
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum EvcflStatus evcfl_instance_to_json(const struct EvcflInstance *inst, char **out);

/**
 * Writes nodes, candidate stations, charger types and periods.
 *
 * # Safety
 * `inst` must be a live handle; each output pointer must be writable.
 */
enum EvcflStatus evcfl_instance_dims(const struct EvcflInstance *inst,
                                     size_t *nodes,
                                     size_t *stations,
                                     size_t *types,
                                     size_t *periods);

/**
 * # Safety
 * `inst` must be null or a handle from this library, freed once.
 */
void evcfl_instance_free(struct EvcflInstance *inst);

/**
 * Solves one model with the backend named by `EVCFL_BACKEND`.
 *
 * `time_limit_s <= 0` keeps the default one-hour limit. Returns `Infeasible` when the model
 * has no solution and `Backend` when the solver stopped without one.
 *
 * # Safety
 * `inst` must be a live handle; `out` must be writable.
 */
enum EvcflStatus evcfl_solve(const struct EvcflInstance *inst,
                             enum EvcflModel model,
                             double lambda,
                             double time_limit_s,
                             struct EvcflSolution **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum EvcflStatus evcfl_solution_from_json(const char *json, struct EvcflSolution **out);

/**
 * # Safety
 * `sol` must be a live handle; `out` must be writable.
 */
enum EvcflStatus evcfl_solution_to_json(const struct EvcflSolution *sol, char **out);

/**
 * Scaled objective value and total installed chargers.
 *
 * # Safety
 * `sol` must be a live handle; output pointers must be writable.
 */
enum EvcflStatus evcfl_solution_summary(const struct EvcflSolution *sol,
                                        double *objective,
                                        uint32_t *chargers);

/**
 * Installed chargers of type `k` at station `j`.
 *
 * # Safety
 * `sol` must be a live handle; `out` must be writable.
 */
enum EvcflStatus evcfl_solution_count(const struct EvcflSolution *sol,
                                      size_t j,
                                      size_t k,
                                      uint32_t *out);

/**
 * # Safety
 * `sol` must be null or a handle from this library, freed once.
 */
void evcfl_solution_free(struct EvcflSolution *sol);

/**
 * Replays a solution on its instance.
 *
 * SP solutions are reallocated period by period; MP solutions are checked
 * and fail with `InvalidInput` when any constraint is violated.
 *
 * # Safety
 * `inst` and `sol` must be live handles; `out` must be writable.
 */
enum EvcflStatus evcfl_evaluate(const struct EvcflInstance *inst,
                                const struct EvcflSolution *sol,
                                struct EvcflReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVCFL_H */
