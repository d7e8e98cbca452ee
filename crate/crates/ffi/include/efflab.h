#ifndef EFFLAB_H
#define EFFLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EfflabStatus {
  EFFLAB_STATUS_OK = 0,
  EFFLAB_STATUS_NULL_POINTER = 1,
  EFFLAB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A feasibility problem had no solution.
   */
  EFFLAB_STATUS_INFEASIBLE = 3,
  /**
   * A utility problem is unbounded (an arbitrage exists).
   */
  EFFLAB_STATUS_UNBOUNDED = 4,
  EFFLAB_STATUS_NO_CONVERGENCE = 5,
  EFFLAB_STATUS_SOLVER = 6,
  EFFLAB_STATUS_IO = 7,
  EFFLAB_STATUS_PARSE = 8,
  /**
   * Output buffer too small; the required length is reported.
   */
  EFFLAB_STATUS_BUFFER_TOO_SMALL = 9,
  EFFLAB_STATUS_INTERNAL = 10,
  EFFLAB_STATUS_PANIC = 11,
} EfflabStatus;

/**
 * Utility shape for the lattice agent calls.
 */
typedef enum EfflabUtility {
  EFFLAB_UTILITY_LOG = 0,
  /**
   * `x^(1-gamma)/(1-gamma)`, `gamma > 0`, `gamma != 1`.
   */
  EFFLAB_UTILITY_POWER = 1,
} EfflabUtility;

/**
 * Outcome of a named experiment.
 */
typedef struct EfflabExperiment EfflabExperiment;

/**
 * A finite price tree with a reference measure.
 */
typedef struct EfflabLattice EfflabLattice;

/**
 * Primal (arbitrage-search) and dual (measure/deflator) verdicts.
 */
typedef struct EfflabClassification {
  bool na;
  bool na_c;
  bool nd;
  bool nd_c;
  bool nupbr;
  bool nupbr_c;
  bool m;
  bool m_loc;
  bool m_sup;
  bool d_loc;
  bool d_sup;
  /**
   * All duality equivalences hold between the two sides.
   */
  bool consistent;
} EfflabClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *efflab_last_error(void);

/**
 * Library version as a static string.
 */
const char *efflab_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void efflab_string_free(char *s);

/**
 * One-period binomial tree.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EfflabStatus efflab_lattice_binomial(double s0,
                                          double up,
                                          double down,
                                          double p_up,
                                          struct EfflabLattice **out);

/**
 * Lattice from its JSON description (`depth, branching, prices, ref_probs`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EfflabStatus efflab_lattice_from_json(const char *json, struct EfflabLattice **out);

/**
 * # Safety
 * `lattice` must come from this library and not be freed twice.
 */
void efflab_lattice_free(struct EfflabLattice *lattice);

/**
 * # Safety
 * Both pointers must be valid.
 */
enum EfflabStatus efflab_lattice_n_nodes(const struct EfflabLattice *lattice, size_t *out);

/**
 * Newly allocated JSON description of the lattice.
 *
 * # Safety
 * Both pointers must be valid; free the result with `efflab_string_free`.
 */
enum EfflabStatus efflab_lattice_to_json(const struct EfflabLattice *lattice, char **out);

/**
 * Classifies a lattice; `epsilon` is the strict-positivity floor.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum EfflabStatus efflab_lattice_classify(const struct EfflabLattice *lattice,
                                          double epsilon,
                                          struct EfflabClassification *out);

/**
 * Optimal expected utility and root-node risky fraction; `kind` is an
 * `EfflabUtility` value. Returns
 * `Unbounded` when the agent can make unbounded profit.
 *
 * # Safety
 * `lattice` must be valid; `out_value` and `out_root_fraction` may be null.
 */
enum EfflabStatus efflab_solve_utility(const struct EfflabLattice *lattice,
                                       uint32_t kind,
                                       double gamma,
                                       double wealth,
                                       bool constrained,
                                       double *out_value,
                                       double *out_root_fraction);

/**
 * `|u(x) - inf_y (v(y) + x y)|` for the given agent.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum EfflabStatus efflab_conjugacy_gap(const struct EfflabLattice *lattice,
                                       uint32_t kind,
                                       double gamma,
                                       double wealth,
                                       bool constrained,
                                       double *out_gap);

/**
 * Runs an experiment from a JSON config (fields as accepted by the
 * command-line `--config`). Artifacts are kept in memory, not written.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EfflabStatus efflab_experiment_run(const char *config_json, struct EfflabExperiment **out);

/**
 * # Safety
 * `experiment` must come from this library and not be freed twice.
 */
void efflab_experiment_free(struct EfflabExperiment *experiment);

/**
 * Whether every asserted claim held.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum EfflabStatus efflab_experiment_passed(const struct EfflabExperiment *experiment, bool *out);

/**
 * Claims, verdicts and artifacts as one JSON document.
 *
 * # Safety
 * Both pointers must be valid; free the result with `efflab_string_free`.
 */
enum EfflabStatus efflab_experiment_to_json(const struct EfflabExperiment *experiment, char **out);

/**
 * Copies artifact `index`'s CSV into `buf` (NUL-terminated). If `buf` is
 * too small, nothing is copied, `BufferTooSmall` is returned and
 * `*required` holds the size needed including the NUL.
 *
 * # Safety
 * `experiment` and `required` must be valid; `buf` must hold `len` bytes.
 */
enum EfflabStatus efflab_experiment_artifact(const struct EfflabExperiment *experiment,
                                             size_t index,
                                             char *buf,
                                             size_t len,
                                             size_t *required);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EFFLAB_H */
