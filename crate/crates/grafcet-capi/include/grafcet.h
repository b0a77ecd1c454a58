#ifndef GRAFCET_H
#define GRAFCET_H

/* Generated by cbindgen from grafcet-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Non-zero means the call had no effect
 * beyond recording an error message retrievable via `grafcet_last_error`.
 */
typedef enum GrafcetStatus {
  /**
   * The call succeeded.
   */
  GRAFCET_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  GRAFCET_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GRAFCET_STATUS_INVALID_UTF8 = 2,
  /**
   * The source text was rejected; the error message lists the first
   * diagnostics.
   */
  GRAFCET_STATUS_PARSE_FAILED = 3,
  /**
   * The model parsed but failed static analysis (macro expansion,
   * hierarchy or validation).
   */
  GRAFCET_STATUS_ANALYSIS_FAILED = 4,
  /**
   * An argument was out of contract: unknown variable, wrong role or
   * type, unknown step.
   */
  GRAFCET_STATUS_INVALID_ARGUMENT = 5,
  /**
   * The call does not apply to the handle's current state, e.g. reading
   * a situation before initialization.
   */
  GRAFCET_STATUS_INVALID_STATE = 6,
  /**
   * Evolution failed: unstable cycle, budget exhaustion, or a forcing,
   * hierarchy or write conflict. The engine must be re-initialized.
   */
  GRAFCET_STATUS_RUN_FAILED = 7,
  /**
   * An internal invariant failed; the handle is left unusable.
   */
  GRAFCET_STATUS_INTERNAL_ERROR = 8,
} GrafcetStatus;

/**
 * Interpretation policy for the order of forcing effects.
 */
typedef enum GrafcetPolicy {
  /**
   * Forcing orders take effect within the evolution that activates them.
   */
  GRAFCET_POLICY_PREEMPTIVE = 0,
  /**
   * Forcing orders take effect one evolution after activation.
   */
  GRAFCET_POLICY_TWO_PHASE = 1,
} GrafcetPolicy;

/**
 * A running interpreter over one model. Create with `grafcet_engine_new`,
 * release with `grafcet_engine_free`.
 */
typedef struct GrafcetEngineHandle GrafcetEngineHandle;

/**
 * A parsed and analyzed model. Create with `grafcet_model_load`, release
 * with `grafcet_model_free`.
 */
typedef struct GrafcetModelHandle GrafcetModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static string; never fails.
 */
const char *grafcet_version(void);

/**
 * Returns the message recorded by the most recent failing call on this
 * thread, or null if none failed yet. The pointer stays valid until the
 * next failing call on the same thread.
 */
const char *grafcet_last_error(void);

/**
 * Releases a string returned through a `char **out` parameter. Null is a
 * no-op.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library and not freed
 * since.
 */
void grafcet_string_free(char *s);

/**
 * Parses and analyzes model source text. `name` labels diagnostics (pass
 * the file name; null means "model.gft"). On success stores a handle in
 * `*out`.
 *
 * # Safety
 * `source` must be NUL-terminated; `out` must be a valid location.
 */
enum GrafcetStatus grafcet_model_load(const char *name,
                                      const char *source,
                                      struct GrafcetModelHandle **out);

/**
 * Releases a model handle. Null is a no-op. Engines created from the
 * handle stay valid.
 *
 * # Safety
 * `h` must be a pointer from `grafcet_model_load` and not freed since.
 */
void grafcet_model_free(struct GrafcetModelHandle *h);

/**
 * Renders the canonical text of the (macro-expanded) model into `*out`.
 *
 * # Safety
 * `h` must be a live model handle; `out` must be a valid location.
 */
enum GrafcetStatus grafcet_model_canonical_text(const struct GrafcetModelHandle *h, char **out);

/**
 * Creates an engine over the model. `max_evolutions` bounds each run to
 * stability; 0 selects the default budget. The engine starts
 * uninitialized: call `grafcet_engine_initialize` before applying events.
 *
 * # Safety
 * `h` must be a live model handle; `out` must be a valid location.
 */
enum GrafcetStatus grafcet_engine_new(const struct GrafcetModelHandle *h,
                                      enum GrafcetPolicy policy,
                                      uint64_t max_evolutions,
                                      struct GrafcetEngineHandle **out);

/**
 * Releases an engine handle. Null is a no-op.
 *
 * # Safety
 * `e` must be a pointer from `grafcet_engine_new` and not freed since.
 */
void grafcet_engine_free(struct GrafcetEngineHandle *e);

/**
 * (Re)initializes the engine: activates the initial situation, resets all
 * variables and staged inputs, and runs to stability. May be called again
 * at any point to restart, including after `RunFailed`.
 *
 * # Safety
 * `e` must be a live engine handle.
 */
enum GrafcetStatus grafcet_engine_initialize(struct GrafcetEngineHandle *e);

/**
 * Stages one boolean input change for the next `grafcet_engine_apply`.
 * Staging the same variable again overwrites the earlier value.
 *
 * # Safety
 * `e` must be a live engine handle; `name` must be NUL-terminated.
 */
enum GrafcetStatus grafcet_engine_stage_bool(struct GrafcetEngineHandle *e,
                                             const char *name,
                                             bool value);

/**
 * Stages one integer input change for the next `grafcet_engine_apply`.
 *
 * # Safety
 * `e` must be a live engine handle; `name` must be NUL-terminated.
 */
enum GrafcetStatus grafcet_engine_stage_int(struct GrafcetEngineHandle *e,
                                            const char *name,
                                            int64_t value);

/**
 * Applies all staged input changes as one simultaneous event and runs to
 * stability. Staged values are consumed whether or not the run succeeds.
 * An empty stage is a valid (trivial) event.
 *
 * # Safety
 * `e` must be a live engine handle.
 */
enum GrafcetStatus grafcet_engine_apply(struct GrafcetEngineHandle *e);

/**
 * Writes the current stable situation in set notation, e.g.
 * `"G1{1} G2{21,22}"`, into `*out`.
 *
 * # Safety
 * `e` must be a live engine handle; `out` must be a valid location.
 */
enum GrafcetStatus grafcet_engine_situation(const struct GrafcetEngineHandle *e, char **out);

/**
 * Writes the current stable report (situation and outputs) as one JSON
 * object into `*out`.
 *
 * # Safety
 * `e` must be a live engine handle; `out` must be a valid location.
 */
enum GrafcetStatus grafcet_engine_report_json(const struct GrafcetEngineHandle *e, char **out);

/**
 * Reads a boolean variable (any role) from the current valuation.
 *
 * # Safety
 * `e` must be a live engine handle; `name` NUL-terminated; `out` valid.
 */
enum GrafcetStatus grafcet_engine_get_bool(const struct GrafcetEngineHandle *e,
                                           const char *name,
                                           bool *out);

/**
 * Reads an integer variable (any role) from the current valuation.
 *
 * # Safety
 * `e` must be a live engine handle; `name` NUL-terminated; `out` valid.
 */
enum GrafcetStatus grafcet_engine_get_int(const struct GrafcetEngineHandle *e,
                                          const char *name,
                                          int64_t *out);

/**
 * Reports whether the given step is active in the current situation.
 *
 * # Safety
 * `e` must be a live engine handle; `step` NUL-terminated; `out` valid.
 */
enum GrafcetStatus grafcet_engine_step_active(const struct GrafcetEngineHandle *e,
                                              const char *step,
                                              bool *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAFCET_H */
