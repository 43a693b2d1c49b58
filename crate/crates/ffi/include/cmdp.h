#ifndef CMDP_H
#define CMDP_H

#include <stddef.h>
#include <stdint.h>

typedef enum CmdpStatus {
  CMDP_STATUS_OK = 0,
  CMDP_STATUS_NULL_POINTER = 1,
  CMDP_STATUS_INVALID_ARGUMENT = 2,
  CMDP_STATUS_INVALID_MODEL = 3,
  CMDP_STATUS_INFEASIBLE = 4,
  CMDP_STATUS_IO = 5,
  CMDP_STATUS_PARSE = 6,
  CMDP_STATUS_BUFFER_TOO_SMALL = 7,
  CMDP_STATUS_INTERNAL = 8,
  CMDP_STATUS_PANIC = 9,
} CmdpStatus;

// Opaque model handle.
typedef struct CmdpModel CmdpModel;

// Opaque policy handle (strictly positive probabilities).
typedef struct CmdpPolicy CmdpPolicy;

// Options for [`cmdp_solve_dual`]. Obtain defaults from
// [`cmdp_dual_options_default`].
typedef struct CmdpDualOptions {
  double tau;
  // Outer iterations N₁.
  uintptr_t outer_iters;
  uintptr_t inner_budget;
  uintptr_t recover_budget;
  // > 0: fixed step; 0: 1/ℓ; < 0: estimated local smoothness.
  double step_size;
  // <= 0 disables the early exit of the inner solves.
  double inner_stop_tol;
} CmdpDualOptions;

typedef struct CmdpStandardReport {
  double tau;
  // Unregularized V^π(ρ).
  double value;
  double max_violation;
  double duality_gap_allowance;
  uintptr_t outer_iters;
  // 1 when the outer iteration count was capped.
  int32_t capped;
} CmdpStandardReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next cmdp_* call on the same thread.
const char *cmdp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cmdp_version(void);

// Parses a model from its JSON representation.
//
// # Safety
// `json` must be a valid NUL-terminated string; `out` a valid pointer.
enum CmdpStatus cmdp_model_from_json(const char *json, struct CmdpModel **out);

// Loads a model from a JSON file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` a valid pointer.
enum CmdpStatus cmdp_model_load(const char *path, struct CmdpModel **out);

// Serializes a model to JSON; free the string with [`cmdp_string_free`].
//
// # Safety
// `model` must come from this library; `out` a valid pointer.
enum CmdpStatus cmdp_model_to_json(const struct CmdpModel *model, char **out);

// Random instance with a certified Slater policy. `out_slater` may be null.
//
// # Safety
// `out_model` must be valid; `out_slater` valid or null.
enum CmdpStatus cmdp_model_gen_random(uint64_t seed,
                                      uintptr_t num_states,
                                      uintptr_t num_actions,
                                      uintptr_t num_constraints,
                                      double gamma,
                                      struct CmdpModel **out_model,
                                      struct CmdpPolicy **out_slater);

// Gridworld with one hazard next to the goal. `out_slater` may be null.
//
// # Safety
// `out_model` must be valid; `out_slater` valid or null.
enum CmdpStatus cmdp_model_gen_gridworld(uintptr_t width,
                                         uintptr_t height,
                                         double gamma,
                                         struct CmdpModel **out_model,
                                         struct CmdpPolicy **out_slater);

// # Safety
// `model` must come from this library (or be null) and not be used afterwards.
void cmdp_model_free(struct CmdpModel *model);

// Sizes and discount of a model. Any output pointer may be null.
//
// # Safety
// `model` must come from this library.
enum CmdpStatus cmdp_model_dims(const struct CmdpModel *model,
                                uintptr_t *num_states,
                                uintptr_t *num_actions,
                                uintptr_t *num_constraints,
                                double *gamma);

// # Safety
// `out` must be valid.
enum CmdpStatus cmdp_policy_uniform(uintptr_t num_states,
                                    uintptr_t num_actions,
                                    struct CmdpPolicy **out);

// Policy from a row-major (state, action) probability table with strictly
// positive rows summing to one.
//
// # Safety
// `probs` must point to `num_states * num_actions` doubles; `out` valid.
enum CmdpStatus cmdp_policy_from_probs(uintptr_t num_states,
                                       uintptr_t num_actions,
                                       const double *probs,
                                       struct CmdpPolicy **out);

// Copies the row-major probability table into `out` (`len` doubles).
//
// # Safety
// `policy` must come from this library; `out` must hold `len` doubles.
enum CmdpStatus cmdp_policy_probs(const struct CmdpPolicy *policy, double *out, uintptr_t len);

// # Safety
// `policy` must come from this library (or be null) and not be used afterwards.
void cmdp_policy_free(struct CmdpPolicy *policy);

// # Safety
// `s` must come from this library (or be null).
void cmdp_string_free(char *s);

// V^π(ρ) for the model's reward; with `tau > 0` the entropy-regularized value.
//
// # Safety
// Handles must come from this library; `out` valid.
enum CmdpStatus cmdp_evaluate_value(const struct CmdpModel *model,
                                    const struct CmdpPolicy *policy,
                                    double tau,
                                    double *out);

// U_{g_i}^π(ρ) for every constraint, written to `out` (`len` ≥ n doubles).
//
// # Safety
// Handles must come from this library; `out` must hold `len` doubles.
enum CmdpStatus cmdp_evaluate_utilities(const struct CmdpModel *model,
                                        const struct CmdpPolicy *policy,
                                        double *out,
                                        uintptr_t len);

struct CmdpDualOptions cmdp_dual_options_default(void);

// Accelerated dual descent. Writes λ (n doubles) to `lambda_out` and the
// recovered policy to `out_policy`.
//
// # Safety
// Handles must come from this library; `options` valid; `lambda_out` must
// hold `lambda_len` doubles (may be null when n = 0); `out_policy` valid.
enum CmdpStatus cmdp_solve_dual(const struct CmdpModel *model,
                                const struct CmdpPolicy *slater,
                                const struct CmdpDualOptions *options,
                                double *lambda_out,
                                uintptr_t lambda_len,
                                struct CmdpPolicy **out_policy);

// Bisection on the single multiplier with budgets derived from `epsilon`
// (gradient threshold) and `epsilon1` (recovery accuracy).
//
// # Safety
// Handles must come from this library; `lambda_out` and `out_policy` valid.
enum CmdpStatus cmdp_solve_bisection(const struct CmdpModel *model,
                                     const struct CmdpPolicy *slater,
                                     double tau,
                                     double epsilon,
                                     double epsilon1,
                                     double *lambda_out,
                                     struct CmdpPolicy **out_policy);

// Unregularized CMDP at accuracy `epsilon` with default options.
//
// # Safety
// Handles must come from this library; `report` and `out_policy` valid.
enum CmdpStatus cmdp_solve_standard(const struct CmdpModel *model,
                                    const struct CmdpPolicy *slater,
                                    double epsilon,
                                    struct CmdpStandardReport *report,
                                    struct CmdpPolicy **out_policy);

// Optimal value of the unregularized CMDP from the occupancy LP; the optimal
// (possibly deterministic) policy table is copied to `probs_out` when it is
// non-null.
//
// # Safety
// `model` must come from this library; `value_out` valid; `probs_out` null
// or holding `probs_len` doubles.
enum CmdpStatus cmdp_occupancy_lp(const struct CmdpModel *model,
                                  double *value_out,
                                  double *probs_out,
                                  uintptr_t probs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMDP_H */
