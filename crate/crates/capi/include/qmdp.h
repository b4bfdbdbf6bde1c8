#ifndef QMDP_H
#define QMDP_H

/* Generated by cbindgen from the qmdp-capi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Matches the CLI exit-code taxonomy where
 * they overlap.
 */
typedef enum QmdpStatus {
  QMDP_STATUS_OK = 0,
  QMDP_STATUS_NULL_ARGUMENT = 1,
  QMDP_STATUS_CONFIG_ERROR = 2,
  QMDP_STATUS_ASSUMPTION_ERROR = 3,
  QMDP_STATUS_NUMERICAL_ERROR = 4,
  QMDP_STATUS_DOMAIN_ERROR = 5,
  QMDP_STATUS_IO_ERROR = 6,
} QmdpStatus;

/**
 * Solve route selector for [`qmdp_solve`].
 */
typedef enum QmdpRoute {
  QMDP_ROUTE_SPAN_RVI = 0,
  QMDP_ROUTE_SHIFTED_KERNEL = 1,
} QmdpRoute;

/**
 * Opaque finite-model handle.
 */
typedef struct QmdpFiniteModel QmdpFiniteModel;

/**
 * Opaque continuous-model handle.
 */
typedef struct QmdpModel QmdpModel;

/**
 * Opaque quantization-scheme handle.
 */
typedef struct QmdpScheme QmdpScheme;

/**
 * Opaque solved-optimality-equation handle.
 */
typedef struct QmdpSolution QmdpSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the current thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`); returns the full message length in bytes.
 */
size_t qmdp_last_error(char *buf, size_t cap);

/**
 * Benchmark continuous control problem on [0,1] with actions in [-1,1].
 */
struct QmdpModel *qmdp_model_case_study(void);

/**
 * Uncontrolled halving dynamics on [-1,1] (the quantization
 * counterexample).
 */
struct QmdpModel *qmdp_model_halving(void);

/**
 * Explicit finite model: `cost` is num_states x num_actions row-major,
 * `kernel` is num_states x num_actions x num_states, `floor` has one entry
 * per state (may be NULL for an all-zero floor).
 */
enum QmdpStatus qmdp_model_synthetic(const double *cost,
                                     const double *kernel,
                                     const double *floor,
                                     size_t num_states,
                                     size_t num_actions,
                                     struct QmdpModel **out);

void qmdp_model_free(struct QmdpModel *model);

/**
 * Uniform quantization of the model's state space into `num_bins` bins with
 * the given action net. Synthetic finite models use their identity
 * quantizer instead and ignore `num_bins`/`net`.
 */
enum QmdpStatus qmdp_scheme_uniform(const struct QmdpModel *model,
                                    size_t num_bins,
                                    const double *net,
                                    size_t net_len,
                                    struct QmdpScheme **out);

void qmdp_scheme_free(struct QmdpScheme *scheme);

size_t qmdp_scheme_num_bins(const struct QmdpScheme *scheme);

size_t qmdp_scheme_num_actions(const struct QmdpScheme *scheme);

/**
 * Worst-case mean in-bin distance (the resolution term of the error
 * bounds).
 */
enum QmdpStatus qmdp_scheme_loss_bound(const struct QmdpScheme *scheme, double *out);

/**
 * Bin index and representative state of `x`.
 */
enum QmdpStatus qmdp_scheme_quantize(const struct QmdpScheme *scheme,
                                     double x,
                                     size_t *bin_out,
                                     double *representative_out);

/**
 * Aggregate the continuous model into a finite model. With
 * `use_monte_carlo == 0` the exact kernel integrals are used; otherwise
 * `samples_per_bin` transitions are sampled per cell with the given seed.
 */
enum QmdpStatus qmdp_build_finite(const struct QmdpModel *model,
                                  const struct QmdpScheme *scheme,
                                  int32_t use_monte_carlo,
                                  size_t samples_per_bin,
                                  uint64_t seed,
                                  struct QmdpFiniteModel **out);

/**
 * Parse a finite model from its JSON document.
 */
enum QmdpStatus qmdp_finite_from_json(const char *json, struct QmdpFiniteModel **out);

/**
 * Serialize a finite model to JSON; free the string with
 * [`qmdp_string_free`].
 */
enum QmdpStatus qmdp_finite_to_json(const struct QmdpFiniteModel *finite, char **out);

size_t qmdp_finite_num_states(const struct QmdpFiniteModel *finite);

size_t qmdp_finite_num_actions(const struct QmdpFiniteModel *finite);

void qmdp_finite_free(struct QmdpFiniteModel *finite);

/**
 * Solve the average cost optimality equation of a finite model.
 * `tolerance <= 0` and `max_iters == 0` select the defaults.
 */
enum QmdpStatus qmdp_solve(const struct QmdpFiniteModel *finite,
                           enum QmdpRoute route,
                           double tolerance,
                           uint64_t max_iters,
                           struct QmdpSolution **out);

double qmdp_solution_gain(const struct QmdpSolution *sol);

double qmdp_solution_residual(const struct QmdpSolution *sol);

/**
 * Copy the Q table (num_states x num_actions, row-major) into `out`.
 */
enum QmdpStatus qmdp_solution_q(const struct QmdpSolution *sol, double *out, size_t len);

/**
 * Copy the greedy policy (one action index per state) into `out`.
 */
enum QmdpStatus qmdp_solution_policy(const struct QmdpSolution *sol, size_t *out, size_t len);

void qmdp_solution_free(struct QmdpSolution *sol);

/**
 * Synchronous quantized Q-learning; writes the normalized final table into
 * `q_out` (num_bins x net_len entries).
 */
enum QmdpStatus qmdp_train_sync(const struct QmdpModel *model,
                                const struct QmdpScheme *scheme,
                                uint64_t sweeps,
                                uint64_t seed,
                                double *q_out,
                                size_t q_len);

/**
 * Asynchronous quantized Q-learning from `x0`; writes the final table into
 * `q_out` and the delta-shifted gain estimate into `gain_out` (either may
 * be NULL).
 */
enum QmdpStatus qmdp_train_async(const struct QmdpModel *model,
                                 const struct QmdpScheme *scheme,
                                 uint64_t steps,
                                 double delta,
                                 double x0,
                                 uint64_t seed,
                                 double *q_out,
                                 size_t q_len,
                                 double *gain_out);

/**
 * Value gap of the quantized model: K_c / (1 - K_f) * L_X.
 */
enum QmdpStatus qmdp_bound_value_gap(double k_c, double k_f, double l_x, double *out);

/**
 * Lifted-policy performance gap: 2 K_c / ((1 - K_f) mu) * L_X.
 */
enum QmdpStatus qmdp_bound_policy_gap(double k_c,
                                      double k_f,
                                      double l_x,
                                      double mu_mass,
                                      double *out);

/**
 * Action-net gap: K_c / (1 - K_f) * (1/n).
 */
enum QmdpStatus qmdp_bound_action_gap(double k_c, double k_f, double n, double *out);

/**
 * Free a string returned by this library.
 */
void qmdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QMDP_H */
