/* C interface to the whitenopt shared library.
 *
 * Conventions:
 *   - Every fallible call returns a wopt_status; WOPT_OK means success.
 *   - On failure the call leaves its outputs untouched and stores a message
 *     retrievable with wopt_last_error() (per thread, overwritten by the
 *     next failure on that thread).
 *   - Strings and byte buffers returned through out-parameters are allocated
 *     by the library and must be released with wopt_buffer_free().
 *   - Matrices cross the boundary as row-major double arrays of length
 *     rows * cols.
 */

#ifndef WHITENOPT_H
#define WHITENOPT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wopt_status {
    WOPT_OK = 0,
    WOPT_ERR_INVALID_ARGUMENT = 1, /* null pointer, bad enum value, bad index */
    WOPT_ERR_DIMENSION = 2,        /* shape or range violation */
    WOPT_ERR_NUMERICAL = 3,        /* non-finite values or loss of positive definiteness */
    WOPT_ERR_PARSE = 4,            /* malformed config text or corrupt checkpoint bytes */
    WOPT_ERR_IO = 5,               /* unreadable input or unwritable output */
    WOPT_ERR_INTERNAL = 6          /* unexpected failure (e.g. allocation) */
} wopt_status;

/* Stable name for a status code, e.g. "WOPT_ERR_PARSE". */
const char* wopt_status_name(wopt_status status);

/* Message from the most recent failing call on this thread; "" if none. The
 * pointer stays valid until the next failing call on the same thread. */
const char* wopt_last_error(void);

/* Library version as "major.minor.patch". */
const char* wopt_version(void);

/* Releases any buffer the library handed out via an out-parameter. Safe on
 * NULL. */
void wopt_buffer_free(void* buffer);

/* ---------------------------------------------------------------------------
 * Optimizers
 *
 * A handle owns the configuration and accumulated state for one matrix
 * parameter of fixed shape. Handles are not thread-safe; distinct handles
 * may be used concurrently.
 * ------------------------------------------------------------------------- */

typedef struct wopt_optimizer wopt_optimizer;

typedef enum wopt_step_outcome {
    WOPT_STEP_APPLIED = 0,
    /* The whole gradient history is still zero, so no preconditioner exists;
     * the parameter was left untouched. */
    WOPT_STEP_SKIPPED_ZERO_CURVATURE = 1
} wopt_step_outcome;

/* Adam: param -= lr * m_hat / (sqrt(v_hat) + epsilon). */
wopt_status wopt_adam_create(size_t rows, size_t cols, double lr, double beta1, double beta2,
                             double epsilon, wopt_optimizer** out);

/* Shampoo: param -= lr * trace(L)^(1/2) * L^(-1/2) * G * R^(-1/2), with the
 * inverse roots refreshed every precond_freq steps. precond_beta is the EMA
 * factor on the L/R accumulators (0 = plain sum), ridge a diagonal floor
 * applied inside the inverse roots, momentum_beta an EMA on the gradient
 * itself (0 = off). */
wopt_status wopt_shampoo_create(size_t rows, size_t cols, double lr, uint32_t precond_freq,
                                double precond_beta, double ridge, double momentum_beta,
                                wopt_optimizer** out);

/* SOAP: Adam run inside the eigenbasis of Shampoo's L/R accumulators, basis
 * refreshed every precond_freq steps. beta1/beta2/epsilon configure the
 * inner Adam. */
wopt_status wopt_soap_create(size_t rows, size_t cols, double lr, uint32_t precond_freq,
                             double precond_beta, double beta1, double beta2, double epsilon,
                             wopt_optimizer** out);

/* Applies one update in place. param and grad are row-major arrays of
 * exactly len = rows * cols doubles. outcome may be NULL. */
wopt_status wopt_optimizer_step(wopt_optimizer* opt, double* param, const double* grad,
                                size_t len, wopt_step_outcome* outcome);

/* Serializes the optimizer state (not the config) to a self-describing
 * binary blob; restoring it into a handle created with the same algorithm
 * and shape resumes bit-exactly. */
wopt_status wopt_optimizer_save(const wopt_optimizer* opt, uint8_t** bytes_out, size_t* len_out);
wopt_status wopt_optimizer_restore(wopt_optimizer* opt, const uint8_t* bytes, size_t len);

/* Safe on NULL. */
void wopt_optimizer_free(wopt_optimizer* opt);

/* ---------------------------------------------------------------------------
 * Experiments
 *
 * Config text is flat "key = value" lines ('#' comments). Recognized keys:
 * model.kind (quadratic | linear_regression | mlp2 | bigram_lm), model.m,
 * model.n, model.batch, model.cond, model.kron, opt.kind (adam | shampoo |
 * soap), opt.lr, opt.beta1, opt.beta2, opt.epsilon, opt.ridge,
 * opt.precond_freq, opt.precond_beta, run.steps, run.eval_every, run.seed,
 * run.threshold. A comma-separated value makes the key a sweep axis; axes
 * expand as a cross product.
 * ------------------------------------------------------------------------- */

/* Runs the single experiment described by config_text (sweep axes are a
 * parse error here) and returns its trace as CSV text with header
 * step,train_loss,val_loss,grad_norm,elapsed_s. corpus may be NULL; when
 * non-NULL it replaces the synthesized bigram training text. seed_override
 * >= 0 replaces run.seed. diverged/interrupted may be NULL; when the run
 * diverges or is interrupted the call still succeeds, the trace is truncated
 * with a trailing marker comment, and the flag is set. */
wopt_status wopt_run_config(const char* config_text, const char* corpus, int64_t seed_override,
                            char** trace_csv_out, int* diverged_out, int* interrupted_out);

/* Parses config_text and reports how many experiments its sweep axes expand
 * to (1 when nothing is swept) without running anything. */
wopt_status wopt_config_count(const char* config_text, size_t* count_out);

/* Result of a sweep: one entry per expanded config, in expansion order. */
typedef struct wopt_sweep_result wopt_sweep_result;

/* Expands the sweep axes in config_text and runs every config (at most
 * max_threads concurrently; 0 means the WHITENOPT_THREADS / hardware
 * default). Individual experiment failures are captured per entry and do
 * not fail the sweep. */
wopt_status wopt_sweep_run(const char* config_text, const char* corpus, int64_t seed_override,
                           size_t max_threads, wopt_sweep_result** out);

size_t wopt_sweep_count(const wopt_sweep_result* result);

/* Label of entry `index` ("key=value" pairs of the swept axes), owned by
 * the result. NULL on bad index. */
const char* wopt_sweep_id(const wopt_sweep_result* result, size_t index);

/* Error message for entry `index`; "" when the experiment ran cleanly.
 * NULL on bad index. */
const char* wopt_sweep_error(const wopt_sweep_result* result, size_t index);

/* 1 if entry `index` diverged, 0 otherwise (including bad index). */
int wopt_sweep_diverged(const wopt_sweep_result* result, size_t index);

/* Trace CSV for entry `index` (header-only when the entry errored before
 * producing rows). */
wopt_status wopt_sweep_trace_csv(const wopt_sweep_result* result, size_t index, char** csv_out);

/* One row per entry (final losses, threshold crossing, status), plus
 * best-of-grid learning-rate comment lines when opt.lr was swept. */
wopt_status wopt_sweep_summary_csv(const wopt_sweep_result* result, char** csv_out);

/* Safe on NULL. */
void wopt_sweep_result_free(wopt_sweep_result* result);

/* ---------------------------------------------------------------------------
 * Verification
 * ------------------------------------------------------------------------- */

/* Runs the numerical invariant suite (direction equivalences against the
 * dense whitening oracle, Kronecker identities, Monte-Carlo whitening,
 * gradient checks, ...): `cases` randomized instances per invariant with
 * factor dimensions up to max_dim (2..6). report_out receives one line per
 * invariant: name, max observed error, tolerance, PASS/FAIL. all_passed_out
 * (may be NULL) receives 1 iff every invariant passed; failures are reported
 * through the flag, not the status code. */
wopt_status wopt_verify(uint64_t seed, size_t cases, size_t max_dim, char** report_out,
                        int* all_passed_out);

/* Finite-difference audit of every model kind's analytic gradients at step
 * size 1e-5, `rounds` independently seeded models per kind. Same report
 * shape as wopt_verify. */
wopt_status wopt_grad_check(uint64_t seed, size_t rounds, char** report_out, int* all_passed_out);

/* ---------------------------------------------------------------------------
 * Cooperative interruption
 *
 * Running experiments poll this flag between steps and mark their trace
 * interrupted. wopt_request_interrupt is async-signal-safe.
 * ------------------------------------------------------------------------- */

void wopt_request_interrupt(void);
void wopt_clear_interrupt(void);
int wopt_interrupt_requested(void);

#ifdef __cplusplus
}
#endif

#endif /* WHITENOPT_H */
