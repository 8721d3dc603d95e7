#ifndef SEQOPT_H
#define SEQOPT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define SEQOPT_OK 0

#define SEQOPT_ERR_NULL_POINTER 1

#define SEQOPT_ERR_INVALID_UTF8 2

#define SEQOPT_ERR_CONFIG 3

#define SEQOPT_ERR_RUNTIME 4

#define SEQOPT_ERR_OUT_OF_RANGE 5

#define SEQOPT_ERR_PANIC 6

#define SEQOPT_PHI_MEAN 0

#define SEQOPT_PHI_MAX 1

#define SEQOPT_PHI_MAX_INCREASING_RUN 2

/*
 A validated experiment configuration.
 */
typedef struct SeqoptExperiment SeqoptExperiment;

/*
 Results of one experiment: per-arm, per-run step records.
 */
typedef struct SeqoptResults SeqoptResults;

/*
 One step of one run. Quantities that are not available for the scenario
 or step are NaN.
 */
typedef struct SeqoptRecord {
  uint64_t n;
  uint64_t k;
  double rho_hat;
  double slack;
  double eps_hat;
  double xi;
  double excess_exact;
  double test_loss;
  double auc;
  double cum_cost;
} SeqoptRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Last error message on this thread, or NULL after a successful call. The
 pointer stays valid until the next seqopt call on the same thread.
 */
const char *seqopt_last_error_message(void);

/*
 Parses and validates a TOML experiment config. Relative CSV paths are
 resolved against the working directory.

 # Safety
 `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t seqopt_experiment_from_toml(const char *toml, struct SeqoptExperiment **out);

/*
 Loads a built-in preset by name.

 # Safety
 `name` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t seqopt_experiment_from_preset(const char *name, struct SeqoptExperiment **out);

/*
 Overrides the base seed.

 # Safety
 `exp` must come from `seqopt_experiment_from_*` and not be freed.
 */
int32_t seqopt_experiment_set_seed(struct SeqoptExperiment *exp, uint64_t seed);

/*
 Overrides the number of runs (at least one).

 # Safety
 `exp` must come from `seqopt_experiment_from_*` and not be freed.
 */
int32_t seqopt_experiment_set_runs(struct SeqoptExperiment *exp, size_t runs);

/*
 Runs every configured arm.

 # Safety
 `exp` must be a live experiment handle and `out` a valid pointer.
 */
int32_t seqopt_experiment_run(const struct SeqoptExperiment *exp, struct SeqoptResults **out);

/*
 # Safety
 `exp` must be NULL or a handle not yet freed.
 */
void seqopt_experiment_free(struct SeqoptExperiment *exp);

/*
 # Safety
 `res` must be NULL or a handle not yet freed.
 */
void seqopt_results_free(struct SeqoptResults *res);

/*
 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_arm_count(const struct SeqoptResults *res, size_t *out);

/*
 Name of an arm. The string is owned by `res`.

 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_arm_name(const struct SeqoptResults *res, size_t arm, const char **out);

/*
 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_run_count(const struct SeqoptResults *res, size_t arm, size_t *out);

/*
 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_step_count(const struct SeqoptResults *res,
                                  size_t arm,
                                  size_t run,
                                  size_t *out);

/*
 Copies the record of step index `step` (0-based) into `out`.

 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_record(const struct SeqoptResults *res,
                              size_t arm,
                              size_t run,
                              size_t step,
                              struct SeqoptRecord *out);

/*
 Writes the per-run CSVs, aggregates and summary into `dir`. A non-empty
 directory is refused unless `force` is true.

 # Safety
 `res` must be a live results handle; `dir` a NUL-terminated string.
 */
int32_t seqopt_results_write(const struct SeqoptResults *res, const char *dir, bool force);

/*
 Summary JSON as a new string; release it with [`seqopt_string_free`].

 # Safety
 `res` must be a live results handle; `out` a valid pointer.
 */
int32_t seqopt_results_summary_json(const struct SeqoptResults *res, char **out);

/*
 # Safety
 `s` must be NULL or a string returned by this library, not yet freed.
 */
void seqopt_string_free(char *s);

/*
 Smallest `K` with `b(d0, K) <= eps`. `saturated` is set when even the
 cap `k_cap` misses the target.

 # Safety
 `k_out` must be valid; `saturated` may be NULL.
 */
int32_t seqopt_bound_invert(double c_alpha,
                            double c_beta,
                            double m,
                            double big_m,
                            uint64_t k_cap,
                            double d0,
                            double eps,
                            uint64_t *k_out,
                            bool *saturated);

/*
 ROC AUC of `scores` against `labels` (non-zero is positive).

 # Safety
 `scores` and `labels` must each point to `len` elements; `out` must be valid.
 */
int32_t seqopt_roc_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

/*
 Aggregate loss of excess-risk gaps; `kind` is one of the `SEQOPT_PHI_*`
 constants.

 # Safety
 `xi` must point to `len` elements; `out` must be valid.
 */
int32_t seqopt_phi_loss(int32_t kind, const double *xi, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEQOPT_H */
