/* pepo.h - C API for the PEPO tabular preference-optimization lab.
 *
 * All functions return PEPO_OK (0) on success or a nonzero error code;
 * pepo_last_error() describes the most recent failure on the calling thread.
 * Objects are opaque handles created and destroyed through this surface.
 */
#ifndef PEPO_H_
#define PEPO_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define PEPO_OK 0
#define PEPO_ERR_INVALID_ARGUMENT 1
#define PEPO_ERR_CONFIG 2
#define PEPO_ERR_CELL_FAILED 3
#define PEPO_ERR_IO 4
#define PEPO_ERR_DOMAIN 5
#define PEPO_ERR_INTERNAL 6

typedef struct pepo_env pepo_env;
typedef struct pepo_dataset pepo_dataset;
typedef struct pepo_members pepo_members;
typedef struct pepo_aggregate pepo_aggregate;

const char* pepo_version(void);

/* Message for the last failing call on this thread; empty string if none. */
const char* pepo_last_error(void);

/* ---- environment ------------------------------------------------------- */

/* json_text is either a bare env object or a full experiment config. */
int pepo_env_create(const char* json_text, pepo_env** out_env);
int pepo_env_load_file(const char* config_path, pepo_env** out_env);
void pepo_env_free(pepo_env* env);
int pepo_env_shape(const pepo_env* env, int* num_prompts, int* num_actions);
uint64_t pepo_env_hash(const pepo_env* env);

/* ---- datasets ----------------------------------------------------------- */

/* label_rule: "bt" or "argmax". */
int pepo_dataset_generate(const pepo_env* env, int64_t n, uint64_t seed,
                          const char* label_rule, pepo_dataset** out_data);
int pepo_dataset_size(const pepo_dataset* data, int64_t* out_n);
int pepo_dataset_save(const pepo_dataset* data, const pepo_env* env, const char* path);
int pepo_dataset_load(const char* path, pepo_dataset** out_data);
void pepo_dataset_free(pepo_dataset* data);

/* ---- member fitting ----------------------------------------------------- */

/* options_json keys (all optional): beta, l, fit_mode ("ascent"|"closed-form"),
 * centering (bool), gamma_count, seed-free; partitioning uses `seed`. */
int pepo_members_fit(const pepo_env* env, const pepo_dataset* data,
                     const char* options_json, uint64_t seed, pepo_members** out);
int pepo_members_count(const pepo_members* members, int* out_l);
/* Writes member_<i>.tsv files under dir. */
int pepo_members_save(const pepo_members* members, const char* dir);
int pepo_members_load(const pepo_env* env, const char* dir, int l, pepo_members** out);
void pepo_members_free(pepo_members* members);

/* Fit one baseline ("dpo", "sft_dpo", "rlhf", "chi2po") and write its policy
 * table as a member-format file. options_json: beta, cap, lambda_sft,
 * chi2_gamma. */
int pepo_baseline_fit_save(const pepo_env* env, const pepo_dataset* data,
                           const char* name, const char* options_json,
                           const char* path);

/* ---- aggregation -------------------------------------------------------- */

/* options_json keys: beta, alpha, theoretical (bool), delta, gamma_count,
 * centering (bool), aggregator ("min"|"mean_std"), eta, b_scale. */
int pepo_aggregate_build(const pepo_env* env, const pepo_members* members,
                         const pepo_dataset* full_data, const char* options_json,
                         pepo_aggregate** out);
int pepo_aggregate_save(const pepo_aggregate* agg, const char* path);
int pepo_aggregate_load(const pepo_env* env, const char* path, pepo_aggregate** out);
void pepo_aggregate_free(pepo_aggregate* agg);

/* pi_out row for one prompt; buf must hold num_actions doubles. */
int pepo_aggregate_policy_row(const pepo_aggregate* agg, int prompt, double* buf,
                              int buf_len);

/* ---- sampling ----------------------------------------------------------- */

/* Rejection-sample one action from pi_out(.|prompt). out_action is -1 when
 * the trial budget is exhausted (abstention). */
int pepo_sample(const pepo_aggregate* agg, const pepo_env* env, int prompt,
                int proposal_member, double delta, uint64_t seed, int* out_action,
                int* out_trials);

/* ---- evaluation --------------------------------------------------------- */

/* Evaluate the aggregate's output policy against the env's ground truth. Any
 * output pointer may be NULL. */
int pepo_eval_aggregate(const pepo_aggregate* agg, const pepo_env* env, double beta,
                        double* out_j_beta, double* out_suboptimality,
                        double* out_prob_optimal, double* out_c_star,
                        double* out_err_norm);

/* Evaluate a single member/baseline file (x<TAB>a<TAB>u table) as the policy
 * pi_ref * exp(u/beta). Any output pointer may be NULL. */
int pepo_eval_policy_file(const pepo_env* env, const char* member_path, double beta,
                          double* out_j_beta, double* out_suboptimality,
                          double* out_prob_optimal, double* out_c_star);

/* ---- experiment runner -------------------------------------------------- */

/* Run a full config file; writes the CSV (and plot when configured) under
 * out_dir. Returns PEPO_ERR_CONFIG for config errors, PEPO_ERR_CELL_FAILED
 * when any cell failed (rows are still written). seed_override may be NULL. */
int pepo_run_config_file(const char* config_path, const char* out_dir,
                         const uint64_t* seed_override, int jobs);

/* Reproduce a registered figure: known | unknown | ablation_l | beta0 | rate. */
int pepo_reproduce(const char* figure_id, const char* out_dir,
                   const uint64_t* seed_override, int jobs);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PEPO_H_ */
