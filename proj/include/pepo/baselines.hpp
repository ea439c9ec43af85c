#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pepo/dataset.hpp"
#include "pepo/env.hpp"
#include "pepo/member_fit.hpp"

namespace pepo {

struct BaselineResult {
  std::string name;
  TabularPolicy policy;
  std::optional<RewardTable> fitted_reward;
  std::vector<int> selected_actions;  // beta = 0 selectors, one arm per prompt
  FitDiagnostics diag;
};

// Standard DPO: maximize sum log sigma(u(x,a) - u(x,b)) over |u| <= cap,
// return pi proportional to pi_ref exp(u/beta). The default cap of 30 is
// effectively unconstrained and lets the over-optimization failure show.
BaselineResult fit_dpo(const PreferenceDataset& data, const TabularEnv& env,
                       double beta, double cap = 30.0);

// Reward MLE over r in [0, r_max]^{X x A}; the per-prompt gauge shifts the
// minimum observed-action value to 0 before the box projection. Actions never
// observed at a prompt keep their 0 initialization.
RewardTable fit_reward_mle(const PreferenceDataset& data, const TabularEnv& env,
                           double r_max, FitDiagnostics* diag = nullptr);

// Loss and gradient of the reward MLE objective, exposed for the
// finite-difference checks.
double reward_mle_loss(const Table& r, const PreferenceDataset& data);
Table reward_mle_grad(const Table& r, const PreferenceDataset& data,
                      const TabularEnv& env);

// Exact maximizer of <pi, r_hat> - beta KL(pi, pi_ref) in the tabular case.
TabularPolicy rlhf_policy(const RewardTable& r_hat, const TabularEnv& env, double beta);

// argmax over the simplex of <pi, r_hat> - gamma * sum (pi - pi_ref)^2/pi_ref
// per prompt, via the KKT water-filling form
//   pi(a) = pi_ref(a) max(0, 1 + (r_hat(a) - mu) / (2 gamma)).
TabularPolicy chi2_policy(const RewardTable& r_hat, const TabularEnv& env,
                          double chi2_gamma);

// DPO plus the SFT regularizer lambda_sft * sum over triples of
// log pi(a+|x) + log pi(a-|x), same box parameterization.
BaselineResult fit_sft_dpo(const PreferenceDataset& data, const TabularEnv& env,
                           double beta, double lambda_sft, double cap = 30.0);

double sft_dpo_objective(const Table& u, const PreferenceDataset& data,
                         const TabularEnv& env, double beta, double lambda_sft);
Table sft_dpo_grad(const Table& u, const PreferenceDataset& data,
                   const TabularEnv& env, double beta, double lambda_sft);

enum class Beta0Mode { kRl, kPerl };

// beta = 0 selectors: RL takes the argmax of a single reward estimate, PERL
// the argmax of the per-action minimum across L estimates. Ties break toward
// the lowest action index.
std::vector<int> beta0_select(Beta0Mode mode, std::span<const RewardTable> r_hats);

}  // namespace pepo
