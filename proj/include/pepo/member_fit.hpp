#pragma once

#include <string>
#include <vector>

#include "pepo/dataset.hpp"
#include "pepo/env.hpp"
#include "pepo/table.hpp"

namespace pepo {

enum class FitMode { kAscent, kClosedForm };

struct FitDiagnostics {
  bool converged = true;
  double final_grad_norm = 0.0;
  long iterations = 0;
  double objective = 0.0;
};

// One ensemble member fitted on one shard. `coeffs` are the box-constrained
// fit coordinates (|coeffs| <= r_max, zero for actions never observed at a
// prompt); the induced policy is pi_ref * exp(coeffs / beta), renormalized.
struct MemberFit {
  std::string name;  // empty for ensemble members; set for saved baselines
  Table coeffs;
  PairGrid<double> lambda_table;
  std::vector<double> zeta;  // per-prompt centering offsets; empty when off
  CountTables shard_counts;
  FitMode mode = FitMode::kAscent;
  double beta = 0.0;
  double box = 0.0;  // half-width of the coefficient box
  FitDiagnostics diag;

  TabularPolicy policy(const TabularPolicy& pi_ref) const;

  // Implicit reward beta * log(pi(a|x) / pi_ref(a|x)) of the normalized
  // induced policy, computed in log space so it stays finite even when the
  // policy entry underflows.
  Table implicit_reward(const TabularPolicy& pi_ref) const;

  double zeta_at(int x) const { return zeta.empty() ? 0.0 : zeta[x]; }
};

// lambda(x,a,b) = 4 e^{r_max/2} / (N(x,a,b) + 2) for every pair, unseen pairs
// included.
PairGrid<double> lambda_schedule(const CountTables& shard_counts, double r_max);

// sum over shard triples of log sigma_pess(u(x,a) - u(x,b), lambda(x,a,b)).
// beta enters through u's definition and is not re-applied.
double pess_dpo_loss(const Table& u, const PreferenceDataset& shard,
                     const PairGrid<double>& lambda_table, double beta);
Table pess_dpo_grad(const Table& u, const PreferenceDataset& shard,
                    const PairGrid<double>& lambda_table);

// Maximize the pessimistic DPO objective over the box |u| <= r_max with the
// schedule's lambda table. Ascent mode runs projected gradient per prompt;
// closed-form mode fits, by weighted least squares anchored to zero mean over
// observed actions, the per-ordering pessimized-rate targets
// clip(sigma_pess_inv(N(a>b)/(N(a,b)+2), lambda), +-2 r_max), one residual
// per ordering so symmetric counts fit a zero gap.
MemberFit fit_member(const PreferenceDataset& shard, const TabularEnv& env,
                     const HyperParams& hp, FitMode mode);

// Same machinery with an explicit lambda table and box half-width; the DPO
// baselines reuse this with lambda = 0 and box = cap.
MemberFit fit_member_with_lambda(const PreferenceDataset& shard, const TabularEnv& env,
                                 double beta, const PairGrid<double>& lambda_table,
                                 double box, FitMode mode);

// Centered log-ratio offsets from the held-out complement D \ D_l:
//   zeta(x) = (1 + gamma/(2m)) / (2m + gamma) * sum over the 2m response
//   slots of log(pi(a|x)/pi_ref(a|x))
// with m occurrences of x in the complement; prompts absent from the
// complement get zeta = 0.
std::vector<double> centered_offsets(const MemberFit& member, const TabularEnv& env,
                                     const PreferenceDataset& complement, double gamma,
                                     double beta);

// Text table "x<TAB>a<TAB>u" with a metadata header.
void save_member(const MemberFit& member, const std::string& path);
MemberFit load_member(const std::string& path, const TabularEnv& env);

}  // namespace pepo
