#pragma once

#include <string>
#include <vector>

#include "pepo/member_fit.hpp"

namespace pepo {

enum class TieBoundMode { kTheoretical, kConstant };
enum class Aggregator { kMin, kMeanStd };

// Worst-case aggregation of an ensemble: numerator f_out, exact output
// policy, worst-case reward r_minus and the cached per-action min/max
// centered implicit rewards that define the estimated gap.
struct PessimisticAggregate {
  std::vector<MemberFit> members;
  Table p_tie_bar;  // per (x,a), entries in [0,1]
  double b_scale = 0.0;
  double beta = 0.0;
  bool centering = false;
  Aggregator aggregator = Aggregator::kMin;
  Table f_out;
  TabularPolicy pi_out;
  RewardTable r_minus;
  Table u_min;  // min over members of centered implicit rewards
  Table u_max;

  double estimated_gap(int x, int a, int b) const {
    return u_min(x, a) - u_max(x, b) - b_scale * p_tie_bar(x, a);
  }
};

// High-probability tie bound. Theoretical mode evaluates
//   min(1, 9 L |A| e^{r_max} log(N^2 |X| |A| / delta) / (N(x,a) + gamma))
// on the full-dataset counts; constant mode returns alpha everywhere.
Table tie_upper_bound(const CountTables& counts, const HyperParams& hp,
                      const TabularEnv& env, TieBoundMode mode, double alpha = 0.1);

// r_minus(x,a) = min over members of the (optionally centered) implicit
// reward, minus B * p_tie_bar(x,a).
RewardTable worst_case_reward(const std::vector<MemberFit>& members,
                              const TabularEnv& env, double beta,
                              const Table& p_tie_bar, double b_scale, bool centering);

// Assemble the aggregate: f_out, the normalized output policy, r_minus, and
// the min/max reward caches. Internally cross-checks that the normalized-min
// construction equals softmax_policy(r_minus, pi_ref, beta) to 1e-10 (the
// closed-form equivalence); a mismatch is a logic error.
PessimisticAggregate output_policy(std::vector<MemberFit> members,
                                   const TabularEnv& env, double beta,
                                   Table p_tie_bar, double b_scale, bool centering,
                                   Aggregator aggregator = Aggregator::kMin,
                                   double eta = 0.0);

// L = max(1, ceil(3.5 log(|X| |A| / delta)))
int ensemble_size(int num_prompts, int num_actions, double delta);

// mean - eta * std numerator variant (sample std, L-1 denominator), clamped
// at zero before the tie-bound factor.
Table mean_std_numerator(const std::vector<MemberFit>& members, const TabularEnv& env,
                         double eta, const Table& p_tie_bar, double b_scale,
                         double beta);

// Stage-factored policies over a token alphabet: stage h holds one
// conditional row per history (alphabet^h histories, mixed-radix indexed).
struct FactoredPolicySet {
  int horizon = 0;
  int alphabet = 0;
  std::vector<Table> ref_stages;
  std::vector<std::vector<Table>> member_stages;  // [member][stage]

  void validate() const;
  int num_members() const { return static_cast<int>(member_stages.size()); }
};

// Per-stage pessimistic aggregation min over members, renormalized per
// history. Exact closed form; no rejection step needed.
std::vector<Table> token_level_output(const FactoredPolicySet& fps);

void save_aggregate(const PessimisticAggregate& agg, const std::string& path);
// Reads back the f_out / pi_out tables (members are not part of the file).
PessimisticAggregate load_aggregate(const std::string& path, const TabularEnv& env);

}  // namespace pepo
