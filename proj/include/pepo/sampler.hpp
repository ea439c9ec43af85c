#pragma once

#include <cstdint>
#include <span>

#include "pepo/ensemble.hpp"

namespace pepo {

// Outcome of one rejection-sampling call. Abstention (budget exhausted) is a
// first-class outcome, not an error.
struct SampleOutcome {
  bool accepted = false;
  int action = -1;  // valid when accepted
  int trials = 0;

  bool abstained() const { return !accepted; }
};

// ceil(log(1/delta) / sum_a f_out(x,a)); a zero-sum row is degenerate.
int trial_budget(std::span<const double> f_out_row, double delta);

// Exact sampling from pi_out(.|x): draw from the proposal, accept with
// probability f_out(x,A)/proposal(A|x), up to the confidence-calibrated trial
// budget. The dominance precondition f_out <= proposal is verified first.
// With centering on, the numerator is rescaled by 1/max_l e^{-zeta_l(x)} so
// every ensemble member dominates it again.
SampleOutcome rejection_sample(const PessimisticAggregate& agg, const TabularEnv& env,
                               int prompt, int proposal_member, double delta,
                               std::uint64_t seed);

// Same routine with an explicit proposal policy.
SampleOutcome rejection_sample_with(const PessimisticAggregate& agg,
                                    const TabularPolicy& proposal, int prompt,
                                    double delta, std::uint64_t seed);

}  // namespace pepo
