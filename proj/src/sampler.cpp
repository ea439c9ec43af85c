#include "pepo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pepo/rng.hpp"

namespace pepo {

namespace {

// When the ensemble-agreement mass collapses, the exact budget can dwarf any
// feasible compute; the sampler then abstains after this many attempts.
constexpr int kMaxTrials = 100000;

SampleOutcome run_rejection(std::span<const double> f_row,
                            std::span<const double> prop_row, double delta,
                            std::uint64_t seed) {
  for (size_t a = 0; a < f_row.size(); ++a) {
    if (f_row[a] > prop_row[a] * (1.0 + 1e-9) + 1e-300) {
      throw std::invalid_argument("rejection_sample: dominance violated at action " +
                                  std::to_string(a));
    }
  }
  const int budget = std::min(trial_budget(f_row, delta), kMaxTrials);
  Rng rng(seed);
  SampleOutcome out;
  for (int trial = 1; trial <= budget; ++trial) {
    const int a = rng.next_categorical(prop_row);
    double alpha = prop_row[a] > 0.0 ? f_row[a] / prop_row[a] : 0.0;
    if (alpha < 0.0 || alpha > 1.0 + 1e-9) {
      throw std::logic_error("rejection_sample: acceptance ratio left [0,1]");
    }
    alpha = std::min(alpha, 1.0);
    if (rng.next_double() <= alpha) {
      out.accepted = true;
      out.action = a;
      out.trials = trial;
      return out;
    }
  }
  out.trials = budget;
  return out;
}

}  // namespace

int trial_budget(std::span<const double> f_out_row, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("trial_budget: delta must be in (0,1)");
  double z = 0.0;
  for (double v : f_out_row) z += v;
  if (!(z > 0.0)) throw std::domain_error("trial_budget: zero-sum f_out row");
  const double raw = std::ceil(std::log(1.0 / delta) / z);
  if (raw >= static_cast<double>(std::numeric_limits<int>::max())) {
    return std::numeric_limits<int>::max();
  }
  return std::max(1, static_cast<int>(raw));
}

SampleOutcome rejection_sample(const PessimisticAggregate& agg, const TabularEnv& env,
                               int prompt, int proposal_member, double delta,
                               std::uint64_t seed) {
  if (proposal_member < 0 || proposal_member >= static_cast<int>(agg.members.size()))
    throw std::invalid_argument("rejection_sample: proposal member out of range");
  const TabularPolicy prop = agg.members[proposal_member].policy(env.pi_ref);
  return rejection_sample_with(agg, prop, prompt, delta, seed);
}

SampleOutcome rejection_sample_with(const PessimisticAggregate& agg,
                                    const TabularPolicy& proposal, int prompt,
                                    double delta, std::uint64_t seed) {
  if (prompt < 0 || prompt >= agg.f_out.rows())
    throw std::invalid_argument("rejection_sample: prompt out of range");
  const int actions = agg.f_out.cols();
  std::vector<double> f_row(actions), prop_row(actions);
  for (int a = 0; a < actions; ++a) {
    f_row[a] = agg.f_out(prompt, a);
    prop_row[a] = proposal(prompt, a);
  }
  if (agg.centering) {
    // restore member dominance: divide out the largest centering factor
    double m = 0.0;
    for (const MemberFit& member : agg.members) {
      m = std::max(m, std::exp(-member.zeta_at(prompt)));
    }
    if (m > 0.0) {
      for (double& v : f_row) v /= m;
    }
  }
  if (agg.aggregator == Aggregator::kMeanStd) {
    // a permissive eta (< sqrt(L-1)) loses the min-numerator dominance; the
    // sampled distribution is unchanged by scaling the numerator down
    double worst = 1.0;
    for (int a = 0; a < actions; ++a) {
      if (f_row[a] > 0.0 && prop_row[a] > 0.0) {
        worst = std::max(worst, f_row[a] / prop_row[a]);
      }
    }
    if (worst > 1.0) {
      for (double& v : f_row) v /= worst;
    }
  }
  return run_rejection(f_row, prop_row, delta, seed);
}

}  // namespace pepo
