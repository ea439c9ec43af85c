#pragma once

#include <utility>
#include <vector>

#include "pepo/env.hpp"

namespace pepo {

// Prompt-averaged KL divergence sum_x nu0(x) sum_a p(a|x) log(p/q).
// Terms with p(a|x) = 0 contribute 0. A support violation (p > 0 where q = 0)
// yields +infinity, never an exception, so sweeps survive degenerate policies.
double kl_divergence(const TabularPolicy& p, const TabularPolicy& q,
                     const std::vector<double>& nu0);

// J_beta(pi) = <pi, r*> - beta KL(pi, pi_ref). Gaussian rewards evaluate
// against the mean table.
double j_beta(const TabularPolicy& pi, const TabularEnv& env, double beta);

// (C*, C^all): single-policy and all-policy concentrability of pi_star/any
// policy against pi_data. C^all is attained at a simplex vertex, so it equals
// sum_x nu0(x) max_a 1/pi_data(a|x).
std::pair<double, double> concentrability(const TabularPolicy& pi_star,
                                          const TabularEnv& env);

// pi(a|x) proportional to pi_ref(a|x) exp(r(x,a)/beta), rows renormalized.
// Stabilized by subtracting the per-prompt maximum exponent.
TabularPolicy softmax_policy(const RewardTable& r, const TabularPolicy& pi_ref,
                             double beta);

// <pi, r> = sum_x nu0(x) sum_a pi(a|x) r(x,a)
double inner_product(const TabularPolicy& pi, const RewardTable& r,
                     const std::vector<double>& nu0);

}  // namespace pepo
