#pragma once

#include "pepo/table.hpp"

namespace pepo {

// Win/lose/tie distribution of a single comparison under the tie-allowing
// Bradley-Terry model. Components sum to 1.
struct TiePreferenceDistribution {
  double p_win = 0.0;
  double p_lose = 0.0;
  double p_tie = 0.0;
};

// Numerically stable logistic sigmoid.
double sigma(double x);

// Pessimistic sigmoid e^{x/2} / (e^{x/2} + e^{-x/2} + lambda), evaluated in
// log-space. lambda = 0 recovers the standard sigmoid. The argument is the
// already-beta-scaled reward gap.
double sigma_pess(double x, double lambda);

// Exact inverse of sigma_pess in its second-to-last argument:
//   2 log((lambda y + sqrt(lambda^2 y^2 + 4y(1-y))) / (2(1-y)))
// y = 0 returns -infinity (callers clip to their policy-class box); y outside
// [0, 1) is a domain error.
double sigma_pess_inv(double y, double lambda);

// Tie probability lambda / (e^{delta/2} + e^{-delta/2} + lambda) of a
// comparison with gap delta.
double tie_probability(double delta, double lambda);

// Full three-outcome distribution for gap delta.
TiePreferenceDistribution tie_preference_distribution(double delta, double lambda);

// Standard BT win probability sigma(r(x,a) - r(x,b)).
double bt_win_prob(const Table& r, int x, int a, int b);

// Analytic upper bound on sigma_pess_inv(sigma(x), lambda):
//   x + lambda^2 e^x + lambda e^{x/2}
double quad_bound(double x, double lambda);

// Lipschitz constant bound for sigma_pess_inv(., lambda) on [a, 1-a] with
// a = 1/(e^{2 r_max} + 1):
//   (lambda+2)(e^{2 r_max}+1) + (lambda^2+6)/2 * (e^{2 r_max}+1)^2
double lipschitz_bound(double r_max, double lambda);

}  // namespace pepo
