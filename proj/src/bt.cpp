#include "pepo/bt.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pepo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log(e^a + e^b + e^c) with -inf treated as an absent term.
double logsumexp3(double a, double b, double c) {
  double m = a;
  if (b > m) m = b;
  if (c > m) m = c;
  if (m == -kInf) return -kInf;
  double s = 0.0;
  if (a != -kInf) s += std::exp(a - m);
  if (b != -kInf) s += std::exp(b - m);
  if (c != -kInf) s += std::exp(c - m);
  return m + std::log(s);
}

}  // namespace

double sigma(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sigma_pess(double x, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("sigma_pess: lambda < 0");
  const double h = 0.5 * x;
  const double log_lambda = lambda > 0.0 ? std::log(lambda) : -kInf;
  return std::exp(h - logsumexp3(h, -h, log_lambda));
}

double sigma_pess_inv(double y, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("sigma_pess_inv: lambda < 0");
  if (y == 0.0) return -kInf;  // callers clip to their box
  if (!(y > 0.0 && y < 1.0))
    throw std::domain_error("sigma_pess_inv: y outside the attainable range (0, 1)");
  // 4y - 4y^2 written as 4y(1-y): no cancellation anywhere in (0,1).
  const double disc = lambda * lambda * y * y + 4.0 * y * (1.0 - y);
  return 2.0 * std::log((lambda * y + std::sqrt(disc)) / (2.0 * (1.0 - y)));
}

double tie_probability(double delta, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("tie_probability: lambda < 0");
  if (lambda == 0.0) return 0.0;
  const double h = 0.5 * delta;
  return std::exp(std::log(lambda) - logsumexp3(h, -h, std::log(lambda)));
}

TiePreferenceDistribution tie_preference_distribution(double delta, double lambda) {
  TiePreferenceDistribution d;
  d.p_win = sigma_pess(delta, lambda);
  d.p_lose = sigma_pess(-delta, lambda);
  d.p_tie = tie_probability(delta, lambda);
  return d;
}

double bt_win_prob(const Table& r, int x, int a, int b) {
  return sigma(r(x, a) - r(x, b));
}

double quad_bound(double x, double lambda) {
  return x + lambda * lambda * std::exp(x) + lambda * std::exp(0.5 * x);
}

double lipschitz_bound(double r_max, double lambda) {
  if (r_max <= 0.0) throw std::invalid_argument("lipschitz_bound: r_max must be positive");
  const double inv_a = std::exp(2.0 * r_max) + 1.0;
  return (lambda + 2.0) * inv_a + 0.5 * (lambda * lambda + 6.0) * inv_a * inv_a;
}

}  // namespace pepo
