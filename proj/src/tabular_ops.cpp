#include "pepo/tabular_ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pepo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double kl_divergence(const TabularPolicy& p, const TabularPolicy& q,
                     const std::vector<double>& nu0) {
  if (p.prompts() != q.prompts() || p.actions() != q.actions())
    throw std::invalid_argument("kl_divergence: shape mismatch");
  if (static_cast<int>(nu0.size()) != p.prompts())
    throw std::invalid_argument("kl_divergence: nu0 size mismatch");
  double total = 0.0;
  for (int x = 0; x < p.prompts(); ++x) {
    double row = 0.0;
    for (int a = 0; a < p.actions(); ++a) {
      const double pa = p(x, a);
      if (pa == 0.0) continue;
      const double qa = q(x, a);
      if (qa == 0.0) return kInf;
      row += pa * std::log(pa / qa);
    }
    total += nu0[x] * row;
  }
  return total;
}

double inner_product(const TabularPolicy& pi, const RewardTable& r,
                     const std::vector<double>& nu0) {
  double total = 0.0;
  for (int x = 0; x < pi.prompts(); ++x) {
    double row = 0.0;
    for (int a = 0; a < pi.actions(); ++a) row += pi(x, a) * r(x, a);
    total += nu0[x] * row;
  }
  return total;
}

double j_beta(const TabularPolicy& pi, const TabularEnv& env, double beta) {
  const RewardTable rstar = env.mean_reward();
  const double value = inner_product(pi, rstar, env.nu0);
  if (beta == 0.0) return value;
  return value - beta * kl_divergence(pi, env.pi_ref, env.nu0);
}

std::pair<double, double> concentrability(const TabularPolicy& pi_star,
                                          const TabularEnv& env) {
  double c_star = 0.0;
  double c_all = 0.0;
  for (int x = 0; x < env.num_prompts; ++x) {
    double row_star = 0.0;
    double worst = 0.0;
    for (int a = 0; a < env.num_actions; ++a) {
      const double d = env.pi_data(x, a);
      const double s = pi_star(x, a);
      if (s > 0.0) {
        if (d == 0.0) {
          row_star = kInf;
        } else if (row_star != kInf) {
          row_star += s * s / d;
        }
      }
      worst = std::max(worst, d > 0.0 ? 1.0 / d : kInf);
    }
    c_star += env.nu0[x] * row_star;
    c_all += env.nu0[x] * worst;
  }
  return {c_star, c_all};
}

TabularPolicy softmax_policy(const RewardTable& r, const TabularPolicy& pi_ref,
                             double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("softmax_policy: beta must be positive");
  if (r.prompts() != pi_ref.prompts() || r.actions() != pi_ref.actions())
    throw std::invalid_argument("softmax_policy: shape mismatch");
  for (double v : r.values().data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax_policy: non-finite reward");
  }
  Table out(r.prompts(), r.actions());
  for (int x = 0; x < r.prompts(); ++x) {
    // log-space weights; -inf where pi_ref has no support
    double mx = -kInf;
    std::vector<double> w(r.actions());
    for (int a = 0; a < r.actions(); ++a) {
      const double ref = pi_ref(x, a);
      w[a] = ref > 0.0 ? std::log(ref) + r(x, a) / beta : -kInf;
      mx = std::max(mx, w[a]);
    }
    double z = 0.0;
    for (int a = 0; a < r.actions(); ++a) {
      const double e = w[a] == -kInf ? 0.0 : std::exp(w[a] - mx);
      out(x, a) = e;
      z += e;
    }
    for (int a = 0; a < r.actions(); ++a) out(x, a) /= z;
  }
  return TabularPolicy(std::move(out));
}

}  // namespace pepo
