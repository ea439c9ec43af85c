#include "pepo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "box_ascent.hpp"
#include "pepo/bt.hpp"
#include "pepo/tabular_ops.hpp"

namespace pepo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGradTol = 1e-8;
constexpr long kMaxIter = 100000;

struct PromptVars {
  int prompt;
  std::vector<int> actions;  // local var -> action
  std::vector<std::tuple<int, int, double>> pairs;  // (winner_var, loser_var, count)
  std::vector<std::pair<int, double>> slots;        // (var, multiplicity) for SFT
};

// Group triples per prompt. `all_actions` switches the variable set from the
// observed actions to the full action set (needed once the SFT term is live).
std::vector<PromptVars> group_by_prompt(const PreferenceDataset& data,
                                        const TabularEnv& env, bool all_actions) {
  std::map<std::tuple<int, int, int>, double> counts;
  for (const Triple& t : data.triples) counts[{t.prompt, t.winner, t.loser}] += 1.0;
  std::map<int, PromptVars> vars;
  std::map<std::pair<int, int>, int> index;
  auto var_of = [&](PromptVars& p, int x, int a) {
    auto [it, inserted] = index.try_emplace({x, a}, static_cast<int>(p.actions.size()));
    if (inserted) p.actions.push_back(a);
    return it->second;
  };
  for (const auto& [key, n] : counts) {
    const auto [x, w, lo] = key;
    PromptVars& p = vars[x];
    p.prompt = x;
    if (all_actions && p.actions.empty()) {
      for (int a = 0; a < env.num_actions; ++a) p.actions.push_back(a);
      for (int a = 0; a < env.num_actions; ++a) index[{x, a}] = a;
    }
    const int wv = var_of(p, x, w);
    const int lv = var_of(p, x, lo);
    if (w != lo) p.pairs.emplace_back(wv, lv, n);
    p.slots.emplace_back(wv, n);
    p.slots.emplace_back(lv, n);
  }
  std::vector<PromptVars> out;
  for (auto& [x, p] : vars) out.push_back(std::move(p));
  return out;
}

double pairwise_logit_loss(const PromptVars& p, std::span<const double> u) {
  double loss = 0.0;
  for (const auto& [wv, lv, n] : p.pairs) {
    const double gap = u[wv] - u[lv];
    // log sigma(gap), stable on both sides
    loss += n * (gap >= 0.0 ? -std::log1p(std::exp(-gap)) : gap - std::log1p(std::exp(gap)));
  }
  return loss;
}

void pairwise_logit_grad(const PromptVars& p, std::span<const double> u,
                         std::span<double> g) {
  std::fill(g.begin(), g.end(), 0.0);
  for (const auto& [wv, lv, n] : p.pairs) {
    const double d = n * sigma(-(u[wv] - u[lv]));  // n * (1 - sigma(gap))
    g[wv] += d;
    g[lv] -= d;
  }
}

void pairwise_logit_hess(const PromptVars& p, std::span<const double> u,
                         std::span<double> h) {
  const size_t n_vars = p.actions.size();
  std::fill(h.begin(), h.end(), 0.0);
  for (const auto& [wv, lv, n] : p.pairs) {
    const double s = sigma(u[wv] - u[lv]);
    const double c = -n * s * (1.0 - s);
    h[wv * n_vars + wv] += c;
    h[lv * n_vars + lv] += c;
    h[wv * n_vars + lv] -= c;
    h[lv * n_vars + wv] -= c;
  }
}

}  // namespace

BaselineResult fit_dpo(const PreferenceDataset& data, const TabularEnv& env,
                       double beta, double cap) {
  if (!(beta > 0.0)) throw std::invalid_argument("fit_dpo: beta must be positive");
  PairGrid<double> zero_lambda(env.num_prompts, env.num_actions, 0.0);
  MemberFit fit =
      fit_member_with_lambda(data, env, beta, zero_lambda, cap, FitMode::kAscent);
  BaselineResult out;
  out.name = "dpo";
  out.policy = fit.policy(env.pi_ref);
  out.diag = fit.diag;
  return out;
}

double reward_mle_loss(const Table& r, const PreferenceDataset& data) {
  double loss = 0.0;
  for (const Triple& t : data.triples) {
    const double gap = r(t.prompt, t.winner) - r(t.prompt, t.loser);
    loss += gap >= 0.0 ? -std::log1p(std::exp(-gap)) : gap - std::log1p(std::exp(gap));
  }
  return loss;
}

Table reward_mle_grad(const Table& r, const PreferenceDataset& data,
                      const TabularEnv& env) {
  Table g(env.num_prompts, env.num_actions, 0.0);
  for (const Triple& t : data.triples) {
    if (t.winner == t.loser) continue;
    const double d = sigma(-(r(t.prompt, t.winner) - r(t.prompt, t.loser)));
    g(t.prompt, t.winner) += d;
    g(t.prompt, t.loser) -= d;
  }
  return g;
}

RewardTable fit_reward_mle(const PreferenceDataset& data, const TabularEnv& env,
                           double r_max, FitDiagnostics* diag) {
  if (!(r_max > 0.0)) throw std::invalid_argument("fit_reward_mle: r_max must be positive");
  Table r(env.num_prompts, env.num_actions, 0.0);
  FitDiagnostics d;
  for (const PromptVars& p : group_by_prompt(data, env, /*all_actions=*/false)) {
    internal::AscentProblem prob;
    prob.lo = 0.0;
    prob.hi = r_max;
    prob.value = [&](std::span<const double> v) { return pairwise_logit_loss(p, v); };
    prob.gradient = [&](std::span<const double> v, std::span<double> g) {
      pairwise_logit_grad(p, v, g);
    };
    prob.hessian = [&](std::span<const double> v, std::span<double> h) {
      pairwise_logit_hess(p, v, h);
    };
    prob.gauge = [](std::span<double> v) {
      // anchor: minimum observed value to 0 (objective depends on gaps only)
      double mn = kInf;
      for (double x : v) mn = std::min(mn, x);
      for (double& x : v) x -= mn;
    };
    auto res = internal::maximize_box(prob, std::vector<double>(p.actions.size(), 0.0),
                                      kGradTol, kMaxIter);
    for (size_t i = 0; i < p.actions.size(); ++i) r(p.prompt, p.actions[i]) = res.x[i];
    d.converged = d.converged && res.converged;
    d.final_grad_norm = std::max(d.final_grad_norm, res.grad_norm);
    d.iterations = std::max(d.iterations, res.iterations);
  }
  d.objective = reward_mle_loss(r, data);
  if (diag) *diag = d;
  return RewardTable(std::move(r));
}

TabularPolicy rlhf_policy(const RewardTable& r_hat, const TabularEnv& env, double beta) {
  return softmax_policy(r_hat, env.pi_ref, beta);
}

TabularPolicy chi2_policy(const RewardTable& r_hat, const TabularEnv& env,
                          double chi2_gamma) {
  if (!(chi2_gamma > 0.0)) throw std::invalid_argument("chi2_policy: gamma must be positive");
  Table out(env.num_prompts, env.num_actions, 0.0);
  for (int x = 0; x < env.num_prompts; ++x) {
    double r_lo = kInf, r_hi = -kInf;
    for (int a = 0; a < env.num_actions; ++a) {
      r_lo = std::min(r_lo, r_hat(x, a));
      r_hi = std::max(r_hi, r_hat(x, a));
    }
    auto mass = [&](double mu) {
      double s = 0.0;
      for (int a = 0; a < env.num_actions; ++a) {
        s += env.pi_ref(x, a) *
             std::max(0.0, 1.0 + (r_hat(x, a) - mu) / (2.0 * chi2_gamma));
      }
      return s;
    };
    // mass(mu) is nonincreasing; bracket and bisect to 1e-10 row mass error
    double lo = r_lo - 2.0 * chi2_gamma;
    double hi = r_hi + 2.0 * chi2_gamma;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mass(mid) > 1.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo < 1e-14 * (1.0 + std::abs(hi))) break;
    }
    const double mu = 0.5 * (lo + hi);
    for (int a = 0; a < env.num_actions; ++a) {
      out(x, a) = env.pi_ref(x, a) *
                  std::max(0.0, 1.0 + (r_hat(x, a) - mu) / (2.0 * chi2_gamma));
    }
  }
  return TabularPolicy(std::move(out));
}

double sft_dpo_objective(const Table& u, const PreferenceDataset& data,
                         const TabularEnv& env, double beta, double lambda_sft) {
  double loss = 0.0;
  for (const Triple& t : data.triples) {
    if (t.winner != t.loser) {
      const double gap = u(t.prompt, t.winner) - u(t.prompt, t.loser);
      loss += gap >= 0.0 ? -std::log1p(std::exp(-gap)) : gap - std::log1p(std::exp(gap));
    } else {
      loss += std::log(0.5);  // sigma(0)
    }
  }
  if (lambda_sft > 0.0) {
    // log pi(a|x) = log pi_ref(a) + u(x,a)/beta - logsumexp_x
    std::vector<double> lse(env.num_prompts, 0.0);
    for (int x = 0; x < env.num_prompts; ++x) {
      double mx = -kInf;
      for (int a = 0; a < env.num_actions; ++a) {
        const double ref = env.pi_ref(x, a);
        if (ref > 0.0) mx = std::max(mx, std::log(ref) + u(x, a) / beta);
      }
      double s = 0.0;
      for (int a = 0; a < env.num_actions; ++a) {
        const double ref = env.pi_ref(x, a);
        if (ref > 0.0) s += std::exp(std::log(ref) + u(x, a) / beta - mx);
      }
      lse[x] = mx + std::log(s);
    }
    for (const Triple& t : data.triples) {
      for (int a : {t.winner, t.loser}) {
        const double ref = env.pi_ref(t.prompt, a);
        const double logpi =
            (ref > 0.0 ? std::log(ref) : -kInf) + u(t.prompt, a) / beta - lse[t.prompt];
        loss += lambda_sft * logpi;
      }
    }
  }
  return loss;
}

Table sft_dpo_grad(const Table& u, const PreferenceDataset& data, const TabularEnv& env,
                   double beta, double lambda_sft) {
  Table g(env.num_prompts, env.num_actions, 0.0);
  for (const Triple& t : data.triples) {
    if (t.winner == t.loser) continue;
    const double d = sigma(-(u(t.prompt, t.winner) - u(t.prompt, t.loser)));
    g(t.prompt, t.winner) += d;
    g(t.prompt, t.loser) -= d;
  }
  if (lambda_sft > 0.0) {
    const TabularPolicy pi = softmax_policy(RewardTable(u), env.pi_ref, beta);
    std::vector<double> slots(env.num_prompts, 0.0);
    for (const Triple& t : data.triples) {
      g(t.prompt, t.winner) += lambda_sft / beta;
      g(t.prompt, t.loser) += lambda_sft / beta;
      slots[t.prompt] += 2.0;
    }
    for (int x = 0; x < env.num_prompts; ++x) {
      if (slots[x] == 0.0) continue;
      for (int a = 0; a < env.num_actions; ++a) {
        g(x, a) -= lambda_sft * slots[x] * pi(x, a) / beta;
      }
    }
  }
  return g;
}

BaselineResult fit_sft_dpo(const PreferenceDataset& data, const TabularEnv& env,
                           double beta, double lambda_sft, double cap) {
  if (!(beta > 0.0)) throw std::invalid_argument("fit_sft_dpo: beta must be positive");
  if (!(lambda_sft >= 0.0))
    throw std::invalid_argument("fit_sft_dpo: lambda_sft must be >= 0");
  if (lambda_sft == 0.0) {
    BaselineResult r = fit_dpo(data, env, beta, cap);
    r.name = "sft_dpo";
    return r;
  }
  Table u(env.num_prompts, env.num_actions, 0.0);
  FitDiagnostics d;
  for (const PromptVars& p : group_by_prompt(data, env, /*all_actions=*/true)) {
    // per-prompt slice of the full objective, evaluated through the shared u
    internal::AscentProblem prob;
    prob.lo = -cap;
    prob.hi = cap;
    Table scratch = u;
    auto load = [&](std::span<const double> v) {
      for (size_t i = 0; i < p.actions.size(); ++i) scratch(p.prompt, p.actions[i]) = v[i];
    };
    PreferenceDataset prompt_data;
    for (const Triple& t : data.triples) {
      if (t.prompt == p.prompt) prompt_data.triples.push_back(t);
    }
    prob.value = [&, prompt_data](std::span<const double> v) {
      load(v);
      return sft_dpo_objective(scratch, prompt_data, env, beta, lambda_sft);
    };
    prob.gradient = [&, prompt_data](std::span<const double> v, std::span<double> g) {
      load(v);
      const Table full = sft_dpo_grad(scratch, prompt_data, env, beta, lambda_sft);
      for (size_t i = 0; i < p.actions.size(); ++i) g[i] = full(p.prompt, p.actions[i]);
    };
    double slot_count = 0.0;
    for (const Triple& t : prompt_data.triples) slot_count += 2.0;
    prob.hessian = [&, prompt_data, slot_count](std::span<const double> v,
                                                std::span<double> h) {
      load(v);
      pairwise_logit_hess(p, v, h);
      // SFT term: -lambda * slots * (diag(pi) - pi pi^T) / beta^2
      const TabularPolicy pi = softmax_policy(RewardTable(scratch), env.pi_ref, beta);
      const size_t m = p.actions.size();
      for (size_t r = 0; r < m; ++r) {
        const double pr = pi(p.prompt, p.actions[r]);
        for (size_t c = 0; c < m; ++c) {
          const double pc = pi(p.prompt, p.actions[c]);
          const double lse_hess = (r == c ? pr : 0.0) - pr * pc;
          h[r * m + c] -= lambda_sft * slot_count * lse_hess / (beta * beta);
        }
      }
    };
    auto res = internal::maximize_box(prob, std::vector<double>(p.actions.size(), 0.0),
                                      kGradTol, kMaxIter);
    for (size_t i = 0; i < p.actions.size(); ++i) u(p.prompt, p.actions[i]) = res.x[i];
    d.converged = d.converged && res.converged;
    d.final_grad_norm = std::max(d.final_grad_norm, res.grad_norm);
    d.iterations = std::max(d.iterations, res.iterations);
  }
  d.objective = sft_dpo_objective(u, data, env, beta, lambda_sft);
  BaselineResult out;
  out.name = "sft_dpo";
  out.policy = softmax_policy(RewardTable(u), env.pi_ref, beta);
  out.diag = d;
  return out;
}

std::vector<int> beta0_select(Beta0Mode mode, std::span<const RewardTable> r_hats) {
  if (r_hats.empty()) throw std::invalid_argument("beta0_select: no reward tables");
  if (mode == Beta0Mode::kRl && r_hats.size() != 1)
    throw std::invalid_argument("beta0_select: rl mode takes one table");
  const int prompts = r_hats[0].prompts();
  const int actions = r_hats[0].actions();
  std::vector<int> out(prompts, 0);
  for (int x = 0; x < prompts; ++x) {
    double best = -kInf;
    for (int a = 0; a < actions; ++a) {
      double v = kInf;
      for (const RewardTable& r : r_hats) v = std::min(v, r(x, a));
      if (mode == Beta0Mode::kRl) v = r_hats[0](x, a);
      if (v > best) {  // strict: ties keep the lowest index
        best = v;
        out[x] = a;
      }
    }
  }
  return out;
}

}  // namespace pepo
