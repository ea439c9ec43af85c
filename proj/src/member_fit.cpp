#include "pepo/member_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "box_ascent.hpp"
#include "pepo/bt.hpp"
#include "pepo/rng.hpp"
#include "pepo/tabular_ops.hpp"

namespace pepo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGradTol = 1e-8;
constexpr long kMaxIter = 100000;

double log_sigma_pess(double gap, double lambda) {
  const double h = 0.5 * gap;
  const double m = std::max(std::abs(h), lambda > 0.0 ? std::log(lambda) : -kInf);
  double s = std::exp(h - m) + std::exp(-h - m);
  if (lambda > 0.0) s += std::exp(std::log(lambda) - m);
  return h - (m + std::log(s));
}

// d/dgap log sigma_pess(gap, lambda) = 1/2 - sinh(gap/2) / (2 cosh(gap/2) + lambda)
double dlog_sigma_pess(double gap, double lambda) {
  const double h = 0.5 * gap;
  if (h > 350.0) return 0.0;  // sinh/cosh would overflow; the ratio saturates
  if (h < -350.0) return 1.0;
  return 0.5 - std::sinh(h) / (2.0 * std::cosh(h) + lambda);
}

// d^2/dgap^2 log sigma_pess = -(lambda cosh(gap/2)/2 + 1) / (2 cosh(gap/2) + lambda)^2
double ddlog_sigma_pess(double gap, double lambda) {
  const double h = 0.5 * gap;
  if (std::abs(h) > 350.0) return 0.0;  // curvature vanishes in the tails
  const double c = std::cosh(h);
  const double z = 2.0 * c + lambda;
  return -(0.5 * lambda * c + 1.0) / (z * z);
}

struct PairTerm {
  int winner_var;
  int loser_var;
  double weight;
  double lambda;
};

// Per-prompt aggregation of the shard: distinct ordered pairs with their
// multiplicities, a local variable index per observed action, and the
// constant contribution of identical-response comparisons.
struct PromptProblem {
  int prompt = 0;
  std::vector<int> actions;          // local var -> action id
  std::vector<PairTerm> terms;       // winner != loser
  double self_pair_constant = 0.0;   // sum of n * log sigma_pess(0, lambda)
};

std::vector<PromptProblem> aggregate_shard(const PreferenceDataset& shard,
                                           const TabularEnv& env,
                                           const PairGrid<double>& lambda_table) {
  std::map<std::tuple<int, int, int>, std::int64_t> counts;
  for (const Triple& t : shard.triples) counts[{t.prompt, t.winner, t.loser}] += 1;

  std::map<int, PromptProblem> problems;
  std::map<std::pair<int, int>, int> var_of;  // (prompt, action) -> local index
  auto var_index = [&](PromptProblem& p, int x, int a) {
    auto [it, inserted] = var_of.try_emplace({x, a}, static_cast<int>(p.actions.size()));
    if (inserted) p.actions.push_back(a);
    return it->second;
  };
  for (const auto& [key, n] : counts) {
    const auto [x, w, lo] = key;
    PromptProblem& p = problems[x];
    p.prompt = x;
    if (w == lo) {
      var_index(p, x, w);
      p.self_pair_constant += n * log_sigma_pess(0.0, lambda_table(x, w, lo));
      continue;
    }
    PairTerm term;
    term.winner_var = var_index(p, x, w);
    term.loser_var = var_index(p, x, lo);
    term.weight = static_cast<double>(n);
    term.lambda = lambda_table(x, w, lo);
    p.terms.push_back(term);
  }
  std::vector<PromptProblem> out;
  out.reserve(problems.size());
  for (auto& [x, p] : problems) out.push_back(std::move(p));
  return out;
}

double prompt_loss(const PromptProblem& p, std::span<const double> u) {
  double loss = p.self_pair_constant;
  for (const PairTerm& t : p.terms) {
    loss += t.weight * log_sigma_pess(u[t.winner_var] - u[t.loser_var], t.lambda);
  }
  return loss;
}

void prompt_grad(const PromptProblem& p, std::span<const double> u, std::span<double> g) {
  std::fill(g.begin(), g.end(), 0.0);
  for (const PairTerm& t : p.terms) {
    const double d = t.weight * dlog_sigma_pess(u[t.winner_var] - u[t.loser_var], t.lambda);
    g[t.winner_var] += d;
    g[t.loser_var] -= d;
  }
}

void prompt_hess(const PromptProblem& p, std::span<const double> u, std::span<double> h) {
  const size_t n = p.actions.size();
  std::fill(h.begin(), h.end(), 0.0);
  for (const PairTerm& t : p.terms) {
    const double c = t.weight * ddlog_sigma_pess(u[t.winner_var] - u[t.loser_var], t.lambda);
    h[t.winner_var * n + t.winner_var] += c;
    h[t.loser_var * n + t.loser_var] += c;
    h[t.winner_var * n + t.loser_var] -= c;
    h[t.loser_var * n + t.winner_var] -= c;
  }
}

// Connected components of the distinct-pair comparison graph.
std::vector<int> components(const PromptProblem& p) {
  std::vector<int> comp(p.actions.size());
  std::iota(comp.begin(), comp.end(), 0);
  std::function<int(int)> find = [&](int i) {
    while (comp[i] != i) i = comp[i] = comp[comp[i]];
    return i;
  };
  for (const PairTerm& t : p.terms) {
    comp[find(t.winner_var)] = find(t.loser_var);
  }
  for (size_t i = 0; i < comp.size(); ++i) comp[i] = find(static_cast<int>(i));
  return comp;
}

// Shift each component to zero mean, staying inside the box if it binds.
void recenter_components(std::vector<double>& u, const std::vector<int>& comp, double box) {
  std::map<int, std::vector<int>> groups;
  for (size_t i = 0; i < comp.size(); ++i) groups[comp[i]].push_back(static_cast<int>(i));
  for (const auto& [root, idx] : groups) {
    double mean = 0.0, lo = kInf, hi = -kInf;
    for (int i : idx) {
      mean += u[i];
      lo = std::min(lo, u[i]);
      hi = std::max(hi, u[i]);
    }
    mean /= static_cast<double>(idx.size());
    const double shift = std::clamp(-mean, -box - lo, box - hi);
    for (int i : idx) u[i] += shift;
  }
}

void closed_form_prompt(const PromptProblem& p, double box, std::vector<double>& u,
                        FitDiagnostics& diag) {
  const size_t n = p.actions.size();
  u.assign(n, 0.0);
  if (p.terms.empty()) return;

  // Pessimized-rate targets. Each ordering of an observed pair contributes
  // its own target clip(sigma_pess_inv(wins/(N+2), lambda), +-2 box); the
  // least squares then fits the antisymmetric blend (g_ab - g_ba)/2, which
  // restores the fitted gap 0 on symmetric counts.
  struct Edge {
    int a = 0, b = 0;
    double weight = 0.0, gap = 0.0, lambda = 0.0, wins_a = 0.0;
  };
  std::map<std::pair<int, int>, Edge> edges;
  for (const PairTerm& t : p.terms) {
    const auto [lo_var, hi_var] = std::minmax(t.winner_var, t.loser_var);
    Edge& e = edges[{lo_var, hi_var}];
    e.a = lo_var;
    e.b = hi_var;
    e.weight += t.weight;
    e.lambda = t.lambda;  // lambda table is symmetric in (a, b)
    if (t.winner_var == lo_var) e.wins_a += t.weight;
  }
  auto rate_target = [box](double wins, double pairs, double lambda) {
    const double y = wins / (pairs + 2.0);
    const double raw = y == 0.0 ? -kInf : sigma_pess_inv(y, lambda);
    return std::clamp(raw, -2.0 * box, 2.0 * box);
  };
  for (auto& [key, e] : edges) {
    const double g_ab = rate_target(e.wins_a, e.weight, e.lambda);
    const double g_ba = rate_target(e.weight - e.wins_a, e.weight, e.lambda);
    e.gap = 0.5 * (g_ab - g_ba);
  }

  // exact anchored least squares per component, one node pinned
  const std::vector<int> comp = components(p);
  std::map<int, std::vector<int>> groups;
  for (size_t i = 0; i < n; ++i) groups[comp[i]].push_back(static_cast<int>(i));
  for (const auto& [root, idx] : groups) {
    if (idx.size() < 2) continue;
    std::map<int, int> local;
    for (size_t i = 0; i < idx.size(); ++i) local[idx[i]] = static_cast<int>(i);
    const size_t m = idx.size() - 1;  // node idx[0] pinned to zero
    std::vector<std::vector<double>> lap(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    auto add = [&](int i, int j, double w, double gap) {
      // contributes w (u_i - u_j - gap)^2
      const int li = local[i] - 1, lj = local[j] - 1;
      if (li >= 0) {
        lap[li][li] += w;
        rhs[li] += w * gap;
        if (lj >= 0) lap[li][lj] -= w;
      }
      if (lj >= 0) {
        lap[lj][lj] += w;
        rhs[lj] -= w * gap;
        if (li >= 0) lap[lj][li] -= w;
      }
    };
    for (const auto& [key, e] : edges) {
      if (comp[e.a] != root) continue;
      add(e.a, e.b, e.weight, e.gap);
    }
    const std::vector<double> sol = internal::solve_dense(lap, rhs);
    for (size_t i = 1; i < idx.size(); ++i) u[idx[i]] = sol[i - 1];
  }
  recenter_components(u, comp, box);

  bool inside = true;
  for (double v : u) inside = inside && std::abs(v) <= box + 1e-12;
  if (!inside) {
    // box binds: minimize the same weighted least squares inside the box
    internal::AscentProblem prob;
    prob.lo = -box;
    prob.hi = box;
    prob.value = [&](std::span<const double> v) {
      double q = 0.0;
      for (const auto& [key, e] : edges) {
        const double r = v[e.a] - v[e.b] - e.gap;
        q += e.weight * r * r;
      }
      return -0.5 * q;
    };
    prob.gradient = [&](std::span<const double> v, std::span<double> g) {
      std::fill(g.begin(), g.end(), 0.0);
      for (const auto& [key, e] : edges) {
        const double r = e.weight * (v[e.a] - v[e.b] - e.gap);
        g[e.a] -= r;
        g[e.b] += r;
      }
    };
    std::vector<double> init = u;
    for (double& v : init) v = std::clamp(v, -box, box);
    auto res = internal::maximize_box(prob, std::move(init), 1e-10, kMaxIter);
    u = std::move(res.x);
    diag.iterations = std::max(diag.iterations, res.iterations);
    diag.converged = diag.converged && res.converged;
    recenter_components(u, comp, box);
  }
}

}  // namespace

TabularPolicy MemberFit::policy(const TabularPolicy& pi_ref) const {
  return softmax_policy(RewardTable(coeffs), pi_ref, beta);
}

Table MemberFit::implicit_reward(const TabularPolicy& pi_ref) const {
  Table out(coeffs.rows(), coeffs.cols());
  for (int x = 0; x < coeffs.rows(); ++x) {
    double mx = -kInf;
    std::vector<double> w(coeffs.cols());
    for (int a = 0; a < coeffs.cols(); ++a) {
      const double ref = pi_ref(x, a);
      w[a] = ref > 0.0 ? std::log(ref) + coeffs(x, a) / beta : -kInf;
      mx = std::max(mx, w[a]);
    }
    double s = 0.0;
    for (double wa : w)
      if (wa != -kInf) s += std::exp(wa - mx);
    const double lse = mx + std::log(s);
    for (int a = 0; a < coeffs.cols(); ++a) out(x, a) = coeffs(x, a) - beta * lse;
  }
  return out;
}

PairGrid<double> lambda_schedule(const CountTables& shard_counts, double r_max) {
  if (!(r_max > 0.0)) throw std::invalid_argument("lambda_schedule: r_max must be positive");
  const int prompts = shard_counts.n_xab.prompts();
  const int actions = shard_counts.n_xab.actions();
  PairGrid<double> lambda(prompts, actions, 0.0);
  const double scale = 4.0 * std::exp(0.5 * r_max);
  for (int x = 0; x < prompts; ++x) {
    for (int a = 0; a < actions; ++a) {
      for (int b = 0; b < actions; ++b) {
        lambda(x, a, b) = scale / (static_cast<double>(shard_counts.n_xab(x, a, b)) + 2.0);
      }
    }
  }
  return lambda;
}

double pess_dpo_loss(const Table& u, const PreferenceDataset& shard,
                     const PairGrid<double>& lambda_table, double /*beta*/) {
  double loss = 0.0;
  for (const Triple& t : shard.triples) {
    loss += log_sigma_pess(u(t.prompt, t.winner) - u(t.prompt, t.loser),
                           lambda_table(t.prompt, t.winner, t.loser));
  }
  return loss;
}

Table pess_dpo_grad(const Table& u, const PreferenceDataset& shard,
                    const PairGrid<double>& lambda_table) {
  Table g(u.rows(), u.cols(), 0.0);
  for (const Triple& t : shard.triples) {
    if (t.winner == t.loser) continue;
    const double d = dlog_sigma_pess(u(t.prompt, t.winner) - u(t.prompt, t.loser),
                                     lambda_table(t.prompt, t.winner, t.loser));
    g(t.prompt, t.winner) += d;
    g(t.prompt, t.loser) -= d;
  }
  return g;
}

MemberFit fit_member_with_lambda(const PreferenceDataset& shard, const TabularEnv& env,
                                 double beta, const PairGrid<double>& lambda_table,
                                 double box, FitMode mode) {
  if (!(beta > 0.0)) throw std::invalid_argument("fit_member: beta must be positive");
  if (!(box > 0.0)) throw std::invalid_argument("fit_member: box must be positive");
  MemberFit fit;
  fit.coeffs = Table(env.num_prompts, env.num_actions, 0.0);
  fit.lambda_table = lambda_table;
  fit.shard_counts = build_counts(shard, env);
  fit.mode = mode;
  fit.beta = beta;
  fit.box = box;

  const auto problems = aggregate_shard(shard, env, lambda_table);
  for (const PromptProblem& p : problems) {
    std::vector<double> u;
    if (mode == FitMode::kClosedForm) {
      closed_form_prompt(p, box, u, fit.diag);
    } else {
      internal::AscentProblem prob;
      prob.lo = -box;
      prob.hi = box;
      prob.value = [&](std::span<const double> v) { return prompt_loss(p, v); };
      prob.gradient = [&](std::span<const double> v, std::span<double> g) {
        prompt_grad(p, v, g);
      };
      prob.hessian = [&](std::span<const double> v, std::span<double> h) {
        prompt_hess(p, v, h);
      };
      auto res = internal::maximize_box(prob, std::vector<double>(p.actions.size(), 0.0),
                                        kGradTol, kMaxIter);
      u = std::move(res.x);
      fit.diag.converged = fit.diag.converged && res.converged;
      fit.diag.final_grad_norm = std::max(fit.diag.final_grad_norm, res.grad_norm);
      fit.diag.iterations = std::max(fit.diag.iterations, res.iterations);
    }
    for (size_t i = 0; i < p.actions.size(); ++i) fit.coeffs(p.prompt, p.actions[i]) = u[i];
  }
  fit.diag.objective = pess_dpo_loss(fit.coeffs, shard, lambda_table, beta);
  return fit;
}

MemberFit fit_member(const PreferenceDataset& shard, const TabularEnv& env,
                     const HyperParams& hp, FitMode mode) {
  CountTables counts = build_counts(shard, env);
  PairGrid<double> lambda = lambda_schedule(counts, env.r_max);
  return fit_member_with_lambda(shard, env, hp.beta, lambda, env.r_max, mode);
}

std::vector<double> centered_offsets(const MemberFit& member, const TabularEnv& env,
                                     const PreferenceDataset& complement, double gamma,
                                     double beta) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("centered_offsets: gamma must be >= 0");
  const Table u = member.implicit_reward(env.pi_ref);
  std::vector<double> slot_sum(env.num_prompts, 0.0);
  std::vector<std::int64_t> occurrences(env.num_prompts, 0);
  for (const Triple& t : complement.triples) {
    slot_sum[t.prompt] += u(t.prompt, t.winner) / beta + u(t.prompt, t.loser) / beta;
    occurrences[t.prompt] += 1;
  }
  std::vector<double> zeta(env.num_prompts, 0.0);
  for (int x = 0; x < env.num_prompts; ++x) {
    const double m = static_cast<double>(occurrences[x]);
    if (m == 0.0) continue;
    zeta[x] = (1.0 + gamma / (2.0 * m)) / (2.0 * m + gamma) * slot_sum[x];
  }
  return zeta;
}

void save_member(const MemberFit& member, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_member: cannot open " + path);
  os.precision(17);
  os << "# pepo-member v1\n";
  if (!member.name.empty()) os << "# name " << member.name << "\n";
  os << "# mode " << (member.mode == FitMode::kAscent ? "ascent" : "closed-form") << "\n";
  os << "# beta " << member.beta << "\n";
  os << "# box " << member.box << "\n";
  if (member.lambda_table.prompts() > 0) {
    // the schedule is lambda = scale / (N(x,a,b) + 2); recover the scale
    const double scale = member.lambda_table(0, 0, 0) *
                         (static_cast<double>(member.shard_counts.n_xab.prompts() > 0
                                                  ? member.shard_counts.n_xab(0, 0, 0)
                                                  : 0) +
                          2.0);
    os << "# lambda_scale " << scale << "\n";
  }
  std::ostringstream shard_repr;
  for (const auto& v : member.shard_counts.n_win.data()) shard_repr << v << ' ';
  os << "# shard_hash " << std::hex << fnv1a64(shard_repr.str()) << std::dec << "\n";
  os << "# converged " << (member.diag.converged ? 1 : 0) << " grad_norm "
     << member.diag.final_grad_norm << " iterations " << member.diag.iterations << "\n";
  for (size_t i = 0; i < member.zeta.size(); ++i) {
    os << "# zeta " << i << ' ' << member.zeta[i] << "\n";
  }
  for (int x = 0; x < member.coeffs.rows(); ++x) {
    for (int a = 0; a < member.coeffs.cols(); ++a) {
      os << x << '\t' << a << '\t' << member.coeffs(x, a) << '\n';
    }
  }
  if (!os) throw std::runtime_error("save_member: write failed for " + path);
}

MemberFit load_member(const std::string& path, const TabularEnv& env) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_member: cannot open " + path);
  MemberFit fit;
  fit.coeffs = Table(env.num_prompts, env.num_actions, 0.0);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "name") {
        hs >> fit.name;
      } else if (key == "mode") {
        std::string mode;
        hs >> mode;
        fit.mode = mode == "closed-form" ? FitMode::kClosedForm : FitMode::kAscent;
      } else if (key == "beta") {
        hs >> fit.beta;
      } else if (key == "box") {
        hs >> fit.box;
      } else if (key == "zeta") {
        size_t x;
        double z;
        hs >> x >> z;
        if (fit.zeta.size() < static_cast<size_t>(env.num_prompts))
          fit.zeta.assign(env.num_prompts, 0.0);
        if (x < fit.zeta.size()) fit.zeta[x] = z;
      }
      continue;
    }
    std::istringstream ls(line);
    int x, a;
    double u;
    if (!(ls >> x >> a >> u)) throw std::runtime_error("load_member: malformed line: " + line);
    fit.coeffs(x, a) = u;
  }
  return fit;
}

}  // namespace pepo
