// Acceptance suite: one check per criterion, one PASS/FAIL line each.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pepo/baselines.hpp"
#include "pepo/bt.hpp"
#include "pepo/harness.hpp"
#include "pepo/rng.hpp"
#include "pepo/sampler.hpp"
#include "pepo/tabular_ops.hpp"

using namespace pepo;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail,
            double seconds) {
  std::printf("%s criterion %2d: %s (%s) [%.1fs]\n", ok ? "PASS" : "FAIL", id, name,
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void run(int id, const char* name, const std::function<bool(std::string&)>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = false;
  try {
    ok = check(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double dt =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, ok, detail, dt);
}

MemberFit member_with_coeffs(const Table& coeffs, double beta) {
  MemberFit m;
  m.coeffs = coeffs;
  m.beta = beta;
  return m;
}

struct SeedCell {
  std::map<std::pair<std::int64_t, std::uint64_t>, ResultRow> rows;
  std::int64_t n_max = 0;

  void load(const std::vector<ResultRow>& all, const std::string& algo) {
    for (const ResultRow& r : all) {
      if (r.algorithm != algo) continue;
      rows[{r.n, r.seed}] = r;
      n_max = std::max(n_max, r.n);
    }
  }
};

double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

bool c1_round_trips(std::string& detail) {
  double worst_rt = 0.0, worst_std = 0.0, worst_part = 0.0;
  for (double x = -10.0; x <= 10.0 + 1e-12; x += 0.1) {
    worst_std = std::max(worst_std, std::abs(sigma_pess(x, 0.0) - sigma(x)));
    for (double lambda = 0.0; lambda <= 10.0 + 1e-12; lambda += 0.5) {
      const double y = sigma_pess(x, lambda);
      worst_rt = std::max(worst_rt, std::abs(sigma_pess_inv(y, lambda) - x));
      const double part =
          sigma_pess(x, lambda) + sigma_pess(-x, lambda) + tie_probability(x, lambda);
      worst_part = std::max(worst_part, std::abs(part - 1.0));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "round-trip %.1e <= 1e-9, sigma gap %.1e <= 1e-12, partition %.1e <= 1e-12",
                worst_rt, worst_std, worst_part);
  detail = buf;
  return worst_rt <= 1e-9 && worst_std <= 1e-12 && worst_part <= 1e-12;
}

bool c2_bounds(std::string& detail) {
  int quad_violations = 0;
  for (int i = 0; i < 100; ++i) {
    const double x = -4.0 + 8.0 * i / 99.0;
    for (int k = 0; k < 100; ++k) {
      const double lambda = 3.0 * k / 99.0;
      if (sigma_pess_inv(sigma(x), lambda) > quad_bound(x, lambda) + 1e-10) {
        ++quad_violations;
      }
    }
  }
  int lip_violations = 0;
  const double h = 1e-6;
  for (double r_max : {0.5, 1.0, 2.0}) {
    for (double lambda : {0.0, 0.5, 1.0, 3.0}) {
      const double bound = lipschitz_bound(r_max, lambda);
      const double a = 1.0 / (std::exp(2.0 * r_max) + 1.0);
      for (int i = 0; i < 1000; ++i) {
        const double y = a + (1.0 - 2.0 * a) * (i + 0.5) / 1000.0;
        const double d =
            (sigma_pess_inv(y + h, lambda) - sigma_pess_inv(y - h, lambda)) / (2.0 * h);
        if (std::abs(d) > bound * (1.0 + 1e-9)) ++lip_violations;
      }
    }
  }
  detail = "quad violations " + std::to_string(quad_violations) + "/10000, lipschitz " +
           std::to_string(lip_violations) + "/12000";
  return quad_violations == 0 && lip_violations == 0;
}

bool c3_closed_form(std::string& detail) {
  Rng rng(33);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int actions = 2 + static_cast<int>(rng.next_u64() % 9);
    const int l = 1 + static_cast<int>(rng.next_u64() % 5);
    Table ref(1, actions);
    for (int a = 0; a < actions; ++a) ref(0, a) = 0.05 + rng.next_double();
    const TabularEnv env(1, actions, {1.0}, TabularPolicy::uniform(1, actions),
                         TabularPolicy(ref), FixedReward{Table(1, actions, 0.5)}, 1.0);
    const double beta = 0.2 + 1.5 * rng.next_double();
    std::vector<MemberFit> members;
    for (int k = 0; k < l; ++k) {
      Table coeffs(1, actions);
      for (auto& v : coeffs.data()) v = 2.0 * rng.next_double() - 1.0;
      members.push_back(member_with_coeffs(coeffs, beta));
    }
    Table p(1, actions);
    for (auto& v : p.data()) v = rng.next_double();
    const double b = 4.0 * rng.next_double();
    const PessimisticAggregate agg = output_policy(members, env, beta, p, b, false);
    const TabularPolicy via = softmax_policy(agg.r_minus, env.pi_ref, beta);
    for (int a = 0; a < actions; ++a) {
      worst = std::max(worst, std::abs(via(0, a) - agg.pi_out(0, a)));
    }
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max deviation %.2e <= 1e-10", worst);
  detail = buf;
  return worst <= 1e-10;
}

bool c4_sampler(std::string& detail) {
  const TabularEnv env(1, 3, {1.0}, TabularPolicy::uniform(1, 3),
                       TabularPolicy::uniform(1, 3), FixedReward{Table(1, 3, 0.5)}, 1.0);
  auto policy_member = [&](std::vector<double> pi) {
    Table coeffs(1, 3);
    for (int a = 0; a < 3; ++a) coeffs(0, a) = std::log(pi[a] / env.pi_ref(0, a));
    return member_with_coeffs(coeffs, 1.0);
  };
  std::vector<MemberFit> members{policy_member({0.55, 0.25, 0.20}),
                                 policy_member({0.30, 0.45, 0.25})};
  const PessimisticAggregate agg =
      output_policy(members, env, 1.0, Table(1, 3, 0.0), 6.0, false);

  // TV of accepted samples against exact pi_out
  std::vector<double> freq(3, 0.0);
  int accepted = 0;
  double mean_trials = 0.0;
  const int runs_tv = 100000;
  for (int i = 0; i < runs_tv; ++i) {
    const SampleOutcome s = rejection_sample(agg, env, 0, 0, 1e-9, 41000 + i);
    if (s.accepted) {
      freq[s.action] += 1.0;
      mean_trials += s.trials;
      ++accepted;
    }
  }
  double tv = 0.0;
  for (int a = 0; a < 3; ++a) tv += std::abs(freq[a] / accepted - agg.pi_out(0, a));
  tv *= 0.5;
  mean_trials /= accepted;
  double z = 0.0;
  for (int a = 0; a < 3; ++a) z += agg.f_out(0, a);
  const double trials_err = std::abs(mean_trials - 1.0 / z) / (1.0 / z);

  const double delta = 0.05;
  int abstained = 0;
  const int runs_ab = 10000;
  for (int i = 0; i < runs_ab; ++i) {
    if (rejection_sample(agg, env, 0, 0, delta, 91000 + i).abstained()) ++abstained;
  }
  const double ab_rate = static_cast<double>(abstained) / runs_ab;
  const double ab_limit = delta + 3.0 * std::sqrt(delta / runs_ab);

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "TV %.4f <= 0.01, abstention %.4f <= %.4f, trials err %.3f <= 0.05", tv,
                ab_rate, ab_limit, trials_err);
  detail = buf;
  return tv <= 0.01 && ab_rate <= ab_limit && trials_err <= 0.05;
}

bool c5_pessimism(std::string& detail) {
  const TabularEnv env = figure_configs("known")[0].env;
  const HyperParams hp = HyperParams::theoretical(env, 0.05, 0.1);
  PipelineConfig pipe;
  pipe.fit_mode = FitMode::kClosedForm;
  pipe.theoretical = true;
  const PessimismCheck check = pessimism_violation_rate(env, hp, pipe, 2000, 200, 555);
  // the ascent fit is the other resolution of the fixed-tie stationarity
  // reading; cross-reported, not gated
  pipe.fit_mode = FitMode::kAscent;
  const PessimismCheck ascent = pessimism_violation_rate(env, hp, pipe, 2000, 200, 555);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "L=%d, closed-form any-violation %.3f <= 0.1 (ascent mode: %.3f)",
                hp.ensemble_size, check.any_rate, ascent.any_rate);
  detail = buf;
  return check.any_rate <= 0.1;
}

bool c6_rate(std::string& detail) {
  const ExperimentConfig cfg = figure_configs("rate")[0];
  const std::vector<ResultRow> rows = run_experiment(cfg, 8);
  if (any_cell_failed(rows)) {
    detail = "cells failed";
    return false;
  }
  std::map<std::int64_t, std::vector<double>> by_n;
  for (const ResultRow& r : rows) by_n[r.n].push_back(r.suboptimality);
  std::vector<double> xs, ys;
  for (auto& [n, vals] : by_n) {
    std::sort(vals.begin(), vals.end());
    const double median = 0.5 * (vals[vals.size() / 2] + vals[(vals.size() - 1) / 2]);
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(std::max(median, 1e-300)));
  }
  const double slope = regression_slope(xs, ys);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "log-log slope %.3f in [-0.7, -0.3]", slope);
  detail = buf;
  return slope >= -0.7 && slope <= -0.3;
}

bool c7_known(std::string& detail) {
  const ExperimentConfig cfg = figure_configs("known")[0];
  const std::vector<ResultRow> rows = run_experiment(cfg, 8);
  if (any_cell_failed(rows)) {
    detail = "cells failed";
    return false;
  }
  SeedCell pepo, dpo, chi2;
  pepo.load(rows, "pepo");
  dpo.load(rows, "dpo");
  chi2.load(rows, "chi2po");
  int pepo_wins = 0, chi_wins = 0;
  for (std::uint64_t s : cfg.sweep.seeds) {
    if (pepo.rows[{pepo.n_max, s}].suboptimality < dpo.rows[{pepo.n_max, s}].suboptimality)
      ++pepo_wins;
    if (chi2.rows[{pepo.n_max, s}].suboptimality < dpo.rows[{pepo.n_max, s}].suboptimality)
      ++chi_wins;
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "at N=%lld: pepo<dpo %d/5, chi2po<dpo %d/5 (need >=4)",
                static_cast<long long>(pepo.n_max), pepo_wins, chi_wins);
  detail = buf;
  return pepo_wins >= 4 && chi_wins >= 4;
}

bool c8_unknown(std::string& detail) {
  const ExperimentConfig cfg = figure_configs("unknown")[0];
  const std::vector<ResultRow> rows = run_experiment(cfg, 8);
  if (any_cell_failed(rows)) {
    detail = "cells failed";
    return false;
  }
  SeedCell pepo, chi2;
  pepo.load(rows, "pepo");
  chi2.load(rows, "chi2po");
  const int optimal_arm = 1;
  int pepo_opt = 0, chi_subopt = 0;
  for (std::uint64_t s : cfg.sweep.seeds) {
    if (pepo.rows[{pepo.n_max, s}].selected_action == optimal_arm) ++pepo_opt;
    if (chi2.rows[{chi2.n_max, s}].selected_action != optimal_arm) ++chi_subopt;
  }
  char buf[130];
  std::snprintf(buf, sizeof(buf),
                "at N=%lld: pepo mode optimal %d/5, chi2po mode suboptimal %d/5 (need >=4)",
                static_cast<long long>(pepo.n_max), pepo_opt, chi_subopt);
  detail = buf;
  return pepo_opt >= 4 && chi_subopt >= 4;
}

bool c9_ablation(std::string& detail) {
  const ExperimentConfig cfg = figure_configs("ablation_l")[0];
  const std::vector<ResultRow> rows = run_experiment(cfg, 8);
  if (any_cell_failed(rows)) {
    detail = "cells failed";
    return false;
  }
  const int optimal_arm = cfg.env.num_actions - 1;
  std::map<std::pair<int, std::int64_t>, int> ok_count;
  for (const ResultRow& r : rows) {
    if (r.selected_action == optimal_arm) ok_count[{r.l, r.n}] += 1;
  }
  const std::int64_t n_max = cfg.sweep.n_values.back();
  bool all_identify = true;
  // smallest N from which identification (all 5 seeds) persists to the end
  std::map<int, std::int64_t> first_n;
  for (int l : cfg.sweep.l_values) {
    if (ok_count[{l, n_max}] < 5) all_identify = false;
    std::int64_t first = -1;
    for (auto it = cfg.sweep.n_values.rbegin(); it != cfg.sweep.n_values.rend(); ++it) {
      if (ok_count[{l, *it}] == 5) {
        first = *it;
      } else {
        break;
      }
    }
    first_n[l] = first;
  }
  bool l3_fastest = first_n[3] > 0;
  for (int l : cfg.sweep.l_values) {
    if (l > 3 && (first_n[l] < 0 || first_n[3] > first_n[l])) l3_fastest = false;
  }
  std::string s = "identification N per L:";
  for (int l : cfg.sweep.l_values) {
    s += " L" + std::to_string(l) + "=" + std::to_string(first_n[l]);
  }
  detail = s;
  return all_identify && l3_fastest;
}

bool c10_beta0(std::string& detail) {
  const auto configs = figure_configs("beta0");
  int perl_ok = 0;
  int rl_fail_small = 0;
  std::string s;
  for (const auto& cfg : configs) {
    const std::vector<ResultRow> rows = run_experiment(cfg, 8);
    if (any_cell_failed(rows)) {
      detail = "cells failed";
      return false;
    }
    SeedCell perl, rl;
    perl.load(rows, "perl");
    rl.load(rows, "rl");
    int perl_opt = 0;
    for (std::uint64_t seed : cfg.sweep.seeds) {
      if (perl.rows[{perl.n_max, seed}].selected_action == 1) ++perl_opt;
    }
    if (perl_opt >= 4) ++perl_ok;
    s += cfg.experiment_id + ": perl " + std::to_string(perl_opt) + "/5 at N=" +
         std::to_string(perl.n_max);
    const bool unknown = cfg.experiment_id.find("unknown") != std::string::npos;
    if (unknown) {
      int worst_fail = 0;
      for (std::int64_t n : cfg.sweep.n_values) {
        if (n > 100) continue;
        int fails = 0;
        for (std::uint64_t seed : cfg.sweep.seeds) {
          if (rl.rows[{n, seed}].selected_action != 1) ++fails;
        }
        worst_fail = std::max(worst_fail, fails);
      }
      rl_fail_small = worst_fail;
      s += ", rl fails " + std::to_string(worst_fail) + "/5 at small N";
    }
    s += "; ";
  }
  detail = s;
  return perl_ok == 2 && rl_fail_small >= 3;
}

bool c11_token_level(std::string& detail) {
  Rng rng(404);
  int violations = 0, trajectories = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int horizon = 2 + static_cast<int>(rng.next_u64() % 3);
    const int alphabet = 2 + static_cast<int>(rng.next_u64() % 2);
    const int l = 2 + static_cast<int>(rng.next_u64() % 3);
    auto random_stages = [&]() {
      std::vector<Table> stages;
      int histories = 1;
      for (int h = 0; h < horizon; ++h) {
        Table t(histories, alphabet);
        for (int r = 0; r < histories; ++r) {
          double z = 0.0;
          for (int c = 0; c < alphabet; ++c) {
            t(r, c) = 0.05 + rng.next_double();
            z += t(r, c);
          }
          for (int c = 0; c < alphabet; ++c) t(r, c) /= z;
        }
        stages.push_back(std::move(t));
        histories *= alphabet;
      }
      return stages;
    };
    FactoredPolicySet fps;
    fps.horizon = horizon;
    fps.alphabet = alphabet;
    fps.ref_stages = random_stages();
    for (int k = 0; k < l; ++k) fps.member_stages.push_back(random_stages());
    token_level_output(fps);  // must be well-formed

    const double beta = 0.3 + rng.next_double();
    int total = 1;
    for (int h = 0; h < horizon; ++h) total *= alphabet;
    for (int code = 0; code < total; ++code) {
      int c = code;
      std::vector<int> tokens(horizon);
      for (int h = 0; h < horizon; ++h) {
        tokens[h] = c % alphabet;
        c /= alphabet;
      }
      double token_sum = 0.0;
      std::vector<double> member_lr(l, 0.0);
      int history = 0;
      for (int h = 0; h < horizon; ++h) {
        double mn = std::numeric_limits<double>::infinity();
        for (int k = 0; k < l; ++k) {
          const double lr = std::log(fps.member_stages[k][h](history, tokens[h]) /
                                     fps.ref_stages[h](history, tokens[h]));
          member_lr[k] += lr;
          mn = std::min(mn, lr);
        }
        token_sum += beta * mn;
        history = history * alphabet + tokens[h];
      }
      double traj = std::numeric_limits<double>::infinity();
      for (int k = 0; k < l; ++k) traj = std::min(traj, beta * member_lr[k]);
      if (token_sum > traj + 1e-12) ++violations;
      ++trajectories;
    }
  }
  detail = std::to_string(violations) + " violations over " +
           std::to_string(trajectories) + " trajectories";
  return violations == 0;
}

bool c12_gradients(std::string& detail) {
  Rng rng(777);
  const TabularEnv env(1, 4, {1.0}, TabularPolicy::uniform(1, 4),
                       TabularPolicy::uniform(1, 4), FixedReward{Table(1, 4, 0.5)}, 2.0);
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    PreferenceDataset data;
    for (int i = 0; i < 60; ++i) {
      const int a = static_cast<int>(rng.next_u64() % 4);
      const int b = static_cast<int>(rng.next_u64() % 4);
      data.triples.push_back(rng.next_bernoulli(0.6) ? Triple{0, a, b} : Triple{0, b, a});
    }
    const CountTables counts = build_counts(data, env);
    const PairGrid<double> lambda = lambda_schedule(counts, env.r_max);
    const PairGrid<double> lambda0(1, 4, 0.0);
    Table u(1, 4);
    for (auto& v : u.data()) v = 1.6 * rng.next_double() - 0.8;

    auto rel_err = [&](double analytic, double fd) {
      return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
    };
    // pessimistic DPO and plain DPO (lambda = 0) objectives
    for (const auto& lam : {lambda, lambda0}) {
      const Table g = pess_dpo_grad(u, data, lam);
      for (int a = 0; a < 4; ++a) {
        Table up = u, dn = u;
        up(0, a) += h;
        dn(0, a) -= h;
        const double fd =
            (pess_dpo_loss(up, data, lam, 1.0) - pess_dpo_loss(dn, data, lam, 1.0)) /
            (2.0 * h);
        worst = std::max(worst, rel_err(g(0, a), fd));
      }
    }
    // reward MLE
    const Table gr = reward_mle_grad(u, data, env);
    for (int a = 0; a < 4; ++a) {
      Table up = u, dn = u;
      up(0, a) += h;
      dn(0, a) -= h;
      const double fd = (reward_mle_loss(up, data) - reward_mle_loss(dn, data)) / (2.0 * h);
      worst = std::max(worst, rel_err(gr(0, a), fd));
    }
    // SFT + DPO
    const Table gs = sft_dpo_grad(u, data, env, 0.7, 0.3);
    for (int a = 0; a < 4; ++a) {
      Table up = u, dn = u;
      up(0, a) += h;
      dn(0, a) -= h;
      const double fd = (sft_dpo_objective(up, data, env, 0.7, 0.3) -
                         sft_dpo_objective(dn, data, env, 0.7, 0.3)) /
                        (2.0 * h);
      worst = std::max(worst, rel_err(gs(0, a), fd));
    }
  }
  char buf[80];
  std::snprintf(buf, sizeof(buf), "worst relative error %.2e <= 1e-5", worst);
  detail = buf;
  return worst <= 1e-5;
}

}  // namespace

int main() {
  run(1, "sigma_pess analytic round-trips", c1_round_trips);
  run(2, "quadratic and Lipschitz bounds", c2_bounds);
  run(3, "closed-form equivalence of pi_out", c3_closed_form);
  run(4, "rejection sampler exactness", c4_sampler);
  run(5, "pessimism Monte Carlo (theoretical pipeline)", c5_pessimism);
  run(6, "suboptimality rate check", c6_rate);
  run(7, "known-pi_data experiment", c7_known);
  run(8, "unknown-pi_data experiment", c8_unknown);
  run(9, "ensemble-size ablation", c9_ablation);
  run(10, "beta = 0 variants", c10_beta0);
  run(11, "token-level reward inequality", c11_token_level);
  run(12, "gradient checks", c12_gradients);
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
  } else {
    std::printf("all criteria passed\n");
  }
  return g_failures;
}
