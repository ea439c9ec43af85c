#include "pepo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <thread>

#include "pepo/baselines.hpp"
#include "pepo/bt.hpp"
#include "pepo/rng.hpp"
#include "pepo/sampler.hpp"
#include "pepo/svg_plot.hpp"
#include "pepo/tabular_ops.hpp"

namespace pepo {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<int> optimal_arms(const TabularEnv& env) {
  const RewardTable r = env.mean_reward();
  std::vector<int> arms(env.num_prompts, 0);
  for (int x = 0; x < env.num_prompts; ++x) {
    for (int a = 1; a < env.num_actions; ++a) {
      if (r(x, a) > r(x, arms[x])) arms[x] = a;
    }
  }
  return arms;
}

TabularPolicy comparator_policy(const TabularEnv& env, double beta) {
  if (beta > 0.0) return softmax_policy(env.mean_reward(), env.pi_ref, beta);
  return TabularPolicy::point_mass(env.num_prompts, env.num_actions, optimal_arms(env));
}

struct PolicyEval {
  double suboptimality;
  double prob_optimal;
  int selected_action;
  double c_star;
};

PolicyEval eval_policy(const TabularEnv& env, const TabularPolicy& pi, double beta) {
  PolicyEval ev{};
  const TabularPolicy pi_star = comparator_policy(env, beta);
  ev.suboptimality = j_beta(pi_star, env, beta) - j_beta(pi, env, beta);
  const std::vector<int> arms = optimal_arms(env);
  ev.prob_optimal = 0.0;
  for (int x = 0; x < env.num_prompts; ++x) ev.prob_optimal += env.nu0[x] * pi(x, arms[x]);
  ev.selected_action = 0;
  for (int a = 1; a < env.num_actions; ++a) {
    if (pi(0, a) > pi(0, ev.selected_action)) ev.selected_action = a;
  }
  ev.c_star = concentrability(pi_star, env).first;
  return ev;
}

struct Cell {
  int algo_index;
  std::uint64_t seed;
  std::int64_t n;
  int l;
};

ResultRow run_cell(const ExperimentConfig& cfg, const Cell& cell) {
  const auto t0 = std::chrono::steady_clock::now();
  const AlgoSpec& algo = cfg.algos[cell.algo_index];
  const TabularEnv& env = cfg.env;
  ResultRow row;
  row.experiment = cfg.experiment_id;
  row.algorithm = algo.name;
  row.seed = cell.seed;
  row.n = cell.n;
  row.l = cell.l;
  row.err_norm = kNan;
  row.abstention_rate = kNan;
  try {
    const std::uint64_t data_seed =
        child_seed(cfg.master_seed, "data", cell.seed, static_cast<std::uint64_t>(cell.n));
    const std::uint64_t part_seed =
        child_seed(cfg.master_seed, "part", cell.seed, static_cast<std::uint64_t>(cell.n),
                   static_cast<std::uint64_t>(cell.l));
    const PreferenceDataset data =
        generate_dataset(env, cell.n, data_seed, cfg.pipeline.label_rule);

    const double beta = algo.hp.beta;
    if (algo.name == "pepo" || algo.name == "pepo_mean_std") {
      HyperParams hp = algo.hp;
      hp.ensemble_size = cell.l;
      PipelineConfig pipe = cfg.pipeline;
      if (algo.name == "pepo_mean_std") pipe.aggregator = Aggregator::kMeanStd;
      const PessimisticAggregate agg =
          run_pepo_pipeline(env, hp, pipe, data, cell.l, part_seed);
      const PolicyEval ev = eval_policy(env, agg.pi_out, beta);
      row.suboptimality = ev.suboptimality;
      row.prob_optimal_action = ev.prob_optimal;
      row.selected_action = ev.selected_action;
      row.c_star = ev.c_star;
      row.err_norm = err_norm(agg, env);
      // abstention rate of the rejection sampler at the pipeline delta
      const int k = cfg.pipeline.abstention_samples;
      if (k > 0) {
        double f_mass = 0.0;
        for (double v : agg.f_out.data()) f_mass += v;
        if (f_mass == 0.0) {
          // acceptance mass underflowed: the sampler can never accept
          row.abstention_rate = 1.0;
        } else {
          Rng prompt_rng(child_seed(cfg.master_seed, "abst-prompts", cell.seed, cell.n));
          int abstained = 0;
          for (int i = 0; i < k; ++i) {
            const int x = prompt_rng.next_categorical(env.nu0);
            const SampleOutcome s = rejection_sample(
                agg, env, x, 0, cfg.pipeline.sample_delta,
                child_seed(cfg.master_seed, "abst", cell.seed, cell.n, i));
            if (s.abstained()) ++abstained;
          }
          row.abstention_rate = static_cast<double>(abstained) / k;
        }
      }
    } else if (algo.name == "dpo") {
      const BaselineResult r = fit_dpo(data, env, beta, algo.cap);
      const PolicyEval ev = eval_policy(env, r.policy, beta);
      row.suboptimality = ev.suboptimality;
      row.prob_optimal_action = ev.prob_optimal;
      row.selected_action = ev.selected_action;
      row.c_star = ev.c_star;
    } else if (algo.name == "sft_dpo") {
      const BaselineResult r = fit_sft_dpo(data, env, beta, algo.hp.lambda_sft, algo.cap);
      const PolicyEval ev = eval_policy(env, r.policy, beta);
      row.suboptimality = ev.suboptimality;
      row.prob_optimal_action = ev.prob_optimal;
      row.selected_action = ev.selected_action;
      row.c_star = ev.c_star;
    } else if (algo.name == "rlhf" || algo.name == "chi2po") {
      const RewardTable r_hat = fit_reward_mle(data, env, env.r_max);
      const TabularPolicy pi = algo.name == "rlhf"
                                   ? rlhf_policy(r_hat, env, beta)
                                   : chi2_policy(r_hat, env, algo.hp.chi2_gamma);
      const PolicyEval ev = eval_policy(env, pi, beta);
      row.suboptimality = ev.suboptimality;
      row.prob_optimal_action = ev.prob_optimal;
      row.selected_action = ev.selected_action;
      row.c_star = ev.c_star;
    } else if (algo.name == "rl" || algo.name == "perl" || algo.name == "chi2rl") {
      // beta = 0 variants evaluate the unregularized objective <pi, r*>
      TabularPolicy pi = TabularPolicy::uniform(env.num_prompts, env.num_actions);
      if (algo.name == "rl") {
        const RewardTable r_hat = fit_reward_mle(data, env, env.r_max);
        const std::vector<RewardTable> tables{r_hat};
        const std::vector<int> arms = beta0_select(Beta0Mode::kRl, tables);
        pi = TabularPolicy::point_mass(env.num_prompts, env.num_actions, arms);
      } else if (algo.name == "chi2rl") {
        const RewardTable r_hat = fit_reward_mle(data, env, env.r_max);
        pi = chi2_policy(r_hat, env, algo.hp.chi2_gamma);
      } else {
        const auto shards = partition(data, cell.l, part_seed);
        std::vector<RewardTable> tables;
        tables.reserve(shards.size());
        for (const auto& shard : shards) {
          tables.push_back(fit_reward_mle(shard, env, env.r_max));
        }
        const std::vector<int> arms = beta0_select(Beta0Mode::kPerl, tables);
        pi = TabularPolicy::point_mass(env.num_prompts, env.num_actions, arms);
      }
      const PolicyEval ev = eval_policy(env, pi, 0.0);
      row.suboptimality = ev.suboptimality;
      row.prob_optimal_action = ev.prob_optimal;
      row.selected_action = ev.selected_action;
      row.c_star = ev.c_star;
    } else {
      throw std::invalid_argument("unknown algorithm " + algo.name);
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.suboptimality = kNan;
    row.prob_optimal_action = kNan;
    row.selected_action = -1;
    row.c_star = kNan;
  }
  row.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

TabularEnv make_three_arm_env(const std::vector<double>& pi_ref_row) {
  Table data_row(1, 3);
  data_row(0, 0) = 0.04;
  data_row(0, 1) = 0.93;
  data_row(0, 2) = 0.03;
  Table ref_row(1, 3);
  for (int a = 0; a < 3; ++a) ref_row(0, a) = pi_ref_row[a];
  Table means(1, 3);
  means(0, 0) = 1.0;
  means(0, 1) = 1.5;
  means(0, 2) = 1.0;
  Table vars(1, 3);
  vars(0, 0) = 1.5;
  vars(0, 1) = 0.5;
  vars(0, 2) = 1.5;
  return TabularEnv(1, 3, {1.0}, TabularPolicy(data_row), TabularPolicy(ref_row),
                    GaussianReward{means, vars}, 3.0);
}

TabularEnv make_twenty_arm_env() {
  const int actions = 20;
  Table means(1, actions, 1.0);
  Table vars(1, actions, 1.0);
  means(0, actions - 1) = 2.9;  // optimal arm last, so index ties never help it
  vars(0, actions - 1) = 0.5;
  // The optimal arm is under-sampled (2% of responses); with uniform sampling
  // every ensemble size identifies it almost immediately at desk scale and
  // the L trade-off disappears.
  Table row(1, actions, 0.98 / (actions - 1));
  row(0, actions - 1) = 0.02;
  const TabularPolicy sampling(row);
  return TabularEnv(1, actions, {1.0}, sampling, sampling,
                    GaussianReward{means, vars}, 3.0);
}

AlgoSpec algo(const std::string& name, double beta, double chi2_gamma = 40.0,
              int l = 3) {
  AlgoSpec a;
  a.name = name;
  a.hp.beta = beta;
  a.hp.chi2_gamma = chi2_gamma;
  a.hp.ensemble_size = l;
  return a;
}

}  // namespace

double err_norm(const PessimisticAggregate& agg, const TabularEnv& env) {
  const RewardTable rstar = env.mean_reward();
  double total = 0.0;
  for (int x = 0; x < env.num_prompts; ++x) {
    double row = 0.0;
    for (int a = 0; a < env.num_actions; ++a) {
      double err = 0.0;
      for (int b = 0; b < env.num_actions; ++b) {
        const double truth = rstar(x, a) - rstar(x, b);
        err += env.pi_data(x, b) * (agg.estimated_gap(x, a, b) - truth);
      }
      row += env.pi_data(x, a) * err * err;
    }
    total += env.nu0[x] * row;
  }
  return total;
}

PessimisticAggregate run_pepo_pipeline(const TabularEnv& env, const HyperParams& hp_in,
                                       const PipelineConfig& pipe,
                                       const PreferenceDataset& data, int l,
                                       std::uint64_t seed) {
  HyperParams hp = hp_in;
  hp.ensemble_size = pipe.theoretical
                         ? ensemble_size(env.num_prompts, env.num_actions, hp.delta)
                         : std::max(1, l);
  const auto shards = partition(data, hp.ensemble_size, seed);
  std::vector<MemberFit> members;
  members.reserve(shards.size());
  for (const auto& shard : shards) {
    members.push_back(fit_member(shard, env, hp, pipe.fit_mode));
  }
  if (pipe.centering) {
    for (size_t i = 0; i < members.size(); ++i) {
      members[i].zeta = centered_offsets(members[i], env,
                                         shard_complement(data, shards[i]),
                                         hp.gamma_count, hp.beta);
    }
  }
  const Table p_bar =
      pipe.theoretical
          ? tie_upper_bound(build_counts(data, env), hp, env, TieBoundMode::kTheoretical)
          : tie_upper_bound(build_counts(data, env), hp, env, TieBoundMode::kConstant,
                            pipe.alpha);
  return output_policy(std::move(members), env, hp.beta, p_bar,
                       hp.b_effective(pipe.theoretical, env.r_max), pipe.centering,
                       pipe.aggregator, hp.eta);
}

PessimismCheck pessimism_violation_rate(const TabularEnv& env, const HyperParams& hp,
                                        const PipelineConfig& pipe, std::int64_t n,
                                        int replications, std::uint64_t seed) {
  if (replications < 1)
    throw std::invalid_argument("pessimism_violation_rate: replications >= 1");
  const RewardTable rstar = env.mean_reward();
  std::int64_t violating_pairs = 0;
  int violating_reps = 0;
  for (int rep = 0; rep < replications; ++rep) {
    const PreferenceDataset data =
        generate_dataset(env, n, child_seed(seed, "pvr-data", rep), pipe.label_rule);
    const PessimisticAggregate agg = run_pepo_pipeline(
        env, hp, pipe, data, hp.ensemble_size, child_seed(seed, "pvr-part", rep));
    bool any = false;
    for (int x = 0; x < env.num_prompts; ++x) {
      for (int a = 0; a < env.num_actions; ++a) {
        double est = 0.0, truth = 0.0;
        for (int b = 0; b < env.num_actions; ++b) {
          est += env.pi_data(x, b) * agg.estimated_gap(x, a, b);
          truth += env.pi_data(x, b) * (rstar(x, a) - rstar(x, b));
        }
        if (est > truth + 1e-12) {
          ++violating_pairs;
          any = true;
        }
      }
    }
    if (any) ++violating_reps;
  }
  PessimismCheck out;
  out.pair_rate = static_cast<double>(violating_pairs) /
                  (static_cast<double>(replications) * env.num_prompts * env.num_actions);
  out.any_rate = static_cast<double>(violating_reps) / replications;
  return out;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  std::vector<Cell> cells;
  for (int ai = 0; ai < static_cast<int>(cfg.algos.size()); ++ai) {
    for (const auto seed : cfg.sweep.seeds) {
      for (const auto n : cfg.sweep.n_values) {
        for (const auto l : cfg.sweep.l_values) {
          cells.push_back(Cell{ai, seed, n, l});
        }
      }
    }
  }
  std::vector<ResultRow> rows(cells.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < cells.size(); ++i) rows[i] = run_cell(cfg, cells[i]);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        rows[i] = run_cell(cfg, cells[i]);
      }
    };
    std::vector<std::thread> pool;
    const int k = std::min<int>(jobs, static_cast<int>(cells.size()));
    pool.reserve(k);
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return rows;
}

std::string csv_header() {
  return "experiment,algorithm,seed,n,l,suboptimality,prob_optimal_action,"
         "selected_action,c_star,err_norm,abstention_rate,wall_time";
}

void write_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  os << csv_header() << '\n';
  for (const ResultRow& r : rows) {
    os << r.experiment << ',' << r.algorithm << ',' << r.seed << ',' << r.n << ',' << r.l
       << ',' << fmt(r.suboptimality) << ',' << fmt(r.prob_optimal_action) << ','
       << r.selected_action << ',' << fmt(r.c_star) << ',' << fmt(r.err_norm) << ','
       << fmt(r.abstention_rate) << ',' << fmt(r.wall_time) << '\n';
  }
  if (!os) throw std::runtime_error("write_csv: write failed for " + path);
}

void write_plot(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows,
                const std::string& path) {
  const bool subopt = cfg.output.plot_metric == "suboptimality";
  // one series per (algorithm, L) when L is swept, else per algorithm
  const bool sweep_l = cfg.sweep.l_values.size() > 1;
  std::map<std::string, std::map<std::int64_t, std::vector<double>>> by_series;
  for (const ResultRow& r : rows) {
    if (r.failed) continue;
    std::string label = r.algorithm;
    if (sweep_l) label += " L=" + std::to_string(r.l);
    const double v = subopt ? r.suboptimality : r.prob_optimal_action;
    if (std::isfinite(v)) by_series[label][r.n].push_back(v);
  }
  std::vector<PlotSeries> series;
  for (const auto& [label, by_n] : by_series) {
    PlotSeries s;
    s.label = label;
    for (const auto& [n, vals] : by_n) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double se =
          vals.size() > 1 ? std::sqrt(var / (vals.size() - 1) / vals.size()) : 0.0;
      s.x.push_back(static_cast<double>(n));
      s.y.push_back(mean);
      s.yerr.push_back(se);
    }
    series.push_back(std::move(s));
  }
  write_line_plot_svg(path, cfg.experiment_id, "dataset size N",
                      subopt ? "suboptimality" : "probability of optimal action", series,
                      /*log_x=*/true, /*log_y=*/subopt);
}

std::vector<ExperimentConfig> figure_configs(const std::string& figure_id) {
  std::vector<ExperimentConfig> out;
  const std::vector<std::uint64_t> five_seeds{1, 2, 3, 4, 5};
  if (figure_id == "known") {
    // chi-squared gamma: 40 reproduces the beta = 0 ablation but is far too
    // conservative for the KL-regularized comparison; 0.02 lets the
    // water-filling surrogate track the reward estimate the way the original
    // algorithm would at this scale.
    ExperimentConfig cfg;
    cfg.experiment_id = "exp-known";
    cfg.env = make_three_arm_env({0.04, 0.93, 0.03});
    cfg.algos = {algo("pepo", 0.05), algo("dpo", 0.05), algo("chi2po", 0.05, 0.02)};
    cfg.sweep.n_values = {50, 100, 200, 400, 800, 1600};
    cfg.sweep.l_values = {3};
    cfg.sweep.seeds = five_seeds;
    cfg.master_seed = 7;
    cfg.output.plot_metric = "suboptimality";
    out.push_back(std::move(cfg));
  } else if (figure_id == "unknown") {
    ExperimentConfig cfg;
    cfg.experiment_id = "exp-unknown";
    cfg.env = make_three_arm_env({0.00025, 0.00025, 0.9995});
    cfg.algos = {algo("pepo", 0.001), algo("dpo", 0.001), algo("chi2po", 0.001, 0.02)};
    cfg.sweep.n_values = {50, 100, 200, 400, 800, 1600};
    cfg.sweep.l_values = {3};
    cfg.sweep.seeds = five_seeds;
    cfg.master_seed = 11;
    cfg.output.plot_metric = "suboptimality";
    out.push_back(std::move(cfg));
  } else if (figure_id == "ablation_l") {
    ExperimentConfig cfg;
    cfg.experiment_id = "exp-ablation-L";
    cfg.env = make_twenty_arm_env();
    cfg.algos = {algo("pepo", 0.1)};
    cfg.sweep.n_values = {200, 400, 800, 1600, 3200, 6400, 12800};
    cfg.sweep.l_values = {1, 2, 3, 5, 8};
    cfg.sweep.seeds = five_seeds;
    cfg.master_seed = 13;
    cfg.output.plot_metric = "prob_optimal_action";
    out.push_back(std::move(cfg));
  } else if (figure_id == "beta0") {
    for (const bool known : {true, false}) {
      ExperimentConfig cfg;
      cfg.experiment_id = known ? "exp-beta0-known" : "exp-beta0-unknown";
      cfg.env = known ? make_three_arm_env({0.04, 0.93, 0.03})
                      : make_three_arm_env({0.00025, 0.00025, 0.9995});
      cfg.algos = {algo("rl", 0.0), algo("chi2rl", 0.0), algo("perl", 0.0)};
      cfg.sweep.n_values = {25, 50, 100, 200, 400, 800, 1600, 3200, 6400};
      cfg.sweep.l_values = {3};
      cfg.sweep.seeds = five_seeds;
      cfg.master_seed = known ? 17 : 19;
      cfg.output.plot_metric = "prob_optimal_action";
      out.push_back(std::move(cfg));
    }
  } else if (figure_id == "rate") {
    ExperimentConfig cfg;
    cfg.experiment_id = "exp-rate";
    cfg.env = make_three_arm_env({0.04, 0.93, 0.03});
    cfg.algos = {algo("pepo", 0.3)};
    cfg.sweep.n_values = {400, 800, 1600, 3200, 6400, 12800, 25600};
    cfg.sweep.l_values = {3};
    cfg.sweep.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    cfg.master_seed = 23;
    cfg.output.plot_metric = "suboptimality";
    out.push_back(std::move(cfg));
  } else {
    throw std::invalid_argument("unknown figure id '" + figure_id +
                                "' (known|unknown|ablation_l|beta0|rate)");
  }
  for (auto& cfg : out) {
    cfg.output.csv = cfg.experiment_id + ".csv";
    cfg.output.plot = cfg.experiment_id + ".svg";
  }
  return out;
}

std::vector<std::string> reproduce(const std::string& figure_id,
                                   const std::string& out_dir, int jobs,
                                   std::optional<std::uint64_t> seed_override,
                                   bool* any_failed) {
  std::vector<ExperimentConfig> configs = figure_configs(figure_id);
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> csv_paths;
  bool failed = false;
  for (auto& cfg : configs) {
    if (seed_override) cfg.master_seed = *seed_override;
    const std::vector<ResultRow> rows = run_experiment(cfg, jobs);
    failed = failed || any_cell_failed(rows);
    const std::string csv_path =
        (std::filesystem::path(out_dir) / cfg.output.csv).string();
    write_csv(rows, csv_path);
    write_plot(cfg, rows, (std::filesystem::path(out_dir) / cfg.output.plot).string());
    csv_paths.push_back(csv_path);
  }
  if (any_failed) *any_failed = failed;
  return csv_paths;
}

bool any_cell_failed(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    if (r.failed) return true;
  }
  return false;
}

}  // namespace pepo
