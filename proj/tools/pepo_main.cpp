// pepo - command-line front end for the PEPO lab, built on the C API only.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pepo.h"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitCellFailure = 3;

[[noreturn]] void die(const std::string& context, int code) {
  std::fprintf(stderr, "pepo: %s: %s\n", context.c_str(), pepo_last_error());
  // map C API codes onto the documented CLI exit codes
  if (code == PEPO_ERR_CONFIG || code == PEPO_ERR_INVALID_ARGUMENT) {
    std::exit(kExitConfigError);
  }
  if (code == PEPO_ERR_CELL_FAILED) std::exit(kExitCellFailure);
  std::exit(1);
}

struct EnvHandle {
  pepo_env* ptr = nullptr;
  ~EnvHandle() { pepo_env_free(ptr); }
};
struct DataHandle {
  pepo_dataset* ptr = nullptr;
  ~DataHandle() { pepo_dataset_free(ptr); }
};
struct MembersHandle {
  pepo_members* ptr = nullptr;
  ~MembersHandle() { pepo_members_free(ptr); }
};
struct AggregateHandle {
  pepo_aggregate* ptr = nullptr;
  ~AggregateHandle() { pepo_aggregate_free(ptr); }
};

pepo_env* load_env_or_die(const std::string& config) {
  pepo_env* env = nullptr;
  if (int rc = pepo_env_load_file(config.c_str(), &env)) die("loading config", rc);
  return env;
}

std::string options_json(double beta, int l, const std::string& fit_mode, double alpha,
                         bool theoretical, bool centering, double delta,
                         const std::string& aggregator, double eta, double cap,
                         double lambda_sft, double chi2_gamma) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"beta\":%.17g,\"l\":%d,\"fit_mode\":\"%s\",\"alpha\":%.17g,"
                "\"theoretical\":%s,\"centering\":%s,\"delta\":%.17g,"
                "\"aggregator\":\"%s\",\"eta\":%.17g,\"cap\":%.17g,"
                "\"lambda_sft\":%.17g,\"chi2_gamma\":%.17g}",
                beta, l, fit_mode.c_str(), alpha, theoretical ? "true" : "false",
                centering ? "true" : "false", delta, aggregator.c_str(), eta, cap,
                lambda_sft, chi2_gamma);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PEPO tabular preference-optimization lab"};
  app.set_version_flag("--version", std::string("pepo ") + pepo_version());
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", data_path, members_dir, aggregate_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;

  // shared options; PEPO_LAB_SEED overrides the config seed
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)");
    cmd->add_option("--seed", seed, "master seed override")
        ->envname("PEPO_LAB_SEED")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--jobs", jobs, "parallel jobs for experiment cells");
  };

  // gen
  auto* gen = app.add_subcommand("gen", "generate a preference dataset from the config env");
  std::int64_t gen_n = 1000;
  std::string label_rule = "bt", gen_out = "dataset.tsv";
  add_common(gen);
  gen->add_option("--n", gen_n, "number of comparisons");
  gen->add_option("--label-rule", label_rule, "bt | argmax");
  gen->add_option("--file", gen_out, "output dataset file name");

  // fit
  auto* fit = app.add_subcommand("fit", "fit ensemble members or a baseline on a dataset");
  std::string fit_algo = "pepo", fit_mode = "ascent";
  double beta = 0.1, alpha = 0.1, delta = 0.05, eta = 0.1, cap = 30.0;
  double lambda_sft = 0.005, chi2_gamma = 40.0;
  int l = 3;
  bool theoretical = false, centering = false;
  add_common(fit);
  fit->add_option("--data", data_path, "dataset file")->required();
  fit->add_option("--algo", fit_algo, "pepo | dpo | sft_dpo | rlhf | chi2po");
  fit->add_option("--beta", beta, "KL weight");
  fit->add_option("--l", l, "ensemble size");
  fit->add_option("--fit-mode", fit_mode, "ascent | closed-form");
  fit->add_flag("--theoretical", theoretical, "confidence-calibrated L and tie bound");
  fit->add_flag("--centering", centering, "centered log-ratio offsets");
  fit->add_option("--cap", cap, "DPO box half-width");
  fit->add_option("--lambda-sft", lambda_sft, "SFT regularizer weight");
  fit->add_option("--chi2-gamma", chi2_gamma, "chi-squared regularizer weight");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "aggregate members into pi_out tables");
  std::string aggregator = "min";
  add_common(aggregate);
  aggregate->add_option("--members", members_dir, "directory with member_<i>.tsv")->required();
  aggregate->add_option("--data", data_path, "full dataset file (for counts)")->required();
  aggregate->add_option("--l", l, "number of member files");
  aggregate->add_option("--beta", beta, "KL weight");
  aggregate->add_option("--alpha", alpha, "constant tie-bound level");
  aggregate->add_flag("--theoretical", theoretical, "use the theoretical tie bound");
  aggregate->add_flag("--centering", centering, "centered aggregation");
  aggregate->add_option("--aggregator", aggregator, "min | mean_std");
  aggregate->add_option("--eta", eta, "mean-std coefficient");
  aggregate->add_option("--delta", delta, "tie-bound confidence");
  std::string agg_out = "aggregate.tsv";
  aggregate->add_option("--file", agg_out, "output aggregate file name");

  // sample
  auto* sample = app.add_subcommand("sample", "rejection-sample actions from pi_out");
  int prompt = 0, count = 1, proposal = 0;
  add_common(sample);
  sample->add_option("--aggregate", aggregate_path, "aggregate file")->required();
  sample->add_option("--prompt", prompt, "prompt index");
  sample->add_option("--count", count, "number of samples");
  sample->add_option("--proposal", proposal, "proposal member index");
  sample->add_option("--delta", delta, "abstention confidence");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate an aggregate or fitted policy");
  std::string eval_member;
  add_common(eval);
  eval->add_option("--aggregate", aggregate_path, "aggregate file");
  eval->add_option("--member", eval_member, "member/baseline file (policy table)");
  eval->add_option("--beta", beta, "KL weight for J_beta");

  // run
  auto* run = app.add_subcommand("run", "run a full experiment config");
  add_common(run);

  // reproduce
  auto* repro = app.add_subcommand("reproduce", "reproduce a registered figure");
  std::string figure_id;
  add_common(repro);
  repro->add_option("figure", figure_id, "known | unknown | ablation_l | beta0 | rate")
      ->required();

  CLI11_PARSE(app, argc, argv);

  const std::uint64_t* seed_ptr = seed_set ? &seed : nullptr;

  if (gen->parsed()) {
    if (config_path.empty()) die("gen requires --config", PEPO_ERR_CONFIG);
    EnvHandle env{load_env_or_die(config_path)};
    DataHandle data;
    if (int rc = pepo_dataset_generate(env.ptr, gen_n, seed_set ? seed : 0,
                                       label_rule.c_str(), &data.ptr)) {
      die("generating dataset", rc);
    }
    const std::string path = out_dir + "/" + gen_out;
    std::filesystem::create_directories(out_dir);
    if (int rc = pepo_dataset_save(data.ptr, env.ptr, path.c_str())) {
      die("saving dataset", rc);
    }
    std::printf("%s\n", path.c_str());
    return 0;
  }

  if (fit->parsed()) {
    if (config_path.empty()) die("fit requires --config", PEPO_ERR_CONFIG);
    EnvHandle env{load_env_or_die(config_path)};
    DataHandle data;
    if (int rc = pepo_dataset_load(data_path.c_str(), &data.ptr)) {
      die("loading dataset", rc);
    }
    const std::string opts =
        options_json(beta, l, fit_mode, alpha, theoretical, centering, delta, "min", eta,
                     cap, lambda_sft, chi2_gamma);
    std::filesystem::create_directories(out_dir);
    if (fit_algo == "pepo") {
      MembersHandle members;
      if (int rc = pepo_members_fit(env.ptr, data.ptr, opts.c_str(),
                                    seed_set ? seed : 0, &members.ptr)) {
        die("fitting members", rc);
      }
      if (int rc = pepo_members_save(members.ptr, out_dir.c_str())) {
        die("saving members", rc);
      }
      int fitted = 0;
      pepo_members_count(members.ptr, &fitted);
      std::printf("%s/member_0.tsv .. member_%d.tsv\n", out_dir.c_str(), fitted - 1);
    } else {
      const std::string path = out_dir + "/baseline_" + fit_algo + ".tsv";
      if (int rc = pepo_baseline_fit_save(env.ptr, data.ptr, fit_algo.c_str(),
                                          opts.c_str(), path.c_str())) {
        die("fitting baseline", rc);
      }
      std::printf("%s\n", path.c_str());
    }
    return 0;
  }

  if (aggregate->parsed()) {
    if (config_path.empty()) die("aggregate requires --config", PEPO_ERR_CONFIG);
    EnvHandle env{load_env_or_die(config_path)};
    DataHandle data;
    if (int rc = pepo_dataset_load(data_path.c_str(), &data.ptr)) {
      die("loading dataset", rc);
    }
    MembersHandle members;
    if (int rc = pepo_members_load(env.ptr, members_dir.c_str(), l, &members.ptr)) {
      die("loading members", rc);
    }
    const std::string opts = options_json(beta, l, "ascent", alpha, theoretical,
                                          centering, delta, aggregator, eta, cap,
                                          lambda_sft, chi2_gamma);
    AggregateHandle agg;
    if (int rc = pepo_aggregate_build(env.ptr, members.ptr, data.ptr, opts.c_str(),
                                      &agg.ptr)) {
      die("building aggregate", rc);
    }
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/" + agg_out;
    if (int rc = pepo_aggregate_save(agg.ptr, path.c_str())) {
      die("saving aggregate", rc);
    }
    std::printf("%s\n", path.c_str());
    return 0;
  }

  if (sample->parsed()) {
    if (config_path.empty()) die("sample requires --config", PEPO_ERR_CONFIG);
    EnvHandle env{load_env_or_die(config_path)};
    AggregateHandle agg;
    if (int rc = pepo_aggregate_load(env.ptr, aggregate_path.c_str(), &agg.ptr)) {
      die("loading aggregate", rc);
    }
    for (int i = 0; i < count; ++i) {
      int action = -1, trials = 0;
      const std::uint64_t s = (seed_set ? seed : 0) + static_cast<std::uint64_t>(i);
      if (int rc = pepo_sample(agg.ptr, env.ptr, prompt, proposal, delta, s, &action,
                               &trials)) {
        die("sampling", rc);
      }
      if (action >= 0) {
        std::printf("%d\t%d\t%d\n", prompt, action, trials);
      } else {
        std::printf("%d\tabstain\t%d\n", prompt, trials);
      }
    }
    return 0;
  }

  if (eval->parsed()) {
    if (config_path.empty()) die("eval requires --config", PEPO_ERR_CONFIG);
    if (aggregate_path.empty() && eval_member.empty()) {
      die("eval requires --aggregate or --member", PEPO_ERR_CONFIG);
    }
    EnvHandle env{load_env_or_die(config_path)};
    double j = 0, sub = 0, popt = 0, cstar = 0, errn = 0;
    if (!aggregate_path.empty()) {
      AggregateHandle agg;
      if (int rc = pepo_aggregate_load(env.ptr, aggregate_path.c_str(), &agg.ptr)) {
        die("loading aggregate", rc);
      }
      if (int rc = pepo_eval_aggregate(agg.ptr, env.ptr, beta, &j, &sub, &popt, &cstar,
                                       &errn)) {
        die("evaluating", rc);
      }
      std::printf("j_beta,suboptimality,prob_optimal_action,c_star,err_norm\n");
      std::printf("%.10g,%.10g,%.10g,%.10g,%.10g\n", j, sub, popt, cstar, errn);
    } else {
      if (int rc = pepo_eval_policy_file(env.ptr, eval_member.c_str(), beta, &j, &sub,
                                         &popt, &cstar)) {
        die("evaluating", rc);
      }
      std::printf("j_beta,suboptimality,prob_optimal_action,c_star\n");
      std::printf("%.10g,%.10g,%.10g,%.10g\n", j, sub, popt, cstar);
    }
    return 0;
  }

  if (run->parsed()) {
    if (config_path.empty()) die("run requires --config", PEPO_ERR_CONFIG);
    const int rc =
        pepo_run_config_file(config_path.c_str(), out_dir.c_str(), seed_ptr, jobs);
    if (rc != PEPO_OK) die("running experiment", rc);
    std::printf("%s\n", out_dir.c_str());
    return 0;
  }

  if (repro->parsed()) {
    const int rc = pepo_reproduce(figure_id.c_str(), out_dir.c_str(), seed_ptr, jobs);
    if (rc != PEPO_OK) die("reproducing figure", rc);
    std::printf("%s\n", out_dir.c_str());
    return 0;
  }

  return 0;
}
