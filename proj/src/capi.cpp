#include "pepo.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pepo/baselines.hpp"
#include "pepo/config.hpp"
#include "pepo/harness.hpp"
#include "pepo/sampler.hpp"
#include "pepo/tabular_ops.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return PEPO_ERR_INVALID_ARGUMENT;
  } catch (const std::domain_error& e) {
    set_error(e.what());
    return PEPO_ERR_DOMAIN;
  } catch (const std::runtime_error& e) {
    set_error(e.what());
    return PEPO_ERR_IO;
  } catch (const std::exception& e) {
    set_error(e.what());
    return PEPO_ERR_INTERNAL;
  }
}

int require(bool cond, const char* msg) {
  if (!cond) {
    set_error(msg);
    return PEPO_ERR_INVALID_ARGUMENT;
  }
  return PEPO_OK;
}

pepo::LabelRule parse_label_rule(const char* rule) {
  if (rule == nullptr || std::strcmp(rule, "bt") == 0) return pepo::LabelRule::kBt;
  if (std::strcmp(rule, "argmax") == 0) return pepo::LabelRule::kArgmax;
  throw std::invalid_argument("label_rule must be bt or argmax");
}

struct FitOptions {
  pepo::HyperParams hp;
  pepo::PipelineConfig pipe;
};

FitOptions parse_options(const char* options_json) {
  FitOptions o;
  if (options_json == nullptr || options_json[0] == '\0') return o;
  const auto j = nlohmann::json::parse(options_json);
  o.hp.beta = j.value("beta", o.hp.beta);
  o.hp.delta = j.value("delta", o.hp.delta);
  o.hp.gamma_count = j.value("gamma_count", o.hp.gamma_count);
  o.hp.ensemble_size = j.value("l", o.hp.ensemble_size);
  o.hp.eta = j.value("eta", o.hp.eta);
  o.hp.lambda_sft = j.value("lambda_sft", o.hp.lambda_sft);
  o.hp.chi2_gamma = j.value("chi2_gamma", o.hp.chi2_gamma);
  o.hp.b_scale = j.value("b_scale", o.hp.b_scale);
  const std::string fit = j.value("fit_mode", "ascent");
  if (fit != "ascent" && fit != "closed-form")
    throw std::invalid_argument("fit_mode must be ascent or closed-form");
  o.pipe.fit_mode = fit == "ascent" ? pepo::FitMode::kAscent : pepo::FitMode::kClosedForm;
  o.pipe.theoretical = j.value("theoretical", false);
  o.pipe.alpha = j.value("alpha", o.pipe.alpha);
  o.pipe.centering = j.value("centering", false);
  const std::string aggr = j.value("aggregator", "min");
  if (aggr != "min" && aggr != "mean_std")
    throw std::invalid_argument("aggregator must be min or mean_std");
  o.pipe.aggregator =
      aggr == "min" ? pepo::Aggregator::kMin : pepo::Aggregator::kMeanStd;
  o.hp.validate();
  return o;
}

}  // namespace

struct pepo_env {
  pepo::TabularEnv env;
};

struct pepo_dataset {
  pepo::PreferenceDataset data;
};

struct pepo_members {
  std::vector<pepo::MemberFit> members;
};

struct pepo_aggregate {
  pepo::PessimisticAggregate agg;
};

extern "C" {

const char* pepo_version(void) { return "1.0.0"; }

const char* pepo_last_error(void) { return g_last_error.c_str(); }

int pepo_env_create(const char* json_text, pepo_env** out_env) {
  if (int rc = require(json_text && out_env, "pepo_env_create: null argument")) return rc;
  return guarded([&] {
    *out_env = new pepo_env{pepo::parse_env(json_text)};
    return PEPO_OK;
  });
}

int pepo_env_load_file(const char* config_path, pepo_env** out_env) {
  if (int rc = require(config_path && out_env, "pepo_env_load_file: null argument"))
    return rc;
  return guarded([&] {
    std::ifstream is(config_path);
    if (!is) throw std::runtime_error(std::string("cannot open ") + config_path);
    std::ostringstream buf;
    buf << is.rdbuf();
    *out_env = new pepo_env{pepo::parse_env(buf.str())};
    return PEPO_OK;
  });
}

void pepo_env_free(pepo_env* env) { delete env; }

int pepo_env_shape(const pepo_env* env, int* num_prompts, int* num_actions) {
  if (int rc = require(env != nullptr, "pepo_env_shape: null env")) return rc;
  if (num_prompts) *num_prompts = env->env.num_prompts;
  if (num_actions) *num_actions = env->env.num_actions;
  return PEPO_OK;
}

uint64_t pepo_env_hash(const pepo_env* env) { return env ? env->env.hash() : 0; }

int pepo_dataset_generate(const pepo_env* env, int64_t n, uint64_t seed,
                          const char* label_rule, pepo_dataset** out_data) {
  if (int rc = require(env && out_data, "pepo_dataset_generate: null argument")) return rc;
  return guarded([&] {
    *out_data = new pepo_dataset{
        pepo::generate_dataset(env->env, n, seed, parse_label_rule(label_rule))};
    return PEPO_OK;
  });
}

int pepo_dataset_size(const pepo_dataset* data, int64_t* out_n) {
  if (int rc = require(data && out_n, "pepo_dataset_size: null argument")) return rc;
  *out_n = data->data.size();
  return PEPO_OK;
}

int pepo_dataset_save(const pepo_dataset* data, const pepo_env* env, const char* path) {
  if (int rc = require(data && env && path, "pepo_dataset_save: null argument")) return rc;
  return guarded([&] {
    pepo::save_dataset(data->data, env->env, path);
    return PEPO_OK;
  });
}

int pepo_dataset_load(const char* path, pepo_dataset** out_data) {
  if (int rc = require(path && out_data, "pepo_dataset_load: null argument")) return rc;
  return guarded([&] {
    *out_data = new pepo_dataset{pepo::load_dataset(path)};
    return PEPO_OK;
  });
}

void pepo_dataset_free(pepo_dataset* data) { delete data; }

int pepo_members_fit(const pepo_env* env, const pepo_dataset* data,
                     const char* options_json, uint64_t seed, pepo_members** out) {
  if (int rc = require(env && data && out, "pepo_members_fit: null argument")) return rc;
  return guarded([&] {
    const FitOptions o = parse_options(options_json);
    const int l = o.pipe.theoretical
                      ? pepo::ensemble_size(env->env.num_prompts, env->env.num_actions,
                                            o.hp.delta)
                      : o.hp.ensemble_size;
    const auto shards = pepo::partition(data->data, l, seed);
    auto holder = std::make_unique<pepo_members>();
    for (const auto& shard : shards) {
      holder->members.push_back(
          pepo::fit_member(shard, env->env, o.hp, o.pipe.fit_mode));
    }
    if (o.pipe.centering) {
      for (size_t i = 0; i < holder->members.size(); ++i) {
        holder->members[i].zeta = pepo::centered_offsets(
            holder->members[i], env->env,
            pepo::shard_complement(data->data, shards[i]), o.hp.gamma_count, o.hp.beta);
      }
    }
    *out = holder.release();
    return PEPO_OK;
  });
}

int pepo_members_count(const pepo_members* members, int* out_l) {
  if (int rc = require(members && out_l, "pepo_members_count: null argument")) return rc;
  *out_l = static_cast<int>(members->members.size());
  return PEPO_OK;
}

int pepo_members_save(const pepo_members* members, const char* dir) {
  if (int rc = require(members && dir, "pepo_members_save: null argument")) return rc;
  return guarded([&] {
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < members->members.size(); ++i) {
      const auto path =
          std::filesystem::path(dir) / ("member_" + std::to_string(i) + ".tsv");
      pepo::save_member(members->members[i], path.string());
    }
    return PEPO_OK;
  });
}

int pepo_members_load(const pepo_env* env, const char* dir, int l, pepo_members** out) {
  if (int rc = require(env && dir && out && l > 0, "pepo_members_load: bad argument"))
    return rc;
  return guarded([&] {
    auto holder = std::make_unique<pepo_members>();
    for (int i = 0; i < l; ++i) {
      const auto path =
          std::filesystem::path(dir) / ("member_" + std::to_string(i) + ".tsv");
      holder->members.push_back(pepo::load_member(path.string(), env->env));
    }
    *out = holder.release();
    return PEPO_OK;
  });
}

void pepo_members_free(pepo_members* members) { delete members; }

int pepo_baseline_fit_save(const pepo_env* env, const pepo_dataset* data,
                           const char* name, const char* options_json,
                           const char* path) {
  if (int rc = require(env && data && name && path, "pepo_baseline_fit_save: null argument"))
    return rc;
  return guarded([&] {
    const FitOptions o = parse_options(options_json);
    double cap = 30.0;
    if (options_json && options_json[0] != '\0') {
      cap = nlohmann::json::parse(options_json).value("cap", 30.0);
    }
    const std::string algo = name;
    pepo::MemberFit as_member;
    as_member.beta = o.hp.beta;
    as_member.mode = pepo::FitMode::kAscent;
    if (algo == "dpo") {
      pepo::PairGrid<double> zero(env->env.num_prompts, env->env.num_actions, 0.0);
      as_member = pepo::fit_member_with_lambda(data->data, env->env, o.hp.beta, zero,
                                               cap, pepo::FitMode::kAscent);
    } else if (algo == "sft_dpo") {
      // refit through the baseline to pick up the SFT term, then store the
      // implied coefficients
      const pepo::BaselineResult r =
          pepo::fit_sft_dpo(data->data, env->env, o.hp.beta, o.hp.lambda_sft, cap);
      as_member.coeffs = pepo::Table(env->env.num_prompts, env->env.num_actions, 0.0);
      for (int x = 0; x < env->env.num_prompts; ++x) {
        for (int a = 0; a < env->env.num_actions; ++a) {
          const double ref = env->env.pi_ref(x, a);
          as_member.coeffs(x, a) =
              ref > 0.0 ? o.hp.beta * std::log(r.policy(x, a) / ref) : 0.0;
        }
      }
      as_member.diag = r.diag;
    } else if (algo == "rlhf" || algo == "chi2po") {
      const pepo::RewardTable r_hat =
          pepo::fit_reward_mle(data->data, env->env, env->env.r_max);
      const pepo::TabularPolicy pi =
          algo == "rlhf" ? pepo::rlhf_policy(r_hat, env->env, o.hp.beta)
                         : pepo::chi2_policy(r_hat, env->env, o.hp.chi2_gamma);
      as_member.coeffs = pepo::Table(env->env.num_prompts, env->env.num_actions, 0.0);
      for (int x = 0; x < env->env.num_prompts; ++x) {
        for (int a = 0; a < env->env.num_actions; ++a) {
          const double ref = env->env.pi_ref(x, a);
          as_member.coeffs(x, a) =
              (ref > 0.0 && pi(x, a) > 0.0) ? o.hp.beta * std::log(pi(x, a) / ref) : 0.0;
        }
      }
    } else {
      throw std::invalid_argument("unknown baseline '" + algo + "'");
    }
    as_member.beta = o.hp.beta;
    as_member.name = algo;
    if (as_member.lambda_table.prompts() == 0) {
      as_member.lambda_table =
          pepo::PairGrid<double>(env->env.num_prompts, env->env.num_actions, 0.0);
    }
    pepo::save_member(as_member, path);
    return PEPO_OK;
  });
}

int pepo_aggregate_build(const pepo_env* env, const pepo_members* members,
                         const pepo_dataset* full_data, const char* options_json,
                         pepo_aggregate** out) {
  if (int rc = require(env && members && full_data && out,
                       "pepo_aggregate_build: null argument"))
    return rc;
  return guarded([&] {
    FitOptions o = parse_options(options_json);
    o.hp.ensemble_size = static_cast<int>(members->members.size());
    const pepo::CountTables counts = pepo::build_counts(full_data->data, env->env);
    const pepo::Table p_bar =
        o.pipe.theoretical
            ? pepo::tie_upper_bound(counts, o.hp, env->env,
                                    pepo::TieBoundMode::kTheoretical)
            : pepo::tie_upper_bound(counts, o.hp, env->env,
                                    pepo::TieBoundMode::kConstant, o.pipe.alpha);
    *out = new pepo_aggregate{pepo::output_policy(
        members->members, env->env, o.hp.beta, p_bar,
        o.hp.b_effective(o.pipe.theoretical, env->env.r_max), o.pipe.centering,
        o.pipe.aggregator, o.hp.eta)};
    return PEPO_OK;
  });
}

int pepo_aggregate_save(const pepo_aggregate* agg, const char* path) {
  if (int rc = require(agg && path, "pepo_aggregate_save: null argument")) return rc;
  return guarded([&] {
    pepo::save_aggregate(agg->agg, path);
    return PEPO_OK;
  });
}

int pepo_aggregate_load(const pepo_env* env, const char* path, pepo_aggregate** out) {
  if (int rc = require(env && path && out, "pepo_aggregate_load: null argument")) return rc;
  return guarded([&] {
    *out = new pepo_aggregate{pepo::load_aggregate(path, env->env)};
    return PEPO_OK;
  });
}

void pepo_aggregate_free(pepo_aggregate* agg) { delete agg; }

int pepo_aggregate_policy_row(const pepo_aggregate* agg, int prompt, double* buf,
                              int buf_len) {
  if (int rc = require(agg && buf, "pepo_aggregate_policy_row: null argument")) return rc;
  return guarded([&] {
    const auto& pi = agg->agg.pi_out;
    if (prompt < 0 || prompt >= pi.prompts())
      throw std::invalid_argument("prompt out of range");
    if (buf_len < pi.actions()) throw std::invalid_argument("buffer too small");
    for (int a = 0; a < pi.actions(); ++a) buf[a] = pi(prompt, a);
    return PEPO_OK;
  });
}

int pepo_sample(const pepo_aggregate* agg, const pepo_env* env, int prompt,
                int proposal_member, double delta, uint64_t seed, int* out_action,
                int* out_trials) {
  if (int rc = require(agg && env && out_action && out_trials, "pepo_sample: null argument"))
    return rc;
  return guarded([&] {
    pepo::SampleOutcome s;
    if (agg->agg.members.empty()) {
      // loaded aggregates carry no members; fall back to pi_out itself, which
      // dominates f_out up to its normalization constant
      s = pepo::rejection_sample_with(agg->agg, agg->agg.pi_out, prompt, delta, seed);
    } else {
      s = pepo::rejection_sample(agg->agg, env->env, prompt, proposal_member, delta, seed);
    }
    *out_action = s.accepted ? s.action : -1;
    *out_trials = s.trials;
    return PEPO_OK;
  });
}

int pepo_eval_aggregate(const pepo_aggregate* agg, const pepo_env* env, double beta,
                        double* out_j_beta, double* out_suboptimality,
                        double* out_prob_optimal, double* out_c_star,
                        double* out_err_norm) {
  if (int rc = require(agg && env, "pepo_eval_aggregate: null argument")) return rc;
  return guarded([&] {
    const pepo::TabularEnv& e = env->env;
    const pepo::TabularPolicy& pi = agg->agg.pi_out;
    const pepo::RewardTable rstar = e.mean_reward();
    const double j = pepo::j_beta(pi, e, beta);
    if (out_j_beta) *out_j_beta = j;
    if (out_suboptimality || out_c_star || out_prob_optimal) {
      const pepo::TabularPolicy pi_star =
          beta > 0.0 ? pepo::softmax_policy(rstar, e.pi_ref, beta)
                     : [&] {
                         std::vector<int> arms(e.num_prompts, 0);
                         for (int x = 0; x < e.num_prompts; ++x) {
                           for (int a = 1; a < e.num_actions; ++a) {
                             if (rstar(x, a) > rstar(x, arms[x])) arms[x] = a;
                           }
                         }
                         return pepo::TabularPolicy::point_mass(e.num_prompts,
                                                                e.num_actions, arms);
                       }();
      if (out_suboptimality) *out_suboptimality = pepo::j_beta(pi_star, e, beta) - j;
      if (out_c_star) *out_c_star = pepo::concentrability(pi_star, e).first;
      if (out_prob_optimal) {
        double p = 0.0;
        for (int x = 0; x < e.num_prompts; ++x) {
          int best = 0;
          for (int a = 1; a < e.num_actions; ++a) {
            if (rstar(x, a) > rstar(x, best)) best = a;
          }
          p += e.nu0[x] * pi(x, best);
        }
        *out_prob_optimal = p;
      }
    }
    if (out_err_norm) *out_err_norm = pepo::err_norm(agg->agg, e);
    return PEPO_OK;
  });
}

int pepo_eval_policy_file(const pepo_env* env, const char* member_path, double beta,
                          double* out_j_beta, double* out_suboptimality,
                          double* out_prob_optimal, double* out_c_star) {
  if (int rc = require(env && member_path, "pepo_eval_policy_file: null argument"))
    return rc;
  return guarded([&] {
    pepo::MemberFit m = pepo::load_member(member_path, env->env);
    if (!(m.beta > 0.0)) m.beta = beta > 0.0 ? beta : 1.0;
    const pepo::TabularPolicy pi = m.policy(env->env.pi_ref);
    const pepo::TabularEnv& e = env->env;
    const pepo::RewardTable rstar = e.mean_reward();
    std::vector<int> arms(e.num_prompts, 0);
    for (int x = 0; x < e.num_prompts; ++x) {
      for (int a = 1; a < e.num_actions; ++a) {
        if (rstar(x, a) > rstar(x, arms[x])) arms[x] = a;
      }
    }
    const pepo::TabularPolicy pi_star =
        beta > 0.0 ? pepo::softmax_policy(rstar, e.pi_ref, beta)
                   : pepo::TabularPolicy::point_mass(e.num_prompts, e.num_actions, arms);
    if (out_j_beta) *out_j_beta = pepo::j_beta(pi, e, beta);
    if (out_suboptimality)
      *out_suboptimality = pepo::j_beta(pi_star, e, beta) - pepo::j_beta(pi, e, beta);
    if (out_c_star) *out_c_star = pepo::concentrability(pi_star, e).first;
    if (out_prob_optimal) {
      double p = 0.0;
      for (int x = 0; x < e.num_prompts; ++x) p += e.nu0[x] * pi(x, arms[x]);
      *out_prob_optimal = p;
    }
    return PEPO_OK;
  });
}

int pepo_run_config_file(const char* config_path, const char* out_dir,
                         const uint64_t* seed_override, int jobs) {
  if (int rc = require(config_path && out_dir, "pepo_run_config_file: null argument"))
    return rc;
  g_last_error.clear();
  pepo::ExperimentConfig cfg;
  try {
    cfg = pepo::load_config_file(config_path);
    if (seed_override) cfg.master_seed = *seed_override;
  } catch (const std::exception& e) {
    set_error(e.what());
    return PEPO_ERR_CONFIG;
  }
  try {
    const auto rows = pepo::run_experiment(cfg, jobs < 1 ? 1 : jobs);
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir);
    pepo::write_csv(rows, (base / cfg.output.csv).string());
    if (!cfg.output.plot.empty()) {
      pepo::write_plot(cfg, rows, (base / cfg.output.plot).string());
    }
    if (pepo::any_cell_failed(rows)) {
      set_error("one or more experiment cells failed; rows were still written");
      return PEPO_ERR_CELL_FAILED;
    }
    return PEPO_OK;
  } catch (const std::exception& e) {
    set_error(e.what());
    return PEPO_ERR_INTERNAL;
  }
}

int pepo_reproduce(const char* figure_id, const char* out_dir,
                   const uint64_t* seed_override, int jobs) {
  if (int rc = require(figure_id && out_dir, "pepo_reproduce: null argument")) return rc;
  g_last_error.clear();
  try {
    std::optional<uint64_t> seed;
    if (seed_override) seed = *seed_override;
    bool failed = false;
    pepo::reproduce(figure_id, out_dir, jobs < 1 ? 1 : jobs, seed, &failed);
    if (failed) {
      set_error("one or more experiment cells failed; rows were still written");
      return PEPO_ERR_CELL_FAILED;
    }
    return PEPO_OK;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return PEPO_ERR_CONFIG;
  } catch (const std::exception& e) {
    set_error(e.what());
    return PEPO_ERR_INTERNAL;
  }
}

}  // extern "C"
