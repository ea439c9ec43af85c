#include "pepo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pepo {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownAlgos = {"pepo", "pepo_mean_std", "dpo",    "rlhf",
                                           "chi2po", "sft_dpo",      "rl",     "chi2rl",
                                           "perl"};

Table parse_table(const json& rows, int prompts, int actions, const char* what) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != prompts)
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(prompts) + " rows");
  Table t(prompts, actions);
  for (int x = 0; x < prompts; ++x) {
    const auto& row = rows.at(x);
    if (!row.is_array() || static_cast<int>(row.size()) != actions)
      throw std::invalid_argument(std::string(what) + ": bad row length");
    for (int a = 0; a < actions; ++a) t(x, a) = row.at(a).get<double>();
  }
  return t;
}

TabularEnv env_from_json(const json& j) {
  const int prompts = j.at("num_prompts").get<int>();
  const int actions = j.at("num_actions").get<int>();
  std::vector<double> nu0;
  if (j.contains("nu0")) {
    nu0 = j.at("nu0").get<std::vector<double>>();
  } else {
    nu0.assign(prompts, 1.0 / prompts);
  }
  auto policy = [&](const char* key) {
    if (!j.contains(key)) return TabularPolicy::uniform(prompts, actions);
    if (j.at(key).is_string() && j.at(key).get<std::string>() == "uniform")
      return TabularPolicy::uniform(prompts, actions);
    return TabularPolicy(parse_table(j.at(key), prompts, actions, key));
  };
  const TabularPolicy pi_data = policy("pi_data");
  const TabularPolicy pi_ref = policy("pi_ref");
  const double r_max = j.value("r_max", 3.0);

  const auto& rj = j.at("reward");
  RewardSpec spec;
  const std::string type = rj.at("type").get<std::string>();
  if (type == "fixed") {
    spec = FixedReward{parse_table(rj.at("values"), prompts, actions, "reward.values")};
  } else if (type == "gaussian") {
    spec = GaussianReward{parse_table(rj.at("means"), prompts, actions, "reward.means"),
                          parse_table(rj.at("variances"), prompts, actions,
                                      "reward.variances")};
  } else {
    throw std::invalid_argument("reward.type must be fixed or gaussian");
  }
  return TabularEnv(prompts, actions, std::move(nu0), pi_data, pi_ref, std::move(spec),
                    r_max);
}

HyperParams hp_from_json(const json& j, const HyperParams& base) {
  HyperParams hp = base;
  hp.beta = j.value("beta", hp.beta);
  hp.delta = j.value("delta", hp.delta);
  hp.gamma_count = j.value("gamma_count", hp.gamma_count);
  hp.ensemble_size = j.value("l", hp.ensemble_size);
  hp.eta = j.value("eta", hp.eta);
  hp.lambda_sft = j.value("lambda_sft", hp.lambda_sft);
  hp.chi2_gamma = j.value("chi2_gamma", hp.chi2_gamma);
  hp.b_scale = j.value("b_scale", hp.b_scale);
  return hp;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (algos.empty()) throw std::invalid_argument("config: algos list is empty");
  for (const auto& a : algos) {
    if (!kKnownAlgos.count(a.name))
      throw std::invalid_argument("config: unknown algorithm '" + a.name + "'");
    a.hp.validate();
  }
  if (sweep.n_values.empty() || sweep.l_values.empty() || sweep.seeds.empty())
    throw std::invalid_argument("config: sweep axes must be nonempty");
  std::set<std::uint64_t> uniq(sweep.seeds.begin(), sweep.seeds.end());
  if (uniq.size() != sweep.seeds.size())
    throw std::invalid_argument("config: sweep seeds must be distinct");
  for (auto n : sweep.n_values) {
    if (n < 0) throw std::invalid_argument("config: negative dataset size");
  }
  for (auto l : sweep.l_values) {
    if (l < 1) throw std::invalid_argument("config: l values must be >= 1");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.experiment_id = j.value("experiment_id", "experiment");
  cfg.env = env_from_json(j.at("env"));
  cfg.master_seed = j.value("master_seed", 0ULL);
  if (j.contains("gen")) cfg.gen_n = j.at("gen").value("n", cfg.gen_n);

  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    const std::string fit = p.value("fit_mode", "ascent");
    if (fit != "ascent" && fit != "closed-form")
      throw std::invalid_argument("config: fit_mode must be ascent or closed-form");
    cfg.pipeline.fit_mode = fit == "ascent" ? FitMode::kAscent : FitMode::kClosedForm;
    cfg.pipeline.theoretical = p.value("theoretical", false);
    cfg.pipeline.alpha = p.value("alpha", 0.1);
    cfg.pipeline.centering = p.value("centering", false);
    const std::string label = p.value("label_rule", "bt");
    if (label != "bt" && label != "argmax")
      throw std::invalid_argument("config: label_rule must be bt or argmax");
    cfg.pipeline.label_rule = label == "bt" ? LabelRule::kBt : LabelRule::kArgmax;
    const std::string aggr = p.value("aggregator", "min");
    if (aggr != "min" && aggr != "mean_std")
      throw std::invalid_argument("config: aggregator must be min or mean_std");
    cfg.pipeline.aggregator = aggr == "min" ? Aggregator::kMin : Aggregator::kMeanStd;
    cfg.pipeline.sample_delta = p.value("sample_delta", 0.05);
    cfg.pipeline.abstention_samples = p.value("abstention_samples", 200);
  }

  HyperParams defaults;
  if (j.contains("hyper")) defaults = hp_from_json(j.at("hyper"), defaults);
  for (const auto& aj : j.at("algos")) {
    AlgoSpec spec;
    spec.name = aj.at("name").get<std::string>();
    spec.hp = hp_from_json(aj, defaults);
    spec.cap = aj.value("cap", 30.0);
    cfg.algos.push_back(std::move(spec));
  }

  const auto& s = j.at("sweep");
  cfg.sweep.n_values = s.at("n_values").get<std::vector<std::int64_t>>();
  cfg.sweep.l_values = s.value("l_values", std::vector<int>{defaults.ensemble_size});
  cfg.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();

  if (j.contains("output")) {
    const auto& o = j.at("output");
    cfg.output.dir = o.value("dir", cfg.output.dir);
    cfg.output.csv = o.value("csv", cfg.output.csv);
    cfg.output.plot = o.value("plot", cfg.output.plot);
    cfg.output.plot_metric = o.value("plot_metric", cfg.output.plot_metric);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

TabularEnv parse_env(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("env: JSON parse error: ") + e.what());
  }
  return env_from_json(j.contains("env") ? j.at("env") : j);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment_id"] = cfg.experiment_id;
  j["master_seed"] = cfg.master_seed;
  json env;
  env["num_prompts"] = cfg.env.num_prompts;
  env["num_actions"] = cfg.env.num_actions;
  env["nu0"] = cfg.env.nu0;
  auto table_to_json = [](const Table& t) {
    json rows = json::array();
    for (int x = 0; x < t.rows(); ++x) {
      json row = json::array();
      for (int a = 0; a < t.cols(); ++a) row.push_back(t(x, a));
      rows.push_back(row);
    }
    return rows;
  };
  env["pi_data"] = table_to_json(cfg.env.pi_data.probs());
  env["pi_ref"] = table_to_json(cfg.env.pi_ref.probs());
  env["r_max"] = cfg.env.r_max;
  json reward;
  if (const auto* fixed = std::get_if<FixedReward>(&cfg.env.reward_spec)) {
    reward["type"] = "fixed";
    reward["values"] = table_to_json(fixed->values);
  } else {
    const auto& g = std::get<GaussianReward>(cfg.env.reward_spec);
    reward["type"] = "gaussian";
    reward["means"] = table_to_json(g.means);
    reward["variances"] = table_to_json(g.variances);
  }
  env["reward"] = reward;
  j["env"] = env;

  json algos = json::array();
  for (const auto& a : cfg.algos) {
    json aj;
    aj["name"] = a.name;
    aj["beta"] = a.hp.beta;
    aj["delta"] = a.hp.delta;
    aj["gamma_count"] = a.hp.gamma_count;
    aj["l"] = a.hp.ensemble_size;
    aj["eta"] = a.hp.eta;
    aj["lambda_sft"] = a.hp.lambda_sft;
    aj["chi2_gamma"] = a.hp.chi2_gamma;
    aj["b_scale"] = a.hp.b_scale;
    aj["cap"] = a.cap;
    algos.push_back(aj);
  }
  j["algos"] = algos;
  j["sweep"] = {{"n_values", cfg.sweep.n_values},
                {"l_values", cfg.sweep.l_values},
                {"seeds", cfg.sweep.seeds}};
  j["pipeline"] = {
      {"fit_mode", cfg.pipeline.fit_mode == FitMode::kAscent ? "ascent" : "closed-form"},
      {"theoretical", cfg.pipeline.theoretical},
      {"alpha", cfg.pipeline.alpha},
      {"centering", cfg.pipeline.centering},
      {"label_rule", cfg.pipeline.label_rule == LabelRule::kBt ? "bt" : "argmax"},
      {"aggregator", cfg.pipeline.aggregator == Aggregator::kMin ? "min" : "mean_std"},
      {"sample_delta", cfg.pipeline.sample_delta},
      {"abstention_samples", cfg.pipeline.abstention_samples}};
  j["output"] = {{"dir", cfg.output.dir},
                 {"csv", cfg.output.csv},
                 {"plot", cfg.output.plot},
                 {"plot_metric", cfg.output.plot_metric}};
  j["gen"] = {{"n", cfg.gen_n}};
  return j.dump(2);
}

}  // namespace pepo
