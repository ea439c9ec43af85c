#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pepo/dataset.hpp"
#include "pepo/ensemble.hpp"
#include "pepo/env.hpp"

namespace pepo {

// One algorithm entry of the config's algos[] list.
struct AlgoSpec {
  std::string name;  // pepo | pepo_mean_std | dpo | rlhf | chi2po | sft_dpo | rl | chi2rl | perl
  HyperParams hp;
  double cap = 30.0;  // DPO box half-width
};

struct PipelineConfig {
  FitMode fit_mode = FitMode::kAscent;
  bool theoretical = false;  // confidence-calibrated L and count-based tie bound
  double alpha = 0.1;        // constant tie-bound level
  bool centering = false;
  LabelRule label_rule = LabelRule::kBt;
  Aggregator aggregator = Aggregator::kMin;
  double sample_delta = 0.05;
  int abstention_samples = 200;
};

struct SweepConfig {
  std::vector<std::int64_t> n_values;
  std::vector<int> l_values;
  std::vector<std::uint64_t> seeds;
};

struct OutputConfig {
  std::string dir = "out";
  std::string csv = "results.csv";
  std::string plot;  // empty disables plot emission
  std::string plot_metric = "suboptimality";  // or "prob_optimal_action"
};

struct ExperimentConfig {
  std::string experiment_id;
  TabularEnv env;
  std::vector<AlgoSpec> algos;
  SweepConfig sweep;
  PipelineConfig pipeline;
  OutputConfig output;
  std::uint64_t master_seed = 0;
  std::int64_t gen_n = 1000;  // dataset size for the `gen` subcommand

  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

// Accepts either a bare env object or a whole config (its "env" key).
TabularEnv parse_env(const std::string& json_text);

std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace pepo
