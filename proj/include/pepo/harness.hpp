#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pepo/config.hpp"
#include "pepo/ensemble.hpp"

namespace pepo {

// One CSV row per (experiment, algorithm, seed, N, L) cell.
struct ResultRow {
  std::string experiment;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  int l = 0;
  double suboptimality = 0.0;
  double prob_optimal_action = 0.0;
  int selected_action = -1;
  double c_star = 0.0;
  double err_norm = 0.0;         // NaN when not applicable
  double abstention_rate = 0.0;  // NaN when not applicable
  double wall_time = 0.0;
  bool failed = false;
  std::string error;
};

// <pi_data, Err^2> with Err(x,a) = estimated gap against pi_data minus the
// ground-truth gap against pi_data.
double err_norm(const PessimisticAggregate& agg, const TabularEnv& env);

struct PessimismCheck {
  double pair_rate = 0.0;  // violating (x,a) pairs over all replications
  double any_rate = 0.0;   // replications with at least one violation
};

// Monte-Carlo check of the pessimism event: fraction of (x,a) cells and of
// replications where the estimated gap against pi_data exceeds the truth.
PessimismCheck pessimism_violation_rate(const TabularEnv& env, const HyperParams& hp,
                                        const PipelineConfig& pipe, std::int64_t n,
                                        int replications, std::uint64_t seed);

// Full PEPO pipeline for one dataset: partition, fit, center, bound ties,
// aggregate. A theoretical pipeline replaces l with the confidence-calibrated
// ensemble size.
PessimisticAggregate run_pepo_pipeline(const TabularEnv& env, const HyperParams& hp,
                                       const PipelineConfig& pipe,
                                       const PreferenceDataset& data, int l,
                                       std::uint64_t seed);

// Execute every (algorithm, seed, N, L) cell. Failures are recorded in the
// row and the run continues. Deterministic given the config, regardless of
// the job count.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int jobs = 1);

void write_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::string csv_header();

// Emit the plot described by the config's output block next to the CSV.
void write_plot(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows,
                const std::string& path);

// Pinned configurations reproducing the paper-style figures.
// Valid ids: known, unknown, ablation_l, beta0, rate.
std::vector<ExperimentConfig> figure_configs(const std::string& figure_id);

// Run a registered figure end to end; returns the written CSV paths.
// Throws on unknown id; per-cell failures set *any_failed.
std::vector<std::string> reproduce(const std::string& figure_id,
                                   const std::string& out_dir, int jobs,
                                   std::optional<std::uint64_t> seed_override,
                                   bool* any_failed = nullptr);

bool any_cell_failed(const std::vector<ResultRow>& rows);

}  // namespace pepo
