#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pepo/table.hpp"

namespace pepo {

// Probability-vector tolerance, applied after row normalization at
// construction time.
inline constexpr double kSimplexTol = 1e-12;

// Per-prompt distribution over actions. Rows are normalized on construction
// and must then sum to 1 within kSimplexTol with nonnegative entries.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(Table probs);

  double operator()(int x, int a) const { return probs_(x, a); }
  int prompts() const { return probs_.rows(); }
  int actions() const { return probs_.cols(); }
  const Table& probs() const { return probs_; }

  static TabularPolicy uniform(int prompts, int actions);
  // point mass on one action per prompt
  static TabularPolicy point_mass(int prompts, int actions, const std::vector<int>& arms);

 private:
  Table probs_;
};

// Per (prompt, action) reward values; entries must be finite.
class RewardTable {
 public:
  RewardTable() = default;
  explicit RewardTable(Table values);

  double operator()(int x, int a) const { return values_(x, a); }
  double& operator()(int x, int a) { return values_(x, a); }
  int prompts() const { return values_.rows(); }
  int actions() const { return values_.cols(); }
  const Table& values() const { return values_; }

 private:
  Table values_;
};

struct FixedReward {
  Table values;  // r*(x,a), entries in [0, r_max]
};

struct GaussianReward {
  Table means;
  Table variances;  // entries >= 0
};

using RewardSpec = std::variant<FixedReward, GaussianReward>;

// The whole generative environment: prompt distribution, data and reference
// policies, ground-truth reward specification and the reward bound.
struct TabularEnv {
  int num_prompts = 0;
  int num_actions = 0;
  std::vector<double> nu0;  // distribution over prompts
  TabularPolicy pi_data;
  TabularPolicy pi_ref;
  RewardSpec reward_spec;
  double r_max = 0.0;

  TabularEnv() = default;
  TabularEnv(int prompts, int actions, std::vector<double> nu0_in, TabularPolicy data,
             TabularPolicy ref, RewardSpec spec, double r_max_in);

  // r* as a table: fixed values, or the Gaussian mean table.
  RewardTable mean_reward() const;

  // FNV-1a over a canonical text dump; recorded in dataset/member file headers.
  std::uint64_t hash() const;
};

// Shared hyperparameters. Defaults follow the practical pipeline; the
// theoretical() factory fills in B = 6 e^{3 r_max} and the
// confidence-calibrated ensemble size.
struct HyperParams {
  double beta = 0.1;        // KL weight
  double delta = 0.05;      // confidence level
  double gamma_count = 1.0; // count offset in the tie bound and the centering
  int ensemble_size = 3;    // L
  double eta = 0.1;         // mean - eta*std coefficient
  double lambda_sft = 0.005;
  double chi2_gamma = 40.0;
  double b_scale = 0.0;     // B; 0 means "derive 6 e^{3 r_max} from the env"

  void validate() const;
  double b_for(double r_max) const;
  // Effective pessimism scale for a pipeline: the theoretical bound pairs
  // with B = 6 e^{3 r_max}; the constant tie bound treats B * p_bar as one
  // knob (the paper's alpha), i.e. B = 1, unless b_scale overrides it.
  double b_effective(bool theoretical, double r_max) const;
  static HyperParams theoretical(const TabularEnv& env, double beta, double delta);
};

}  // namespace pepo
