#include "pepo/env.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pepo/rng.hpp"

namespace pepo {

namespace {

void normalize_rows(Table& t, const char* what) {
  for (int r = 0; r < t.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < t.cols(); ++c) {
      const double v = t(r, c);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
      }
      sum += v;
    }
    if (sum <= 0.0) throw std::invalid_argument(std::string(what) + ": row sums to zero");
    for (int c = 0; c < t.cols(); ++c) t(r, c) /= sum;
    double check = 0.0;
    for (int c = 0; c < t.cols(); ++c) check += t(r, c);
    if (std::abs(check - 1.0) > kSimplexTol) {
      throw std::invalid_argument(std::string(what) + ": row not normalizable within tolerance");
    }
  }
}

}  // namespace

TabularPolicy::TabularPolicy(Table probs) : probs_(std::move(probs)) {
  if (probs_.rows() <= 0 || probs_.cols() <= 0)
    throw std::invalid_argument("TabularPolicy: empty table");
  normalize_rows(probs_, "TabularPolicy");
}

TabularPolicy TabularPolicy::uniform(int prompts, int actions) {
  return TabularPolicy(Table(prompts, actions, 1.0 / actions));
}

TabularPolicy TabularPolicy::point_mass(int prompts, int actions,
                                        const std::vector<int>& arms) {
  Table t(prompts, actions, 0.0);
  for (int x = 0; x < prompts; ++x) {
    const int a = arms.at(x);
    if (a < 0 || a >= actions) throw std::invalid_argument("point_mass: arm out of range");
    t(x, a) = 1.0;
  }
  return TabularPolicy(std::move(t));
}

RewardTable::RewardTable(Table values) : values_(std::move(values)) {
  for (double v : values_.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("RewardTable: non-finite entry");
  }
}

TabularEnv::TabularEnv(int prompts, int actions, std::vector<double> nu0_in,
                       TabularPolicy data, TabularPolicy ref, RewardSpec spec,
                       double r_max_in)
    : num_prompts(prompts),
      num_actions(actions),
      nu0(std::move(nu0_in)),
      pi_data(std::move(data)),
      pi_ref(std::move(ref)),
      reward_spec(std::move(spec)),
      r_max(r_max_in) {
  if (num_prompts <= 0 || num_actions <= 0)
    throw std::invalid_argument("TabularEnv: nonpositive shape");
  if (static_cast<int>(nu0.size()) != num_prompts)
    throw std::invalid_argument("TabularEnv: nu0 size mismatch");
  double sum = 0.0;
  for (double v : nu0) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("TabularEnv: bad nu0 entry");
    sum += v;
  }
  if (sum <= 0.0) throw std::invalid_argument("TabularEnv: nu0 sums to zero");
  for (double& v : nu0) v /= sum;
  if (pi_data.prompts() != num_prompts || pi_data.actions() != num_actions ||
      pi_ref.prompts() != num_prompts || pi_ref.actions() != num_actions) {
    throw std::invalid_argument("TabularEnv: policy shape mismatch");
  }
  if (!(r_max > 0.0)) throw std::invalid_argument("TabularEnv: r_max must be positive");
  if (const auto* fixed = std::get_if<FixedReward>(&reward_spec)) {
    if (fixed->values.rows() != num_prompts || fixed->values.cols() != num_actions)
      throw std::invalid_argument("TabularEnv: reward table shape mismatch");
    for (double v : fixed->values.data()) {
      if (!(v >= 0.0 && v <= r_max))
        throw std::invalid_argument("TabularEnv: fixed reward outside [0, r_max]");
    }
  } else {
    const auto& g = std::get<GaussianReward>(reward_spec);
    if (g.means.rows() != num_prompts || g.means.cols() != num_actions ||
        g.variances.rows() != num_prompts || g.variances.cols() != num_actions)
      throw std::invalid_argument("TabularEnv: Gaussian reward shape mismatch");
    for (double v : g.variances.data()) {
      if (!(v >= 0.0)) throw std::invalid_argument("TabularEnv: negative variance");
    }
    for (double v : g.means.data()) {
      if (!std::isfinite(v)) throw std::invalid_argument("TabularEnv: non-finite mean");
    }
  }
}

RewardTable TabularEnv::mean_reward() const {
  if (const auto* fixed = std::get_if<FixedReward>(&reward_spec)) {
    return RewardTable(fixed->values);
  }
  return RewardTable(std::get<GaussianReward>(reward_spec).means);
}

std::uint64_t TabularEnv::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << num_prompts << ' ' << num_actions << ' ' << r_max << '\n';
  for (double v : nu0) os << v << ' ';
  for (double v : pi_data.probs().data()) os << v << ' ';
  for (double v : pi_ref.probs().data()) os << v << ' ';
  if (const auto* fixed = std::get_if<FixedReward>(&reward_spec)) {
    os << "fixed ";
    for (double v : fixed->values.data()) os << v << ' ';
  } else {
    const auto& g = std::get<GaussianReward>(reward_spec);
    os << "gaussian ";
    for (double v : g.means.data()) os << v << ' ';
    for (double v : g.variances.data()) os << v << ' ';
  }
  return fnv1a64(os.str());
}

void HyperParams::validate() const {
  if (!(beta >= 0.0)) throw std::invalid_argument("HyperParams: beta must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("HyperParams: delta in (0,1)");
  if (!(gamma_count >= 0.0)) throw std::invalid_argument("HyperParams: gamma_count >= 0");
  if (ensemble_size < 1) throw std::invalid_argument("HyperParams: L >= 1");
  if (!(eta >= 0.0)) throw std::invalid_argument("HyperParams: eta >= 0");
  if (!(lambda_sft >= 0.0)) throw std::invalid_argument("HyperParams: lambda_sft >= 0");
  if (!(chi2_gamma > 0.0)) throw std::invalid_argument("HyperParams: chi2_gamma > 0");
  if (!(b_scale >= 0.0)) throw std::invalid_argument("HyperParams: b_scale >= 0");
}

double HyperParams::b_for(double r_max) const {
  return b_scale > 0.0 ? b_scale : 6.0 * std::exp(3.0 * r_max);
}

double HyperParams::b_effective(bool theoretical, double r_max) const {
  if (b_scale > 0.0) return b_scale;
  return theoretical ? 6.0 * std::exp(3.0 * r_max) : 1.0;
}

HyperParams HyperParams::theoretical(const TabularEnv& env, double beta, double delta) {
  HyperParams hp;
  hp.beta = beta;
  hp.delta = delta;
  hp.b_scale = 6.0 * std::exp(3.0 * env.r_max);
  const double raw =
      3.5 * std::log(static_cast<double>(env.num_prompts) * env.num_actions / delta);
  hp.ensemble_size = std::max(1, static_cast<int>(std::ceil(raw)));
  hp.validate();
  return hp;
}

}  // namespace pepo
