#include "pepo/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "pepo/tabular_ops.hpp"

namespace pepo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kClosedFormTol = 1e-10;
}  // namespace

Table tie_upper_bound(const CountTables& counts, const HyperParams& hp,
                      const TabularEnv& env, TieBoundMode mode, double alpha) {
  Table p(env.num_prompts, env.num_actions, 0.0);
  if (mode == TieBoundMode::kConstant) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("tie_upper_bound: alpha must be in [0,1]");
    for (double& v : p.data()) v = alpha;
    return p;
  }
  if (!(hp.delta > 0.0 && hp.delta < 1.0))
    throw std::invalid_argument("tie_upper_bound: delta must be in (0,1)");
  const double n_total = static_cast<double>(counts.total);
  const double xa = static_cast<double>(env.num_prompts) * env.num_actions;
  const double log_term = std::log(std::max(n_total * n_total * xa / hp.delta, 1.0));
  const double numerator =
      9.0 * hp.ensemble_size * env.num_actions * std::exp(env.r_max) * log_term;
  for (int x = 0; x < env.num_prompts; ++x) {
    for (int a = 0; a < env.num_actions; ++a) {
      const double n_xa = static_cast<double>(counts.n_xa(x, a));
      p(x, a) = std::min(1.0, numerator / (n_xa + hp.gamma_count));
    }
  }
  return p;
}

RewardTable worst_case_reward(const std::vector<MemberFit>& members,
                              const TabularEnv& env, double beta,
                              const Table& p_tie_bar, double b_scale, bool centering) {
  if (members.empty()) throw std::invalid_argument("worst_case_reward: empty ensemble");
  Table r(env.num_prompts, env.num_actions, kInf);
  for (const MemberFit& m : members) {
    const Table u = m.implicit_reward(env.pi_ref);
    for (int x = 0; x < env.num_prompts; ++x) {
      const double shift = centering ? beta * m.zeta_at(x) : 0.0;
      for (int a = 0; a < env.num_actions; ++a) {
        r(x, a) = std::min(r(x, a), u(x, a) - shift);
      }
    }
  }
  for (int x = 0; x < env.num_prompts; ++x) {
    for (int a = 0; a < env.num_actions; ++a) {
      r(x, a) -= b_scale * p_tie_bar(x, a);
    }
  }
  return RewardTable(std::move(r));
}

PessimisticAggregate output_policy(std::vector<MemberFit> members,
                                   const TabularEnv& env, double beta,
                                   Table p_tie_bar, double b_scale, bool centering,
                                   Aggregator aggregator, double eta) {
  if (members.empty()) throw std::invalid_argument("output_policy: empty ensemble");
  if (!(beta > 0.0)) throw std::invalid_argument("output_policy: beta must be positive");
  for (double v : p_tie_bar.data()) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("output_policy: p_tie_bar outside [0,1]");
  }
  PessimisticAggregate agg;
  agg.p_tie_bar = std::move(p_tie_bar);
  agg.b_scale = b_scale;
  agg.beta = beta;
  agg.centering = centering;
  agg.aggregator = aggregator;

  const int prompts = env.num_prompts, actions = env.num_actions;
  agg.u_min = Table(prompts, actions, kInf);
  agg.u_max = Table(prompts, actions, -kInf);
  // log f_out via log pi rather than pi itself, so tiny policy entries keep
  // their exact log-ratio.
  Table log_f(prompts, actions, kInf);
  for (const MemberFit& m : members) {
    const Table u = m.implicit_reward(env.pi_ref);
    for (int x = 0; x < prompts; ++x) {
      const double zeta = centering ? m.zeta_at(x) : 0.0;
      for (int a = 0; a < actions; ++a) {
        const double centered = u(x, a) - beta * zeta;
        agg.u_min(x, a) = std::min(agg.u_min(x, a), centered);
        agg.u_max(x, a) = std::max(agg.u_max(x, a), centered);
        const double ref = env.pi_ref(x, a);
        const double log_pi = ref > 0.0 ? std::log(ref) + u(x, a) / beta : -kInf;
        log_f(x, a) = std::min(log_f(x, a), log_pi - zeta);
      }
    }
  }
  agg.members = std::move(members);

  Table f(prompts, actions, 0.0);
  Table pi(prompts, actions, 0.0);
  if (aggregator == Aggregator::kMin) {
    // normalize each row in log space: extreme pessimism terms can underflow
    // f_out itself while pi_out stays exact
    for (int x = 0; x < prompts; ++x) {
      double mx = -kInf;
      for (int a = 0; a < actions; ++a) {
        log_f(x, a) -= b_scale * agg.p_tie_bar(x, a) / beta;
        mx = std::max(mx, log_f(x, a));
        f(x, a) = log_f(x, a) == -kInf ? 0.0 : std::exp(log_f(x, a));
      }
      if (mx == -kInf) {
        throw std::domain_error("output_policy: all-zero numerator row at prompt " +
                                std::to_string(x));
      }
      double z = 0.0;
      for (int a = 0; a < actions; ++a) {
        pi(x, a) = log_f(x, a) == -kInf ? 0.0 : std::exp(log_f(x, a) - mx);
        z += pi(x, a);
      }
      for (int a = 0; a < actions; ++a) pi(x, a) /= z;
    }
  } else {
    f = mean_std_numerator(agg.members, env, eta, agg.p_tie_bar, b_scale, beta);
    for (int x = 0; x < prompts; ++x) {
      double z = 0.0;
      for (int a = 0; a < actions; ++a) z += f(x, a);
      if (!(z > 0.0)) {
        throw std::domain_error("output_policy: all-zero numerator row at prompt " +
                                std::to_string(x));
      }
      for (int a = 0; a < actions; ++a) pi(x, a) = f(x, a) / z;
    }
  }

  agg.f_out = std::move(f);
  agg.pi_out = TabularPolicy(std::move(pi));
  agg.r_minus = worst_case_reward(agg.members, env, beta, agg.p_tie_bar, b_scale, centering);

  // Closed-form equivalence: the normalized-min construction must match the
  // softmax of the worst-case reward. The tolerance grows with the magnitude
  // of the exponents involved (rounding granularity of b_scale * p_bar / beta
  // dominates once it is astronomically large).
  if (aggregator == Aggregator::kMin) {
    double exponent_scale = 1.0;
    for (int x = 0; x < prompts; ++x) {
      for (int a = 0; a < actions; ++a) {
        exponent_scale =
            std::max(exponent_scale, std::abs(b_scale * agg.p_tie_bar(x, a) / beta));
      }
    }
    const double tol = std::max(kClosedFormTol, exponent_scale * 0x1p-52 * 1024.0);
    const TabularPolicy via_softmax = softmax_policy(agg.r_minus, env.pi_ref, beta);
    for (int x = 0; x < prompts; ++x) {
      for (int a = 0; a < actions; ++a) {
        if (std::abs(via_softmax(x, a) - agg.pi_out(x, a)) > tol) {
          throw std::logic_error("output_policy: closed-form equivalence violated");
        }
      }
    }
  }
  return agg;
}

int ensemble_size(int num_prompts, int num_actions, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("ensemble_size: delta must be in (0,1)");
  const double raw =
      3.5 * std::log(static_cast<double>(num_prompts) * num_actions / delta);
  return std::max(1, static_cast<int>(std::ceil(raw)));
}

Table mean_std_numerator(const std::vector<MemberFit>& members, const TabularEnv& env,
                         double eta, const Table& p_tie_bar, double b_scale,
                         double beta) {
  if (members.empty()) throw std::invalid_argument("mean_std_numerator: empty ensemble");
  if (!(eta >= 0.0)) throw std::invalid_argument("mean_std_numerator: eta must be >= 0");
  const int prompts = env.num_prompts, actions = env.num_actions;
  const size_t l = members.size();
  std::vector<TabularPolicy> policies;
  policies.reserve(l);
  for (const MemberFit& m : members) policies.push_back(m.policy(env.pi_ref));
  Table f(prompts, actions, 0.0);
  for (int x = 0; x < prompts; ++x) {
    for (int a = 0; a < actions; ++a) {
      double mean = 0.0;
      for (const auto& p : policies) mean += p(x, a);
      mean /= static_cast<double>(l);
      double var = 0.0;
      if (l > 1) {
        for (const auto& p : policies) {
          const double d = p(x, a) - mean;
          var += d * d;
        }
        var /= static_cast<double>(l - 1);
      }
      const double base = std::max(0.0, mean - eta * std::sqrt(var));
      f(x, a) = base * std::exp(-b_scale * p_tie_bar(x, a) / beta);
    }
  }
  return f;
}

void FactoredPolicySet::validate() const {
  if (horizon < 1 || alphabet < 1)
    throw std::invalid_argument("FactoredPolicySet: bad shape");
  auto check_stages = [&](const std::vector<Table>& stages) {
    if (static_cast<int>(stages.size()) != horizon)
      throw std::invalid_argument("FactoredPolicySet: stage count mismatch");
    std::int64_t histories = 1;
    for (int h = 0; h < horizon; ++h) {
      if (stages[h].rows() != histories || stages[h].cols() != alphabet)
        throw std::invalid_argument("FactoredPolicySet: stage table shape mismatch");
      for (int r = 0; r < stages[h].rows(); ++r) {
        double s = 0.0;
        for (int c = 0; c < alphabet; ++c) {
          if (!(stages[h](r, c) >= 0.0))
            throw std::invalid_argument("FactoredPolicySet: negative conditional");
          s += stages[h](r, c);
        }
        if (std::abs(s - 1.0) > 1e-9)
          throw std::invalid_argument("FactoredPolicySet: conditional row not normalized");
      }
      histories *= alphabet;
    }
  };
  check_stages(ref_stages);
  for (const auto& m : member_stages) check_stages(m);
}

std::vector<Table> token_level_output(const FactoredPolicySet& fps) {
  fps.validate();
  if (fps.member_stages.empty())
    throw std::invalid_argument("token_level_output: empty ensemble");
  std::vector<Table> out;
  out.reserve(fps.horizon);
  for (int h = 0; h < fps.horizon; ++h) {
    const int histories = fps.member_stages[0][h].rows();
    Table stage(histories, fps.alphabet, 0.0);
    for (int r = 0; r < histories; ++r) {
      double z = 0.0;
      for (int c = 0; c < fps.alphabet; ++c) {
        double mn = kInf;
        for (const auto& m : fps.member_stages) mn = std::min(mn, m[h](r, c));
        stage(r, c) = mn;
        z += mn;
      }
      if (!(z > 0.0))
        throw std::domain_error("token_level_output: all-zero row at stage " +
                                std::to_string(h));
      for (int c = 0; c < fps.alphabet; ++c) stage(r, c) /= z;
    }
    out.push_back(std::move(stage));
  }
  return out;
}

void save_aggregate(const PessimisticAggregate& agg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_aggregate: cannot open " + path);
  os.precision(17);
  os << "# pepo-aggregate v1\n";
  os << "# beta " << agg.beta << "\n";
  os << "# b_scale " << agg.b_scale << "\n";
  os << "# centering " << (agg.centering ? 1 : 0) << "\n";
  os << "# l " << agg.members.size() << "\n";
  os << "# columns x a f_out pi_out p_tie_bar r_minus u_min u_max\n";
  for (int x = 0; x < agg.f_out.rows(); ++x) {
    for (int a = 0; a < agg.f_out.cols(); ++a) {
      os << x << '\t' << a << '\t' << agg.f_out(x, a) << '\t' << agg.pi_out(x, a) << '\t'
         << agg.p_tie_bar(x, a) << '\t' << agg.r_minus(x, a) << '\t' << agg.u_min(x, a)
         << '\t' << agg.u_max(x, a) << '\n';
    }
  }
  if (!os) throw std::runtime_error("save_aggregate: write failed for " + path);
}

PessimisticAggregate load_aggregate(const std::string& path, const TabularEnv& env) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_aggregate: cannot open " + path);
  PessimisticAggregate agg;
  const int prompts = env.num_prompts, actions = env.num_actions;
  agg.f_out = Table(prompts, actions, 0.0);
  agg.p_tie_bar = Table(prompts, actions, 0.0);
  agg.u_min = Table(prompts, actions, 0.0);
  agg.u_max = Table(prompts, actions, 0.0);
  Table pi(prompts, actions, 0.0);
  Table r(prompts, actions, 0.0);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "beta") hs >> agg.beta;
      if (key == "b_scale") hs >> agg.b_scale;
      if (key == "centering") {
        int c;
        hs >> c;
        agg.centering = c != 0;
      }
      continue;
    }
    std::istringstream ls(line);
    int x, a;
    double f, p, pt, rm, umin, umax;
    if (!(ls >> x >> a >> f >> p >> pt >> rm >> umin >> umax))
      throw std::runtime_error("load_aggregate: malformed line: " + line);
    agg.f_out(x, a) = f;
    pi(x, a) = p;
    agg.p_tie_bar(x, a) = pt;
    r(x, a) = rm;
    agg.u_min(x, a) = umin;
    agg.u_max(x, a) = umax;
  }
  agg.pi_out = TabularPolicy(std::move(pi));
  agg.r_minus = RewardTable(std::move(r));
  return agg;
}

}  // namespace pepo
