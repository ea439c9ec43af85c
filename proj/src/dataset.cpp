#include "pepo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pepo/bt.hpp"
#include "pepo/rng.hpp"

namespace pepo {

PreferenceDataset generate_dataset(const TabularEnv& env, std::int64_t n,
                                   std::uint64_t seed, LabelRule rule) {
  if (n < 0) throw std::invalid_argument("generate_dataset: n must be >= 0");
  PreferenceDataset out;
  out.seed = seed;
  out.triples.reserve(static_cast<size_t>(n));
  Rng rng(seed);
  const auto* gaussian = std::get_if<GaussianReward>(&env.reward_spec);
  const RewardTable means = env.mean_reward();
  for (std::int64_t i = 0; i < n; ++i) {
    const int x = rng.next_categorical(env.nu0);
    std::vector<double> row(env.num_actions);
    for (int a = 0; a < env.num_actions; ++a) row[a] = env.pi_data(x, a);
    const int a = rng.next_categorical(row);
    const int b = rng.next_categorical(row);
    double ra = means(x, a);
    double rb = means(x, b);
    if (gaussian) {
      ra += std::sqrt(gaussian->variances(x, a)) * rng.next_normal();
      rb += std::sqrt(gaussian->variances(x, b)) * rng.next_normal();
    }
    bool a_wins;
    if (rule == LabelRule::kBt) {
      a_wins = rng.next_bernoulli(sigma(ra - rb));
    } else {
      a_wins = ra != rb ? ra > rb : rng.next_bernoulli(0.5);
    }
    out.triples.push_back(a_wins ? Triple{x, a, b} : Triple{x, b, a});
  }
  return out;
}

CountTables build_counts(const PreferenceDataset& data, const TabularEnv& env) {
  CountTables c;
  c.n_xab = PairCountGrid(env.num_prompts, env.num_actions, 0);
  c.n_win = PairCountGrid(env.num_prompts, env.num_actions, 0);
  c.n_xa = CountGrid(env.num_prompts, env.num_actions, 0);
  c.n_x.assign(env.num_prompts, 0);
  for (const Triple& t : data.triples) {
    c.n_win(t.prompt, t.winner, t.loser) += 1;
    // Symmetric count sums the indicators of both orderings, so an identical-
    // response comparison (a, a) contributes 2 to n_xab(x, a, a).
    c.n_xab(t.prompt, t.winner, t.loser) += 1;
    c.n_xab(t.prompt, t.loser, t.winner) += 1;
    c.n_xa(t.prompt, t.winner) += 1;
    c.n_xa(t.prompt, t.loser) += 1;
    c.n_x[t.prompt] += 1;
  }
  c.total = data.size();
  return c;
}

std::vector<PreferenceDataset> partition(const PreferenceDataset& data, int l,
                                         std::uint64_t seed) {
  if (l < 1) throw std::invalid_argument("partition: l must be >= 1");
  std::vector<PreferenceDataset> shards(l);
  for (int k = 0; k < l; ++k) shards[k].seed = child_seed(seed, "shard", k);

  // Multiplicity of each ordered triple, grouped so the two orderings of a
  // pair occupy consecutive cycle positions; that keeps the ordered, the
  // symmetric and the total per-shard counts all within floor/ceil of m/L.
  std::map<std::tuple<int, int, int>, std::int64_t> ordered;
  for (const Triple& t : data.triples) ordered[{t.prompt, t.winner, t.loser}] += 1;

  Rng rng(child_seed(seed, "partition-order"));
  const std::vector<int> order = rng.next_permutation(l);

  std::int64_t cursor = 0;
  auto deal = [&](int x, int w, int lo) {
    const auto it = ordered.find({x, w, lo});
    if (it == ordered.end()) return;
    for (std::int64_t i = 0; i < it->second; ++i) {
      shards[order[cursor % l]].triples.push_back(Triple{x, w, lo});
      ++cursor;
    }
  };
  std::map<std::tuple<int, int, int>, bool> seen_pair;
  for (const auto& [key, m] : ordered) {
    const auto [x, w, lo] = key;
    const auto pair_key = std::make_tuple(x, std::min(w, lo), std::max(w, lo));
    if (seen_pair[pair_key]) continue;
    seen_pair[pair_key] = true;
    deal(x, std::get<1>(pair_key), std::get<2>(pair_key));
    if (w != lo) deal(x, std::get<2>(pair_key), std::get<1>(pair_key));
  }
  return shards;
}

PreferenceDataset shard_complement(const PreferenceDataset& full,
                                   const PreferenceDataset& shard) {
  std::map<std::tuple<int, int, int>, std::int64_t> remove;
  for (const Triple& t : shard.triples) remove[{t.prompt, t.winner, t.loser}] += 1;
  PreferenceDataset out;
  out.seed = full.seed;
  for (const Triple& t : full.triples) {
    auto it = remove.find({t.prompt, t.winner, t.loser});
    if (it != remove.end() && it->second > 0) {
      it->second -= 1;
      continue;
    }
    out.triples.push_back(t);
  }
  return out;
}

void save_dataset(const PreferenceDataset& data, const TabularEnv& env,
                  const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  os << "# pepo-dataset v1\n";
  os << "# env_hash " << std::hex << env.hash() << std::dec << "\n";
  os << "# seed " << data.seed << "\n";
  os << "# n " << data.size() << "\n";
  for (const Triple& t : data.triples) {
    os << t.prompt << '\t' << t.winner << '\t' << t.loser << '\n';
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for " + path);
}

PreferenceDataset load_dataset(const std::string& path, std::uint64_t* env_hash_out) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  PreferenceDataset out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "seed") hs >> out.seed;
      if (key == "env_hash" && env_hash_out) hs >> std::hex >> *env_hash_out;
      continue;
    }
    std::istringstream ls(line);
    Triple t{};
    if (!(ls >> t.prompt >> t.winner >> t.loser))
      throw std::runtime_error("load_dataset: malformed line: " + line);
    out.triples.push_back(t);
  }
  return out;
}

}  // namespace pepo
