#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pepo/env.hpp"
#include "pepo/table.hpp"

namespace pepo {

// Winner sampling rule for Gaussian rewards: draw per-comparison reward
// realizations, then either label via Bernoulli(sigma(gap)) or declare the
// larger realization the winner.
enum class LabelRule { kBt, kArgmax };

struct Triple {
  int prompt;
  int winner;
  int loser;
  bool operator==(const Triple&) const = default;
};

struct PreferenceDataset {
  std::vector<Triple> triples;
  std::uint64_t seed = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(triples.size()); }
};

// Exact tallies over a dataset. All four tables stay mutually consistent:
// n_xab(x,a,b) = n_win(x,a,b) + n_win(x,b,a), n_xab symmetric.
struct CountTables {
  PairCountGrid n_xab;  // symmetric pair count N(x,a,b)
  PairCountGrid n_win;  // ordered win count N(x, a > b)
  CountGrid n_xa;       // appearances of a as a recorded response at x
  std::vector<std::int64_t> n_x;  // prompt count N(x)
  std::int64_t total = 0;
};

// Draw n labeled comparisons: X ~ nu0, A,B ~ pi_data iid, rewards realized
// per the env's spec (fresh Gaussian draws per comparison), winner per rule.
// Deterministic given the seed. Identical responses are kept and labeled
// uniformly.
PreferenceDataset generate_dataset(const TabularEnv& env, std::int64_t n,
                                   std::uint64_t seed,
                                   LabelRule rule = LabelRule::kBt);

CountTables build_counts(const PreferenceDataset& data, const TabularEnv& env);

// Split into L shards so that every ordered triple value with multiplicity m
// lands floor(m/L) or ceil(m/L) times in each shard, and the same holds for
// the symmetric pair multiplicities and the overall sizes. Occurrences are
// dealt cyclically over a seeded shuffle of the shard order, continuing the
// cycle position across triple groups.
std::vector<PreferenceDataset> partition(const PreferenceDataset& data, int l,
                                         std::uint64_t seed);

// Complement D \ D_l as a multiset; used for the centered log-ratio offsets.
PreferenceDataset shard_complement(const PreferenceDataset& full,
                                   const PreferenceDataset& shard);

// Line-oriented text format "x<TAB>winner<TAB>loser" with a header carrying
// the env hash and seed.
void save_dataset(const PreferenceDataset& data, const TabularEnv& env,
                  const std::string& path);
PreferenceDataset load_dataset(const std::string& path,
                               std::uint64_t* env_hash_out = nullptr);

}  // namespace pepo
