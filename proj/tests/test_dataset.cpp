#include <algorithm>
#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "pepo/bt.hpp"
#include "pepo/dataset.hpp"
#include "pepo/rng.hpp"

using namespace pepo;

namespace {

TabularEnv fixed_env(std::vector<double> rewards, std::vector<double> data_row) {
  const int actions = static_cast<int>(rewards.size());
  Table r(1, actions);
  for (int a = 0; a < actions; ++a) r(0, a) = rewards[a];
  Table d(1, actions);
  for (int a = 0; a < actions; ++a) d(0, a) = data_row[a];
  return TabularEnv(1, actions, {1.0}, TabularPolicy(d), TabularPolicy::uniform(1, actions),
                    FixedReward{r}, 3.0);
}

TabularEnv gaussian_two_arm() {
  Table means(1, 2), vars(1, 2);
  means(0, 0) = 1.0;
  means(0, 1) = 1.5;
  vars(0, 0) = 1.5;
  vars(0, 1) = 0.5;
  return TabularEnv(1, 2, {1.0}, TabularPolicy::uniform(1, 2), TabularPolicy::uniform(1, 2),
                    GaussianReward{means, vars}, 3.0);
}

}  // namespace

TEST_CASE("generate_dataset basics") {
  const TabularEnv env = fixed_env({1.0, 1.0}, {0.5, 0.5});
  CHECK(generate_dataset(env, 0, 1).triples.empty());

  const PreferenceDataset a = generate_dataset(env, 500, 42);
  const PreferenceDataset b = generate_dataset(env, 500, 42);
  CHECK(a.triples == b.triples);
  const PreferenceDataset c = generate_dataset(env, 500, 43);
  CHECK(a.triples != c.triples);
}

TEST_CASE("equal fixed rewards give ~50% wins") {
  const TabularEnv env = fixed_env({1.0, 1.0}, {0.5, 0.5});
  const PreferenceDataset data = generate_dataset(env, 10000, 7);
  const CountTables counts = build_counts(data, env);
  const double wins01 = static_cast<double>(counts.n_win(0, 0, 1));
  const double pair01 = static_cast<double>(counts.n_xab(0, 0, 1));
  CHECK(pair01 > 100);
  CHECK(std::abs(wins01 / pair01 - 0.5) < 0.02);
}

TEST_CASE("fixed-reward win rates match the BT probabilities") {
  const TabularEnv env = fixed_env({0.5, 1.4, 0.2}, {0.4, 0.3, 0.3});
  const Table r = env.mean_reward().values();
  const PreferenceDataset data = generate_dataset(env, 20000, 11);
  const CountTables counts = build_counts(data, env);
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const double n = static_cast<double>(counts.n_xab(0, a, b));
      if (n < 100) continue;
      const double p = bt_win_prob(r, 0, a, b);
      const double empirical = static_cast<double>(counts.n_win(0, a, b)) / n;
      CHECK(std::abs(empirical - p) <= 4.0 * std::sqrt(p * (1.0 - p) / n));
    }
  }
}

TEST_CASE("gaussian labeling matches the marginal win probability") {
  // independent Monte Carlo oracle for E[sigma(G)], G ~ N(0.5, 2.0)
  Rng oracle_rng(12345);
  double oracle = 0.0;
  const int oracle_n = 1000000;
  for (int i = 0; i < oracle_n; ++i) {
    oracle += sigma(0.5 + std::sqrt(2.0) * oracle_rng.next_normal());
  }
  oracle /= oracle_n;

  const TabularEnv env = gaussian_two_arm();
  const PreferenceDataset data = generate_dataset(env, 40000, 21);
  const CountTables counts = build_counts(data, env);
  const double n = static_cast<double>(counts.n_xab(0, 1, 0));
  const double empirical = static_cast<double>(counts.n_win(0, 1, 0)) / n;
  CHECK(std::abs(empirical - oracle) < 0.02);
}

TEST_CASE("argmax labeling uses the realizations directly") {
  const TabularEnv env = gaussian_two_arm();
  const PreferenceDataset data = generate_dataset(env, 40000, 22, LabelRule::kArgmax);
  const CountTables counts = build_counts(data, env);
  // P(G > 0), G ~ N(0.5, 2.0)
  const double expected = 0.5 * std::erfc(-0.5 / std::sqrt(2.0) / std::sqrt(2.0));
  const double n = static_cast<double>(counts.n_xab(0, 1, 0));
  const double empirical = static_cast<double>(counts.n_win(0, 1, 0)) / n;
  CHECK(std::abs(empirical - expected) < 0.02);
}

TEST_CASE("build_counts tallies") {
  const TabularEnv env = fixed_env({1.0, 1.0, 1.0}, {0.4, 0.3, 0.3});
  PreferenceDataset data;
  data.triples = {{0, 0, 1}, {0, 1, 0}, {0, 0, 1}};
  const CountTables c = build_counts(data, env);
  CHECK(c.n_win(0, 0, 1) == 2);
  CHECK(c.n_win(0, 1, 0) == 1);
  CHECK(c.n_xab(0, 0, 1) == 3);
  CHECK(c.n_xab(0, 1, 0) == 3);
  CHECK(c.n_xa(0, 0) == 3);
  CHECK(c.n_xa(0, 1) == 3);
  CHECK(c.n_x[0] == 3);

  CHECK(build_counts(PreferenceDataset{}, env).total == 0);

  // identical-response comparisons count twice in the symmetric table
  PreferenceDataset self;
  self.triples = {{0, 2, 2}};
  const CountTables cs = build_counts(self, env);
  CHECK(cs.n_xab(0, 2, 2) == 2);
  CHECK(cs.n_xa(0, 2) == 2);
}

TEST_CASE("counts conservation on random data") {
  const TabularEnv env = fixed_env({0.3, 1.0, 2.0}, {0.2, 0.5, 0.3});
  const PreferenceDataset data = generate_dataset(env, 3000, 5);
  const CountTables c = build_counts(data, env);
  std::int64_t total = 0;
  for (const auto v : c.n_x) total += v;
  CHECK(total == data.size());
  std::int64_t win_total = 0;
  for (const auto v : c.n_win.data()) win_total += v;
  CHECK(win_total == data.size());
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (a == b) {
        CHECK(c.n_xab(0, a, a) == 2 * c.n_win(0, a, a));
      } else {
        CHECK(c.n_xab(0, a, b) == c.n_win(0, a, b) + c.n_win(0, b, a));
        CHECK(c.n_xab(0, a, b) == c.n_xab(0, b, a));
      }
    }
  }
}

TEST_CASE("partition splits evenly") {
  const TabularEnv env = fixed_env({1.0, 1.0, 1.0}, {0.4, 0.3, 0.3});

  // L = 1 returns the input as one shard
  PreferenceDataset ten;
  for (int i = 0; i < 10; ++i) ten.triples.push_back({0, i % 3, (i + 1) % 3});
  const auto single = partition(ten, 1, 3);
  CHECK(single.size() == 1);
  CHECK(build_counts(single[0], env).n_win == build_counts(ten, env).n_win);

  // 10 distinct triple values over 3 shards: sizes {4,3,3}
  PreferenceDataset distinct10;
  for (int i = 0; i < 10; ++i) distinct10.triples.push_back({i, 0, 1});
  auto shards = partition(distinct10, 3, 17);
  std::vector<size_t> sizes;
  for (const auto& s : shards) sizes.push_back(s.triples.size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<size_t>{3, 3, 4});

  // one triple repeated 7 times over 3 shards: counts {3,2,2}
  PreferenceDataset rep;
  for (int i = 0; i < 7; ++i) rep.triples.push_back({0, 1, 2});
  shards = partition(rep, 3, 9);
  sizes.clear();
  for (const auto& s : shards) sizes.push_back(s.triples.size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<size_t>{2, 2, 3});
}

TEST_CASE("partition reconstruction and per-shard bounds") {
  const TabularEnv env = fixed_env({0.3, 1.0, 2.0}, {0.2, 0.5, 0.3});
  const PreferenceDataset data = generate_dataset(env, 2377, 31);
  const CountTables full = build_counts(data, env);
  for (int l : {1, 2, 3, 5}) {
    const auto shards = partition(data, l, 77);
    CHECK(static_cast<int>(shards.size()) == l);

    PreferenceDataset together;
    std::int64_t total = 0;
    for (const auto& s : shards) {
      total += s.size();
      for (const auto& t : s.triples) together.triples.push_back(t);
    }
    CHECK(total == data.size());
    CHECK(build_counts(together, env).n_win == full.n_win);
    CHECK(build_counts(together, env).n_xab == full.n_xab);

    // |N_l(x,a,b) - N(x,a,b)/L| <= 1 for distinct pairs; identical-response
    // pairs obey the bound at triple granularity (their symmetric counts
    // move in steps of 2)
    for (const auto& s : shards) {
      const CountTables sc = build_counts(s, env);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          if (a == b) {
            const double m = static_cast<double>(full.n_xab(0, a, a)) / 2.0;
            const double ms = static_cast<double>(sc.n_xab(0, a, a)) / 2.0;
            CHECK(std::abs(ms - m / l) <= 1.0 + 1e-9);
          } else {
            const double expect = static_cast<double>(full.n_xab(0, a, b)) / l;
            CHECK(std::abs(static_cast<double>(sc.n_xab(0, a, b)) - expect) <= 1.0 + 1e-9);
          }
          const double expect_win = static_cast<double>(full.n_win(0, a, b)) / l;
          CHECK(std::abs(static_cast<double>(sc.n_win(0, a, b)) - expect_win) <=
                1.0 + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("shard complement") {
  const TabularEnv env = fixed_env({0.3, 1.0, 2.0}, {0.2, 0.5, 0.3});
  const PreferenceDataset data = generate_dataset(env, 500, 3);
  const auto shards = partition(data, 3, 5);
  const PreferenceDataset comp = shard_complement(data, shards[1]);
  CHECK(comp.size() == data.size() - shards[1].size());
  const CountTables full = build_counts(data, env);
  const CountTables a = build_counts(shards[1], env);
  const CountTables b = build_counts(comp, env);
  for (size_t i = 0; i < full.n_win.data().size(); ++i) {
    CHECK(a.n_win.data()[i] + b.n_win.data()[i] == full.n_win.data()[i]);
  }
}

TEST_CASE("dataset save/load round trip") {
  const TabularEnv env = fixed_env({0.3, 1.0, 2.0}, {0.2, 0.5, 0.3});
  const PreferenceDataset data = generate_dataset(env, 200, 77);
  const auto path = std::filesystem::temp_directory_path() / "pepo_test_dataset.tsv";
  save_dataset(data, env, path.string());
  std::uint64_t env_hash = 0;
  const PreferenceDataset loaded = load_dataset(path.string(), &env_hash);
  CHECK(loaded.triples == data.triples);
  CHECK(loaded.seed == data.seed);
  CHECK(env_hash == env.hash());
  std::filesystem::remove(path);
}
