#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pepo {

// splitmix64; used both as the generator's state scrambler and for deriving
// child seeds from (master seed, tag, indices).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over bytes; used for env/shard content hashes in file headers.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic seed-splitting: children are independent streams keyed by a
// tag string and up to three indices. Same inputs, same child seed, always.
inline std::uint64_t child_seed(std::uint64_t master, std::string_view tag,
                                std::uint64_t k0 = 0, std::uint64_t k1 = 0,
                                std::uint64_t k2 = 0) {
  std::uint64_t state = master ^ fnv1a64(tag);
  splitmix64(state);
  state ^= k0;
  splitmix64(state);
  state ^= k1;
  splitmix64(state);
  state ^= k2;
  return splitmix64(state);
}

// xoshiro256** generator with hand-rolled double/normal/categorical sampling
// so streams do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller (no cached spare, to keep call sites
  // stream-position independent)
  double next_normal() {
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // index sampled proportionally to probs (assumed nonnegative, summing ~1)
  int next_categorical(std::span<const double> probs) {
    const double u = next_double();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Fisher-Yates permutation of 0..n-1
  std::vector<int> next_permutation(int n) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[i], perm[j]);
    }
    return perm;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace pepo
