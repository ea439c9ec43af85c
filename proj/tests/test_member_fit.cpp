#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "pepo/bt.hpp"
#include "pepo/member_fit.hpp"
#include "pepo/rng.hpp"
#include "pepo/tabular_ops.hpp"

using namespace pepo;

namespace {

TabularEnv pair_env(int actions = 2, double r_max = 2.0) {
  return TabularEnv(1, actions, {1.0}, TabularPolicy::uniform(1, actions),
                    TabularPolicy::uniform(1, actions),
                    FixedReward{Table(1, actions, 1.0)}, r_max);
}

PreferenceDataset counts_dataset(int wins_a, int wins_b, int a = 0, int b = 1) {
  PreferenceDataset d;
  for (int i = 0; i < wins_a; ++i) d.triples.push_back({0, a, b});
  for (int i = 0; i < wins_b; ++i) d.triples.push_back({0, b, a});
  return d;
}

// stationarity oracle for a single pair with counts (n1, n2):
// sinh(t) = c (2 cosh(t) + lambda), c = (n1 - n2) / (2 (n1 + n2)), gap = 2t
double pair_gap_oracle(double n1, double n2, double lambda) {
  const double c = (n1 - n2) / (2.0 * (n1 + n2));
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double t = 0.5 * (lo + hi);
    if (std::sinh(t) - c * (2.0 * std::cosh(t) + lambda) < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
  }
  return lo + hi;  // 2t
}

}  // namespace

TEST_CASE("lambda_schedule") {
  const TabularEnv env = pair_env();
  PreferenceDataset d = counts_dataset(5, 3);
  const CountTables counts = build_counts(d, env);
  const PairGrid<double> lambda = lambda_schedule(counts, 2.0);
  CHECK(lambda(0, 0, 1) == doctest::Approx(4.0 * std::exp(1.0) / 10.0).epsilon(1e-12));
  CHECK(lambda(0, 0, 1) == doctest::Approx(lambda(0, 1, 0)).epsilon(1e-15));

  // unseen pairs get the count-0 value 4 e^{r_max/2} / 2
  const TabularEnv env3 = pair_env(3);
  const PairGrid<double> l3 = lambda_schedule(build_counts(d, env3), 2.0);
  CHECK(l3(0, 0, 2) == doctest::Approx(2.0 * std::exp(1.0)).epsilon(1e-12));
  CHECK(l3(0, 0, 2) == doctest::Approx(5.43656365691809).epsilon(1e-10));
}

TEST_CASE("pess_dpo_loss values") {
  const TabularEnv env = pair_env();
  const Table u(1, 2, 0.0);

  PreferenceDataset empty;
  PairGrid<double> lambda1(1, 2, 1.0);
  CHECK(pess_dpo_loss(u, empty, lambda1, 1.0) == 0.0);

  PreferenceDataset one = counts_dataset(1, 0);
  CHECK(pess_dpo_loss(u, one, lambda1, 1.0) ==
        doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));

  // counts 7:3, gap log(7/3), lambda = 0: 7 log 0.7 + 3 log 0.3
  PreferenceDataset d73 = counts_dataset(7, 3);
  PairGrid<double> lambda0(1, 2, 0.0);
  Table u_gap(1, 2, 0.0);
  u_gap(0, 0) = 0.5 * std::log(7.0 / 3.0);
  u_gap(0, 1) = -0.5 * std::log(7.0 / 3.0);
  CHECK(pess_dpo_loss(u_gap, d73, lambda0, 1.0) ==
        doctest::Approx(-6.108643020548936).epsilon(1e-12));
}

TEST_CASE("pess_dpo_grad matches finite differences") {
  const TabularEnv env = pair_env(4);
  Rng rng(5);
  PreferenceDataset data;
  for (int i = 0; i < 60; ++i) {
    const int a = static_cast<int>(rng.next_u64() % 4);
    int b = static_cast<int>(rng.next_u64() % 4);
    data.triples.push_back({0, a, b});
  }
  const CountTables counts = build_counts(data, env);
  const PairGrid<double> lambda = lambda_schedule(counts, 2.0);
  Table u(1, 4);
  for (auto& v : u.data()) v = 2.0 * rng.next_double() - 1.0;

  const Table g = pess_dpo_grad(u, data, lambda);
  const double h = 1e-6;
  for (int a = 0; a < 4; ++a) {
    Table up = u, dn = u;
    up(0, a) += h;
    dn(0, a) -= h;
    const double fd =
        (pess_dpo_loss(up, data, lambda, 1.0) - pess_dpo_loss(dn, data, lambda, 1.0)) /
        (2.0 * h);
    const double denom = std::max({1.0, std::abs(fd), std::abs(g(0, a))});
    CHECK(std::abs(g(0, a) - fd) / denom < 1e-5);
  }
}

TEST_CASE("ascent fit reproduces the empirical logit at lambda = 0") {
  const TabularEnv env = pair_env();
  const PreferenceDataset d = counts_dataset(7, 3);
  PairGrid<double> lambda0(1, 2, 0.0);
  const MemberFit fit =
      fit_member_with_lambda(d, env, 1.0, lambda0, 30.0, FitMode::kAscent);
  const double gap = fit.coeffs(0, 0) - fit.coeffs(0, 1);
  CHECK(gap == doctest::Approx(std::log(7.0 / 3.0)).epsilon(1e-6));
  CHECK(fit.diag.converged);
}

TEST_CASE("symmetric counts fit a zero gap in both modes") {
  const TabularEnv env = pair_env();
  const PreferenceDataset d = counts_dataset(6, 6);
  HyperParams hp;
  hp.beta = 1.0;
  for (const FitMode mode : {FitMode::kAscent, FitMode::kClosedForm}) {
    const MemberFit fit = fit_member(d, env, hp, mode);
    CHECK(std::abs(fit.coeffs(0, 0) - fit.coeffs(0, 1)) < 1e-8);
  }
}

TEST_CASE("ascent fit with the schedule lambda matches the stationarity oracle") {
  const TabularEnv env = pair_env();  // r_max = 2
  const PreferenceDataset d = counts_dataset(7, 3);
  HyperParams hp;
  hp.beta = 1.0;
  const MemberFit fit = fit_member(d, env, hp, FitMode::kAscent);
  const double lambda = fit.lambda_table(0, 0, 1);
  CHECK(lambda == doctest::Approx(0.9060939428196817).epsilon(1e-10));
  const double gap = fit.coeffs(0, 0) - fit.coeffs(0, 1);
  CHECK(gap == doctest::Approx(pair_gap_oracle(7, 3, lambda)).epsilon(1e-7));
  CHECK(gap == doctest::Approx(1.2402155608024616).epsilon(1e-6));
}

TEST_CASE("closed-form fit blends the two pessimized-rate targets") {
  const TabularEnv env = pair_env();
  const PreferenceDataset d = counts_dataset(7, 3);
  HyperParams hp;
  hp.beta = 1.0;
  const MemberFit fit = fit_member(d, env, hp, FitMode::kClosedForm);
  const double lambda = fit.lambda_table(0, 0, 1);
  // one target per ordering, each a pessimized rate; the fitted gap is their
  // antisymmetric blend
  const double g01 = sigma_pess_inv(7.0 / 12.0, lambda);
  const double g10 = sigma_pess_inv(3.0 / 12.0, lambda);
  const double gap = fit.coeffs(0, 0) - fit.coeffs(0, 1);
  CHECK(gap == doctest::Approx(0.5 * (g01 - g10)).epsilon(1e-9));
  // each target stays a tautological upper bound for its own ordering
  CHECK(gap <= g01 + 1e-12);
  CHECK(-gap <= g10 + 1e-12);
  // anchored: mean of observed coefficients is zero
  CHECK(fit.coeffs(0, 0) + fit.coeffs(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("closed-form fit clips win-rate-zero targets to the class box") {
  const TabularEnv env = pair_env();
  const PreferenceDataset d = counts_dataset(0, 9);
  HyperParams hp;
  hp.beta = 1.0;
  const MemberFit fit = fit_member(d, env, hp, FitMode::kClosedForm);
  const double lambda = fit.lambda_table(0, 0, 1);
  // losing ordering clips at -2 r_max; winning one keeps its finite target
  const double g10 = sigma_pess_inv(9.0 / 11.0, lambda);
  const double gap = fit.coeffs(0, 0) - fit.coeffs(0, 1);
  CHECK(gap == doctest::Approx(0.5 * (-2.0 * env.r_max - g10)).epsilon(1e-9));
  CHECK(gap >= -2.0 * env.r_max - 1e-12);
}

TEST_CASE("unobserved actions keep zero coefficients; empty shard fits zero") {
  const TabularEnv env = pair_env(4);
  const PreferenceDataset d = counts_dataset(3, 2);  // only actions 0,1 observed
  HyperParams hp;
  hp.beta = 0.5;
  for (const FitMode mode : {FitMode::kAscent, FitMode::kClosedForm}) {
    const MemberFit fit = fit_member(d, env, hp, mode);
    CHECK(fit.coeffs(0, 2) == 0.0);
    CHECK(fit.coeffs(0, 3) == 0.0);
  }
  const MemberFit empty = fit_member(PreferenceDataset{}, env, hp, FitMode::kAscent);
  for (double v : empty.coeffs.data()) CHECK(v == 0.0);
}

TEST_CASE("ascent fits end at a box-local maximum above the start") {
  const TabularEnv env = pair_env(3, 1.5);
  Rng rng(2121);
  for (int trial = 0; trial < 20; ++trial) {
    PreferenceDataset data;
    for (int i = 0; i < 40; ++i) {
      const int a = static_cast<int>(rng.next_u64() % 3);
      const int b = static_cast<int>(rng.next_u64() % 3);
      data.triples.push_back(rng.next_bernoulli(0.7) ? Triple{0, a, b} : Triple{0, b, a});
    }
    HyperParams hp;
    hp.beta = 1.0;
    const MemberFit fit = fit_member(data, env, hp, FitMode::kAscent);
    const double at_fit = pess_dpo_loss(fit.coeffs, data, fit.lambda_table, 1.0);
    const double at_start =
        pess_dpo_loss(Table(1, 3, 0.0), data, fit.lambda_table, 1.0);
    CHECK(at_fit >= at_start - 1e-12);
    // random feasible perturbations never improve the objective
    for (int k = 0; k < 30; ++k) {
      Table perturbed = fit.coeffs;
      for (auto& v : perturbed.data()) {
        v = std::clamp(v + 0.05 * (2.0 * rng.next_double() - 1.0), -env.r_max, env.r_max);
      }
      CHECK(pess_dpo_loss(perturbed, data, fit.lambda_table, 1.0) <= at_fit + 1e-7);
    }
  }
}

TEST_CASE("fits respect the box and are deterministic") {
  const TabularEnv env = pair_env(3, 1.0);
  Rng rng(17);
  PreferenceDataset data;
  for (int i = 0; i < 200; ++i) {
    const int a = static_cast<int>(rng.next_u64() % 3);
    const int b = static_cast<int>(rng.next_u64() % 3);
    data.triples.push_back({0, std::max(a, b), std::min(a, b)});  // biased wins
  }
  HyperParams hp;
  hp.beta = 1.0;
  for (const FitMode mode : {FitMode::kAscent, FitMode::kClosedForm}) {
    const MemberFit f1 = fit_member(data, env, hp, mode);
    const MemberFit f2 = fit_member(data, env, hp, mode);
    CHECK(f1.coeffs == f2.coeffs);  // bitwise
    for (double v : f1.coeffs.data()) CHECK(std::abs(v) <= env.r_max + 1e-12);
    // induced policy is a valid simplex row
    const TabularPolicy pi = f1.policy(env.pi_ref);
    double sum = 0.0;
    for (int a = 0; a < 3; ++a) sum += pi(0, a);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("implicit reward equals beta log(pi/pi_ref)") {
  const TabularEnv env = pair_env(3);
  const PreferenceDataset d = counts_dataset(9, 2);
  HyperParams hp;
  hp.beta = 0.7;
  const MemberFit fit = fit_member(d, env, hp, FitMode::kAscent);
  const TabularPolicy pi = fit.policy(env.pi_ref);
  const Table u = fit.implicit_reward(env.pi_ref);
  for (int a = 0; a < 3; ++a) {
    CHECK(u(0, a) ==
          doctest::Approx(0.7 * std::log(pi(0, a) / env.pi_ref(0, a))).epsilon(1e-9));
  }
}

TEST_CASE("centered offsets") {
  const TabularEnv env = pair_env(2);
  HyperParams hp;
  hp.beta = 1.0;

  // u = 0 everywhere -> zeta = 0
  MemberFit zero = fit_member(PreferenceDataset{}, env, hp, FitMode::kAscent);
  PreferenceDataset comp = counts_dataset(2, 1);
  const auto z0 = centered_offsets(zero, env, comp, 1.0, 1.0);
  CHECK(z0[0] == doctest::Approx(0.0).epsilon(1e-13));

  // m = 2, slot log-ratios {0.2, -0.1, 0.3, 0.0} + c, gamma = 1. A normalized
  // policy forces the uniform shift c = -log(sum ref e^{target}); the formula
  // then gives zeta = 0.25 * (0.4 + 4c) = 0.1 + c.
  const TabularEnv env_four = pair_env(4);
  const std::vector<double> target{0.2, -0.1, 0.3, 0.0};
  Table coeffs(1, 4, 0.0);
  for (int a = 0; a < 4; ++a) coeffs(0, a) = target[a];
  MemberFit hand;
  hand.coeffs = coeffs;
  hand.beta = 1.0;
  double z = 0.0;
  for (double t : target) z += 0.25 * std::exp(t);
  const double c = -std::log(z);
  const Table lr = hand.implicit_reward(env_four.pi_ref);
  for (int a = 0; a < 4; ++a) {
    CHECK(lr(0, a) == doctest::Approx(target[a] + c).epsilon(1e-12));
  }
  PreferenceDataset complement;
  complement.triples = {{0, 0, 1}, {0, 2, 3}};  // slots 0.2+c, -0.1+c, 0.3+c, c
  const auto zeta = centered_offsets(hand, env_four, complement, 1.0, 1.0);
  CHECK(zeta[0] == doctest::Approx(0.1 + c).epsilon(1e-10));

  // gamma = 0 reduces to the mean over the 2m slots
  const auto zeta0 = centered_offsets(hand, env_four, complement, 0.0, 1.0);
  CHECK(zeta0[0] == doctest::Approx((0.4 + 4.0 * c) / 4.0).epsilon(1e-10));

  // prompts absent from the complement get zeta = 0
  PreferenceDataset none;
  const auto zn = centered_offsets(hand, env_four, none, 1.0, 1.0);
  CHECK(zn[0] == 0.0);
}

TEST_CASE("member save/load round trip") {
  const TabularEnv env = pair_env(3);
  const PreferenceDataset d = counts_dataset(9, 2);
  HyperParams hp;
  hp.beta = 0.25;
  MemberFit fit = fit_member(d, env, hp, FitMode::kClosedForm);
  fit.zeta = {0.125};
  const auto path = std::filesystem::temp_directory_path() / "pepo_test_member.tsv";
  save_member(fit, path.string());
  const MemberFit loaded = load_member(path.string(), env);
  CHECK(loaded.coeffs == fit.coeffs);
  CHECK(loaded.beta == fit.beta);
  CHECK(loaded.mode == FitMode::kClosedForm);
  CHECK(loaded.zeta.size() == 1);
  CHECK(loaded.zeta[0] == doctest::Approx(0.125).epsilon(1e-15));
  std::filesystem::remove(path);
}
