#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "pepo.h"

namespace {

const char* kEnvJson = R"({
  "num_prompts": 1,
  "num_actions": 3,
  "nu0": [1.0],
  "pi_data": [[0.04, 0.93, 0.03]],
  "pi_ref": [[0.04, 0.93, 0.03]],
  "reward": {"type": "gaussian", "means": [[1.0, 1.5, 1.0]],
             "variances": [[1.5, 0.5, 1.5]]},
  "r_max": 3.0
})";

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / "pepo_capi_test";
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("C API pipeline end to end") {
  TempDir tmp;
  CHECK(std::strlen(pepo_version()) > 0);

  pepo_env* env = nullptr;
  REQUIRE(pepo_env_create(kEnvJson, &env) == PEPO_OK);
  int prompts = 0, actions = 0;
  CHECK(pepo_env_shape(env, &prompts, &actions) == PEPO_OK);
  CHECK(prompts == 1);
  CHECK(actions == 3);
  CHECK(pepo_env_hash(env) != 0);

  pepo_dataset* data = nullptr;
  REQUIRE(pepo_dataset_generate(env, 800, 42, "bt", &data) == PEPO_OK);
  int64_t n = 0;
  CHECK(pepo_dataset_size(data, &n) == PEPO_OK);
  CHECK(n == 800);

  const std::string data_path = (tmp.path / "d.tsv").string();
  REQUIRE(pepo_dataset_save(data, env, data_path.c_str()) == PEPO_OK);
  pepo_dataset* loaded = nullptr;
  REQUIRE(pepo_dataset_load(data_path.c_str(), &loaded) == PEPO_OK);
  int64_t n2 = 0;
  pepo_dataset_size(loaded, &n2);
  CHECK(n2 == n);

  const char* opts = R"({"beta": 0.05, "l": 2, "fit_mode": "ascent", "alpha": 0.1})";
  pepo_members* members = nullptr;
  REQUIRE(pepo_members_fit(env, data, opts, 7, &members) == PEPO_OK);
  int l = 0;
  CHECK(pepo_members_count(members, &l) == PEPO_OK);
  CHECK(l == 2);
  const std::string member_dir = (tmp.path / "members").string();
  REQUIRE(pepo_members_save(members, member_dir.c_str()) == PEPO_OK);
  pepo_members* members2 = nullptr;
  REQUIRE(pepo_members_load(env, member_dir.c_str(), 2, &members2) == PEPO_OK);

  pepo_aggregate* agg = nullptr;
  REQUIRE(pepo_aggregate_build(env, members2, data, opts, &agg) == PEPO_OK);
  double row[3] = {0, 0, 0};
  REQUIRE(pepo_aggregate_policy_row(agg, 0, row, 3) == PEPO_OK);
  CHECK(std::abs(row[0] + row[1] + row[2] - 1.0) < 1e-9);

  const std::string agg_path = (tmp.path / "agg.tsv").string();
  REQUIRE(pepo_aggregate_save(agg, agg_path.c_str()) == PEPO_OK);
  pepo_aggregate* agg2 = nullptr;
  REQUIRE(pepo_aggregate_load(env, agg_path.c_str(), &agg2) == PEPO_OK);
  double row2[3] = {0, 0, 0};
  REQUIRE(pepo_aggregate_policy_row(agg2, 0, row2, 3) == PEPO_OK);
  CHECK(std::abs(row2[1] - row[1]) < 1e-12);

  int action = -2, trials = 0;
  REQUIRE(pepo_sample(agg, env, 0, 0, 0.05, 99, &action, &trials) == PEPO_OK);
  CHECK(trials >= 1);
  CHECK(action >= -1);
  CHECK(action < 3);

  double j = 0, sub = 0, popt = 0, cstar = 0, errn = 0;
  REQUIRE(pepo_eval_aggregate(agg, env, 0.05, &j, &sub, &popt, &cstar, &errn) ==
          PEPO_OK);
  CHECK(std::isfinite(j));
  CHECK(sub >= -1e-9);
  CHECK(popt >= 0.0);
  CHECK(popt <= 1.0);
  CHECK(std::isfinite(errn));

  // baseline fitting writes a loadable member-format file
  const std::string base_path = (tmp.path / "baseline_dpo.tsv").string();
  REQUIRE(pepo_baseline_fit_save(env, data, "dpo", opts, base_path.c_str()) == PEPO_OK);
  CHECK(std::filesystem::exists(base_path));

  pepo_aggregate_free(agg2);
  pepo_aggregate_free(agg);
  pepo_members_free(members2);
  pepo_members_free(members);
  pepo_dataset_free(loaded);
  pepo_dataset_free(data);
  pepo_env_free(env);
}

TEST_CASE("C API error reporting") {
  pepo_env* env = nullptr;
  CHECK(pepo_env_create("{\"bad\":", &env) == PEPO_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(pepo_last_error()) > 0);
  CHECK(pepo_env_create(nullptr, &env) == PEPO_ERR_INVALID_ARGUMENT);
  CHECK(pepo_env_load_file("/nonexistent/path.json", &env) == PEPO_ERR_IO);

  REQUIRE(pepo_env_create(kEnvJson, &env) == PEPO_OK);
  pepo_dataset* data = nullptr;
  CHECK(pepo_dataset_generate(env, -5, 1, "bt", &data) == PEPO_ERR_INVALID_ARGUMENT);
  CHECK(pepo_dataset_generate(env, 10, 1, "wat", &data) == PEPO_ERR_INVALID_ARGUMENT);
  pepo_env_free(env);
}

TEST_CASE("C API config runner") {
  TempDir tmp;
  const std::string cfg_path = (tmp.path / "cfg.json").string();
  {
    std::ofstream os(cfg_path);
    os << R"({
      "experiment_id": "capi-run",
      "master_seed": 5,
      "env": )" << kEnvJson
       << R"(,
      "algos": [{"name": "pepo", "beta": 0.05, "l": 2}, {"name": "dpo", "beta": 0.05}],
      "sweep": {"n_values": [60], "l_values": [2], "seeds": [1, 2]},
      "pipeline": {"abstention_samples": 10},
      "output": {"csv": "capi.csv", "plot": "capi.svg"}
    })";
  }
  const std::string out_dir = (tmp.path / "out").string();
  REQUIRE(pepo_run_config_file(cfg_path.c_str(), out_dir.c_str(), nullptr, 2) == PEPO_OK);
  CHECK(std::filesystem::exists(out_dir + "/capi.csv"));
  CHECK(std::filesystem::exists(out_dir + "/capi.svg"));

  CHECK(pepo_run_config_file("/nope.json", out_dir.c_str(), nullptr, 1) ==
        PEPO_ERR_CONFIG);
  CHECK(pepo_reproduce("nope", out_dir.c_str(), nullptr, 1) == PEPO_ERR_CONFIG);
}
