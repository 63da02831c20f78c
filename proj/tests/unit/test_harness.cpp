// Copyright 2026 The ctpo-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctpo/error.hpp"
#include "ctpo/estimators.hpp"
#include "ctpo/harness.hpp"
#include "ctpo/io.hpp"

namespace ctpo::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ctpo_harness_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run_json(const json& config, const std::string& out, std::optional<int> threads = {}) {
    RunOptions o;
    o.config_path = "inline.json";
    o.out_dir = dir_ / out;
    o.threads = threads;
    return run_config(config, o);
  }

  static std::vector<std::string> files_in(const fs::path& d) {
    std::vector<std::string> out;
    if (!fs::exists(d)) return out;
    for (const auto& e : fs::directory_iterator(d)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
  }

  fs::path dir_;
};

json small_chi2() {
  return {{"experiment", "chi2-factorization"},
          {"seed", 3},
          {"params", {{"instances", 4}, {"vocab_sizes", {2, 3}}, {"horizons", {2, 3}}}}};
}

json small_train() {
  return {{"experiment", "train"},
          {"seed", 1},
          {"params",
           {{"mdp", {{"vocab_size", 3}, {"horizon", 3}, {"reward", {{"kind", "count_token"}, {"token", 1}}}}},
            {"train", {{"total_steps", 5}, {"group_size", 4}, {"prompts_per_step", 2}}}}}};
}

TEST_F(HarnessTest, SmallRunWritesArtifactsAndManifest) {
  const auto r = run_json(small_chi2(), "chi2");
  ASSERT_EQ(r.exit_code, kExitPass) << r.message;
  EXPECT_EQ(files_in(dir_ / "chi2"),
            (std::vector<std::string>{"chi2.csv", "manifest.json", "report.json"}));
  const json manifest = json::parse(read_text_file(dir_ / "chi2" / "manifest.json"));
  EXPECT_EQ(manifest["experiment"], "chi2-factorization");
  EXPECT_EQ(manifest["status"], "pass");
  EXPECT_EQ(manifest["resolved_config"]["params"]["tolerance"], 1e-10);
  EXPECT_EQ(manifest["resolved_config"]["params"]["instances"], 4);
  EXPECT_TRUE(manifest.contains("wall_time_seconds"));
  const json report = json::parse(read_text_file(dir_ / "chi2" / "report.json"));
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_FALSE(report.contains("started_at"));
}

TEST_F(HarnessTest, CsvHeaderAndFullPrecision) {
  ASSERT_EQ(run_json(small_chi2(), "chi2").exit_code, kExitPass);
  std::istringstream csv(read_text_file(dir_ / "chi2" / "chi2.csv"));
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header,
            "instance,vocab_size,horizon,position,chi2,chi2_closed_form,var_cum_enumerated,"
            "var_cum_product_formula,abs_error");
  std::getline(csv, line);
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  ASSERT_EQ(cells.size(), 9u);
  const double chi2 = std::stod(cells[4]);
  EXPECT_EQ(format_double(chi2), cells[4]);
  EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST_F(HarnessTest, RerunIsByteIdentical) {
  for (const json& cfg : {small_chi2(), small_train()}) {
    ASSERT_EQ(run_json(cfg, "a").exit_code, kExitPass);
    ASSERT_EQ(run_json(cfg, "b").exit_code, kExitPass);
    for (const auto& f : files_in(dir_ / "a")) {
      if (f == "manifest.json") continue;
      EXPECT_EQ(read_text_file(dir_ / "a" / f), read_text_file(dir_ / "b" / f)) << f;
    }
    fs::remove_all(dir_ / "a");
    fs::remove_all(dir_ / "b");
  }
}

TEST_F(HarnessTest, ThreadCountDoesNotChangeResults) {
  ASSERT_EQ(run_json(small_train(), "t1", 1).exit_code, kExitPass);
  ASSERT_EQ(run_json(small_train(), "t3", 3).exit_code, kExitPass);
  EXPECT_EQ(read_text_file(dir_ / "t1" / "steps.csv"), read_text_file(dir_ / "t3" / "steps.csv"));
  EXPECT_EQ(json::parse(read_text_file(dir_ / "t3" / "manifest.json"))["threads"], 3);
}

TEST_F(HarnessTest, UnknownKeysAreRejected) {
  json top = small_chi2();
  top["bogus"] = 1;
  auto r = run_json(top, "bad_top");
  EXPECT_EQ(r.exit_code, kExitConfig);
  EXPECT_NE(r.message.find("bogus"), std::string::npos);

  json nested = small_train();
  nested["params"]["train"]["learning_rat"] = 0.1;
  r = run_json(nested, "bad_nested");
  EXPECT_EQ(r.exit_code, kExitConfig);
  EXPECT_NE(r.message.find("config.params.train.learning_rat"), std::string::npos);
  EXPECT_EQ(files_in(dir_ / "bad_nested"), std::vector<std::string>{"error.json"});
}

TEST_F(HarnessTest, SchemaViolationsExitTwo) {
  const json bad[] = {
      json{{"experiment", "nope"}},
      json{{"seed", 1}},
      json{{"experiment", "train"}, {"threads", 0}, {"params", small_train()["params"]}},
      json{{"experiment", "chi2-factorization"}, {"params", {{"instances", "many"}}}},
      json{{"experiment", "chi2-factorization"}, {"params", {{"vocab_sizes", {1}}}}},
      json{{"experiment", "variance-scan"},
           {"params", {{"independence", {{"deltas", {0.1}}, {"limit_delta", 0.2}}}}}},
      json{{"experiment", "verify-unbiasedness"},
           {"params", {{"vocab_sizes", {9}}, {"horizons", {9}}}}},
      json{{"experiment", "train"}, {"params", {{"train", json::object()}}}},
      json::array(),
  };
  int i = 0;
  for (const auto& cfg : bad) {
    const auto r = run_json(cfg, "bad" + std::to_string(i++));
    EXPECT_EQ(r.exit_code, kExitConfig) << cfg.dump() << " -> " << r.message;
    EXPECT_TRUE(r.report.is_null());
  }
}

TEST_F(HarnessTest, FileErrorsAndParseErrors) {
  RunOptions o;
  o.config_path = dir_ / "missing.json";
  o.out_dir = dir_ / "out_missing";
  EXPECT_EQ(run(o).exit_code, kExitIo);

  write_text_file(dir_ / "broken.json", "{\"experiment\": ");
  o.config_path = dir_ / "broken.json";
  o.out_dir = dir_ / "out_broken";
  EXPECT_EQ(run(o).exit_code, kExitConfig);
  EXPECT_EQ(files_in(dir_ / "out_broken"), std::vector<std::string>{"error.json"});

  // Output path collides with an existing regular file.
  write_text_file(dir_ / "blocker", "x");
  EXPECT_EQ(run_json(small_chi2(), "blocker/inner").exit_code, kExitIo);
}

TEST_F(HarnessTest, AssertionFailureExitsOneWithArtifacts) {
  json cfg = small_train();
  cfg["params"]["checks"] = {{"min_final_reward", 100.0}};
  const auto r = run_json(cfg, "fail");
  EXPECT_EQ(r.exit_code, kExitAssertion);
  EXPECT_NE(r.message.find("final_expected_reward"), std::string::npos);
  EXPECT_FALSE(r.report["passed"].get<bool>());
  const json manifest = json::parse(read_text_file(dir_ / "fail" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "fail");
  EXPECT_EQ(manifest["exit_code"], kExitAssertion);
}

TEST_F(HarnessTest, SeedOverrideIsRecorded) {
  RunOptions o;
  o.config_path = "inline.json";
  o.out_dir = dir_ / "seeded";
  o.seed = 99;
  ASSERT_EQ(run_config(small_chi2(), o).exit_code, kExitPass);
  const json manifest = json::parse(read_text_file(dir_ / "seeded" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 99);
  EXPECT_EQ(manifest["resolved_config"]["seed"], 99);
}

TEST(ExperimentNames, CoverEveryKind) {
  EXPECT_EQ(experiment_names(),
            (std::vector<std::string>{"verify-unbiasedness", "variance-scan", "chi2-factorization",
                                      "log-std-profile", "clip-rate", "train",
                                      "compare-objectives"}));
}

TEST(Spearman, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 4, 6, 8, 10}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman(x, std::vector<double>{1, 4, 9, 16, 25}), 1.0, 1e-15);
  // ties get average ranks: ranks {1.5,1.5,3,4,5}
  const double r = spearman(x, std::vector<double>{0, 0, 1, 2, 3});
  EXPECT_NEAR(r, 0.9746794344808963, 1e-12);
  EXPECT_THROW(spearman(x, std::vector<double>{1, 2}), Error);
}

TEST(IidConstruct, HitsRequestedSigmaExactly) {
  for (double sigma : {0.05, 0.2, 0.7}) {
    const auto c = iid_construct(16, 8, sigma, 3);
    EXPECT_NEAR(c.sigma, sigma, 1e-12);
    EXPECT_LT(c.drift, 0.0);
    const auto m = per_step_log_ratio_moments(c.mdp, c.behavior, c.target);
    for (double s : m.stddev) EXPECT_NEAR(s, sigma, 1e-12);
  }
  EXPECT_THROW(iid_construct(4, 4, 0.0, 1), Error);
}

TEST(SampleLogCumulative, MatchesLibraryProfile) {
  const auto c = iid_construct(6, 5, 0.3, 2);
  const auto samples = sample_log_cumulative(c.mdp, c.behavior, c.target, 3000, 8, 1);
  const auto batch = sample_batch(c.mdp, c.behavior, c.target, 3000, 8, 1);
  const auto lib = log_ratio_std_profile(batch);
  const auto sd = position_stddev(samples);
  for (std::size_t t = 0; t < sd.size(); ++t) EXPECT_NEAR(sd[t], lib.stddev[t], 1e-12);

  const auto threaded = sample_log_cumulative(c.mdp, c.behavior, c.target, 3000, 8, 3);
  EXPECT_EQ(samples.values, threaded.values);

  const auto s = ClipSchedule::adaptive_log(0.2, 0.2, 0.5);
  std::vector<RatioProfile> profiles;
  for (const auto& t : batch) profiles.push_back(ratio_profile(t));
  const auto lib_rates = clip_rate_profile(profiles, s);
  const auto rates = position_clip_rates(samples, s);
  for (std::size_t t = 0; t < rates.size(); ++t) EXPECT_DOUBLE_EQ(rates[t], lib_rates[t].value());
}

TEST(ShippedConfigs, AllParse) {
  for (const auto& e : fs::directory_iterator(CTPO_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    const json cfg = json::parse(read_text_file(e.path()));
    EXPECT_TRUE(std::find(experiment_names().begin(), experiment_names().end(),
                          cfg["experiment"].get<std::string>()) != experiment_names().end())
        << e.path();
  }
}

}  // namespace
}  // namespace ctpo::harness
