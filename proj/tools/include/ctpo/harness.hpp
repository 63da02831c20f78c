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


#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctpo/mdp.hpp"
#include "ctpo/objectives.hpp"

namespace ctpo::harness {

inline constexpr int kExitPass = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct RunResult {
  int exit_code = kExitPass;
  std::filesystem::path output_dir;  // empty when no directory was resolved
  nlohmann::json report;             // null unless the experiment ran
  std::string message;
};

RunResult run(const RunOptions& options);
// Same as run() with an already parsed config; options.config_path is only recorded.
RunResult run_config(const nlohmann::json& config, const RunOptions& options);

const std::vector<std::string>& experiment_names();

// Named pass/fail assertions collected into report.json.
class Checks {
 public:
  void less(const std::string& name, double value, double limit);
  void at_most(const std::string& name, double value, double limit);
  void greater(const std::string& name, double value, double limit);
  void at_least(const std::string& name, double value, double limit);

  bool passed() const noexcept { return passed_; }
  std::vector<std::string> failures() const;
  const nlohmann::json& to_json() const noexcept { return entries_; }

 private:
  void add(const std::string& name, double value, const char* op, double limit, bool ok);

  nlohmann::json entries_ = nlohmann::json::array();
  bool passed_ = true;
};

// Position-tied construct: uniform behavior, one target row shared by every
// position, scaled so the per-step log-ratio has population std `sigma`.
struct IidConstruct {
  TokenMdp mdp;
  TabularPolicy behavior;
  TabularPolicy target;
  double sigma = 0.0;  // exact per-step std of log r_t
  double drift = 0.0;  // exact per-step mean of log r_t
};

IidConstruct iid_construct(int vocab_size, int horizon, double sigma, std::uint64_t seed);

// log rho_t^cum for n sampled trajectories, row-major [trajectory][position].
struct LogCumulativeSamples {
  std::size_t count = 0;
  int horizon = 0;
  std::vector<double> values;
};

LogCumulativeSamples sample_log_cumulative(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target, std::size_t n,
                                           std::uint64_t seed, int threads);
std::vector<double> position_stddev(const LogCumulativeSamples& samples);
std::vector<double> position_clip_rates(const LogCumulativeSamples& samples,
                                        const ClipSchedule& schedule);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ctpo::harness
