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
#include <string>
#include <vector>

#include "ctpo/mdp.hpp"
#include "ctpo/objectives.hpp"

namespace ctpo {

enum class EvalMethod { kExact, kMonteCarlo };

std::string_view to_string(EvalMethod method);

struct Evaluation {
  double value = 0.0;
  double standard_error = 0.0;  // 0 for exact evaluation
  EvalMethod method = EvalMethod::kExact;
};

// J(theta) = E_{tau ~ policy}[R(tau)], exactly or from n samples.
Evaluation evaluate_policy(const TokenMdp& mdp, const TabularPolicy& policy, EvalMethod method,
                           std::size_t n_samples = 100000, std::uint64_t seed = 0, int threads = 1);

// Exact evaluation is used when V^H is at most this many sequences.
inline constexpr std::uint64_t kExactEvalLimit = 100000;

struct TrainConfig {
  ObjectiveSpec objective;
  int group_size = 8;
  int prompts_per_step = 4;
  int inner_epochs = 4;
  double learning_rate = 0.05;
  int total_steps = 200;
  std::uint64_t seed = 0;
  std::size_t eval_samples = 100000;
  int threads = 1;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  double expected_reward = 0.0;        // after this step's updates
  double reward_standard_error = 0.0;  // MC evaluation only
  double surrogate_value = 0.0;        // mean over inner epochs
  double clip_fraction = 0.0;          // mean over inner epochs
  double first_epoch_clip_fraction = 0.0;
  double mean_abs_log_rho = 0.0;  // mean |log rho_H^cum| over the batch, averaged over epochs
  int degenerate_groups = 0;
};

struct TrainReport {
  explicit TrainReport(TabularPolicy initial) : final_policy(std::move(initial)) {}

  std::vector<StepRecord> records;
  double initial_expected_reward = 0.0;
  double final_expected_reward = 0.0;
  EvalMethod eval_method = EvalMethod::kExact;
  TabularPolicy final_policy;
  bool aborted = false;
  std::string diagnostic;
};

// Off-policy loop: per step, snapshot behavior = target, sample
// prompts_per_step groups of G trajectories from the snapshot, then take
// inner_epochs plain gradient-ascent steps on the surrogate. A non-finite
// gradient stops the loop with aborted = true and a diagnostic.
TrainReport train(const TokenMdp& mdp, const TabularPolicy& initial, const TrainConfig& config);

nlohmann::json to_json(const StepRecord& record);
nlohmann::json summary_json(const TrainReport& report);

}  // namespace ctpo
