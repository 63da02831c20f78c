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

#include "ctpo/trainer.hpp"

#include <cmath>

#include "ctpo/error.hpp"
#include "ctpo/numeric.hpp"
#include "ctpo/ratios.hpp"

namespace ctpo {

std::string_view to_string(EvalMethod method) {
  return method == EvalMethod::kExact ? "exact" : "monte_carlo";
}

Evaluation evaluate_policy(const TokenMdp& mdp, const TabularPolicy& policy, EvalMethod method,
                           std::size_t n_samples, std::uint64_t seed, int threads) {
  if (method == EvalMethod::kExact) return {exact_expected_reward(mdp, policy), 0.0, method};
  if (n_samples < 2) throw Error(ErrorCode::kInvalidArgument, "MC evaluation needs n >= 2");
  const std::size_t chunks = (n_samples + kSampleChunk - 1) / kSampleChunk;
  std::vector<double> s1(chunks, 0.0), s2(chunks, 0.0);
  sample_stream(mdp, policy, policy, n_samples, seed, threads,
                [&](std::size_t i, const Trajectory& t) {
                  const std::size_t c = i / kSampleChunk;
                  s1[c] += t.reward;
                  s2[c] += t.reward * t.reward;
                });
  CompensatedSum m1, m2;
  for (std::size_t c = 0; c < chunks; ++c) {
    m1.add(s1[c]);
    m2.add(s2[c]);
  }
  const double n = static_cast<double>(n_samples);
  const double mean = m1.value() / n;
  const double var = std::max(0.0, m2.value() / n - mean * mean) * n / (n - 1.0);
  return {mean, std::sqrt(var / n), method};
}

void TrainConfig::validate() const {
  objective.schedule.validate();
  if (group_size < 2) throw Error(ErrorCode::kInvalidArgument, "group_size must be >= 2");
  if (prompts_per_step < 1) throw Error(ErrorCode::kInvalidArgument, "prompts_per_step must be >= 1");
  if (inner_epochs < 1) throw Error(ErrorCode::kInvalidArgument, "inner_epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be finite and >= 0");
  }
  if (total_steps < 0) throw Error(ErrorCode::kInvalidArgument, "total_steps must be >= 0");
  if (eval_samples < 2) throw Error(ErrorCode::kInvalidArgument, "eval_samples must be >= 2");
}

TrainReport train(const TokenMdp& mdp, const TabularPolicy& initial, const TrainConfig& config) {
  config.validate();
  if (initial.vocab_size() != mdp.vocab_size() || initial.horizon() != mdp.horizon()) {
    throw Error(ErrorCode::kInvalidArgument, "initial policy does not match the MDP");
  }
  const EvalMethod method =
      mdp.sequence_count() <= kExactEvalLimit ? EvalMethod::kExact : EvalMethod::kMonteCarlo;
  // Evaluation seeds live in a separate stream from rollout seeds.
  auto evaluate = [&](const TabularPolicy& p, int step) {
    return evaluate_policy(mdp, p, method, config.eval_samples,
                           mix64(config.seed ^ 0xe7a1u) + static_cast<std::uint64_t>(step), config.threads);
  };

  TrainReport report(initial);
  report.eval_method = method;
  report.initial_expected_reward = evaluate(initial, -1).value;
  report.final_expected_reward = report.initial_expected_reward;
  TabularPolicy& target = report.final_policy;
  const auto group_size = static_cast<std::size_t>(config.group_size);

  for (int step = 0; step < config.total_steps; ++step) {
    const TabularPolicy behavior = target;
    StepRecord rec;
    rec.step = step;

    const std::size_t n = group_size * static_cast<std::size_t>(config.prompts_per_step);
    TrajectoryBatch rollouts =
        sample_batch(mdp, behavior, behavior, n, mix64(config.seed) + static_cast<std::uint64_t>(step),
                     config.threads);
    std::vector<GroupBatch> groups;
    for (int g = 0; g < config.prompts_per_step; ++g) {
      std::vector<Trajectory> members(
          std::make_move_iterator(rollouts.begin() + static_cast<std::ptrdiff_t>(g * group_size)),
          std::make_move_iterator(rollouts.begin() +
                                  static_cast<std::ptrdiff_t>((g + 1) * group_size)));
      groups.push_back(GroupBatch::from_trajectories(mdp.prompt_id(), std::move(members)));
      if (groups.back().degenerate()) ++rec.degenerate_groups;
    }

    CompensatedSum surrogate, clip, log_rho;
    for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
      std::vector<std::vector<RatioProfile>> profiles;
      double abs_log = 0.0;
      std::size_t count = 0;
      for (const auto& g : groups) {
        profiles.push_back(rescored_profiles(g, target, behavior));
        for (const auto& p : profiles.back()) {
          abs_log += std::abs(p.log_sequence);
          ++count;
        }
      }
      const double frac = clip_fraction(profiles, config.objective);
      if (epoch == 0) rec.first_epoch_clip_fraction = frac;
      clip.add(frac);
      surrogate.add(surrogate_objective(groups, profiles, config.objective));
      log_rho.add(abs_log / static_cast<double>(count));

      Eigen::VectorXd grad;
      try {
        grad = objective_gradient(groups, target, behavior, config.objective);
      } catch (const Error& e) {
        report.aborted = true;
        report.diagnostic = "step " + std::to_string(step) + " epoch " + std::to_string(epoch) +
                            ": " + e.what();
        report.final_expected_reward = evaluate(target, step).value;
        return report;
      }
      Eigen::VectorXd next = target.parameters() + config.learning_rate * grad;
      if (!next.allFinite()) {
        report.aborted = true;
        report.diagnostic = "step " + std::to_string(step) + " epoch " + std::to_string(epoch) +
                            ": non-finite parameters after update";
        report.final_expected_reward = evaluate(target, step).value;
        return report;
      }
      target.set_parameters(next);
    }
    const double epochs = static_cast<double>(config.inner_epochs);
    rec.surrogate_value = surrogate.value() / epochs;
    rec.clip_fraction = clip.value() / epochs;
    rec.mean_abs_log_rho = log_rho.value() / epochs;
    const Evaluation eval = evaluate(target, step);
    rec.expected_reward = eval.value;
    rec.reward_standard_error = eval.standard_error;
    report.records.push_back(rec);
    report.final_expected_reward = eval.value;
  }
  return report;
}

nlohmann::json to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"expected_reward", r.expected_reward},
          {"reward_standard_error", r.reward_standard_error},
          {"surrogate_value", r.surrogate_value},
          {"clip_fraction", r.clip_fraction},
          {"first_epoch_clip_fraction", r.first_epoch_clip_fraction},
          {"mean_abs_log_rho", r.mean_abs_log_rho},
          {"degenerate_groups", r.degenerate_groups}};
}

nlohmann::json summary_json(const TrainReport& report) {
  int degenerate = 0;
  double max_clip = 0.0;
  for (const auto& r : report.records) {
    degenerate += r.degenerate_groups;
    max_clip = std::max(max_clip, r.clip_fraction);
  }
  const auto& p = report.final_policy.parameters();
  return {{"steps", report.records.size()},
          {"eval_method", to_string(report.eval_method)},
          {"initial_expected_reward", report.initial_expected_reward},
          {"final_expected_reward", report.final_expected_reward},
          {"max_clip_fraction", max_clip},
          {"degenerate_groups", degenerate},
          {"aborted", report.aborted},
          {"diagnostic", report.diagnostic},
          {"final_logits", std::vector<double>(p.data(), p.data() + p.size())}};
}

}  // namespace ctpo
