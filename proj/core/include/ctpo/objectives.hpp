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

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctpo/mdp.hpp"
#include "ctpo/ratios.hpp"

namespace ctpo {

// Trust region for an importance ratio at a 1-based position.
//  kFixedRatio:  [lower, upper] at every position.
//  kAdaptiveLog: [exp(-eps_low t^p), exp(eps_high t^p)].
struct ClipSchedule {
  enum class Mode { kFixedRatio, kAdaptiveLog };

  Mode mode = Mode::kFixedRatio;
  double lower = 0.8;
  double upper = 1.2;
  double eps_low = 0.025;
  double eps_high = 0.05;
  double exponent = 0.5;

  static ClipSchedule fixed_ratio(double lower, double upper);
  // [1 - eps, 1 + eps]
  static ClipSchedule symmetric(double eps);
  static ClipSchedule adaptive_log(double eps_low, double eps_high, double exponent);

  // Throws kInvalidArgument when the invariants do not hold.
  void validate() const;
};

struct ClipBounds {
  double lower = 0.0;
  double upper = 0.0;
};

ClipBounds clip_bounds(const ClipSchedule& schedule, int t);

// G responses to one prompt with z-scored rewards.
struct GroupBatch {
  std::string prompt_id;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;

  // Rewards are read from the trajectories; advantages via group_advantages.
  static GroupBatch from_trajectories(std::string prompt_id, std::vector<Trajectory> trajectories);
  bool degenerate() const;
};

inline constexpr double kAdvantageStdFloor = 1e-8;

// (R_i - mean) / max(population std, 1e-8); all-equal rewards give zeros.
std::vector<double> group_advantages(std::span<const double> rewards);

enum class ObjectiveKind { kGrpo, kGspo, kCtpo };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view name);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kCtpo;
  ClipSchedule schedule = ClipSchedule::adaptive_log(0.025, 0.05, 0.5);
};

// Clipped surrogate of one group. profiles[i] belongs to trajectories[i].
//  GRPO: (1/G) Sum_i (1/|o_i|) Sum_t min(r A, clip(r) A)
//  GSPO: (1/G) Sum_i min(rho_gspo A, clip(rho_gspo) A)
//  CTPO: (1/G) Sum_i (1/|o_i|) Sum_t min(rho_t^cum A, clip_t(rho_t^cum) A)
double surrogate_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles,
                           const ObjectiveSpec& spec);
// Mean of surrogate_objective over groups.
double surrogate_objective(std::span<const GroupBatch> groups,
                           std::span<const std::vector<RatioProfile>> profiles,
                           const ObjectiveSpec& spec);

double ctpo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles,
                      const ClipSchedule& schedule);
double grpo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles, double eps);
double gspo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles, double eps);

// Profiles of the batch trajectories re-scored under (target, behavior).
std::vector<RatioProfile> rescored_profiles(const GroupBatch& batch, const TabularPolicy& target,
                                            const TabularPolicy& behavior);

// Surrogate value with log-probs recomputed from the policies.
double objective_value(std::span<const GroupBatch> groups, const TabularPolicy& target,
                       const TabularPolicy& behavior, const ObjectiveSpec& spec);

// d objective / d target logits, behavior held constant. A term whose min
// selects the clipped branch contributes nothing; ties take the unclipped
// branch.
Eigen::VectorXd objective_gradient(std::span<const GroupBatch> groups, const TabularPolicy& target,
                                   const TabularPolicy& behavior, const ObjectiveSpec& spec);
Eigen::VectorXd objective_gradient(const GroupBatch& batch, const TabularPolicy& target,
                                   const TabularPolicy& behavior, const ObjectiveSpec& spec);

// Fraction of tokens per position whose rho_t^cum lies outside the schedule's
// bounds. Positions no trajectory reaches are std::nullopt.
std::vector<std::optional<double>> clip_rate_profile(std::span<const RatioProfile> profiles,
                                                     const ClipSchedule& schedule);

// Fraction of tokens whose method-specific ratio (r_t, rho_gspo, rho_t^cum)
// lies outside the objective's bounds.
double clip_fraction(std::span<const std::vector<RatioProfile>> profiles, const ObjectiveSpec& spec);

}  // namespace ctpo
