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

#include <vector>

#include "ctpo/mdp.hpp"

namespace ctpo {

// Importance ratios of one trajectory. Vectors are stored 0-based but index
// position t = 1..H (element t-1); serialized records state positions
// explicitly as 1-based.
struct RatioProfile {
  std::vector<double> log_token_ratios;  // log r_t
  std::vector<double> log_cumulative;    // prefix sums of log r_t
  std::vector<double> token_ratios;      // r_t
  std::vector<double> cumulative;        // rho_t^cum
  double log_sequence = 0.0;
  double sequence = 1.0;  // rho^seq = rho_H^cum
  double gspo = 1.0;      // (rho^seq)^(1/H)
  // Set when some exponentiation left the representable range and was clamped.
  bool saturated = false;

  int length() const noexcept { return static_cast<int>(token_ratios.size()); }
};

// exp(x) clamped to [min positive normal, max finite]; flags clamping.
double bounded_exp(double x, bool& saturated);

// Throws kNonFinite on non-finite log-probabilities.
RatioProfile ratio_profile(const Trajectory& traj);
std::vector<RatioProfile> ratio_profiles(const std::vector<Trajectory>& trajectories);

std::vector<double> token_ratios(const Trajectory& traj);
std::vector<double> cumulative_ratios(const Trajectory& traj);
double sequence_ratio(const Trajectory& traj);
double gspo_ratio(const Trajectory& traj);
// Product of r_{t'} for t' in (t, H]; position t is 1-based, t = H gives 1.
double suffix_ratio(const Trajectory& traj, int t);

nlohmann::json to_json(const RatioProfile& profile);

}  // namespace ctpo
