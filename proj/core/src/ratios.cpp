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

#include "ctpo/ratios.hpp"

#include <cfloat>
#include <cmath>

#include "ctpo/error.hpp"

namespace ctpo {

namespace {

const double kMaxLog = std::log(DBL_MAX);
const double kMinLog = std::log(DBL_MIN);

}  // namespace

double bounded_exp(double x, bool& saturated) {
  if (x > kMaxLog) {
    saturated = true;
    return DBL_MAX;
  }
  if (x < kMinLog) {
    saturated = true;
    return DBL_MIN;
  }
  return std::exp(x);
}

RatioProfile ratio_profile(const Trajectory& traj) {
  const std::size_t h = traj.actions.size();
  if (traj.logp_target.size() != h || traj.logp_behavior.size() != h || h == 0) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory log-prob fields are not populated");
  }
  RatioProfile p;
  p.log_token_ratios.resize(h);
  p.log_cumulative.resize(h);
  p.token_ratios.resize(h);
  p.cumulative.resize(h);
  double acc = 0.0;
  for (std::size_t t = 0; t < h; ++t) {
    const double lt = traj.logp_target[t];
    const double lb = traj.logp_behavior[t];
    if (!std::isfinite(lt) || !std::isfinite(lb)) {
      throw Error(ErrorCode::kNonFinite,
                  "non-finite log-probability at position " + std::to_string(t + 1));
    }
    // Behavior probabilities come from a softmax and are never this small.
    if (lb < -690.0) {
      throw Error(ErrorCode::kNonFinite, "degenerate behavior probability at position " +
                                             std::to_string(t + 1));
    }
    const double lr = lt - lb;
    acc += lr;
    p.log_token_ratios[t] = lr;
    p.log_cumulative[t] = acc;
    p.token_ratios[t] = bounded_exp(lr, p.saturated);
    p.cumulative[t] = bounded_exp(acc, p.saturated);
  }
  p.log_sequence = acc;
  p.sequence = p.cumulative.back();
  p.gspo = bounded_exp(acc / static_cast<double>(h), p.saturated);
  return p;
}

std::vector<RatioProfile> ratio_profiles(const std::vector<Trajectory>& trajectories) {
  std::vector<RatioProfile> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(ratio_profile(t));
  return out;
}

std::vector<double> token_ratios(const Trajectory& traj) { return ratio_profile(traj).token_ratios; }

std::vector<double> cumulative_ratios(const Trajectory& traj) {
  return ratio_profile(traj).cumulative;
}

double sequence_ratio(const Trajectory& traj) { return ratio_profile(traj).sequence; }

double gspo_ratio(const Trajectory& traj) { return ratio_profile(traj).gspo; }

double suffix_ratio(const Trajectory& traj, int t) {
  const RatioProfile p = ratio_profile(traj);
  if (t < 1 || t > p.length()) {
    throw Error(ErrorCode::kInvalidArgument, "suffix position must be in [1, H]");
  }
  bool saturated = false;
  return bounded_exp(p.log_sequence - p.log_cumulative[static_cast<std::size_t>(t) - 1], saturated);
}

nlohmann::json to_json(const RatioProfile& profile) {
  nlohmann::json positions = nlohmann::json::array();
  for (std::size_t t = 0; t < profile.token_ratios.size(); ++t) {
    positions.push_back({{"position", t + 1},
                         {"token_ratio", profile.token_ratios[t]},
                         {"cumulative_ratio", profile.cumulative[t]},
                         {"log_cumulative_ratio", profile.log_cumulative[t]}});
  }
  return {{"position_base", 1},
          {"positions", positions},
          {"sequence_ratio", profile.sequence},
          {"gspo_ratio", profile.gspo},
          {"saturated", profile.saturated}};
}

}  // namespace ctpo
