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
#include <limits>
#include <random>

#include "ctpo/error.hpp"
#include "ctpo/ratios.hpp"
#include "support/fixtures.hpp"

namespace ctpo {
namespace {

using testing::binary_policy;

Trajectory two_step(Sequence actions) {
  const TokenMdp mdp(2, 2, RewardSpec::constant(0));
  return make_trajectory(mdp, binary_policy(2, 0.5), binary_policy(2, 0.6), std::move(actions));
}

TEST(TokenRatios, Examples) {
  const TokenMdp mdp(3, 4, RewardSpec::constant(0));
  const auto p = TabularPolicy::gaussian(3, 4, 1.0, 1);
  for (double r : token_ratios(sample_trajectory(mdp, p, p, 3))) EXPECT_EQ(r, 1.0);

  Trajectory t;
  t.actions = {0};
  t.logp_target = {std::log(0.6)};
  t.logp_behavior = {std::log(0.5)};
  EXPECT_NEAR(token_ratios(t)[0], 1.2, 1e-15);

  const auto r = token_ratios(two_step({0, 1}));
  EXPECT_NEAR(r[0], 1.2, 1e-14);
  EXPECT_NEAR(r[1], 0.8, 1e-14);
}

TEST(TokenRatios, NonFiniteLogProbIsStructuredError) {
  Trajectory t;
  t.actions = {0, 1};
  t.logp_target = {0.0, std::numeric_limits<double>::quiet_NaN()};
  t.logp_behavior = {0.0, 0.0};
  try {
    token_ratios(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(CumulativeRatios, Examples) {
  const auto c = cumulative_ratios(two_step({0, 0}));
  EXPECT_NEAR(c[0], 1.2, 1e-14);
  EXPECT_NEAR(c[1], 1.44, 1e-14);

  const TokenMdp one(3, 1, RewardSpec::constant(0));
  const auto b = TabularPolicy::gaussian(3, 1, 1.0, 1);
  const auto tg = TabularPolicy::gaussian(3, 1, 1.0, 2);
  const auto traj = sample_trajectory(one, b, tg, 4);
  EXPECT_EQ(cumulative_ratios(traj), token_ratios(traj));
  EXPECT_EQ(sequence_ratio(traj), token_ratios(traj)[0]);
  EXPECT_NEAR(gspo_ratio(traj), token_ratios(traj)[0], 1e-15);
}

TEST(CumulativeRatios, SaturationIsFlaggedNotInfinite) {
  Trajectory t;
  const int h = 4;
  t.actions.assign(h, 0);
  t.logp_target.assign(h, 0.0);
  t.logp_behavior.assign(h, -300.0);
  const RatioProfile p = ratio_profile(t);
  EXPECT_TRUE(p.saturated);
  for (double c : p.cumulative) EXPECT_TRUE(std::isfinite(c));
  EXPECT_FALSE(ratio_profile(two_step({1, 1})).saturated);
}

TEST(SequenceAndGspo, Examples) {
  const auto t = two_step({0, 0});
  EXPECT_NEAR(sequence_ratio(t), 1.44, 1e-14);
  EXPECT_NEAR(gspo_ratio(t), 1.2, 1e-14);
  EXPECT_NEAR(suffix_ratio(t, 1), 1.2, 1e-14);
  EXPECT_EQ(suffix_ratio(t, 2), 1.0);
  EXPECT_THROW(suffix_ratio(t, 0), Error);
}

// Profile invariants over random off-policy trajectories.
TEST(RatioProfile, InvariantsHoldOnRandomTrajectories) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const int v = 2 + static_cast<int>(rng() % 3);
    const int h = 1 + static_cast<int>(rng() % 8);
    const TokenMdp mdp(v, h, RewardSpec::constant(0));
    const auto b = TabularPolicy::gaussian(v, h, 1.5, rng(), Parameterization::kPerPosition);
    const auto tg = TabularPolicy::gaussian(v, h, 1.5, rng(), Parameterization::kPerPosition);
    const auto traj = sample_trajectory(mdp, b, tg, rng());
    const RatioProfile p = ratio_profile(traj);

    double acc = 0.0;
    for (int t = 0; t < h; ++t) {
      acc += p.log_token_ratios[t];
      EXPECT_EQ(p.log_cumulative[t], acc);
      EXPECT_NEAR(p.cumulative[t], std::exp(p.log_cumulative[t]), 1e-9 * p.cumulative[t]);
      EXPECT_GT(p.token_ratios[t], 0.0);
      EXPECT_NEAR(p.cumulative[t] * suffix_ratio(traj, t + 1), p.sequence, 1e-9 * p.sequence);
    }
    EXPECT_EQ(p.cumulative.front(), p.token_ratios.front());
    EXPECT_NEAR(p.cumulative.back(), p.sequence, 1e-9 * p.sequence);
    EXPECT_EQ(sequence_ratio(traj), cumulative_ratios(traj).back());
    EXPECT_NEAR(p.gspo, std::pow(p.sequence, 1.0 / h), 1e-9 * p.gspo);
    EXPECT_NEAR(std::log(p.gspo), acc / h, 1e-12);
  }
}

TEST(RatioProfile, JsonRecordIsOneBased) {
  const auto j = to_json(ratio_profile(two_step({0, 1})));
  EXPECT_EQ(j["position_base"], 1);
  EXPECT_EQ(j["positions"][0]["position"], 1);
  EXPECT_NEAR(j["sequence_ratio"].get<double>(), 0.96, 1e-14);
}

}  // namespace
}  // namespace ctpo
