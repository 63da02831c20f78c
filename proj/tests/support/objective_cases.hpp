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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "ctpo/objectives.hpp"
#include "support/oracles.hpp"

namespace ctpo::testing {

struct ObjectiveCase {
  TokenMdp mdp;
  TabularPolicy behavior;
  TabularPolicy target;
  std::vector<GroupBatch> groups;
};

// Behavior sampled groups with a target nudged away from behavior.
inline ObjectiveCase random_objective_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int v = 2 + static_cast<int>(rng() % 2);
  const int h = 1 + static_cast<int>(rng() % 4);
  const auto param = rng() % 2 ? Parameterization::kPerPosition : Parameterization::kPerPrefix;
  TokenMdp mdp(v, h, RewardSpec::random_table(rng()));
  TabularPolicy behavior = TabularPolicy::gaussian(v, h, 0.5, rng(), param);
  TabularPolicy target = behavior;
  std::normal_distribution<double> noise(0.0, 0.15);
  Eigen::VectorXd theta = behavior.parameters();
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += noise(rng);
  target.set_parameters(theta);
  std::vector<GroupBatch> groups;
  for (int g = 0; g < 2; ++g) {
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 4; ++i) trajs.push_back(sample_trajectory(mdp, behavior, target, rng));
    groups.push_back(GroupBatch::from_trajectories(mdp.prompt_id(), std::move(trajs)));
  }
  return {std::move(mdp), std::move(behavior), std::move(target), std::move(groups)};
}

// Smallest distance between any clipped ratio and its active bound.
inline double min_clip_margin(const ObjectiveCase& c, const ObjectiveSpec& spec) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& g : c.groups) {
    const auto profiles = rescored_profiles(g, c.target, c.behavior);
    for (const auto& p : profiles) {
      if (spec.kind == ObjectiveKind::kGspo) {
        const ClipBounds b = clip_bounds(spec.schedule, 1);
        margin = std::min({margin, std::abs(p.gspo - b.lower), std::abs(p.gspo - b.upper)});
        continue;
      }
      for (int t = 1; t <= p.length(); ++t) {
        const double r = spec.kind == ObjectiveKind::kGrpo ? p.token_ratios[t - 1]
                                                           : p.cumulative[t - 1];
        const ClipBounds b = clip_bounds(spec.schedule, t);
        margin = std::min({margin, std::abs(r - b.lower), std::abs(r - b.upper)});
      }
    }
  }
  return margin;
}

inline Eigen::VectorXd fd_objective_gradient(const ObjectiveCase& c, const ObjectiveSpec& spec,
                                             double h) {
  auto f = [&](const Eigen::VectorXd& theta) {
    TabularPolicy p = c.target;
    p.set_parameters(theta);
    return objective_value(c.groups, p, c.behavior, spec);
  };
  return finite_difference(f, c.target.parameters(), h);
}

// max |analytic - fd| / max(|fd|_inf, floor)
inline double relative_gradient_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd,
                                      double floor = 1e-6) {
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), floor);
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

}  // namespace ctpo::testing
