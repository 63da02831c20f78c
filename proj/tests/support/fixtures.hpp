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

#include <cmath>
#include <random>

#include "ctpo/advantage.hpp"
#include "ctpo/mdp.hpp"

namespace ctpo::testing {

// Binary policy with P(0) = p0 at every state.
inline TabularPolicy binary_policy(int horizon, double p0,
                                   Parameterization param = Parameterization::kPerPrefix) {
  return TabularPolicy::from_position_probs(2, horizon, {{p0, 1.0 - p0}}, param);
}

// Random positive distribution over V tokens.
inline std::vector<double> random_distribution(int vocab, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<double> p(static_cast<std::size_t>(vocab));
  double z = 0.0;
  for (double& x : p) z += (x = u(rng));
  for (double& x : p) x /= z;
  return p;
}

// Small instance where the prefix correction is far from 1.
struct BiasWitness {
  TokenMdp mdp{2, 2, RewardSpec::count_token(1)};
  TabularPolicy behavior = binary_policy(2, 0.5);
  TabularPolicy target = binary_policy(2, 0.8);
  AdvantageFn advantage = fixed_table_advantage(17, 2);
};

}  // namespace ctpo::testing
