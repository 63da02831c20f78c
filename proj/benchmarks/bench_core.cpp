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


#include <benchmark/benchmark.h>

#include "ctpo/estimators.hpp"
#include "ctpo/objectives.hpp"
#include "ctpo/trainer.hpp"

namespace {

using namespace ctpo;

struct Setup {
  TokenMdp mdp;
  TabularPolicy behavior;
  TabularPolicy target;
};

Setup make_setup(int vocab, int horizon,
                 Parameterization param = Parameterization::kPerPrefix) {
  return {TokenMdp(vocab, horizon, RewardSpec::count_token(1)),
          TabularPolicy::gaussian(vocab, horizon, 0.5, 1, param),
          TabularPolicy::gaussian(vocab, horizon, 0.5, 2, param)};
}

void BM_ExactIsExpectation(benchmark::State& state) {
  const auto s = make_setup(3, static_cast<int>(state.range(0)));
  const auto adv = true_advantage(s.mdp, s.target);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        exact_is_expectation(s.mdp, s.behavior, s.target, RatioMode::kCumulative, adv));
  }
}
BENCHMARK(BM_ExactIsExpectation)->DenseRange(2, 6, 2);

void BM_VarianceProfile(benchmark::State& state) {
  const auto s = make_setup(3, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_ratio_variance_profile(s.mdp, s.behavior, s.target));
  }
}
BENCHMARK(BM_VarianceProfile)->DenseRange(2, 8, 2);

void BM_SampleStream(benchmark::State& state) {
  const auto s = make_setup(8, 32, Parameterization::kPerPosition);
  const auto threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    double acc = 0.0;
    sample_stream(s.mdp, s.behavior, s.target, 1 << 14, 3, threads,
                  [&](std::size_t, const Trajectory& t) { benchmark::DoNotOptimize(acc += t.reward); });
  }
  state.SetItemsProcessed(state.iterations() * (1 << 14));
}
BENCHMARK(BM_SampleStream)->Arg(1)->Arg(4)->UseRealTime();

void BM_ObjectiveGradient(benchmark::State& state) {
  const auto s = make_setup(4, 6);
  const auto kind = static_cast<ObjectiveKind>(state.range(0));
  const ObjectiveSpec spec{kind, kind == ObjectiveKind::kCtpo ? ClipSchedule::adaptive_log(0.025, 0.05, 0.5)
                                                              : ClipSchedule::symmetric(0.2)};
  const auto batch = sample_batch(s.mdp, s.behavior, s.behavior, 8, 4);
  const auto group = GroupBatch::from_trajectories("p0", batch);
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective_gradient(group, s.target, s.behavior, spec));
  }
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_ObjectiveGradient)
    ->Arg(static_cast<int>(ObjectiveKind::kGrpo))
    ->Arg(static_cast<int>(ObjectiveKind::kGspo))
    ->Arg(static_cast<int>(ObjectiveKind::kCtpo));

void BM_TrainTenSteps(benchmark::State& state) {
  const TokenMdp mdp(4, 6, RewardSpec::count_token(1));
  TrainConfig cfg;
  cfg.objective = {ObjectiveKind::kCtpo, ClipSchedule::adaptive_log(0.025, 0.05, 0.5)};
  cfg.total_steps = 10;
  cfg.seed = 7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(mdp, TabularPolicy(4, 6), cfg));
  }
}
BENCHMARK(BM_TrainTenSteps)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
