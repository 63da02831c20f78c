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

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ctpo {

using Token = int;
using Sequence = std::vector<Token>;

inline constexpr std::uint64_t kDefaultEnumerationBudget = 10'000'000;

// Description of a shipped reward function. kCustom marks rewards supplied as
// a callable; those cannot be serialized back to config.
struct RewardSpec {
  enum class Kind { kCountToken, kSuffixIndicator, kRandomTable, kConstant, kCustom };

  Kind kind = Kind::kConstant;
  Token token = 0;       // kCountToken
  Sequence suffix;       // kSuffixIndicator
  std::uint64_t seed = 0;  // kRandomTable
  double low = 0.0;      // kRandomTable
  double high = 1.0;     // kRandomTable
  double value = 0.0;    // kConstant

  static RewardSpec count_token(Token token);
  static RewardSpec suffix_indicator(Sequence suffix);
  static RewardSpec random_table(std::uint64_t seed, double low = 0.0, double high = 1.0);
  static RewardSpec constant(double value);
};

using RewardFn = std::function<double(std::span<const Token>)>;

// Finite-horizon token MDP with deterministic transitions s_{t+1} = s_t . a_t
// and a terminal reward on the full action sequence. The prompt is implicit
// in the instance and carried only as a label.
class TokenMdp {
 public:
  TokenMdp(int vocab_size, int horizon, RewardSpec reward, std::string prompt_id = "x0",
           std::uint64_t enumeration_budget = kDefaultEnumerationBudget);
  TokenMdp(int vocab_size, int horizon, RewardFn reward, std::string prompt_id = "x0",
           std::uint64_t enumeration_budget = kDefaultEnumerationBudget);

  int vocab_size() const noexcept { return vocab_size_; }
  int horizon() const noexcept { return horizon_; }
  const std::string& prompt_id() const noexcept { return prompt_id_; }
  const RewardSpec& reward_spec() const noexcept { return spec_; }
  std::uint64_t enumeration_budget() const noexcept { return budget_; }

  // Requires actions.size() == horizon and every token in [0, V).
  double reward(std::span<const Token> actions) const;

  // V^H, or budget + 1 when it exceeds the budget.
  std::uint64_t sequence_count() const noexcept { return sequence_count_; }
  bool enumerable() const noexcept { return sequence_count_ <= budget_; }
  // Throws kEnumerationBudget naming the bound.
  void require_enumerable() const;

 private:
  void validate();

  int vocab_size_;
  int horizon_;
  RewardSpec spec_;
  RewardFn reward_;
  std::string prompt_id_;
  std::uint64_t budget_;
  std::uint64_t sequence_count_;
};

// Base-V code of a prefix; distinct prefixes of one length get distinct codes.
std::uint64_t prefix_code(std::span<const Token> prefix, int vocab_size);
Sequence decode_prefix(std::uint64_t code, int length, int vocab_size);

enum class Parameterization {
  kPerPrefix,    // one logit row per prefix state
  kPerPosition,  // one logit row per depth, shared by all prefixes of that depth
};

// Softmax policy over next tokens. Parameters are a flat row-major table
// [row][token]; the row for a prefix state is row_index(prefix).
class TabularPolicy {
 public:
  TabularPolicy(int vocab_size, int horizon,
                Parameterization parameterization = Parameterization::kPerPrefix);

  static TabularPolicy gaussian(int vocab_size, int horizon, double stddev, std::uint64_t seed,
                                Parameterization parameterization = Parameterization::kPerPrefix);
  // Every prefix at depth t uses probs[t] (or probs[0] when a single row is
  // given). Probabilities must be strictly positive and sum to 1.
  static TabularPolicy from_position_probs(
      int vocab_size, int horizon, const std::vector<std::vector<double>>& probs,
      Parameterization parameterization = Parameterization::kPerPrefix);

  int vocab_size() const noexcept { return vocab_size_; }
  int horizon() const noexcept { return horizon_; }
  Parameterization parameterization() const noexcept { return parameterization_; }
  std::size_t row_count() const noexcept { return row_count_; }
  Eigen::Index parameter_count() const noexcept { return logits_.size(); }

  // depth = prefix length in [0, H); code = prefix_code of that prefix.
  std::size_t row_index(int depth, std::uint64_t code) const noexcept {
    return parameterization_ == Parameterization::kPerPosition
               ? static_cast<std::size_t>(depth)
               : depth_offsets_[static_cast<std::size_t>(depth)] + code;
  }
  // Throws kUnknownState for prefixes of length >= H or out-of-range tokens.
  std::size_t row_index(std::span<const Token> prefix) const;

  std::span<const double> row(std::size_t r) const;
  std::span<double> mutable_row(std::size_t r);

  const Eigen::VectorXd& parameters() const noexcept { return logits_; }
  void set_parameters(const Eigen::VectorXd& logits);

  std::vector<double> distribution(std::span<const Token> prefix) const;
  std::vector<double> log_distribution(std::span<const Token> prefix) const;
  double log_prob(std::span<const Token> prefix, Token action) const;

  // Log-softmax / softmax of every row, row-major like parameters().
  std::vector<double> log_prob_table() const;
  std::vector<double> prob_table() const;

  bool operator==(const TabularPolicy& other) const;

 private:
  int vocab_size_;
  int horizon_;
  Parameterization parameterization_;
  std::vector<std::size_t> depth_offsets_;
  std::size_t row_count_;
  Eigen::VectorXd logits_;
};

// Returns softmax(logits[prefix]).
std::vector<double> policy_distribution(const TabularPolicy& policy, std::span<const Token> prefix);

struct Trajectory {
  Sequence actions;
  std::vector<double> logp_target;
  std::vector<double> logp_behavior;
  double reward = 0.0;

  int length() const noexcept { return static_cast<int>(actions.size()); }
  bool operator==(const Trajectory&) const = default;
};

using TrajectoryBatch = std::vector<Trajectory>;

// log pi(a_{1:H} | x) as a sum of per-step log-probabilities.
double trajectory_logprob(const TabularPolicy& policy, std::span<const Token> actions);

// Fills logp_target/logp_behavior and reward for a given action sequence.
Trajectory make_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                           const TabularPolicy& target, Sequence actions);

// Ancestral sample from `behavior`; log-probs recorded under both policies.
Trajectory sample_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::uint64_t seed);
Trajectory sample_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::mt19937_64& rng);

inline constexpr std::size_t kSampleChunk = 1024;

// Samples n trajectories from `behavior` in fixed chunks of kSampleChunk; chunk
// c draws from an engine derived from (seed, c), so trajectory i depends only
// on (seed, i). visit(i, traj) runs on the worker owning chunk i / kSampleChunk,
// in index order within the chunk.
void sample_stream(const TokenMdp& mdp, const TabularPolicy& behavior,
                   const TabularPolicy& target, std::size_t n, std::uint64_t seed, int threads,
                   const std::function<void(std::size_t, const Trajectory&)>& visit);

// Same as sample_stream restricted to chunks [chunk_begin, chunk_end).
void sample_chunk_range(const TokenMdp& mdp, const TabularPolicy& behavior,
                        const TabularPolicy& target, std::size_t n, std::uint64_t seed,
                        std::size_t chunk_begin, std::size_t chunk_end, int threads,
                        const std::function<void(std::size_t, const Trajectory&)>& visit);

// Materialized sample_stream; identical for every thread count.
TrajectoryBatch sample_batch(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::size_t n, std::uint64_t seed,
                             int threads = 1);

struct WeightedTrajectory {
  Trajectory trajectory;
  double prob_behavior = 0.0;
  double prob_target = 0.0;
};

// All V^H trajectories in lexicographic order.
std::vector<WeightedTrajectory> enumerate_trajectories(const TokenMdp& mdp,
                                                       const TabularPolicy& behavior,
                                                       const TabularPolicy& target);

// Streaming form of enumerate_trajectories; visit(traj, prob_behavior, prob_target).
void for_each_trajectory(
    const TokenMdp& mdp, const TabularPolicy& behavior, const TabularPolicy& target,
    const std::function<void(const Trajectory&, double, double)>& visit);

double exact_expected_reward(const TokenMdp& mdp, const TabularPolicy& policy);

// max_tau R(tau) by enumeration.
double max_reward(const TokenMdp& mdp);

class AdvantageFn;

// Sum_tau pi(tau) Sum_t A_t grad log pi(a_t|s_t), computed over the prefix
// tree with the softmax score identity.
Eigen::VectorXd exact_policy_gradient(const TokenMdp& mdp, const TabularPolicy& policy,
                                      const AdvantageFn& advantage);

// Adds scale * grad_theta log pi(action | prefix row) into `grad`.
void add_score(const TabularPolicy& policy, std::size_t row, std::span<const double> row_probs,
               Token action, double scale, Eigen::VectorXd& grad);

}  // namespace ctpo
