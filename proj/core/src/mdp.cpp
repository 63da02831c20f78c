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

#include "ctpo/mdp.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "ctpo/advantage.hpp"
#include "ctpo/error.hpp"
#include "ctpo/numeric.hpp"

namespace ctpo {

namespace {

constexpr Eigen::Index kMaxParameters = Eigen::Index{1} << 26;
constexpr std::size_t kTableLimit = std::size_t{1} << 22;

void check_shape(int vocab_size, int horizon) {
  if (vocab_size < 2) {
    throw Error(ErrorCode::kInvalidArgument, "vocab_size must be >= 2");
  }
  if (horizon < 1) {
    throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  }
}

// Row-wise log-probabilities, either precomputed or evaluated on demand.
class RowLogProbs {
 public:
  explicit RowLogProbs(const TabularPolicy& policy, bool precompute)
      : policy_(policy), scratch_(static_cast<std::size_t>(policy.vocab_size())) {
    if (precompute) table_ = policy.log_prob_table();
  }

  std::span<const double> operator()(std::size_t row) {
    const auto v = static_cast<std::size_t>(policy_.vocab_size());
    if (!table_.empty()) return {table_.data() + row * v, v};
    log_softmax(policy_.row(row), scratch_);
    return scratch_;
  }

 private:
  const TabularPolicy& policy_;
  std::vector<double> table_;
  std::vector<double> scratch_;
};

Token sample_from_log_probs(std::span<const double> logp, double u) {
  double cum = 0.0;
  for (std::size_t a = 0; a < logp.size(); ++a) {
    cum += std::exp(logp[a]);
    if (u < cum) return static_cast<Token>(a);
  }
  // u landed in the rounding gap above the accumulated mass.
  return static_cast<Token>(logp.size() - 1);
}

void sample_into(const TokenMdp& mdp, const TabularPolicy& behavior, const TabularPolicy& target,
                 RowLogProbs& blp, RowLogProbs& tlp, std::mt19937_64& rng, Trajectory& out) {
  const int h = mdp.horizon();
  const int v = mdp.vocab_size();
  out.actions.resize(static_cast<std::size_t>(h));
  out.logp_behavior.resize(static_cast<std::size_t>(h));
  out.logp_target.resize(static_cast<std::size_t>(h));
  std::uint64_t code = 0;
  for (int t = 0; t < h; ++t) {
    const auto b = blp(behavior.row_index(t, code));
    const Token a = sample_from_log_probs(b, uniform01(rng));
    const auto st = static_cast<std::size_t>(t);
    out.actions[st] = a;
    out.logp_behavior[st] = b[static_cast<std::size_t>(a)];
    out.logp_target[st] = tlp(target.row_index(t, code))[static_cast<std::size_t>(a)];
    code = code * static_cast<std::uint64_t>(v) + static_cast<std::uint64_t>(a);
  }
  out.reward = mdp.reward(out.actions);
}

void check_compatible(const TokenMdp& mdp, const TabularPolicy& policy) {
  if (policy.vocab_size() != mdp.vocab_size() || policy.horizon() != mdp.horizon()) {
    throw Error(ErrorCode::kUnknownState,
                "policy shape does not cover the MDP's prefix states");
  }
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kUnknownState: return "unknown_state";
    case ErrorCode::kEnumerationBudget: return "enumeration_budget";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

RewardSpec RewardSpec::count_token(Token token) {
  RewardSpec s;
  s.kind = Kind::kCountToken;
  s.token = token;
  return s;
}

RewardSpec RewardSpec::suffix_indicator(Sequence suffix) {
  RewardSpec s;
  s.kind = Kind::kSuffixIndicator;
  s.suffix = std::move(suffix);
  return s;
}

RewardSpec RewardSpec::random_table(std::uint64_t seed, double low, double high) {
  RewardSpec s;
  s.kind = Kind::kRandomTable;
  s.seed = seed;
  s.low = low;
  s.high = high;
  return s;
}

RewardSpec RewardSpec::constant(double value) {
  RewardSpec s;
  s.kind = Kind::kConstant;
  s.value = value;
  return s;
}

TokenMdp::TokenMdp(int vocab_size, int horizon, RewardSpec reward, std::string prompt_id,
                   std::uint64_t enumeration_budget)
    : vocab_size_(vocab_size),
      horizon_(horizon),
      spec_(std::move(reward)),
      prompt_id_(std::move(prompt_id)),
      budget_(enumeration_budget) {
  validate();
  const int v = vocab_size_;
  switch (spec_.kind) {
    case RewardSpec::Kind::kCountToken: {
      if (spec_.token < 0 || spec_.token >= v) {
        throw Error(ErrorCode::kInvalidArgument, "count_token reward token out of range");
      }
      const Token tok = spec_.token;
      reward_ = [tok](std::span<const Token> a) {
        double n = 0.0;
        for (Token x : a) n += (x == tok) ? 1.0 : 0.0;
        return n;
      };
      break;
    }
    case RewardSpec::Kind::kSuffixIndicator: {
      if (spec_.suffix.empty() || spec_.suffix.size() > static_cast<std::size_t>(horizon_)) {
        throw Error(ErrorCode::kInvalidArgument, "suffix length must be in [1, horizon]");
      }
      for (Token x : spec_.suffix) {
        if (x < 0 || x >= v) {
          throw Error(ErrorCode::kInvalidArgument, "suffix token out of range");
        }
      }
      const Sequence suffix = spec_.suffix;
      reward_ = [suffix](std::span<const Token> a) {
        const std::size_t off = a.size() - suffix.size();
        for (std::size_t i = 0; i < suffix.size(); ++i) {
          if (a[off + i] != suffix[i]) return 0.0;
        }
        return 1.0;
      };
      break;
    }
    case RewardSpec::Kind::kRandomTable: {
      if (!(spec_.high >= spec_.low) || !std::isfinite(spec_.low) || !std::isfinite(spec_.high)) {
        throw Error(ErrorCode::kInvalidArgument, "random_table needs finite low <= high");
      }
      const std::uint64_t seed = spec_.seed;
      const double low = spec_.low;
      const double span = spec_.high - spec_.low;
      reward_ = [seed, low, span, v](std::span<const Token> a) {
        return low + span * hash_to_unit(seed, prefix_code(a, v));
      };
      break;
    }
    case RewardSpec::Kind::kConstant: {
      if (!std::isfinite(spec_.value)) {
        throw Error(ErrorCode::kInvalidArgument, "constant reward must be finite");
      }
      const double c = spec_.value;
      reward_ = [c](std::span<const Token>) { return c; };
      break;
    }
    case RewardSpec::Kind::kCustom:
      throw Error(ErrorCode::kInvalidArgument, "custom rewards are passed as a callable");
  }
}

TokenMdp::TokenMdp(int vocab_size, int horizon, RewardFn reward, std::string prompt_id,
                   std::uint64_t enumeration_budget)
    : vocab_size_(vocab_size),
      horizon_(horizon),
      reward_(std::move(reward)),
      prompt_id_(std::move(prompt_id)),
      budget_(enumeration_budget) {
  spec_.kind = RewardSpec::Kind::kCustom;
  validate();
  if (!reward_) throw Error(ErrorCode::kInvalidArgument, "reward callable is empty");
}

void TokenMdp::validate() {
  check_shape(vocab_size_, horizon_);
  if (budget_ == 0) throw Error(ErrorCode::kInvalidArgument, "enumeration budget must be > 0");
  sequence_count_ =
      saturating_pow(static_cast<std::uint64_t>(vocab_size_), horizon_, budget_);
}

double TokenMdp::reward(std::span<const Token> actions) const {
  if (actions.size() != static_cast<std::size_t>(horizon_)) {
    throw Error(ErrorCode::kInvalidArgument, "reward needs a full action sequence");
  }
  for (Token a : actions) {
    if (a < 0 || a >= vocab_size_) {
      throw Error(ErrorCode::kInvalidArgument, "action token out of range");
    }
  }
  const double r = reward_(actions);
  if (!std::isfinite(r)) throw Error(ErrorCode::kNonFinite, "reward is not finite");
  return r;
}

void TokenMdp::require_enumerable() const {
  if (!enumerable()) {
    std::ostringstream os;
    os << "enumeration refused: V^H = " << vocab_size_ << "^" << horizon_
       << " exceeds the enumeration budget of " << budget_ << " sequences";
    throw Error(ErrorCode::kEnumerationBudget, os.str());
  }
}

std::uint64_t prefix_code(std::span<const Token> prefix, int vocab_size) {
  std::uint64_t code = 0;
  for (Token a : prefix) {
    code = code * static_cast<std::uint64_t>(vocab_size) + static_cast<std::uint64_t>(a);
  }
  return code;
}

Sequence decode_prefix(std::uint64_t code, int length, int vocab_size) {
  Sequence out(static_cast<std::size_t>(length));
  for (int i = length - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<Token>(code % static_cast<std::uint64_t>(vocab_size));
    code /= static_cast<std::uint64_t>(vocab_size);
  }
  return out;
}

TabularPolicy::TabularPolicy(int vocab_size, int horizon, Parameterization parameterization)
    : vocab_size_(vocab_size), horizon_(horizon), parameterization_(parameterization) {
  check_shape(vocab_size, horizon);
  if (parameterization_ == Parameterization::kPerPosition) {
    row_count_ = static_cast<std::size_t>(horizon);
  } else {
    const auto cap = static_cast<std::uint64_t>(kMaxParameters);
    depth_offsets_.resize(static_cast<std::size_t>(horizon) + 1);
    std::uint64_t width = 1;
    std::uint64_t total = 0;
    for (int d = 0; d < horizon; ++d) {
      depth_offsets_[static_cast<std::size_t>(d)] = total;
      total += width;
      if (total > cap) break;
      if (d + 1 < horizon) {
        if (width > cap / static_cast<std::uint64_t>(vocab_size)) {
          total = cap + 1;
          break;
        }
        width *= static_cast<std::uint64_t>(vocab_size);
      }
    }
    if (total * static_cast<std::uint64_t>(vocab_size) > cap) {
      throw Error(ErrorCode::kInvalidArgument,
                  "per-prefix logit table too large; use the per_position parameterization");
    }
    depth_offsets_[static_cast<std::size_t>(horizon)] = total;
    row_count_ = total;
  }
  logits_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(row_count_) * vocab_size);
}

TabularPolicy TabularPolicy::gaussian(int vocab_size, int horizon, double stddev,
                                      std::uint64_t seed, Parameterization parameterization) {
  if (!(stddev >= 0.0) || !std::isfinite(stddev)) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian init std must be finite and >= 0");
  }
  TabularPolicy p(vocab_size, horizon, parameterization);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < p.logits_.size(); ++i) p.logits_[i] = stddev * normal(rng);
  return p;
}

TabularPolicy TabularPolicy::from_position_probs(int vocab_size, int horizon,
                                                 const std::vector<std::vector<double>>& probs,
                                                 Parameterization parameterization) {
  if (probs.size() != 1 && probs.size() != static_cast<std::size_t>(horizon)) {
    throw Error(ErrorCode::kInvalidArgument, "position probs need 1 or horizon rows");
  }
  std::vector<std::vector<double>> logit_rows;
  for (const auto& row : probs) {
    if (row.size() != static_cast<std::size_t>(vocab_size)) {
      throw Error(ErrorCode::kInvalidArgument, "position probs row must have vocab_size entries");
    }
    double total = 0.0;
    std::vector<double> lr;
    for (double q : row) {
      if (!(q > 0.0) || !std::isfinite(q)) {
        throw Error(ErrorCode::kInvalidArgument, "position probs must be strictly positive");
      }
      total += q;
      lr.push_back(std::log(q));
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "position probs row must sum to 1");
    }
    logit_rows.push_back(std::move(lr));
  }
  TabularPolicy p(vocab_size, horizon, parameterization);
  for (int d = 0; d < horizon; ++d) {
    const auto& lr = logit_rows[logit_rows.size() == 1 ? 0 : static_cast<std::size_t>(d)];
    const std::uint64_t width =
        parameterization == Parameterization::kPerPosition
            ? 1
            : saturating_pow(static_cast<std::uint64_t>(vocab_size), d,
                             std::numeric_limits<std::uint64_t>::max() / 2);
    for (std::uint64_t c = 0; c < width; ++c) {
      auto dst = p.mutable_row(p.row_index(d, c));
      std::copy(lr.begin(), lr.end(), dst.begin());
    }
  }
  return p;
}

std::size_t TabularPolicy::row_index(std::span<const Token> prefix) const {
  if (prefix.size() >= static_cast<std::size_t>(horizon_)) {
    throw Error(ErrorCode::kUnknownState, "unknown state: prefix length " +
                                              std::to_string(prefix.size()) +
                                              " has no logit row (horizon " +
                                              std::to_string(horizon_) + ")");
  }
  for (Token a : prefix) {
    if (a < 0 || a >= vocab_size_) {
      throw Error(ErrorCode::kUnknownState, "unknown state: token " + std::to_string(a) +
                                                " outside the vocabulary");
    }
  }
  return row_index(static_cast<int>(prefix.size()), prefix_code(prefix, vocab_size_));
}

std::span<const double> TabularPolicy::row(std::size_t r) const {
  const auto v = static_cast<std::size_t>(vocab_size_);
  return {logits_.data() + r * v, v};
}

std::span<double> TabularPolicy::mutable_row(std::size_t r) {
  const auto v = static_cast<std::size_t>(vocab_size_);
  return {logits_.data() + r * v, v};
}

void TabularPolicy::set_parameters(const Eigen::VectorXd& logits) {
  if (logits.size() != logits_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "parameter vector has the wrong size");
  }
  if (!logits.allFinite()) throw Error(ErrorCode::kNonFinite, "non-finite logits");
  logits_ = logits;
}

std::vector<double> TabularPolicy::log_distribution(std::span<const Token> prefix) const {
  std::vector<double> out(static_cast<std::size_t>(vocab_size_));
  log_softmax(row(row_index(prefix)), out);
  return out;
}

std::vector<double> TabularPolicy::distribution(std::span<const Token> prefix) const {
  auto out = log_distribution(prefix);
  for (double& x : out) x = std::exp(x);
  return out;
}

double TabularPolicy::log_prob(std::span<const Token> prefix, Token action) const {
  if (action < 0 || action >= vocab_size_) {
    throw Error(ErrorCode::kInvalidArgument, "action token out of range");
  }
  return log_distribution(prefix)[static_cast<std::size_t>(action)];
}

std::vector<double> TabularPolicy::log_prob_table() const {
  std::vector<double> out(static_cast<std::size_t>(logits_.size()));
  const auto v = static_cast<std::size_t>(vocab_size_);
  for (std::size_t r = 0; r < row_count_; ++r) {
    log_softmax(row(r), std::span<double>(out.data() + r * v, v));
  }
  return out;
}

std::vector<double> TabularPolicy::prob_table() const {
  auto out = log_prob_table();
  for (double& x : out) x = std::exp(x);
  return out;
}

bool TabularPolicy::operator==(const TabularPolicy& other) const {
  return vocab_size_ == other.vocab_size_ && horizon_ == other.horizon_ &&
         parameterization_ == other.parameterization_ && logits_ == other.logits_;
}

std::vector<double> policy_distribution(const TabularPolicy& policy,
                                        std::span<const Token> prefix) {
  return policy.distribution(prefix);
}

double trajectory_logprob(const TabularPolicy& policy, std::span<const Token> actions) {
  if (actions.size() != static_cast<std::size_t>(policy.horizon())) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory_logprob needs a full action sequence");
  }
  CompensatedSum total;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    total.add(policy.log_prob(actions.subspan(0, t), actions[t]));
  }
  return total.value();
}

Trajectory make_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                           const TabularPolicy& target, Sequence actions) {
  check_compatible(mdp, behavior);
  check_compatible(mdp, target);
  if (actions.size() != static_cast<std::size_t>(mdp.horizon())) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory needs exactly horizon actions");
  }
  Trajectory out;
  out.logp_behavior.resize(actions.size());
  out.logp_target.resize(actions.size());
  const std::span<const Token> all(actions);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    out.logp_behavior[t] = behavior.log_prob(all.subspan(0, t), actions[t]);
    out.logp_target[t] = target.log_prob(all.subspan(0, t), actions[t]);
  }
  out.reward = mdp.reward(actions);
  out.actions = std::move(actions);
  return out;
}

Trajectory sample_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::mt19937_64& rng) {
  check_compatible(mdp, behavior);
  check_compatible(mdp, target);
  RowLogProbs blp(behavior, false);
  RowLogProbs tlp(target, false);
  Trajectory out;
  sample_into(mdp, behavior, target, blp, tlp, rng, out);
  return out;
}

Trajectory sample_trajectory(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_trajectory(mdp, behavior, target, rng);
}

void sample_stream(const TokenMdp& mdp, const TabularPolicy& behavior,
                   const TabularPolicy& target, std::size_t n, std::uint64_t seed, int threads,
                   const std::function<void(std::size_t, const Trajectory&)>& visit) {
  sample_chunk_range(mdp, behavior, target, n, seed, 0, (n + kSampleChunk - 1) / kSampleChunk,
                     threads, visit);
}

void sample_chunk_range(const TokenMdp& mdp, const TabularPolicy& behavior,
                        const TabularPolicy& target, std::size_t n, std::uint64_t seed,
                        std::size_t chunk_begin, std::size_t chunk_end, int threads,
                        const std::function<void(std::size_t, const Trajectory&)>& visit) {
  check_compatible(mdp, behavior);
  check_compatible(mdp, target);
  const bool tables =
      behavior.row_count() * static_cast<std::size_t>(behavior.vocab_size()) <= kTableLimit;
  // Tables are shared read-only; each worker gets its own scratch rows.
  std::vector<double> btab;
  std::vector<double> ttab;
  if (tables) {
    btab = behavior.log_prob_table();
    ttab = target.log_prob_table();
  }
  const std::size_t chunks = std::min(chunk_end, (n + kSampleChunk - 1) / kSampleChunk);
  if (chunk_begin >= chunks) return;
  parallel_chunks(chunks - chunk_begin, threads, [&](std::size_t offset) {
    const std::size_t c = chunk_begin + offset;
    std::mt19937_64 rng = derived_engine(seed, c);
    const auto v = static_cast<std::size_t>(mdp.vocab_size());
    std::vector<double> bscratch(v);
    std::vector<double> tscratch(v);
    Trajectory traj;
    const std::size_t end = std::min(n, (c + 1) * kSampleChunk);
    const int h = mdp.horizon();
    traj.actions.resize(static_cast<std::size_t>(h));
    traj.logp_behavior.resize(static_cast<std::size_t>(h));
    traj.logp_target.resize(static_cast<std::size_t>(h));
    for (std::size_t i = c * kSampleChunk; i < end; ++i) {
      std::uint64_t code = 0;
      for (int t = 0; t < h; ++t) {
        const std::size_t br = behavior.row_index(t, code);
        const std::size_t tr = target.row_index(t, code);
        std::span<const double> b;
        std::span<const double> tl;
        if (tables) {
          b = {btab.data() + br * v, v};
          tl = {ttab.data() + tr * v, v};
        } else {
          log_softmax(behavior.row(br), bscratch);
          log_softmax(target.row(tr), tscratch);
          b = bscratch;
          tl = tscratch;
        }
        const Token a = sample_from_log_probs(b, uniform01(rng));
        const auto st = static_cast<std::size_t>(t);
        traj.actions[st] = a;
        traj.logp_behavior[st] = b[static_cast<std::size_t>(a)];
        traj.logp_target[st] = tl[static_cast<std::size_t>(a)];
        code = code * static_cast<std::uint64_t>(v) + static_cast<std::uint64_t>(a);
      }
      traj.reward = mdp.reward(traj.actions);
      visit(i, traj);
    }
  });
}

TrajectoryBatch sample_batch(const TokenMdp& mdp, const TabularPolicy& behavior,
                             const TabularPolicy& target, std::size_t n, std::uint64_t seed,
                             int threads) {
  TrajectoryBatch out(n);
  sample_stream(mdp, behavior, target, n, seed, threads,
                [&](std::size_t i, const Trajectory& traj) { out[i] = traj; });
  return out;
}

void for_each_trajectory(
    const TokenMdp& mdp, const TabularPolicy& behavior, const TabularPolicy& target,
    const std::function<void(const Trajectory&, double, double)>& visit) {
  mdp.require_enumerable();
  check_compatible(mdp, behavior);
  check_compatible(mdp, target);
  const int h = mdp.horizon();
  const auto v = static_cast<std::uint64_t>(mdp.vocab_size());
  const auto vs = static_cast<std::size_t>(v);
  const auto btab = behavior.log_prob_table();
  const auto ttab = target.log_prob_table();

  Trajectory traj;
  const auto hs = static_cast<std::size_t>(h);
  traj.actions.assign(hs, 0);
  traj.logp_behavior.assign(hs, 0.0);
  traj.logp_target.assign(hs, 0.0);
  // codes[t] = prefix code of a_{1:t}; partial sums of log-probs likewise.
  std::vector<std::uint64_t> codes(hs + 1, 0);
  std::vector<double> cum_b(hs + 1, 0.0);
  std::vector<double> cum_t(hs + 1, 0.0);

  auto refresh_from = [&](int first) {
    for (int t = first; t < h; ++t) {
      const auto st = static_cast<std::size_t>(t);
      const Token a = traj.actions[st];
      const std::size_t br = behavior.row_index(t, codes[st]);
      const std::size_t tr = target.row_index(t, codes[st]);
      traj.logp_behavior[st] = btab[br * vs + static_cast<std::size_t>(a)];
      traj.logp_target[st] = ttab[tr * vs + static_cast<std::size_t>(a)];
      cum_b[st + 1] = cum_b[st] + traj.logp_behavior[st];
      cum_t[st + 1] = cum_t[st] + traj.logp_target[st];
      codes[st + 1] = codes[st] * v + static_cast<std::uint64_t>(a);
    }
  };

  refresh_from(0);
  const std::uint64_t total = mdp.sequence_count();
  for (std::uint64_t n = 0; n < total; ++n) {
    traj.reward = mdp.reward(traj.actions);
    visit(traj, std::exp(cum_b[hs]), std::exp(cum_t[hs]));
    if (n + 1 == total) break;
    int pos = h - 1;
    while (traj.actions[static_cast<std::size_t>(pos)] == static_cast<Token>(v - 1)) {
      traj.actions[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    ++traj.actions[static_cast<std::size_t>(pos)];
    refresh_from(pos);
  }
}

std::vector<WeightedTrajectory> enumerate_trajectories(const TokenMdp& mdp,
                                                       const TabularPolicy& behavior,
                                                       const TabularPolicy& target) {
  mdp.require_enumerable();
  std::vector<WeightedTrajectory> out;
  out.reserve(mdp.sequence_count());
  for_each_trajectory(mdp, behavior, target, [&](const Trajectory& t, double pb, double pt) {
    out.push_back({t, pb, pt});
  });
  return out;
}

double exact_expected_reward(const TokenMdp& mdp, const TabularPolicy& policy) {
  CompensatedSum total;
  for_each_trajectory(mdp, policy, policy,
                      [&](const Trajectory& t, double pb, double) { total.add(pb * t.reward); });
  return total.value();
}

double max_reward(const TokenMdp& mdp) {
  mdp.require_enumerable();
  const TabularPolicy uniform(mdp.vocab_size(), mdp.horizon(), Parameterization::kPerPosition);
  double best = -std::numeric_limits<double>::infinity();
  for_each_trajectory(mdp, uniform, uniform, [&](const Trajectory& t, double, double) {
    best = std::max(best, t.reward);
  });
  return best;
}

void add_score(const TabularPolicy& policy, std::size_t row, std::span<const double> row_probs,
               Token action, double scale, Eigen::VectorXd& grad) {
  const auto v = static_cast<std::size_t>(policy.vocab_size());
  double* g = grad.data() + row * v;
  for (std::size_t k = 0; k < v; ++k) g[k] -= scale * row_probs[k];
  g[static_cast<std::size_t>(action)] += scale;
}

Eigen::VectorXd exact_policy_gradient(const TokenMdp& mdp, const TabularPolicy& policy,
                                      const AdvantageFn& advantage) {
  mdp.require_enumerable();
  check_compatible(mdp, policy);
  const int h = mdp.horizon();
  const auto v = static_cast<std::size_t>(mdp.vocab_size());
  const auto probs = policy.prob_table();
  CompensatedVector grad(policy.parameter_count());

  // Walk the prefix tree depth by depth carrying pi(a_{1:t}).
  std::vector<double> prefix_prob{1.0};
  Sequence tokens;
  for (int t = 0; t < h; ++t) {
    std::vector<double> next(prefix_prob.size() * v);
    for (std::uint64_t code = 0; code < prefix_prob.size(); ++code) {
      const std::size_t row = policy.row_index(t, code);
      const double* pr = probs.data() + row * v;
      tokens = decode_prefix(code, t, mdp.vocab_size());
      tokens.push_back(0);
      for (std::size_t a = 0; a < v; ++a) {
        const double p = prefix_prob[code] * pr[a];
        next[code * v + a] = p;
        tokens.back() = static_cast<Token>(a);
        const double weight = p * advantage(tokens);
        if (weight == 0.0) continue;
        const auto base = static_cast<Eigen::Index>(row * v);
        for (std::size_t k = 0; k < v; ++k) {
          grad.add(base + static_cast<Eigen::Index>(k), -weight * pr[k]);
        }
        grad.add(base + static_cast<Eigen::Index>(a), weight);
      }
    }
    prefix_prob = std::move(next);
  }
  return grad.value();
}

}  // namespace ctpo
