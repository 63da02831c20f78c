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

#include "ctpo/advantage.hpp"

#include <memory>

#include "ctpo/error.hpp"
#include "ctpo/numeric.hpp"

namespace ctpo {

std::string_view to_string(AdvantageKind kind) {
  switch (kind) {
    case AdvantageKind::kTrueAdvantage: return "true_advantage";
    case AdvantageKind::kFixedTable: return "fixed_table";
    case AdvantageKind::kGroupUniform: return "group_uniform";
  }
  return "unknown";
}

std::vector<std::vector<double>> prefix_values(const TokenMdp& mdp, const TabularPolicy& policy) {
  mdp.require_enumerable();
  const int h = mdp.horizon();
  const auto v = static_cast<std::size_t>(mdp.vocab_size());
  const auto probs = policy.prob_table();
  std::vector<std::vector<double>> values(static_cast<std::size_t>(h) + 1);

  auto& leaves = values[static_cast<std::size_t>(h)];
  leaves.resize(mdp.sequence_count());
  for (std::uint64_t code = 0; code < leaves.size(); ++code) {
    leaves[code] = mdp.reward(decode_prefix(code, h, mdp.vocab_size()));
  }
  for (int d = h - 1; d >= 0; --d) {
    const auto& child = values[static_cast<std::size_t>(d) + 1];
    auto& cur = values[static_cast<std::size_t>(d)];
    cur.resize(child.size() / v);
    for (std::uint64_t code = 0; code < cur.size(); ++code) {
      const double* pr = probs.data() + policy.row_index(d, code) * v;
      double acc = 0.0;
      for (std::size_t a = 0; a < v; ++a) acc += pr[a] * child[code * v + a];
      cur[code] = acc;
    }
  }
  return values;
}

AdvantageFn true_advantage(const TokenMdp& mdp, const TabularPolicy& policy) {
  auto values = std::make_shared<const std::vector<std::vector<double>>>(prefix_values(mdp, policy));
  const int vocab = mdp.vocab_size();
  return AdvantageFn(AdvantageKind::kTrueAdvantage, [values, vocab](std::span<const Token> prefix) {
    const std::size_t t = prefix.size();
    const std::uint64_t code = prefix_code(prefix, vocab);
    return (*values)[t][code] - (*values)[t - 1][code / static_cast<std::uint64_t>(vocab)];
  });
}

AdvantageFn q_value_advantage(const TokenMdp& mdp, const TabularPolicy& policy, double baseline) {
  auto values = std::make_shared<const std::vector<std::vector<double>>>(prefix_values(mdp, policy));
  const int vocab = mdp.vocab_size();
  return AdvantageFn(AdvantageKind::kTrueAdvantage,
                     [values, vocab, baseline](std::span<const Token> prefix) {
                       return (*values)[prefix.size()][prefix_code(prefix, vocab)] - baseline;
                     });
}

AdvantageFn fixed_table_advantage(std::uint64_t seed, int vocab_size, double scale) {
  return AdvantageFn(AdvantageKind::kFixedTable,
                     [seed, vocab_size, scale](std::span<const Token> prefix) {
                       // Key mixes length and code so prefixes of different
                       // lengths never share an entry.
                       const std::uint64_t key =
                           mix64(prefix.size()) ^ prefix_code(prefix, vocab_size);
                       return scale * (2.0 * hash_to_unit(seed, key) - 1.0);
                     });
}

AdvantageFn group_uniform_advantage(double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::kNonFinite, "advantage must be finite");
  return AdvantageFn(AdvantageKind::kGroupUniform, [value](std::span<const Token>) { return value; });
}

AdvantageFn zero_advantage() { return group_uniform_advantage(0.0); }

}  // namespace ctpo
