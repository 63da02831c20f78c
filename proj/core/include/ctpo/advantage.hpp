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

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>

#include "ctpo/mdp.hpp"

namespace ctpo {

enum class AdvantageKind {
  kTrueAdvantage,  // Q(a_{1:t}) - V(a_{1:t-1}) (or Q - baseline) under a frozen policy
  kFixedTable,     // seeded pseudo-random table over prefixes
  kGroupUniform,   // one constant at every position
};

std::string_view to_string(AdvantageKind kind);

// Token-level advantage A_t as a pure function of the prefix a_{1:t}
// (t = prefix.size() >= 1). It never sees the suffix.
class AdvantageFn {
 public:
  using Fn = std::function<double(std::span<const Token>)>;

  AdvantageFn(AdvantageKind kind, Fn fn) : kind_(kind), fn_(std::move(fn)) {}

  AdvantageKind kind() const noexcept { return kind_; }
  double operator()(std::span<const Token> prefix) const { return fn_(prefix); }

 private:
  AdvantageKind kind_;
  Fn fn_;
};

// Q - V under `policy`, tabulated by enumeration when constructed.
AdvantageFn true_advantage(const TokenMdp& mdp, const TabularPolicy& policy);
// Q(a_{1:t}) - baseline under `policy`.
AdvantageFn q_value_advantage(const TokenMdp& mdp, const TabularPolicy& policy, double baseline);
// Uniform values in [-scale, scale], keyed by (seed, t, prefix).
AdvantageFn fixed_table_advantage(std::uint64_t seed, int vocab_size, double scale = 1.0);
AdvantageFn group_uniform_advantage(double value);
AdvantageFn zero_advantage();

// Expected terminal reward given each prefix, for every depth 0..H under
// `policy`: values[d][prefix_code].
std::vector<std::vector<double>> prefix_values(const TokenMdp& mdp, const TabularPolicy& policy);

}  // namespace ctpo
