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

#include <set>
#include <string>

#include "ctpo/mdp.hpp"
#include "ctpo/objectives.hpp"
#include "ctpo/trainer.hpp"

namespace ctpo {

using json = nlohmann::json;

// Strict reader over one JSON object. Every key read (or defaulted) is copied
// into resolved(); finish() rejects keys that were never read.
class ConfigReader {
 public:
  ConfigReader(const json& object, std::string path);

  bool has(const std::string& key) const;

  template <class T>
  T required(const std::string& key);
  template <class T>
  T optional(const std::string& key, const T& fallback);

  ConfigReader child(const std::string& key);
  // Raw access to a sub-value; the key counts as consumed.
  const json& raw(const std::string& key);
  void set_resolved(const std::string& key, json value);

  void finish() const;
  const json& resolved() const noexcept { return resolved_; }
  const std::string& path() const noexcept { return path_; }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  const json& object_;
  std::string path_;
  std::set<std::string> consumed_;
  json resolved_ = json::object();
};

// {"vocab_size", "horizon", "reward": {...}, "prompt_id"?, "enumeration_budget"?}
TokenMdp mdp_from_json(ConfigReader& reader);
// {"parameterization"?, "init": "zeros" | {"kind": "zeros"|"gaussian"|"position_probs"|"explicit", ...}}
TabularPolicy policy_from_json(ConfigReader& reader, const TokenMdp& mdp);
// {"mode": "fixed_ratio"|"symmetric"|"adaptive_log", ...}
ClipSchedule clip_schedule_from_json(ConfigReader& reader);
// Training knobs; objective and clip included.
TrainConfig train_config_from_json(ConfigReader& reader);

json to_json(const RewardSpec& spec);

}  // namespace ctpo
