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

#include "ctpo/config.hpp"

#include <cmath>

#include "ctpo/error.hpp"

namespace ctpo {

ConfigReader::ConfigReader(const json& object, std::string path)
    : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) {
    throw Error(ErrorCode::kConfig, path_ + ": expected a JSON object");
  }
}

bool ConfigReader::has(const std::string& key) const { return object_.contains(key); }

void ConfigReader::fail(const std::string& key, const std::string& what) const {
  throw Error(ErrorCode::kConfig, path_ + "." + key + ": " + what);
}

template <class T>
T ConfigReader::required(const std::string& key) {
  if (!object_.contains(key)) fail(key, "missing required key");
  consumed_.insert(key);
  try {
    T value = object_.at(key).get<T>();
    resolved_[key] = value;
    return value;
  } catch (const json::exception& e) {
    fail(key, std::string("wrong type (") + e.what() + ")");
  }
}

template <class T>
T ConfigReader::optional(const std::string& key, const T& fallback) {
  if (!object_.contains(key)) {
    resolved_[key] = fallback;
    return fallback;
  }
  return required<T>(key);
}

template int ConfigReader::required<int>(const std::string&);
template double ConfigReader::required<double>(const std::string&);
template bool ConfigReader::required<bool>(const std::string&);
template std::string ConfigReader::required<std::string>(const std::string&);
template std::uint64_t ConfigReader::required<std::uint64_t>(const std::string&);
template std::vector<int> ConfigReader::required<std::vector<int>>(const std::string&);
template std::vector<double> ConfigReader::required<std::vector<double>>(const std::string&);
template std::vector<std::vector<double>> ConfigReader::required<std::vector<std::vector<double>>>(
    const std::string&);
template int ConfigReader::optional<int>(const std::string&, const int&);
template double ConfigReader::optional<double>(const std::string&, const double&);
template bool ConfigReader::optional<bool>(const std::string&, const bool&);
template std::string ConfigReader::optional<std::string>(const std::string&, const std::string&);
template std::uint64_t ConfigReader::optional<std::uint64_t>(const std::string&,
                                                             const std::uint64_t&);
template std::vector<int> ConfigReader::optional<std::vector<int>>(const std::string&,
                                                                   const std::vector<int>&);
template std::vector<double> ConfigReader::optional<std::vector<double>>(
    const std::string&, const std::vector<double>&);

ConfigReader ConfigReader::child(const std::string& key) {
  if (!object_.contains(key)) fail(key, "missing required object");
  consumed_.insert(key);
  return ConfigReader(object_.at(key), path_ + "." + key);
}

const json& ConfigReader::raw(const std::string& key) {
  if (!object_.contains(key)) fail(key, "missing required key");
  consumed_.insert(key);
  return object_.at(key);
}

void ConfigReader::set_resolved(const std::string& key, json value) {
  resolved_[key] = std::move(value);
}

void ConfigReader::finish() const {
  for (const auto& [key, _] : object_.items()) {
    if (!consumed_.count(key)) {
      throw Error(ErrorCode::kConfig, path_ + "." + key + ": unknown key");
    }
  }
}

namespace {

RewardSpec reward_from_json(ConfigReader& r) {
  const auto kind = r.required<std::string>("kind");
  RewardSpec spec;
  if (kind == "count_token") {
    spec = RewardSpec::count_token(r.required<int>("token"));
  } else if (kind == "suffix_indicator") {
    spec = RewardSpec::suffix_indicator(r.required<std::vector<int>>("suffix"));
  } else if (kind == "random_table") {
    spec = RewardSpec::random_table(r.required<std::uint64_t>("seed"), r.optional("low", 0.0),
                                    r.optional("high", 1.0));
  } else if (kind == "constant") {
    spec = RewardSpec::constant(r.required<double>("value"));
  } else {
    throw Error(ErrorCode::kConfig, r.path() + ".kind: unknown reward kind '" + kind + "'");
  }
  r.finish();
  return spec;
}

}  // namespace

json to_json(const RewardSpec& spec) {
  switch (spec.kind) {
    case RewardSpec::Kind::kCountToken: return {{"kind", "count_token"}, {"token", spec.token}};
    case RewardSpec::Kind::kSuffixIndicator:
      return {{"kind", "suffix_indicator"}, {"suffix", spec.suffix}};
    case RewardSpec::Kind::kRandomTable:
      return {{"kind", "random_table"}, {"seed", spec.seed}, {"low", spec.low}, {"high", spec.high}};
    case RewardSpec::Kind::kConstant: return {{"kind", "constant"}, {"value", spec.value}};
    case RewardSpec::Kind::kCustom: return {{"kind", "custom"}};
  }
  return {};
}

TokenMdp mdp_from_json(ConfigReader& r) {
  const int vocab = r.required<int>("vocab_size");
  const int horizon = r.required<int>("horizon");
  auto rr = r.child("reward");
  RewardSpec reward = reward_from_json(rr);
  r.set_resolved("reward", rr.resolved());
  const auto prompt = r.optional<std::string>("prompt_id", "x0");
  const auto budget = r.optional<std::uint64_t>("enumeration_budget", kDefaultEnumerationBudget);
  r.finish();
  try {
    return TokenMdp(vocab, horizon, std::move(reward), prompt, budget);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, r.path() + ": " + e.what());
  }
}

TabularPolicy policy_from_json(ConfigReader& r, const TokenMdp& mdp) {
  const auto param_name = r.optional<std::string>("parameterization", "per_prefix");
  Parameterization param;
  if (param_name == "per_prefix") {
    param = Parameterization::kPerPrefix;
  } else if (param_name == "per_position") {
    param = Parameterization::kPerPosition;
  } else {
    throw Error(ErrorCode::kConfig, r.path() + ".parameterization: expected per_prefix or per_position");
  }
  const int v = mdp.vocab_size();
  const int h = mdp.horizon();
  try {
    if (!r.has("init") || (r.raw("init").is_string() && r.raw("init") == "zeros")) {
      r.set_resolved("init", "zeros");
      r.finish();
      return TabularPolicy(v, h, param);
    }
    auto init = r.child("init");
    const auto kind = init.required<std::string>("kind");
    std::optional<TabularPolicy> out;
    if (kind == "zeros") {
      out.emplace(v, h, param);
    } else if (kind == "gaussian") {
      out.emplace(TabularPolicy::gaussian(v, h, init.required<double>("std"),
                                          init.required<std::uint64_t>("seed"), param));
    } else if (kind == "position_probs") {
      out.emplace(TabularPolicy::from_position_probs(
          v, h, init.required<std::vector<std::vector<double>>>("probs"), param));
    } else if (kind == "explicit") {
      const auto rows = init.required<std::vector<std::vector<double>>>("logits");
      out.emplace(v, h, param);
      if (rows.size() != out->row_count()) {
        throw Error(ErrorCode::kConfig, init.path() + ".logits: expected " +
                                            std::to_string(out->row_count()) + " rows");
      }
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != static_cast<std::size_t>(v)) {
          throw Error(ErrorCode::kConfig, init.path() + ".logits: row width must be vocab_size");
        }
        auto dst = out->mutable_row(i);
        std::copy(rows[i].begin(), rows[i].end(), dst.begin());
      }
      if (!out->parameters().allFinite()) {
        throw Error(ErrorCode::kConfig, init.path() + ".logits: non-finite entry");
      }
    } else {
      throw Error(ErrorCode::kConfig, init.path() + ".kind: unknown policy init '" + kind + "'");
    }
    init.finish();
    r.set_resolved("init", init.resolved());
    r.finish();
    return std::move(*out);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, r.path() + ": " + e.what());
  }
}

ClipSchedule clip_schedule_from_json(ConfigReader& r) {
  const auto mode = r.required<std::string>("mode");
  try {
    ClipSchedule s;
    if (mode == "fixed_ratio") {
      s = ClipSchedule::fixed_ratio(r.required<double>("lower"), r.required<double>("upper"));
    } else if (mode == "symmetric") {
      s = ClipSchedule::symmetric(r.required<double>("eps"));
    } else if (mode == "adaptive_log") {
      s = ClipSchedule::adaptive_log(r.required<double>("eps_low"), r.required<double>("eps_high"),
                                     r.optional("p", 0.5));
    } else {
      throw Error(ErrorCode::kConfig, r.path() + ".mode: unknown clip mode '" + mode + "'");
    }
    r.finish();
    return s;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, r.path() + ": " + e.what());
  }
}

TrainConfig train_config_from_json(ConfigReader& r) {
  TrainConfig c;
  try {
    c.objective.kind = parse_objective_kind(r.optional<std::string>("objective", "ctpo"));
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, r.path() + ".objective: " + e.what());
  }
  if (r.has("clip")) {
    auto clip = r.child("clip");
    c.objective.schedule = clip_schedule_from_json(clip);
    r.set_resolved("clip", clip.resolved());
  } else {
    c.objective.schedule = c.objective.kind == ObjectiveKind::kCtpo
                               ? ClipSchedule::adaptive_log(0.025, 0.05, 0.5)
                               : ClipSchedule::symmetric(0.2);
    const auto& s = c.objective.schedule;
    r.set_resolved("clip", s.mode == ClipSchedule::Mode::kAdaptiveLog
                               ? json{{"mode", "adaptive_log"}, {"eps_low", s.eps_low},
                                      {"eps_high", s.eps_high}, {"p", s.exponent}}
                               : json{{"mode", "fixed_ratio"}, {"lower", s.lower}, {"upper", s.upper}});
  }
  c.group_size = r.optional("group_size", c.group_size);
  c.prompts_per_step = r.optional("prompts_per_step", c.prompts_per_step);
  c.inner_epochs = r.optional("inner_epochs", c.inner_epochs);
  c.learning_rate = r.optional("learning_rate", c.learning_rate);
  c.total_steps = r.optional("total_steps", c.total_steps);
  c.eval_samples = r.optional<std::uint64_t>("eval_samples", c.eval_samples);
  r.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, r.path() + ": " + e.what());
  }
  return c;
}

}  // namespace ctpo
