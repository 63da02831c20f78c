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

#include "ctpo/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "ctpo/error.hpp"
#include "ctpo/numeric.hpp"

namespace ctpo {

namespace {

struct Term {
  double value;
  bool unclipped;  // gradient flows
};

Term clipped_term(double ratio, double advantage, ClipBounds bounds) {
  const double clipped = std::clamp(ratio, bounds.lower, bounds.upper);
  const double raw = ratio * advantage;
  const double cut = clipped * advantage;
  if (raw <= cut) return {raw, true};
  return {cut, false};
}

ClipBounds bounds_at(const ObjectiveSpec& spec, int t) {
  // GSPO has one sequence-level term, clipped with the position-1 bounds.
  return clip_bounds(spec.schedule, spec.kind == ObjectiveKind::kGspo ? 1 : t);
}

double token_weight(const RatioProfile& p, ObjectiveKind kind, std::size_t i) {
  return kind == ObjectiveKind::kGrpo ? p.token_ratios[i] : p.cumulative[i];
}

void check_aligned(const GroupBatch& batch, std::span<const RatioProfile> profiles) {
  if (profiles.size() != batch.trajectories.size() ||
      batch.advantages.size() != batch.trajectories.size()) {
    throw Error(ErrorCode::kInvalidArgument, "profiles are not aligned with the group batch");
  }
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].length() != batch.trajectories[i].length()) {
      throw Error(ErrorCode::kInvalidArgument, "profile length does not match its trajectory");
    }
  }
}

}  // namespace

ClipSchedule ClipSchedule::fixed_ratio(double lower, double upper) {
  ClipSchedule s;
  s.mode = Mode::kFixedRatio;
  s.lower = lower;
  s.upper = upper;
  s.validate();
  return s;
}

ClipSchedule ClipSchedule::symmetric(double eps) { return fixed_ratio(1.0 - eps, 1.0 + eps); }

ClipSchedule ClipSchedule::adaptive_log(double eps_low, double eps_high, double exponent) {
  ClipSchedule s;
  s.mode = Mode::kAdaptiveLog;
  s.eps_low = eps_low;
  s.eps_high = eps_high;
  s.exponent = exponent;
  s.validate();
  return s;
}

void ClipSchedule::validate() const {
  if (mode == Mode::kFixedRatio) {
    if (!(lower > 0.0 && lower <= 1.0 && upper >= 1.0 && std::isfinite(upper))) {
      throw Error(ErrorCode::kInvalidArgument, "fixed clip bounds need 0 < lower <= 1 <= upper");
    }
  } else {
    if (!(eps_low > 0.0 && eps_high > 0.0 && exponent >= 0.0) || !std::isfinite(eps_low) ||
        !std::isfinite(eps_high) || !std::isfinite(exponent)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "adaptive clip needs eps_low > 0, eps_high > 0, exponent >= 0");
    }
  }
}

ClipBounds clip_bounds(const ClipSchedule& schedule, int t) {
  if (t < 1) throw Error(ErrorCode::kInvalidArgument, "positions are 1-based");
  if (schedule.mode == ClipSchedule::Mode::kFixedRatio) return {schedule.lower, schedule.upper};
  const double scale = std::pow(static_cast<double>(t), schedule.exponent);
  return {std::exp(-schedule.eps_low * scale), std::exp(schedule.eps_high * scale)};
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "group advantages need G >= 2");
  }
  const double g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw Error(ErrorCode::kNonFinite, "non-finite reward in group");
    mean += r;
  }
  mean /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / g);
  std::vector<double> out(rewards.size(), 0.0);
  const bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                                     [&](double r) { return r == rewards.front(); });
  if (all_equal) return out;
  const double denom = std::max(sd, kAdvantageStdFloor);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

GroupBatch GroupBatch::from_trajectories(std::string prompt_id,
                                         std::vector<Trajectory> trajectories) {
  GroupBatch b;
  b.prompt_id = std::move(prompt_id);
  for (const auto& t : trajectories) b.rewards.push_back(t.reward);
  b.advantages = group_advantages(b.rewards);
  b.trajectories = std::move(trajectories);
  return b;
}

bool GroupBatch::degenerate() const {
  return std::all_of(advantages.begin(), advantages.end(), [](double a) { return a == 0.0; });
}

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kGrpo: return "grpo";
    case ObjectiveKind::kGspo: return "gspo";
    case ObjectiveKind::kCtpo: return "ctpo";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  for (ObjectiveKind k : {ObjectiveKind::kGrpo, ObjectiveKind::kGspo, ObjectiveKind::kCtpo}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown objective kind '" + std::string(name) + "'");
}

double surrogate_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles,
                           const ObjectiveSpec& spec) {
  check_aligned(batch, profiles);
  spec.schedule.validate();
  CompensatedSum total;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const RatioProfile& p = profiles[i];
    const double adv = batch.advantages[i];
    if (spec.kind == ObjectiveKind::kGspo) {
      total.add(clipped_term(p.gspo, adv, bounds_at(spec, 1)).value);
      continue;
    }
    const auto h = static_cast<std::size_t>(p.length());
    CompensatedSum seq;
    for (std::size_t t = 0; t < h; ++t) {
      seq.add(clipped_term(token_weight(p, spec.kind, t), adv,
                           bounds_at(spec, static_cast<int>(t) + 1))
                  .value);
    }
    total.add(seq.value() / static_cast<double>(h));
  }
  return total.value() / static_cast<double>(profiles.size());
}

double surrogate_objective(std::span<const GroupBatch> groups,
                           std::span<const std::vector<RatioProfile>> profiles,
                           const ObjectiveSpec& spec) {
  if (groups.empty() || groups.size() != profiles.size()) {
    throw Error(ErrorCode::kInvalidArgument, "groups and profiles must be non-empty and aligned");
  }
  CompensatedSum total;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    total.add(surrogate_objective(groups[g], profiles[g], spec));
  }
  return total.value() / static_cast<double>(groups.size());
}

double ctpo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles,
                      const ClipSchedule& schedule) {
  return surrogate_objective(batch, profiles, {ObjectiveKind::kCtpo, schedule});
}

double grpo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles, double eps) {
  return surrogate_objective(batch, profiles, {ObjectiveKind::kGrpo, ClipSchedule::symmetric(eps)});
}

double gspo_objective(const GroupBatch& batch, std::span<const RatioProfile> profiles, double eps) {
  return surrogate_objective(batch, profiles, {ObjectiveKind::kGspo, ClipSchedule::symmetric(eps)});
}

std::vector<RatioProfile> rescored_profiles(const GroupBatch& batch, const TabularPolicy& target,
                                            const TabularPolicy& behavior) {
  std::vector<RatioProfile> out;
  out.reserve(batch.trajectories.size());
  const auto v = static_cast<std::size_t>(target.vocab_size());
  std::vector<double> lt(v), lb(v);
  for (const auto& traj : batch.trajectories) {
    Trajectory scored = traj;
    std::uint64_t code = 0;
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      const int d = static_cast<int>(t);
      log_softmax(target.row(target.row_index(d, code)), lt);
      log_softmax(behavior.row(behavior.row_index(d, code)), lb);
      const auto a = static_cast<std::size_t>(traj.actions[t]);
      scored.logp_target[t] = lt[a];
      scored.logp_behavior[t] = lb[a];
      code = code * v + a;
    }
    out.push_back(ratio_profile(scored));
  }
  return out;
}

double objective_value(std::span<const GroupBatch> groups, const TabularPolicy& target,
                       const TabularPolicy& behavior, const ObjectiveSpec& spec) {
  std::vector<std::vector<RatioProfile>> profiles;
  for (const auto& g : groups) profiles.push_back(rescored_profiles(g, target, behavior));
  return surrogate_objective(groups, profiles, spec);
}

Eigen::VectorXd objective_gradient(std::span<const GroupBatch> groups, const TabularPolicy& target,
                                   const TabularPolicy& behavior, const ObjectiveSpec& spec) {
  if (groups.empty()) throw Error(ErrorCode::kInvalidArgument, "no groups");
  spec.schedule.validate();
  const auto v = static_cast<std::size_t>(target.vocab_size());
  CompensatedVector grad(target.parameter_count());
  std::vector<double> probs(v);
  const double group_scale = 1.0 / static_cast<double>(groups.size());

  for (const auto& batch : groups) {
    const auto profiles = rescored_profiles(batch, target, behavior);
    check_aligned(batch, profiles);
    const double traj_scale = group_scale / static_cast<double>(batch.trajectories.size());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const RatioProfile& p = profiles[i];
      const Trajectory& traj = batch.trajectories[i];
      const double adv = batch.advantages[i];
      const auto h = static_cast<std::size_t>(p.length());
      if (adv == 0.0) continue;

      // coef[t] multiplies the score at position t.
      std::vector<double> coef(h, 0.0);
      switch (spec.kind) {
        case ObjectiveKind::kGspo: {
          const Term term = clipped_term(p.gspo, adv, bounds_at(spec, 1));
          if (term.unclipped) {
            const double c = traj_scale * adv * p.gspo / static_cast<double>(h);
            std::fill(coef.begin(), coef.end(), c);
          }
          break;
        }
        case ObjectiveKind::kGrpo: {
          for (std::size_t t = 0; t < h; ++t) {
            if (clipped_term(p.token_ratios[t], adv, bounds_at(spec, static_cast<int>(t) + 1))
                    .unclipped) {
              coef[t] = traj_scale * adv * p.token_ratios[t] / static_cast<double>(h);
            }
          }
          break;
        }
        case ObjectiveKind::kCtpo: {
          // d rho_t^cum = rho_t^cum Sum_{t' <= t} score_{t'}: accumulate suffix sums.
          double running = 0.0;
          for (std::size_t t = h; t-- > 0;) {
            if (clipped_term(p.cumulative[t], adv, bounds_at(spec, static_cast<int>(t) + 1))
                    .unclipped) {
              running += traj_scale * adv * p.cumulative[t] / static_cast<double>(h);
            }
            coef[t] = running;
          }
          break;
        }
      }

      std::uint64_t code = 0;
      for (std::size_t t = 0; t < h; ++t) {
        const std::size_t row = target.row_index(static_cast<int>(t), code);
        const auto a = static_cast<std::size_t>(traj.actions[t]);
        code = code * v + a;
        if (coef[t] == 0.0) continue;
        log_softmax(target.row(row), probs);
        const auto base = static_cast<Eigen::Index>(row * v);
        for (std::size_t k = 0; k < v; ++k) {
          grad.add(base + static_cast<Eigen::Index>(k), -coef[t] * std::exp(probs[k]));
        }
        grad.add(base + static_cast<Eigen::Index>(a), coef[t]);
      }
    }
  }
  Eigen::VectorXd out = grad.value();
  if (!out.allFinite()) throw Error(ErrorCode::kNonFinite, "non-finite objective gradient");
  return out;
}

Eigen::VectorXd objective_gradient(const GroupBatch& batch, const TabularPolicy& target,
                                   const TabularPolicy& behavior, const ObjectiveSpec& spec) {
  return objective_gradient(std::span<const GroupBatch>(&batch, 1), target, behavior, spec);
}

std::vector<std::optional<double>> clip_rate_profile(std::span<const RatioProfile> profiles,
                                                     const ClipSchedule& schedule) {
  schedule.validate();
  std::size_t h = 0;
  for (const auto& p : profiles) h = std::max(h, static_cast<std::size_t>(p.length()));
  std::vector<std::size_t> clipped(h, 0), total(h, 0);
  std::vector<ClipBounds> bounds;
  for (std::size_t t = 0; t < h; ++t) bounds.push_back(clip_bounds(schedule, static_cast<int>(t) + 1));
  for (const auto& p : profiles) {
    for (std::size_t t = 0; t < static_cast<std::size_t>(p.length()); ++t) {
      ++total[t];
      const double w = p.cumulative[t];
      if (w < bounds[t].lower || w > bounds[t].upper) ++clipped[t];
    }
  }
  std::vector<std::optional<double>> out(h);
  for (std::size_t t = 0; t < h; ++t) {
    if (total[t] > 0) out[t] = static_cast<double>(clipped[t]) / static_cast<double>(total[t]);
  }
  return out;
}

double clip_fraction(std::span<const std::vector<RatioProfile>> profiles,
                     const ObjectiveSpec& spec) {
  std::size_t clipped = 0;
  std::size_t total = 0;
  for (const auto& group : profiles) {
    for (const auto& p : group) {
      const auto h = static_cast<std::size_t>(p.length());
      total += h;
      if (spec.kind == ObjectiveKind::kGspo) {
        const ClipBounds b = bounds_at(spec, 1);
        if (p.gspo < b.lower || p.gspo > b.upper) clipped += h;
        continue;
      }
      for (std::size_t t = 0; t < h; ++t) {
        const ClipBounds b = bounds_at(spec, static_cast<int>(t) + 1);
        const double w = token_weight(p, spec.kind, t);
        if (w < b.lower || w > b.upper) ++clipped;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
}

}  // namespace ctpo
