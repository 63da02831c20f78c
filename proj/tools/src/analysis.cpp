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


#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctpo/error.hpp"
#include "ctpo/estimators.hpp"
#include "ctpo/harness.hpp"

namespace ctpo::harness {

void Checks::add(const std::string& name, double value, const char* op, double limit, bool ok) {
  nlohmann::json entry{{"name", name}, {"op", op}, {"threshold", limit}, {"passed", ok}};
  // NaN has no JSON form; a null value always fails.
  entry["value"] = std::isnan(value) ? nlohmann::json(nullptr) : nlohmann::json(value);
  entries_.push_back(std::move(entry));
  passed_ = passed_ && ok;
}

void Checks::less(const std::string& name, double value, double limit) {
  add(name, value, "<", limit, value < limit);
}

void Checks::at_most(const std::string& name, double value, double limit) {
  add(name, value, "<=", limit, value <= limit);
}

void Checks::greater(const std::string& name, double value, double limit) {
  add(name, value, ">", limit, value > limit);
}

void Checks::at_least(const std::string& name, double value, double limit) {
  add(name, value, ">=", limit, value >= limit);
}

std::vector<std::string> Checks::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (!e["passed"].get<bool>()) out.push_back(e["name"].get<std::string>());
  }
  return out;
}

IidConstruct iid_construct(int vocab_size, int horizon, double sigma, std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "iid construct needs a finite sigma > 0");
  }
  TokenMdp mdp(vocab_size, horizon, RewardSpec::constant(0.0));
  TabularPolicy behavior(vocab_size, horizon, Parameterization::kPerPosition);
  // Under a uniform behavior, log r_a = s z_a - logsumexp(s z) + log V, so
  // the std over actions is exactly s * popstd(z).
  const auto z = TabularPolicy::gaussian(vocab_size, 1, 1.0, seed, Parameterization::kPerPosition);
  const auto row = z.row(0);
  const double mean = std::accumulate(row.begin(), row.end(), 0.0) / vocab_size;
  double var = 0.0;
  for (double x : row) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / vocab_size);
  if (!(sd > 0.0)) throw Error(ErrorCode::kInvalidArgument, "degenerate construct seed");
  TabularPolicy target(vocab_size, horizon, Parameterization::kPerPosition);
  for (int t = 0; t < horizon; ++t) {
    auto dst = target.mutable_row(static_cast<std::size_t>(t));
    for (int a = 0; a < vocab_size; ++a) dst[a] = sigma / sd * (row[a] - mean);
  }
  const auto moments = per_step_log_ratio_moments(mdp, behavior, target);
  const double exact_sigma = moments.stddev.front();
  const double drift = moments.mean.front();
  return {std::move(mdp), std::move(behavior), std::move(target), exact_sigma, drift};
}

LogCumulativeSamples sample_log_cumulative(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target, std::size_t n,
                                           std::uint64_t seed, int threads) {
  LogCumulativeSamples out;
  out.count = n;
  out.horizon = mdp.horizon();
  const auto h = static_cast<std::size_t>(out.horizon);
  out.values.resize(n * h);
  sample_stream(mdp, behavior, target, n, seed, threads,
                [&](std::size_t i, const Trajectory& traj) {
                  double acc = 0.0;
                  for (std::size_t t = 0; t < h; ++t) {
                    acc += traj.logp_target[t] - traj.logp_behavior[t];
                    out.values[i * h + t] = acc;
                  }
                });
  return out;
}

std::vector<double> position_stddev(const LogCumulativeSamples& s) {
  const auto h = static_cast<std::size_t>(s.horizon);
  std::vector<double> mean(h, 0.0), m2(h, 0.0);
  for (std::size_t i = 0; i < s.count; ++i) {
    const double n = static_cast<double>(i + 1);
    for (std::size_t t = 0; t < h; ++t) {
      const double x = s.values[i * h + t];
      const double d = x - mean[t];
      mean[t] += d / n;
      m2[t] += d * (x - mean[t]);
    }
  }
  std::vector<double> sd(h, 0.0);
  if (s.count == 0) return sd;
  for (std::size_t t = 0; t < h; ++t) sd[t] = std::sqrt(m2[t] / static_cast<double>(s.count));
  return sd;
}

std::vector<double> position_clip_rates(const LogCumulativeSamples& s,
                                        const ClipSchedule& schedule) {
  const auto h = static_cast<std::size_t>(s.horizon);
  std::vector<double> lo(h), hi(h);
  for (std::size_t t = 0; t < h; ++t) {
    const ClipBounds b = clip_bounds(schedule, static_cast<int>(t) + 1);
    lo[t] = std::log(b.lower);
    hi[t] = std::log(b.upper);
  }
  std::vector<std::size_t> clipped(h, 0);
  for (std::size_t i = 0; i < s.count; ++i) {
    for (std::size_t t = 0; t < h; ++t) {
      const double x = s.values[i * h + t];
      if (x < lo[t] || x > hi[t]) ++clipped[t];
    }
  }
  std::vector<double> rates(h, 0.0);
  if (s.count == 0) return rates;
  for (std::size_t t = 0; t < h; ++t) {
    rates[t] = static_cast<double>(clipped[t]) / static_cast<double>(s.count);
  }
  return rates;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "spearman needs two equal-length series, n >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ctpo::harness
