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
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ctpo/advantage.hpp"
#include "ctpo/mdp.hpp"
#include "ctpo/ratios.hpp"

namespace ctpo {

enum class RatioMode {
  kToken,       // r_t
  kCumulative,  // rho_t^cum
  kSequence,    // rho^seq at every position
  kGspo,        // geometric-mean ratio at every position
};

inline constexpr RatioMode kAllRatioModes[] = {RatioMode::kToken, RatioMode::kCumulative,
                                               RatioMode::kSequence, RatioMode::kGspo};

std::string_view to_string(RatioMode mode);
RatioMode parse_ratio_mode(std::string_view name);

// IS weight applied at 1-based position t.
double position_weight(const RatioProfile& profile, RatioMode mode, int t);

// Sum_t w_t(mode) A_t grad log pi_theta(a_t|s_t). No clipping.
Eigen::VectorXd is_gradient_term(const TabularPolicy& target, const Trajectory& traj,
                                 const RatioProfile& profile, RatioMode mode,
                                 const AdvantageFn& advantage);

// Sum_tau pi_b(tau) is_gradient_term(tau) by full enumeration.
Eigen::VectorXd exact_is_expectation(const TokenMdp& mdp, const TabularPolicy& behavior,
                                     const TabularPolicy& target, RatioMode mode,
                                     const AdvantageFn& advantage);

// Moments of rho_t^cum and rho^seq under pi_b. Means are enumerated, not
// assumed to be 1.
struct RatioVariance {
  int position = 0;
  double mean_cum = 0.0;
  double mean_seq = 0.0;
  double var_cum = 0.0;
  double var_seq = 0.0;
};

RatioVariance exact_ratio_variance(const TokenMdp& mdp, const TabularPolicy& behavior,
                                   const TabularPolicy& target, int position);
// One entry per position 1..H from a single enumeration pass.
std::vector<RatioVariance> exact_ratio_variance_profile(const TokenMdp& mdp,
                                                        const TabularPolicy& behavior,
                                                        const TabularPolicy& target);

// chi^2_t = E_{s_t ~ pi_b}[ Sum_a pi_theta(a|s)^2 / pi_b(a|s) ] - 1 for t = 1..H,
// weighting each state by its behavior reach probability.
std::vector<double> chi2_divergence_profile(const TokenMdp& mdp, const TabularPolicy& behavior,
                                            const TabularPolicy& target);

// prod_{t' <= t} (1 + chi2[t']) - 1 for t = 1..H.
std::vector<double> product_formula_variances(std::span<const double> chi2);

// ((1+delta)^H - 1) / ((1+delta)^t - 1) for t = 1..H; H/t at delta = 0.
std::vector<double> variance_ratio_curve(double delta, int horizon);

// E_{pi_b}[rho_t^cum] for t = 1..H by enumeration.
std::vector<double> cumulative_ratio_means(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target);

// max over t < H and prefixes a_{1:t} with positive behavior mass of
// |E_{pi_b}[eps_t | a_{1:t}] - 1|, with eps_t taken from each enumerated
// trajectory's own ratio profile.
double max_conditional_suffix_deviation(const TokenMdp& mdp, const TabularPolicy& behavior,
                                        const TabularPolicy& target);

// Exact marginal mean and std of log r_t under pi_b at each position.
struct LogRatioMoments {
  std::vector<double> mean;
  std::vector<double> stddev;
};
LogRatioMoments per_step_log_ratio_moments(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target);

struct LogStdProfile {
  std::vector<double> stddev;  // std of log rho_t^cum, t = 1..H
  double sigma_hat = 0.0;      // least squares fit of stddev ~ sigma * sqrt(t)
  double r_squared = 0.0;
  double rms_residual = 0.0;
  std::size_t sample_count = 0;
};

LogStdProfile log_ratio_std_profile(std::span<const Trajectory> batch);
LogStdProfile log_ratio_std_profile(std::span<const RatioProfile> profiles);
// Through-origin fit of values[t-1] ~ sigma sqrt(t).
LogStdProfile fit_sqrt_growth(std::vector<double> stddev);

struct EstimatorReport {
  RatioMode mode = RatioMode::kCumulative;
  Eigen::VectorXd mean_gradient;
  Eigen::VectorXd oracle_gradient;
  Eigen::VectorXd standard_error;  // per component, from per-trajectory term variance
  double bias_norm = 0.0;          // ||mean_gradient - oracle_gradient||_2
  std::vector<double> ratio_variance_by_position;  // sample variance of w_t(mode)
  std::size_t sample_count = 0;
};

// Monte Carlo counterpart of exact_is_expectation, judged against
// exact_policy_gradient(target). Deterministic given (seed, n); identical for
// every thread count.
EstimatorReport mc_gradient_estimate(const TokenMdp& mdp, const TabularPolicy& behavior,
                                     const TabularPolicy& target, RatioMode mode,
                                     const AdvantageFn& advantage, std::size_t n_samples,
                                     std::uint64_t seed, int threads = 1);

nlohmann::json to_json(const EstimatorReport& report);

}  // namespace ctpo
