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

#include "ctpo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ctpo/error.hpp"
#include "ctpo/numeric.hpp"

namespace ctpo {

namespace {

constexpr std::size_t kChunksPerBlock = 32;

// Target softmax rows: a full table when affordable, otherwise per-row.
class TargetProbs {
 public:
  explicit TargetProbs(const TabularPolicy& policy)
      : policy_(policy), scratch_(static_cast<std::size_t>(policy.vocab_size())) {
    if (static_cast<std::size_t>(policy.parameter_count()) <= (std::size_t{1} << 22)) {
      table_ = policy.prob_table();
    }
  }

  std::span<const double> row(std::size_t r) {
    const auto v = static_cast<std::size_t>(policy_.vocab_size());
    if (!table_.empty()) return {table_.data() + r * v, v};
    log_softmax(policy_.row(r), scratch_);
    for (double& x : scratch_) x = std::exp(x);
    return scratch_;
  }

 private:
  const TabularPolicy& policy_;
  std::vector<double> table_;
  std::vector<double> scratch_;
};

// Visits the per-position coefficient and row of the IS gradient term:
// visit(row, probs, action, coefficient) where the term contributes
// coefficient * (onehot(action) - probs) to that row. Each position touches a
// distinct row in both parameterizations.
template <class Visit>
void for_each_term_row(const TabularPolicy& target, TargetProbs& probs, const Trajectory& traj,
                       const RatioProfile& profile, RatioMode mode, const AdvantageFn& advantage,
                       Visit&& visit) {
  const int h = traj.length();
  if (profile.length() != h) {
    throw Error(ErrorCode::kInvalidArgument, "ratio profile does not match the trajectory");
  }
  const std::span<const Token> actions(traj.actions);
  std::uint64_t code = 0;
  for (int t = 0; t < h; ++t) {
    const std::size_t row = target.row_index(t, code);
    const Token a = traj.actions[static_cast<std::size_t>(t)];
    const double adv = advantage(actions.subspan(0, static_cast<std::size_t>(t) + 1));
    if (!std::isfinite(adv)) {
      throw Error(ErrorCode::kNonFinite, "advantage evaluation failed at position " +
                                             std::to_string(t + 1));
    }
    const double coef = position_weight(profile, mode, t + 1) * adv;
    visit(row, probs.row(row), a, coef);
    code = code * static_cast<std::uint64_t>(target.vocab_size()) + static_cast<std::uint64_t>(a);
  }
}

void check_pair(const TokenMdp& mdp, const TabularPolicy& behavior, const TabularPolicy& target) {
  for (const TabularPolicy* p : {&behavior, &target}) {
    if (p->vocab_size() != mdp.vocab_size() || p->horizon() != mdp.horizon()) {
      throw Error(ErrorCode::kUnknownState, "policy shape does not match the MDP");
    }
  }
}

}  // namespace

std::string_view to_string(RatioMode mode) {
  switch (mode) {
    case RatioMode::kToken: return "token";
    case RatioMode::kCumulative: return "cumulative";
    case RatioMode::kSequence: return "sequence";
    case RatioMode::kGspo: return "gspo";
  }
  return "unknown";
}

RatioMode parse_ratio_mode(std::string_view name) {
  for (RatioMode m : kAllRatioModes) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown ratio mode '" + std::string(name) + "'");
}

double position_weight(const RatioProfile& profile, RatioMode mode, int t) {
  const auto i = static_cast<std::size_t>(t - 1);
  switch (mode) {
    case RatioMode::kToken: return profile.token_ratios[i];
    case RatioMode::kCumulative: return profile.cumulative[i];
    case RatioMode::kSequence: return profile.sequence;
    case RatioMode::kGspo: return profile.gspo;
  }
  return 0.0;
}

Eigen::VectorXd is_gradient_term(const TabularPolicy& target, const Trajectory& traj,
                                 const RatioProfile& profile, RatioMode mode,
                                 const AdvantageFn& advantage) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(target.parameter_count());
  TargetProbs probs(target);
  for_each_term_row(target, probs, traj, profile, mode, advantage,
                    [&](std::size_t row, std::span<const double> pr, Token a, double coef) {
                      add_score(target, row, pr, a, coef, grad);
                    });
  return grad;
}

Eigen::VectorXd exact_is_expectation(const TokenMdp& mdp, const TabularPolicy& behavior,
                                     const TabularPolicy& target, RatioMode mode,
                                     const AdvantageFn& advantage) {
  check_pair(mdp, behavior, target);
  const auto v = static_cast<Eigen::Index>(mdp.vocab_size());
  CompensatedVector total(target.parameter_count());
  TargetProbs probs(target);
  for_each_trajectory(mdp, behavior, target, [&](const Trajectory& traj, double pb, double) {
    const RatioProfile profile = ratio_profile(traj);
    for_each_term_row(target, probs, traj, profile, mode, advantage,
                      [&](std::size_t row, std::span<const double> pr, Token a, double coef) {
                        const double scale = pb * coef;
                        if (scale == 0.0) return;
                        const auto base = static_cast<Eigen::Index>(row) * v;
                        for (Eigen::Index k = 0; k < v; ++k) {
                          total.add(base + k, -scale * pr[static_cast<std::size_t>(k)]);
                        }
                        total.add(base + a, scale);
                      });
  });
  return total.value();
}

std::vector<RatioVariance> exact_ratio_variance_profile(const TokenMdp& mdp,
                                                        const TabularPolicy& behavior,
                                                        const TabularPolicy& target) {
  check_pair(mdp, behavior, target);
  const auto h = static_cast<std::size_t>(mdp.horizon());
  std::vector<CompensatedSum> m1(h), m2(h);
  CompensatedSum s1, s2;
  for_each_trajectory(mdp, behavior, target, [&](const Trajectory& traj, double pb, double) {
    const RatioProfile p = ratio_profile(traj);
    for (std::size_t t = 0; t < h; ++t) {
      m1[t].add(pb * p.cumulative[t]);
      m2[t].add(pb * p.cumulative[t] * p.cumulative[t]);
    }
    s1.add(pb * p.sequence);
    s2.add(pb * p.sequence * p.sequence);
  });
  std::vector<RatioVariance> out(h);
  const double mean_seq = s1.value();
  const double var_seq = s2.value() - mean_seq * mean_seq;
  for (std::size_t t = 0; t < h; ++t) {
    const double mean_cum = m1[t].value();
    out[t] = {static_cast<int>(t) + 1, mean_cum, mean_seq, m2[t].value() - mean_cum * mean_cum,
              var_seq};
  }
  return out;
}

RatioVariance exact_ratio_variance(const TokenMdp& mdp, const TabularPolicy& behavior,
                                   const TabularPolicy& target, int position) {
  if (position < 1 || position > mdp.horizon()) {
    throw Error(ErrorCode::kInvalidArgument, "position must be in [1, H]");
  }
  return exact_ratio_variance_profile(mdp, behavior, target)[static_cast<std::size_t>(position) - 1];
}

std::vector<double> chi2_divergence_profile(const TokenMdp& mdp, const TabularPolicy& behavior,
                                            const TabularPolicy& target) {
  check_pair(mdp, behavior, target);
  const int h = mdp.horizon();
  const auto v = static_cast<std::size_t>(mdp.vocab_size());
  std::vector<double> out(static_cast<std::size_t>(h));
  const bool tied = behavior.parameterization() == Parameterization::kPerPosition &&
                    target.parameterization() == Parameterization::kPerPosition;
  if (!tied) mdp.require_enumerable();
  const auto pb = behavior.prob_table();
  const auto pt = target.prob_table();

  auto local_chi2 = [&](std::size_t br, std::size_t tr) {
    double acc = 0.0;
    for (std::size_t a = 0; a < v; ++a) {
      const double q = pt[tr * v + a];
      acc += q * q / pb[br * v + a];
    }
    return acc - 1.0;
  };

  if (tied) {
    // Every depth-t state shares one row pair; reach mass at a depth is 1.
    for (int t = 0; t < h; ++t) {
      out[static_cast<std::size_t>(t)] = local_chi2(behavior.row_index(t, 0), target.row_index(t, 0));
    }
    return out;
  }
  std::vector<double> reach{1.0};
  for (int t = 0; t < h; ++t) {
    CompensatedSum acc;
    std::vector<double> next(reach.size() * v);
    for (std::uint64_t code = 0; code < reach.size(); ++code) {
      const std::size_t br = behavior.row_index(t, code);
      acc.add(reach[code] * local_chi2(br, target.row_index(t, code)));
      for (std::size_t a = 0; a < v; ++a) next[code * v + a] = reach[code] * pb[br * v + a];
    }
    out[static_cast<std::size_t>(t)] = acc.value();
    reach = std::move(next);
  }
  return out;
}

std::vector<double> product_formula_variances(std::span<const double> chi2) {
  std::vector<double> out(chi2.size());
  double log_prod = 0.0;
  for (std::size_t t = 0; t < chi2.size(); ++t) {
    log_prod += std::log1p(chi2[t]);
    out[t] = std::expm1(log_prod);
  }
  return out;
}

std::vector<double> variance_ratio_curve(double delta, int horizon) {
  if (horizon < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::kInvalidArgument, "delta must be finite and >= 0");
  }
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const double h = static_cast<double>(horizon);
  for (int t = 1; t <= horizon; ++t) {
    const double td = static_cast<double>(t);
    if (delta == 0.0) {
      out[static_cast<std::size_t>(t) - 1] = h / td;
    } else {
      const double l = std::log1p(delta);
      out[static_cast<std::size_t>(t) - 1] = std::expm1(h * l) / std::expm1(td * l);
    }
  }
  return out;
}

std::vector<double> cumulative_ratio_means(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target) {
  const auto profile = exact_ratio_variance_profile(mdp, behavior, target);
  std::vector<double> out;
  for (const auto& r : profile) out.push_back(r.mean_cum);
  return out;
}

double max_conditional_suffix_deviation(const TokenMdp& mdp, const TabularPolicy& behavior,
                                        const TabularPolicy& target) {
  check_pair(mdp, behavior, target);
  const int h = mdp.horizon();
  const auto v = static_cast<std::uint64_t>(mdp.vocab_size());
  // Buckets per depth t = 1..H-1 keyed by prefix code of a_{1:t}.
  std::vector<std::vector<CompensatedSum>> weighted(static_cast<std::size_t>(h));
  std::vector<std::vector<CompensatedSum>> mass(static_cast<std::size_t>(h));
  std::uint64_t width = 1;
  for (int t = 1; t < h; ++t) {
    width *= v;
    weighted[static_cast<std::size_t>(t)].resize(width);
    mass[static_cast<std::size_t>(t)].resize(width);
  }
  for_each_trajectory(mdp, behavior, target, [&](const Trajectory& traj, double pb, double) {
    const RatioProfile p = ratio_profile(traj);
    std::uint64_t code = 0;
    for (int t = 1; t < h; ++t) {
      const auto st = static_cast<std::size_t>(t);
      code = code * v + static_cast<std::uint64_t>(traj.actions[st - 1]);
      const double eps = std::exp(p.log_sequence - p.log_cumulative[st - 1]);
      weighted[st][code].add(pb * eps);
      mass[st][code].add(pb);
    }
  });
  double worst = 0.0;
  for (int t = 1; t < h; ++t) {
    const auto st = static_cast<std::size_t>(t);
    for (std::size_t c = 0; c < mass[st].size(); ++c) {
      const double m = mass[st][c].value();
      if (m <= 0.0) continue;
      worst = std::max(worst, std::abs(weighted[st][c].value() / m - 1.0));
    }
  }
  return worst;
}

LogRatioMoments per_step_log_ratio_moments(const TokenMdp& mdp, const TabularPolicy& behavior,
                                           const TabularPolicy& target) {
  check_pair(mdp, behavior, target);
  const int h = mdp.horizon();
  const auto v = static_cast<std::size_t>(mdp.vocab_size());
  const auto lb = behavior.log_prob_table();
  const auto lt = target.log_prob_table();
  const bool tied = behavior.parameterization() == Parameterization::kPerPosition &&
                    target.parameterization() == Parameterization::kPerPosition;
  if (!tied) mdp.require_enumerable();

  LogRatioMoments out;
  std::vector<double> reach{1.0};
  for (int t = 0; t < h; ++t) {
    CompensatedSum m1, m2;
    const std::size_t states = tied ? 1 : reach.size();
    std::vector<double> next(tied ? 0 : reach.size() * v);
    for (std::uint64_t code = 0; code < states; ++code) {
      const std::size_t br = behavior.row_index(t, code);
      const std::size_t tr = target.row_index(t, code);
      const double w = tied ? 1.0 : reach[code];
      for (std::size_t a = 0; a < v; ++a) {
        const double p = w * std::exp(lb[br * v + a]);
        const double x = lt[tr * v + a] - lb[br * v + a];
        m1.add(p * x);
        m2.add(p * x * x);
        if (!tied) next[code * v + a] = p;
      }
    }
    const double mean = m1.value();
    out.mean.push_back(mean);
    out.stddev.push_back(std::sqrt(std::max(0.0, m2.value() - mean * mean)));
    if (!tied) reach = std::move(next);
  }
  return out;
}

LogStdProfile fit_sqrt_growth(std::vector<double> stddev) {
  LogStdProfile out;
  const std::size_t h = stddev.size();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const double t = static_cast<double>(i + 1);
    num += stddev[i] * std::sqrt(t);
    den += t;
  }
  out.sigma_hat = den > 0.0 ? num / den : 0.0;
  double mean = 0.0;
  for (double s : stddev) mean += s;
  mean /= static_cast<double>(std::max<std::size_t>(h, 1));
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const double fit = out.sigma_hat * std::sqrt(static_cast<double>(i + 1));
    ss_res += (stddev[i] - fit) * (stddev[i] - fit);
    ss_tot += (stddev[i] - mean) * (stddev[i] - mean);
  }
  out.rms_residual = std::sqrt(ss_res / static_cast<double>(std::max<std::size_t>(h, 1)));
  if (ss_tot > 0.0) {
    out.r_squared = 1.0 - ss_res / ss_tot;
  } else {
    out.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
  }
  out.stddev = std::move(stddev);
  return out;
}

LogStdProfile log_ratio_std_profile(std::span<const RatioProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorCode::kInvalidArgument, "empty trajectory batch");
  const std::size_t h = static_cast<std::size_t>(profiles.front().length());
  std::vector<double> mean(h, 0.0), m2(h, 0.0);
  std::size_t n = 0;
  for (const auto& p : profiles) {
    if (static_cast<std::size_t>(p.length()) != h) {
      throw Error(ErrorCode::kInvalidArgument, "batch mixes trajectory lengths");
    }
    ++n;
    for (std::size_t t = 0; t < h; ++t) {
      const double x = p.log_cumulative[t];
      const double d = x - mean[t];
      mean[t] += d / static_cast<double>(n);
      m2[t] += d * (x - mean[t]);
    }
  }
  std::vector<double> sd(h);
  for (std::size_t t = 0; t < h; ++t) sd[t] = std::sqrt(m2[t] / static_cast<double>(n));
  LogStdProfile out = fit_sqrt_growth(std::move(sd));
  out.sample_count = n;
  return out;
}

LogStdProfile log_ratio_std_profile(std::span<const Trajectory> batch) {
  std::vector<RatioProfile> profiles;
  profiles.reserve(batch.size());
  for (const auto& t : batch) profiles.push_back(ratio_profile(t));
  return log_ratio_std_profile(std::span<const RatioProfile>(profiles));
}

EstimatorReport mc_gradient_estimate(const TokenMdp& mdp, const TabularPolicy& behavior,
                                     const TabularPolicy& target, RatioMode mode,
                                     const AdvantageFn& advantage, std::size_t n_samples,
                                     std::uint64_t seed, int threads) {
  check_pair(mdp, behavior, target);
  if (n_samples < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 samples");
  const Eigen::Index dim = target.parameter_count();
  const auto v = static_cast<std::size_t>(mdp.vocab_size());
  const auto h = static_cast<std::size_t>(mdp.horizon());

  struct ChunkAcc {
    Eigen::VectorXd sum, sumsq;
    std::vector<double> w1, w2;
  };
  CompensatedVector sum(dim), sumsq(dim);
  std::vector<CompensatedSum> w1(h), w2(h);

  const std::size_t chunks = (n_samples + kSampleChunk - 1) / kSampleChunk;
  for (std::size_t begin = 0; begin < chunks; begin += kChunksPerBlock) {
    const std::size_t end = std::min(chunks, begin + kChunksPerBlock);
    std::vector<ChunkAcc> acc(end - begin);
    for (auto& a : acc) {
      a.sum = Eigen::VectorXd::Zero(dim);
      a.sumsq = Eigen::VectorXd::Zero(dim);
      a.w1.assign(h, 0.0);
      a.w2.assign(h, 0.0);
    }
    // TargetProbs keeps scratch state, so each chunk owns one.
    std::vector<std::unique_ptr<TargetProbs>> probs(end - begin);
    for (auto& p : probs) p = std::make_unique<TargetProbs>(target);
    std::vector<std::vector<double>> scratch(end - begin, std::vector<double>(v));
    sample_chunk_range(
        mdp, behavior, target, n_samples, seed, begin, end, threads,
        [&](std::size_t i, const Trajectory& traj) {
          const std::size_t c = i / kSampleChunk;
          ChunkAcc& a = acc[c - begin];
          auto& term = scratch[c - begin];
          const RatioProfile profile = ratio_profile(traj);
          for (std::size_t t = 0; t < h; ++t) {
            const double w = position_weight(profile, mode, static_cast<int>(t) + 1);
            a.w1[t] += w;
            a.w2[t] += w * w;
          }
          for_each_term_row(target, *probs[c - begin], traj, profile, mode, advantage,
                            [&](std::size_t row, std::span<const double> pr, Token act,
                                double coef) {
                              for (std::size_t k = 0; k < v; ++k) term[k] = -coef * pr[k];
                              term[static_cast<std::size_t>(act)] += coef;
                              const auto base = static_cast<Eigen::Index>(row * v);
                              for (std::size_t k = 0; k < v; ++k) {
                                a.sum[base + static_cast<Eigen::Index>(k)] += term[k];
                                a.sumsq[base + static_cast<Eigen::Index>(k)] += term[k] * term[k];
                              }
                            });
        });
    for (const auto& a : acc) {
      for (Eigen::Index i = 0; i < dim; ++i) {
        sum.add(i, a.sum[i]);
        sumsq.add(i, a.sumsq[i]);
      }
      for (std::size_t t = 0; t < h; ++t) {
        w1[t].add(a.w1[t]);
        w2[t].add(a.w2[t]);
      }
    }
  }

  const double n = static_cast<double>(n_samples);
  EstimatorReport report;
  report.mode = mode;
  report.sample_count = n_samples;
  report.mean_gradient = sum.value() / n;
  const Eigen::VectorXd second = sumsq.value() / n;
  report.standard_error =
      ((second.array() - report.mean_gradient.array().square()).max(0.0) * (n / (n - 1.0)) / n)
          .sqrt()
          .matrix();
  for (std::size_t t = 0; t < h; ++t) {
    const double m = w1[t].value() / n;
    report.ratio_variance_by_position.push_back(
        std::max(0.0, w2[t].value() / n - m * m) * n / (n - 1.0));
  }
  report.oracle_gradient = exact_policy_gradient(mdp, target, advantage);
  report.bias_norm = (report.mean_gradient - report.oracle_gradient).norm();
  return report;
}

nlohmann::json to_json(const EstimatorReport& report) {
  auto vec = [](const Eigen::VectorXd& x) {
    return std::vector<double>(x.data(), x.data() + x.size());
  };
  return {{"mode", to_string(report.mode)},
          {"sample_count", report.sample_count},
          {"bias_norm", report.bias_norm},
          {"mean_gradient", vec(report.mean_gradient)},
          {"oracle_gradient", vec(report.oracle_gradient)},
          {"standard_error", vec(report.standard_error)},
          {"ratio_variance_by_position", report.ratio_variance_by_position},
          {"position_base", 1}};
}

}  // namespace ctpo
