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


#include "experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "ctpo/advantage.hpp"
#include "ctpo/error.hpp"
#include "ctpo/estimators.hpp"
#include "ctpo/io.hpp"
#include "ctpo/numeric.hpp"
#include "ctpo/trainer.hpp"

namespace ctpo::harness {

namespace {

[[noreturn]] void config_error(const ConfigReader& r, const std::string& key,
                               const std::string& what) {
  throw Error(ErrorCode::kConfig, r.path() + "." + key + ": " + what);
}

// Optional sub-object; reads from an empty object when absent.
ConfigReader section(ConfigReader& parent, const std::string& key) {
  static const json empty = json::object();
  if (parent.has(key)) return parent.child(key);
  return ConfigReader(empty, parent.path() + "." + key);
}

void close_section(ConfigReader& parent, const std::string& key, const ConfigReader& sec) {
  sec.finish();
  parent.set_resolved(key, sec.resolved());
}

int read_int(ConfigReader& r, const std::string& key, int fallback, int min) {
  const int v = r.optional(key, fallback);
  if (v < min) config_error(r, key, "must be >= " + std::to_string(min));
  return v;
}

std::vector<int> read_int_list(ConfigReader& r, const std::string& key,
                               const std::vector<int>& fallback, int min) {
  const auto v = r.optional(key, fallback);
  if (v.empty()) config_error(r, key, "must not be empty");
  for (int x : v) {
    if (x < min) config_error(r, key, "entries must be >= " + std::to_string(min));
  }
  return v;
}

double read_positive(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.optional(key, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) config_error(r, key, "must be finite and > 0");
  return v;
}

double read_nonnegative(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.optional(key, fallback);
  if (!(v >= 0.0) || !std::isfinite(v)) config_error(r, key, "must be finite and >= 0");
  return v;
}

double read_open_unit(ConfigReader& r, const std::string& key, double fallback) {
  const double v = r.optional(key, fallback);
  if (!(v > 0.0 && v < 1.0)) config_error(r, key, "must lie in (0, 1)");
  return v;
}

std::size_t read_samples(ConfigReader& r, const std::string& key, std::uint64_t fallback) {
  const auto v = r.optional<std::uint64_t>(key, fallback);
  if (v < 2) config_error(r, key, "must be >= 2");
  return static_cast<std::size_t>(v);
}

Parameterization read_parameterization(ConfigReader& r) {
  const auto name = r.optional<std::string>("parameterization", "per_prefix");
  if (name == "per_prefix") return Parameterization::kPerPrefix;
  if (name == "per_position") return Parameterization::kPerPosition;
  config_error(r, "parameterization", "expected per_prefix or per_position");
}

void check_grid(const ConfigReader& r, const std::vector<int>& vocab_sizes,
                const std::vector<int>& horizons) {
  for (int v : vocab_sizes) {
    for (int h : horizons) {
      try {
        TokenMdp(v, h, RewardSpec::constant(0.0)).require_enumerable();
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfig, r.path() + ": V=" + std::to_string(v) +
                                            ", H=" + std::to_string(h) + ": " + e.what());
      }
    }
  }
}

struct RandomPair {
  TokenMdp mdp;
  TabularPolicy behavior;
  TabularPolicy target;
};

RandomPair random_pair(std::mt19937_64& rng, int v, int h, double policy_std,
                       Parameterization param) {
  TokenMdp mdp(v, h, RewardSpec::random_table(rng()));
  auto behavior = TabularPolicy::gaussian(v, h, policy_std, rng(), param);
  auto target = TabularPolicy::gaussian(v, h, policy_std, rng(), param);
  return {std::move(mdp), std::move(behavior), std::move(target)};
}

double max_abs(const Eigen::VectorXd& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

// Grid cell for instance i: vocab varies fastest.
std::pair<int, int> grid_cell(const std::vector<int>& vocab_sizes, const std::vector<int>& horizons,
                              std::size_t i) {
  return {vocab_sizes[i % vocab_sizes.size()], horizons[(i / vocab_sizes.size()) % horizons.size()]};
}

// ---------------------------------------------------------------------------

ExperimentResult verify_unbiasedness(ConfigReader& p, const Context& ctx) {
  const int instances = read_int(p, "instances", 60, 1);
  const auto vocab_sizes = read_int_list(p, "vocab_sizes", {2, 3, 4}, 2);
  const auto horizons = read_int_list(p, "horizons", {2, 3, 4, 5, 6}, 1);
  const double policy_std = read_nonnegative(p, "policy_std", 1.0);
  const auto param = read_parameterization(p);
  const double tol = read_positive(p, "tolerance", 1e-10);
  const double id_tol = read_positive(p, "identity_tolerance", 1e-10);
  auto w = section(p, "witness");
  const double wpb = read_open_unit(w, "behavior_p0", 0.5);
  const double wpt = read_open_unit(w, "target_p0", 0.8);
  const auto wseed = w.optional<std::uint64_t>("advantage_seed", 17);
  const double wscale = read_positive(w, "advantage_scale", 1.0);
  const double min_bias = read_positive(w, "min_bias", 1e-3);
  close_section(p, "witness", w);
  check_grid(p, vocab_sizes, horizons);
  p.finish();

  constexpr std::size_t kAdv = 3;
  constexpr std::size_t kModes = std::size(kAllRatioModes);
  struct Row {
    int v = 0, h = 0;
    std::array<AdvantageKind, kAdv> kinds{};
    std::array<std::array<double, kModes>, kAdv> err{};
    std::array<std::array<double, kModes>, kAdv> bias{};
    double mean_dev = 0.0;
    double cond_dev = 0.0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_chunks(rows.size(), ctx.threads, [&](std::size_t i) {
    auto rng = derived_engine(ctx.seed, i);
    const auto [v, h] = grid_cell(vocab_sizes, horizons, i);
    const auto pair = random_pair(rng, v, h, policy_std, param);
    const AdvantageFn advantages[kAdv] = {true_advantage(pair.mdp, pair.target),
                                          fixed_table_advantage(rng(), v),
                                          group_uniform_advantage(2.0 * uniform01(rng) - 1.0)};
    Row& row = rows[i];
    row.v = v;
    row.h = h;
    for (std::size_t k = 0; k < kAdv; ++k) {
      row.kinds[k] = advantages[k].kind();
      const Eigen::VectorXd oracle = exact_policy_gradient(pair.mdp, pair.target, advantages[k]);
      for (std::size_t m = 0; m < kModes; ++m) {
        const Eigen::VectorXd diff = exact_is_expectation(pair.mdp, pair.behavior, pair.target,
                                                          kAllRatioModes[m], advantages[k]) -
                                     oracle;
        row.err[k][m] = max_abs(diff);
        row.bias[k][m] = diff.norm();
      }
    }
    for (double mean : cumulative_ratio_means(pair.mdp, pair.behavior, pair.target)) {
      row.mean_dev = std::max(row.mean_dev, std::abs(mean - 1.0));
    }
    row.cond_dev = max_conditional_suffix_deviation(pair.mdp, pair.behavior, pair.target);
  });

  ExperimentResult out;
  CsvTable table({"instance", "vocab_size", "horizon", "advantage", "mode", "max_abs_error",
                  "bias_norm"});
  CsvTable identities({"instance", "vocab_size", "horizon", "max_mean_deviation",
                       "max_conditional_deviation"});
  std::array<double, kModes> worst{};
  double mean_dev = 0.0, cond_dev = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    for (std::size_t k = 0; k < kAdv; ++k) {
      for (std::size_t m = 0; m < kModes; ++m) {
        table.row()
            .cell(static_cast<std::int64_t>(i))
            .cell(row.v)
            .cell(row.h)
            .cell(std::string(to_string(row.kinds[k])))
            .cell(std::string(to_string(kAllRatioModes[m])))
            .cell(row.err[k][m])
            .cell(row.bias[k][m]);
        worst[m] = std::max(worst[m], row.err[k][m]);
      }
    }
    identities.row()
        .cell(static_cast<std::int64_t>(i))
        .cell(row.v)
        .cell(row.h)
        .cell(row.mean_dev)
        .cell(row.cond_dev);
    mean_dev = std::max(mean_dev, row.mean_dev);
    cond_dev = std::max(cond_dev, row.cond_dev);
  }

  const TokenMdp wmdp(2, 2, RewardSpec::count_token(1));
  const auto wb = TabularPolicy::from_position_probs(2, 2, {{wpb, 1.0 - wpb}});
  const auto wt = TabularPolicy::from_position_probs(2, 2, {{wpt, 1.0 - wpt}});
  const auto wadv = fixed_table_advantage(wseed, 2, wscale);
  const Eigen::VectorXd woracle = exact_policy_gradient(wmdp, wt, wadv);
  CsvTable witness({"mode", "bias_norm", "max_abs_error"});
  json wjson = json::object();
  std::array<double, kModes> wbias{};
  for (std::size_t m = 0; m < kModes; ++m) {
    const Eigen::VectorXd diff =
        exact_is_expectation(wmdp, wb, wt, kAllRatioModes[m], wadv) - woracle;
    wbias[m] = diff.norm();
    const std::string name(to_string(kAllRatioModes[m]));
    witness.row().cell(name).cell(wbias[m]).cell(max_abs(diff));
    wjson[name] = wbias[m];
  }

  json errors = json::object();
  for (std::size_t m = 0; m < kModes; ++m) errors[std::string(to_string(kAllRatioModes[m]))] = worst[m];
  out.results = {{"instances", instances},
                 {"max_abs_error_by_mode", errors},
                 {"max_mean_deviation", mean_dev},
                 {"max_conditional_deviation", cond_dev},
                 {"witness_bias_norm", wjson}};
  out.checks.less("cumulative_max_abs_error", worst[1], tol);
  out.checks.less("sequence_max_abs_error", worst[2], tol);
  out.checks.greater("witness_token_bias", wbias[0], min_bias);
  out.checks.greater("witness_gspo_bias", wbias[3], min_bias);
  out.checks.less("witness_cumulative_bias", wbias[1], tol);
  out.checks.less("witness_sequence_bias", wbias[2], tol);
  out.checks.less("mean_cumulative_ratio_deviation", mean_dev, id_tol);
  out.checks.less("conditional_suffix_deviation", cond_dev, id_tol);
  out.artifacts = {{"instances.csv", table.str()},
                   {"witness.csv", witness.str()},
                   {"identities.csv", identities.str()}};
  return out;
}

// ---------------------------------------------------------------------------

// V=2, P_b(0)=1/2 and P_theta(0)=1/2+sqrt(delta)/2 at every prefix: chi2 = delta.
std::pair<TabularPolicy, TabularPolicy> chi2_pair(int horizon, double delta) {
  const double p = 0.5 + 0.5 * std::sqrt(delta);
  return {TabularPolicy::from_position_probs(2, horizon, {{0.5, 0.5}}),
          TabularPolicy::from_position_probs(2, horizon, {{p, 1.0 - p}})};
}

ExperimentResult variance_scan(ConfigReader& p, const Context& ctx) {
  const int instances = read_int(p, "instances", 120, 1);
  const auto vocab_sizes = read_int_list(p, "vocab_sizes", {2, 3}, 2);
  const auto horizons = read_int_list(p, "horizons", {2, 3, 4, 5, 6}, 2);
  const double policy_std = read_positive(p, "policy_std", 1.0);
  const auto param = read_parameterization(p);
  const double eq_tol = read_positive(p, "equality_tolerance", 1e-12);
  auto ind = section(p, "independence");
  const auto ind_h = read_int_list(ind, "horizons", {2, 3, 4, 5, 6, 7, 8}, 1);
  const auto deltas = ind.optional<std::vector<double>>("deltas", {0.001, 0.01, 0.1, 0.5});
  const double curve_tol = read_positive(ind, "curve_tolerance", 1e-8);
  const double limit_delta = read_open_unit(ind, "limit_delta", 0.001);
  const double limit_tol = read_positive(ind, "limit_tolerance", 0.01);
  if (deltas.empty()) config_error(ind, "deltas", "must not be empty");
  for (double d : deltas) {
    if (!(d > 0.0 && d < 1.0)) config_error(ind, "deltas", "entries must lie in (0, 1)");
  }
  if (std::find(deltas.begin(), deltas.end(), limit_delta) == deltas.end()) {
    config_error(ind, "limit_delta", "must be one of deltas");
  }
  close_section(p, "independence", ind);
  check_grid(p, vocab_sizes, horizons);
  check_grid(ind, {2}, ind_h);
  p.finish();

  std::vector<std::vector<RatioVariance>> profiles(static_cast<std::size_t>(instances));
  std::vector<std::pair<int, int>> shapes(profiles.size());
  parallel_chunks(profiles.size(), ctx.threads, [&](std::size_t i) {
    auto rng = derived_engine(ctx.seed, i);
    const auto [v, h] = grid_cell(vocab_sizes, horizons, i);
    const auto pair = random_pair(rng, v, h, policy_std, param);
    shapes[i] = {v, h};
    profiles[i] = exact_ratio_variance_profile(pair.mdp, pair.behavior, pair.target);
  });

  ExperimentResult out;
  CsvTable dominance({"instance", "vocab_size", "horizon", "position", "var_cum", "var_seq"});
  int violations = 0;
  double min_rel_gap = std::numeric_limits<double>::infinity();
  double terminal_diff = 0.0;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int h = shapes[i].second;
    for (const auto& rv : profiles[i]) {
      dominance.row()
          .cell(static_cast<std::int64_t>(i))
          .cell(shapes[i].first)
          .cell(h)
          .cell(rv.position)
          .cell(rv.var_cum)
          .cell(rv.var_seq);
      if (rv.position < h) {
        if (!(rv.var_seq > rv.var_cum)) ++violations;
        min_rel_gap = std::min(min_rel_gap, (rv.var_seq - rv.var_cum) / rv.var_seq);
      } else {
        terminal_diff = std::max(terminal_diff, std::abs(rv.var_seq - rv.var_cum));
      }
    }
  }

  CsvTable curve({"delta", "horizon", "position", "var_cum", "var_seq", "enumerated_ratio",
                  "closed_form_ratio", "limit_ratio"});
  double curve_err = 0.0;
  double limit_err = 0.0;
  for (double delta : deltas) {
    for (int h : ind_h) {
      const TokenMdp mdp(2, h, RewardSpec::constant(0.0));
      const auto [b, t] = chi2_pair(h, delta);
      const auto prof = exact_ratio_variance_profile(mdp, b, t);
      const auto closed = variance_ratio_curve(delta, h);
      for (int pos = 1; pos <= h; ++pos) {
        const auto& rv = prof[static_cast<std::size_t>(pos) - 1];
        const double ratio = rv.var_seq / rv.var_cum;
        const double limit = static_cast<double>(h) / pos;
        curve_err = std::max(curve_err, std::abs(ratio - closed[static_cast<std::size_t>(pos) - 1]));
        if (delta == limit_delta) limit_err = std::max(limit_err, std::abs(ratio - limit) / limit);
        curve.row()
            .cell(delta)
            .cell(h)
            .cell(pos)
            .cell(rv.var_cum)
            .cell(rv.var_seq)
            .cell(ratio)
            .cell(closed[static_cast<std::size_t>(pos) - 1])
            .cell(limit);
      }
    }
  }

  out.results = {{"instances", instances},
                 {"dominance_violations", violations},
                 {"min_relative_gap", min_rel_gap},
                 {"terminal_max_abs_difference", terminal_diff},
                 {"curve_max_abs_error", curve_err},
                 {"limit_delta", limit_delta},
                 {"limit_max_relative_error", limit_err}};
  out.checks.at_most("dominance_violations", violations, 0);
  out.checks.at_most("terminal_max_abs_difference", terminal_diff, eq_tol);
  out.checks.at_most("curve_max_abs_error", curve_err, curve_tol);
  out.checks.less("limit_max_relative_error", limit_err, limit_tol);
  out.artifacts = {{"dominance.csv", dominance.str()}, {"curve.csv", curve.str()}};
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> random_simplex(int v, std::mt19937_64& rng, double floor) {
  std::vector<double> out(static_cast<std::size_t>(v));
  double z = 0.0;
  for (double& x : out) z += (x = floor + (1.0 - floor) * uniform01(rng));
  for (double& x : out) x /= z;
  return out;
}

ExperimentResult chi2_factorization(ConfigReader& p, const Context& ctx) {
  const int instances = read_int(p, "instances", 24, 1);
  const auto vocab_sizes = read_int_list(p, "vocab_sizes", {2, 3, 4}, 2);
  const auto horizons = read_int_list(p, "horizons", {2, 3, 4, 5, 6}, 1);
  const auto param = read_parameterization(p);
  const double weight_floor = read_open_unit(p, "weight_floor", 0.2);
  const double tol = read_positive(p, "tolerance", 1e-10);
  check_grid(p, vocab_sizes, horizons);
  p.finish();

  struct Row {
    int v = 0, h = 0;
    std::vector<double> chi2, closed, var_enum, var_formula;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_chunks(rows.size(), ctx.threads, [&](std::size_t i) {
    auto rng = derived_engine(ctx.seed, i);
    const auto [v, h] = grid_cell(vocab_sizes, horizons, i);
    std::vector<std::vector<double>> pb, pt;
    Row& row = rows[i];
    row.v = v;
    row.h = h;
    for (int t = 0; t < h; ++t) {
      pb.push_back(random_simplex(v, rng, weight_floor));
      pt.push_back(random_simplex(v, rng, weight_floor));
      double m = 0.0;
      for (int a = 0; a < v; ++a) m += pt.back()[a] * pt.back()[a] / pb.back()[a];
      row.closed.push_back(m - 1.0);
    }
    const TokenMdp mdp(v, h, RewardSpec::constant(0.0));
    const auto b = TabularPolicy::from_position_probs(v, h, pb, param);
    const auto tg = TabularPolicy::from_position_probs(v, h, pt, param);
    row.chi2 = chi2_divergence_profile(mdp, b, tg);
    row.var_formula = product_formula_variances(row.chi2);
    for (const auto& rv : exact_ratio_variance_profile(mdp, b, tg)) row.var_enum.push_back(rv.var_cum);
  });

  ExperimentResult out;
  CsvTable table({"instance", "vocab_size", "horizon", "position", "chi2", "chi2_closed_form",
                  "var_cum_enumerated", "var_cum_product_formula", "abs_error"});
  double formula_err = 0.0;
  double chi2_err = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    for (int t = 0; t < r.h; ++t) {
      const auto k = static_cast<std::size_t>(t);
      const double err = std::abs(r.var_enum[k] - r.var_formula[k]);
      formula_err = std::max(formula_err, err);
      chi2_err = std::max(chi2_err, std::abs(r.chi2[k] - r.closed[k]));
      table.row()
          .cell(static_cast<std::int64_t>(i))
          .cell(r.v)
          .cell(r.h)
          .cell(t + 1)
          .cell(r.chi2[k])
          .cell(r.closed[k])
          .cell(r.var_enum[k])
          .cell(r.var_formula[k])
          .cell(err);
    }
  }
  out.results = {{"instances", instances},
                 {"product_formula_max_abs_error", formula_err},
                 {"chi2_closed_form_max_abs_error", chi2_err}};
  out.checks.at_most("product_formula_max_abs_error", formula_err, tol);
  out.checks.at_most("chi2_closed_form_max_abs_error", chi2_err, tol);
  out.artifacts = {{"chi2.csv", table.str()}};
  return out;
}

// ---------------------------------------------------------------------------

struct ConstructParams {
  int vocab_size = 32;
  int horizon = 32;
  double sigma = 0.2;
  std::uint64_t seed = 5;
};

ConstructParams read_construct(ConfigReader& p) {
  auto c = section(p, "construct");
  ConstructParams out;
  out.vocab_size = read_int(c, "vocab_size", out.vocab_size, 2);
  out.horizon = read_int(c, "horizon", out.horizon, 2);
  out.sigma = read_positive(c, "sigma", out.sigma);
  out.seed = c.optional<std::uint64_t>("seed", out.seed);
  close_section(p, "construct", c);
  return out;
}

IidConstruct build_construct(const ConfigReader& p, const ConstructParams& c) {
  try {
    return iid_construct(c.vocab_size, c.horizon, c.sigma, c.seed);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, p.path() + ".construct: " + e.what());
  }
}

ExperimentResult log_std_profile(ConfigReader& p, const Context& ctx) {
  const auto cp = read_construct(p);
  const std::size_t n = read_samples(p, "samples", 100000);
  const double min_r2 = read_open_unit(p, "min_r_squared", 0.99);
  const double max_rel = read_positive(p, "max_sigma_relative_error", 0.05);
  p.finish();
  const auto construct = build_construct(p, cp);

  const auto samples = sample_log_cumulative(construct.mdp, construct.behavior, construct.target,
                                             n, ctx.seed, ctx.threads);
  const LogStdProfile fit = fit_sqrt_growth(position_stddev(samples));
  const double sigma = construct.sigma;
  const double rel = std::abs(fit.sigma_hat - sigma) / sigma;
  const double ratio41 = fit.stddev[3 % fit.stddev.size()] / fit.stddev[0];

  ExperimentResult out;
  CsvTable table({"position", "stddev", "fitted", "reference"});
  for (std::size_t t = 0; t < fit.stddev.size(); ++t) {
    const double s = std::sqrt(static_cast<double>(t + 1));
    table.row().cell(static_cast<int>(t + 1)).cell(fit.stddev[t]).cell(fit.sigma_hat * s).cell(sigma * s);
  }
  out.results = {{"samples", n},
                 {"sigma", sigma},
                 {"drift", construct.drift},
                 {"sigma_hat", fit.sigma_hat},
                 {"sigma_relative_error", rel},
                 {"r_squared", fit.r_squared},
                 {"rms_residual", fit.rms_residual},
                 {"std_ratio_t4_t1", ratio41}};
  out.checks.greater("r_squared", fit.r_squared, min_r2);
  out.checks.less("sigma_relative_error", rel, max_rel);
  if (cp.horizon >= 4) out.checks.less("std_ratio_t4_t1_relative_error", std::abs(ratio41 - 2.0) / 2.0, max_rel);
  out.artifacts = {{"log_std.csv", table.str()}};
  return out;
}

double spread(const std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

ExperimentResult clip_rate(ConfigReader& p, const Context& ctx) {
  const auto cp = read_construct(p);
  const std::size_t n = read_samples(p, "samples", 100000);
  auto f = section(p, "fixed");
  const double lower = read_positive(f, "lower", 0.5);
  const double upper = read_positive(f, "upper", 5.0);
  close_section(p, "fixed", f);
  auto a = section(p, "adaptive");
  const double c = read_positive(a, "c", 2.0);
  const double exponent = read_nonnegative(a, "p", 0.5);
  close_section(p, "adaptive", a);
  const double min_spearman = read_positive(p, "min_spearman", 0.9);
  const double max_spread_ratio = read_positive(p, "max_spread_ratio", 0.5);
  p.finish();
  ClipSchedule fixed;
  try {
    fixed = ClipSchedule::fixed_ratio(lower, upper);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, f.path() + ": " + e.what());
  }
  const auto construct = build_construct(p, cp);
  // Thresholds +-c * sigma * t^p in log space.
  const auto adaptive =
      ClipSchedule::adaptive_log(c * construct.sigma, c * construct.sigma, exponent);

  const auto samples = sample_log_cumulative(construct.mdp, construct.behavior, construct.target,
                                             n, ctx.seed, ctx.threads);
  const auto fixed_rates = position_clip_rates(samples, fixed);
  const auto adaptive_rates = position_clip_rates(samples, adaptive);
  std::vector<double> positions;
  for (int t = 1; t <= cp.horizon; ++t) positions.push_back(t);
  const double rho = spearman(positions, fixed_rates);
  const double fixed_spread = spread(fixed_rates);
  const double adaptive_spread = spread(adaptive_rates);
  const double ratio = fixed_spread > 0.0 ? adaptive_spread / fixed_spread
                                          : std::numeric_limits<double>::quiet_NaN();

  ExperimentResult out;
  CsvTable table({"position", "fixed_lower", "fixed_upper", "fixed_clip_rate", "adaptive_lower",
                  "adaptive_upper", "adaptive_clip_rate"});
  for (int t = 1; t <= cp.horizon; ++t) {
    const auto fb = clip_bounds(fixed, t);
    const auto ab = clip_bounds(adaptive, t);
    const auto k = static_cast<std::size_t>(t) - 1;
    table.row()
        .cell(t)
        .cell(fb.lower)
        .cell(fb.upper)
        .cell(fixed_rates[k])
        .cell(ab.lower)
        .cell(ab.upper)
        .cell(adaptive_rates[k]);
  }
  out.results = {{"samples", n},
                 {"sigma", construct.sigma},
                 {"drift", construct.drift},
                 {"fixed_spearman", rho},
                 {"fixed_spread", fixed_spread},
                 {"adaptive_spread", adaptive_spread},
                 {"spread_ratio", ratio},
                 {"adaptive_eps", c * construct.sigma}};
  out.checks.greater("fixed_spearman", rho, min_spearman);
  out.checks.at_most("spread_ratio", ratio, max_spread_ratio);
  out.artifacts = {{"clip_rate.csv", table.str()}};
  return out;
}

// ---------------------------------------------------------------------------

struct TrainChecks {
  bool require_improvement = true;
  std::optional<double> min_gap_fraction;
  std::optional<double> min_final_reward;
  std::optional<double> max_clip_fraction;
};

TrainChecks read_train_checks(ConfigReader& p) {
  auto c = section(p, "checks");
  TrainChecks out;
  out.require_improvement = c.optional("require_improvement", true);
  if (c.has("min_gap_fraction")) out.min_gap_fraction = c.required<double>("min_gap_fraction");
  if (c.has("min_final_reward")) out.min_final_reward = c.required<double>("min_final_reward");
  if (c.has("max_clip_fraction")) out.max_clip_fraction = c.required<double>("max_clip_fraction");
  close_section(p, "checks", c);
  return out;
}

TokenMdp read_mdp(ConfigReader& p) {
  auto r = p.child("mdp");
  TokenMdp mdp = mdp_from_json(r);
  p.set_resolved("mdp", r.resolved());
  return mdp;
}

TabularPolicy read_policy(ConfigReader& p, const TokenMdp& mdp) {
  auto r = section(p, "policy");
  TabularPolicy policy = policy_from_json(r, mdp);
  p.set_resolved("policy", r.resolved());
  return policy;
}

void add_step_rows(CsvTable& table, const std::string* name, const TrainReport& report) {
  for (const auto& r : report.records) {
    table.row();
    if (name) table.cell(*name);
    table.cell(r.step)
        .cell(r.expected_reward)
        .cell(r.reward_standard_error)
        .cell(r.surrogate_value)
        .cell(r.clip_fraction)
        .cell(r.first_epoch_clip_fraction)
        .cell(r.mean_abs_log_rho)
        .cell(r.degenerate_groups);
  }
}

const std::vector<std::string> kStepColumns = {
    "step",          "expected_reward",           "reward_standard_error", "surrogate_value",
    "clip_fraction", "first_epoch_clip_fraction", "mean_abs_log_rho",      "degenerate_groups"};

json train_summary(const TokenMdp& mdp, const TrainReport& report) {
  json s = summary_json(report);
  const double best = max_reward(mdp);
  const double gap = best - report.initial_expected_reward;
  double min_clip = report.records.empty() ? 0.0 : 1.0;
  for (const auto& r : report.records) min_clip = std::min(min_clip, r.clip_fraction);
  s["max_reward"] = best;
  s["min_clip_fraction"] = min_clip;
  s["gap_fraction"] = gap > 0.0 ? (report.final_expected_reward - report.initial_expected_reward) / gap
                                : 0.0;
  return s;
}

void apply_train_checks(Checks& checks, const std::string& prefix, const json& s,
                        const TrainChecks& c) {
  checks.at_most(prefix + "aborted", s["aborted"].get<bool>() ? 1.0 : 0.0, 0.0);
  const double init = s["initial_expected_reward"].get<double>();
  const double fin = s["final_expected_reward"].get<double>();
  if (c.require_improvement) checks.at_least(prefix + "reward_improvement", fin - init, 0.0);
  if (c.min_gap_fraction) checks.at_least(prefix + "gap_fraction", s["gap_fraction"], *c.min_gap_fraction);
  if (c.min_final_reward) checks.at_least(prefix + "final_expected_reward", fin, *c.min_final_reward);
  if (c.max_clip_fraction) {
    checks.at_most(prefix + "max_clip_fraction", s["max_clip_fraction"], *c.max_clip_fraction);
    checks.at_least(prefix + "min_clip_fraction", s["min_clip_fraction"], 0.0);
  }
}

ExperimentResult train_experiment(ConfigReader& p, const Context& ctx) {
  const TokenMdp mdp = read_mdp(p);
  const TabularPolicy init = read_policy(p, mdp);
  auto tr = p.child("train");
  TrainConfig cfg = train_config_from_json(tr);
  p.set_resolved("train", tr.resolved());
  const auto tc = read_train_checks(p);
  p.finish();
  cfg.seed = ctx.seed;
  cfg.threads = ctx.threads;

  const TrainReport report = train(mdp, init, cfg);
  ExperimentResult out;
  CsvTable steps(kStepColumns);
  add_step_rows(steps, nullptr, report);
  std::string lines;
  for (const auto& r : report.records) lines += to_json(r).dump() + "\n";
  out.results = train_summary(mdp, report);
  out.results["objective"] = to_string(cfg.objective.kind);
  apply_train_checks(out.checks, "", out.results, tc);
  out.artifacts = {{"steps.csv", steps.str()}, {"steps.jsonl", lines}};
  return out;
}

ExperimentResult compare_objectives(ConfigReader& p, const Context& ctx) {
  const TokenMdp mdp = read_mdp(p);
  const TabularPolicy init = read_policy(p, mdp);
  const json& common = p.raw("train");
  if (!common.is_object()) config_error(p, "train", "expected an object");
  if (common.contains("objective") || common.contains("clip")) {
    config_error(p, "train", "objective and clip are set per run");
  }
  const json& runs = p.raw("runs");
  if (!runs.is_array() || runs.empty()) config_error(p, "runs", "expected a non-empty array");
  struct Run {
    std::string name;
    TrainConfig config;
  };
  std::vector<Run> parsed;
  json resolved_runs = json::array();
  json resolved_common;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ConfigReader rr(runs[i], p.path() + ".runs[" + std::to_string(i) + "]");
    const auto name = rr.required<std::string>("name");
    json merged = common;
    merged["objective"] = rr.required<std::string>("objective");
    if (rr.has("clip")) merged["clip"] = rr.raw("clip");
    rr.finish();
    for (const auto& other : parsed) {
      if (other.name == name) config_error(rr, "name", "duplicate run name '" + name + "'");
    }
    ConfigReader mr(merged, rr.path());
    TrainConfig cfg = train_config_from_json(mr);
    cfg.seed = ctx.seed;
    cfg.threads = ctx.threads;
    json res = mr.resolved();
    resolved_runs.push_back({{"name", name}, {"objective", res["objective"]}, {"clip", res["clip"]}});
    res.erase("objective");
    res.erase("clip");
    resolved_common = res;
    parsed.push_back({name, cfg});
  }
  p.set_resolved("train", resolved_common);
  p.set_resolved("runs", resolved_runs);
  const auto tc = read_train_checks(p);
  p.finish();

  ExperimentResult out;
  std::vector<std::string> cols = kStepColumns;
  cols.insert(cols.begin(), "run");
  CsvTable curves(cols);
  json summaries = json::object();
  for (const auto& run : parsed) {
    const TrainReport report = train(mdp, init, run.config);
    add_step_rows(curves, &run.name, report);
    json s = train_summary(mdp, report);
    s["objective"] = to_string(run.config.objective.kind);
    s.erase("final_logits");
    apply_train_checks(out.checks, run.name + ".", s, tc);
    summaries[run.name] = std::move(s);
  }
  out.results = {{"runs", summaries}};
  out.artifacts = {{"curves.csv", curves.str()}};
  return out;
}

}  // namespace

const std::vector<Experiment>& experiments() {
  static const std::vector<Experiment> all = {
      {"verify-unbiasedness", verify_unbiasedness},
      {"variance-scan", variance_scan},
      {"chi2-factorization", chi2_factorization},
      {"log-std-profile", log_std_profile},
      {"clip-rate", clip_rate},
      {"train", train_experiment},
      {"compare-objectives", compare_objectives},
  };
  return all;
}

}  // namespace ctpo::harness
