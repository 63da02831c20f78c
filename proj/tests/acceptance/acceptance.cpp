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

// Acceptance suite: one pass/fail line per criterion, exit 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ctpo/estimators.hpp"
#include "ctpo/harness.hpp"
#include "ctpo/io.hpp"
#include "ctpo/numeric.hpp"
#include "ctpo/objectives.hpp"
#include "support/fixtures.hpp"
#include "support/objective_cases.hpp"
#include "support/oracles.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctpo;

// Frozen from the calibration run of configs/train_ctpo.json (final 4.1539).
constexpr double kFrozenFinalReward = 4.10;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path config_path(const std::string& name) { return fs::path(CTPO_CONFIG_DIR) / name; }

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ctpo_acceptance" / name;
  fs::remove_all(d);
  return d;
}

harness::RunResult run_shipped(const std::string& config, const fs::path& out,
                               std::optional<int> threads = {}) {
  harness::RunOptions o;
  o.config_path = config_path(config);
  o.out_dir = out;
  o.threads = threads;
  return harness::run(o);
}

struct Pair {
  TokenMdp mdp;
  TabularPolicy behavior;
  TabularPolicy target;
};

Pair seeded_pair(std::uint64_t battery, std::size_t i, int v, int h) {
  auto rng = derived_engine(battery, i);
  TokenMdp mdp(v, h, RewardSpec::random_table(rng()));
  const auto param = i % 4 == 3 ? Parameterization::kPerPosition : Parameterization::kPerPrefix;
  auto b = TabularPolicy::gaussian(v, h, 1.0, rng(), param);
  auto t = TabularPolicy::gaussian(v, h, 1.0, rng(), param);
  return {std::move(mdp), std::move(b), std::move(t)};
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const int vocab[] = {2, 3, 4};
  double worst = 0.0;
  int instances = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    const int v = vocab[i % 3];
    const int h = 2 + static_cast<int>((i / 3) % 5);
    const Pair p = seeded_pair(101, i, v, h);
    auto rng = derived_engine(102, i);
    const AdvantageFn battery[] = {true_advantage(p.mdp, p.target), fixed_table_advantage(rng(), v),
                                   group_uniform_advantage(uniform01(rng) - 0.5)};
    for (const auto& adv : battery) {
      const Eigen::VectorXd diff =
          exact_is_expectation(p.mdp, p.behavior, p.target, RatioMode::kCumulative, adv) -
          exact_policy_gradient(p.mdp, p.target, adv);
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
    ++instances;
  }
  const auto shipped = run_shipped("verify_unbiasedness.json", scratch_dir("c1"));
  const double elapsed = seconds_since(t0);
  return {instances >= 50 && worst < 1e-10 && elapsed < 60.0 && shipped.exit_code == 0,
          fmt("%d instances x 3 advantages, max component error %.3g (< 1e-10), shipped config exit %d, "
              "%.2f s (< 60 s)",
              instances, worst, shipped.exit_code, elapsed)};
}

Outcome criterion2() {
  const testing::BiasWitness w;
  const json cfg = json::parse(read_text_file(config_path("verify_unbiasedness.json")));
  const json& wc = cfg["params"]["witness"];
  const bool fixture_matches = wc["behavior_p0"] == 0.5 && wc["target_p0"] == 0.8 &&
                               wc["advantage_seed"] == 17 && w.mdp.vocab_size() == 2 &&
                               w.mdp.horizon() == 2;
  const Eigen::VectorXd oracle = exact_policy_gradient(w.mdp, w.target, w.advantage);
  std::map<RatioMode, double> bias;
  for (RatioMode m : kAllRatioModes) {
    bias[m] = (exact_is_expectation(w.mdp, w.behavior, w.target, m, w.advantage) - oracle).norm();
  }
  const bool ok = fixture_matches && bias[RatioMode::kToken] > 1e-3 &&
                  bias[RatioMode::kGspo] > 1e-3 && bias[RatioMode::kCumulative] < 1e-10 &&
                  bias[RatioMode::kSequence] < 1e-10;
  return {ok, fmt("bias token %.4g, gspo %.4g (> 1e-3); cumulative %.3g, sequence %.3g (< 1e-10)",
                  bias[RatioMode::kToken], bias[RatioMode::kGspo], bias[RatioMode::kCumulative],
                  bias[RatioMode::kSequence])};
}

Outcome criterion3() {
  int violations = 0;
  double terminal = 0.0;
  double min_gap = INFINITY;
  const int instances = 120;
  for (int i = 0; i < instances; ++i) {
    const int v = 2 + i % 2;
    const int h = 2 + (i / 2) % 5;
    const Pair p = seeded_pair(301, static_cast<std::size_t>(i), v, h);
    for (const auto& rv : exact_ratio_variance_profile(p.mdp, p.behavior, p.target)) {
      if (rv.position < h) {
        if (!(rv.var_seq > rv.var_cum)) ++violations;
        min_gap = std::min(min_gap, rv.var_seq - rv.var_cum);
      } else {
        terminal = std::max(terminal, std::abs(rv.var_seq - rv.var_cum));
      }
    }
  }
  return {violations == 0 && terminal <= 1e-12,
          fmt("%d instances: %d violations of Var(seq) > Var(cum) for t < H (min gap %.3g); "
              "max |difference| at t = H %.3g (<= 1e-12)",
              instances, violations, min_gap, terminal)};
}

Outcome criterion4() {
  // Product formula with chi2 computed here from the distributions.
  double formula_err = 0.0;
  for (int i = 0; i < 30; ++i) {
    std::mt19937_64 rng(400 + i);
    const int v = 2 + i % 3;
    const int h = 2 + (i / 3) % 5;
    std::vector<std::vector<double>> pb, pt;
    double prod = 1.0;
    std::vector<double> expected;
    for (int t = 0; t < h; ++t) {
      pb.push_back(testing::random_distribution(v, rng));
      pt.push_back(testing::random_distribution(v, rng));
      double m = 0.0;
      for (int a = 0; a < v; ++a) m += pt[t][a] * pt[t][a] / pb[t][a];
      prod *= m;
      expected.push_back(prod - 1.0);
    }
    const TokenMdp mdp(v, h, RewardSpec::constant(0.0));
    const auto param = i % 2 ? Parameterization::kPerPosition : Parameterization::kPerPrefix;
    const auto prof = exact_ratio_variance_profile(
        mdp, TabularPolicy::from_position_probs(v, h, pb, param),
        TabularPolicy::from_position_probs(v, h, pt, param));
    for (int t = 0; t < h; ++t) formula_err = std::max(formula_err, std::abs(prof[t].var_cum - expected[t]));
  }
  // chi2 = delta at every position: P_b(0) = 1/2, P_theta(0) = 1/2 + sqrt(delta)/2.
  double limit_err = 0.0;
  double curve_err = 0.0;
  for (double delta : {1e-3, 1e-2, 0.1, 0.5}) {
    const double p = 0.5 + 0.5 * std::sqrt(delta);
    for (int h = 2; h <= 8; ++h) {
      const TokenMdp mdp(2, h, RewardSpec::constant(0.0));
      const auto prof = exact_ratio_variance_profile(
          mdp, testing::binary_policy(h, 0.5), testing::binary_policy(h, p));
      for (int t = 1; t <= h; ++t) {
        const double ratio = prof[t - 1].var_seq / prof[t - 1].var_cum;
        const double closed = (std::pow(1.0 + delta, h) - 1.0) / (std::pow(1.0 + delta, t) - 1.0);
        curve_err = std::max(curve_err, std::abs(ratio - closed));
        if (delta == 1e-3) {
          const double limit = static_cast<double>(h) / t;
          limit_err = std::max(limit_err, std::abs(ratio - limit) / limit);
        }
      }
    }
  }
  return {formula_err <= 1e-10 && limit_err < 0.01 && curve_err <= 1e-8,
          fmt("product formula max error %.3g (<= 1e-10); delta=1e-3 ratio vs H/t max rel error "
              "%.4f (< 1%%) for H <= 8; enumerated vs closed-form curve %.3g (<= 1e-8)",
              formula_err, limit_err, curve_err)};
}

// Per-step std of log r under a uniform behavior, from the target row alone.
double construct_sigma(const harness::IidConstruct& c) {
  const int v = c.mdp.vocab_size();
  const auto row = testing::naive_softmax(c.target.row(0));
  double m1 = 0.0, m2 = 0.0;
  for (int a = 0; a < v; ++a) {
    const double x = std::log(row[a] * v);
    m1 += x / v;
    m2 += x * x / v;
  }
  return std::sqrt(m2 - m1 * m1);
}

std::vector<double> sampled_log_cumulative(const harness::IidConstruct& c, std::size_t n,
                                           std::uint64_t seed) {
  const auto h = static_cast<std::size_t>(c.mdp.horizon());
  std::vector<double> out(n * h);
  sample_stream(c.mdp, c.behavior, c.target, n, seed, 1, [&](std::size_t i, const Trajectory& t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
      acc += t.logp_target[k] - t.logp_behavior[k];
      out[i * h + k] = acc;
    }
  });
  return out;
}

Outcome criterion5() {
  const auto c = harness::iid_construct(32, 32, 0.2, 5);
  const double sigma = construct_sigma(c);
  const std::size_t n = 100000;
  const auto h = static_cast<std::size_t>(c.mdp.horizon());
  const auto x = sampled_log_cumulative(c, n, 505);
  std::vector<double> sd(h);
  for (std::size_t t = 0; t < h; ++t) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) s1 += x[i * h + t];
    const double mean = s1 / n;
    for (std::size_t i = 0; i < n; ++i) s2 += (x[i * h + t] - mean) * (x[i * h + t] - mean);
    sd[t] = std::sqrt(s2 / n);
  }
  double num = 0.0, den = 0.0, mean_sd = 0.0;
  for (std::size_t t = 0; t < h; ++t) {
    num += sd[t] * std::sqrt(t + 1.0);
    den += t + 1.0;
    mean_sd += sd[t] / h;
  }
  const double sigma_hat = num / den;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t t = 0; t < h; ++t) {
    ss_res += std::pow(sd[t] - sigma_hat * std::sqrt(t + 1.0), 2);
    ss_tot += std::pow(sd[t] - mean_sd, 2);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  const double rel = std::abs(sigma_hat - sigma) / sigma;
  return {r2 > 0.99 && rel < 0.05,
          fmt("sigma %.4f, sigma_hat %.4f (rel error %.4f < 0.05), R^2 %.6f (> 0.99), 1e5 "
              "trajectories, H = 32",
              sigma, sigma_hat, rel, r2)};
}

double spearman_rank(const std::vector<double>& y) {
  // Against positions 1..n; average ranks for ties in y.
  const std::size_t n = y.size();
  std::vector<double> ry(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      less += y[j] < y[i];
      equal += y[j] == y[i];
    }
    ry[i] = less + (equal + 1.0) / 2.0;
  }
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rx = i + 1.0;
    sxy += (rx - mean) * (ry[i] - mean);
    sxx += (rx - mean) * (rx - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = harness::iid_construct(32, 32, 0.2, 5);
  const double sigma = construct_sigma(c);
  const double cc = 2.0;
  const std::size_t n = 100000;
  const auto h = static_cast<std::size_t>(c.mdp.horizon());
  const auto x = sampled_log_cumulative(c, n, 606);
  std::vector<double> fixed(h, 0.0), adaptive(h, 0.0);
  for (std::size_t t = 0; t < h; ++t) {
    const double band = cc * sigma * std::sqrt(t + 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::exp(x[i * h + t]);
      fixed[t] += (r < 0.5 || r > 5.0) ? 1.0 : 0.0;
      adaptive[t] += std::abs(x[i * h + t]) > band ? 1.0 : 0.0;
    }
    fixed[t] /= n;
    adaptive[t] /= n;
  }
  const double rho = spearman_rank(fixed);
  auto spread = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  };
  const double ratio = spread(adaptive) / spread(fixed);
  const auto shipped = run_shipped("clip_rate.json", scratch_dir("c6"));
  const double elapsed = seconds_since(t0);
  return {rho > 0.9 && ratio <= 0.5 && elapsed < 120.0 && shipped.exit_code == 0,
          fmt("fixed [0.5, 5] Spearman %.4f (> 0.9); adaptive spread %.4f vs fixed %.4f, ratio "
              "%.4f (<= 0.5); shipped config exit %d; %.2f s (< 120 s)",
              rho, spread(adaptive), spread(fixed), ratio, shipped.exit_code, elapsed)};
}

Outcome criterion7() {
  const ObjectiveSpec specs[] = {
      {ObjectiveKind::kGrpo, ClipSchedule::symmetric(0.2)},
      {ObjectiveKind::kGspo, ClipSchedule::symmetric(0.2)},
      {ObjectiveKind::kCtpo, ClipSchedule::adaptive_log(0.025, 0.05, 0.5)},
  };
  std::string detail;
  bool ok = true;
  for (const auto& spec : specs) {
    int checked = 0, skipped = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; checked < 200 && seed < 20000; ++seed) {
      const auto c = testing::random_objective_case(70000 + seed);
      if (testing::min_clip_margin(c, spec) < 1e-4) {
        ++skipped;
        continue;
      }
      const Eigen::VectorXd g = objective_gradient(c.groups, c.target, c.behavior, spec);
      worst = std::max(worst, testing::relative_gradient_error(g, testing::fd_objective_gradient(c, spec, 1e-6)));
      ++checked;
    }
    ok = ok && checked >= 200 && worst < 1e-5;
    detail += fmt("%s %d instances max rel error %.2g (%d near-boundary skipped); ",
                  std::string(to_string(spec.kind)).c_str(), checked, worst, skipped);
  }
  detail += "tolerance 1e-5, h = 1e-6";
  return {ok, detail};
}

Outcome criterion8() {
  double mean_dev = 0.0;
  double cond_dev = 0.0;
  double naive_dev = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const int v = 2 + static_cast<int>(i % 3);
    const int h = 2 + static_cast<int>((i / 3) % 4);
    const Pair p = seeded_pair(801, i, v, h);
    for (double m : cumulative_ratio_means(p.mdp, p.behavior, p.target)) {
      mean_dev = std::max(mean_dev, std::abs(m - 1.0));
    }
    cond_dev = std::max(cond_dev, max_conditional_suffix_deviation(p.mdp, p.behavior, p.target));
    if (i >= 12) continue;
    // From-scratch enumeration: E[rho_t] and E[eps_t | a_{1:t}] for every prefix.
    std::vector<double> means(h, 0.0);
    std::map<Sequence, std::pair<double, double>> cond;  // prefix -> (mass, weighted)
    for (const auto& s : testing::all_sequences(v, h)) {
      const std::span<const Token> a(s);
      const double pb = testing::naive_sequence_prob(p.behavior, a);
      std::vector<double> r;
      for (int t = 0; t < h; ++t) {
        r.push_back(testing::naive_step_prob(p.target, a.subspan(0, t), a[t]) /
                    testing::naive_step_prob(p.behavior, a.subspan(0, t), a[t]));
      }
      double cum = 1.0;
      for (int t = 0; t < h; ++t) {
        cum *= r[t];
        means[t] += pb * cum;
        double suffix = 1.0;
        for (int k = t + 1; k < h; ++k) suffix *= r[k];
        auto& e = cond[Sequence(s.begin(), s.begin() + t + 1)];
        e.first += pb;
        e.second += pb * suffix;
      }
    }
    for (double m : means) naive_dev = std::max(naive_dev, std::abs(m - 1.0));
    for (const auto& [prefix, e] : cond) naive_dev = std::max(naive_dev, std::abs(e.second / e.first - 1.0));
  }
  return {mean_dev <= 1e-10 && cond_dev <= 1e-10 && naive_dev <= 1e-10,
          fmt("50 instances: max |E[rho_t] - 1| %.3g, max |E[eps_t | prefix] - 1| %.3g; "
              "from-scratch enumeration on 12 of them %.3g (all <= 1e-10)",
              mean_dev, cond_dev, naive_dev)};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  const json cfg = json::parse(read_text_file(config_path("train_ctpo.json")));
  const json& p = cfg["params"];
  const bool shipped_shape =
      cfg["seed"] == 7 && p["mdp"]["vocab_size"] == 4 && p["mdp"]["horizon"] == 6 &&
      p["mdp"]["reward"]["kind"] == "count_token" && p["mdp"]["reward"]["token"] == 1 &&
      p["train"]["objective"] == "ctpo" && p["train"]["group_size"] == 8 &&
      p["train"]["learning_rate"] == 0.05 && p["train"]["total_steps"] == 200;
  const fs::path out = scratch_dir("c9");
  const auto r = run_shipped("train_ctpo.json", out);
  const double elapsed = seconds_since(t0);
  if (r.report.is_null()) return {false, "training run failed: " + r.message};
  const json& res = r.report["results"];
  const double init = res["initial_expected_reward"];
  const double fin = res["final_expected_reward"];
  const double best = res["max_reward"];

  const TokenMdp mdp(4, 6, RewardSpec::count_token(1));
  TabularPolicy final_policy(4, 6);
  const auto logits = res["final_logits"].get<std::vector<double>>();
  final_policy.set_parameters(Eigen::Map<const Eigen::VectorXd>(logits.data(), logits.size()));
  const double recomputed = testing::naive_expected_reward(mdp, final_policy);

  const auto rows = read_csv(out / "steps.csv");
  std::size_t clip_col = 0;
  while (clip_col < rows[0].size() && rows[0][clip_col] != "clip_fraction") ++clip_col;
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double c = std::stod(rows[i][clip_col]);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  const double gap_fraction = (fin - init) / (best - init);
  const bool ok = shipped_shape && rows.size() == 201 && std::abs(recomputed - fin) < 1e-9 &&
                  fin >= kFrozenFinalReward && gap_fraction >= 0.5 && lo >= 0.0 && hi <= 0.5 &&
                  elapsed < 600.0;
  return {ok, fmt("expected reward %.4f -> %.4f (frozen bound >= %.2f; %.1f%% of gap to %.0f, >= 50%%); "
                  "clip_fraction in [%.4f, %.4f] over %zu steps (within [0, 0.5]); %.2f s (< 600 s)",
                  init, fin, kFrozenFinalReward, 100.0 * gap_fraction, best, lo, hi, rows.size() - 1,
                  elapsed)};
}

bool numbers_close(const json& a, const json& b, double tol) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
  if (a.type() != b.type() || a.size() != b.size()) return false;
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !numbers_close(*it, b[it.key()], tol)) return false;
    }
    return true;
  }
  if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!numbers_close(a[i], b[i], tol)) return false;
    }
    return true;
  }
  return a == b;
}

bool csv_close(const fs::path& a, const fs::path& b, double tol) {
  const auto ra = read_csv(a);
  const auto rb = read_csv(b);
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].size() != rb[i].size()) return false;
    for (std::size_t j = 0; j < ra[i].size(); ++j) {
      if (ra[i][j] == rb[i][j]) continue;
      char* end = nullptr;
      const double x = std::strtod(ra[i][j].c_str(), &end);
      const double y = std::strtod(rb[i][j].c_str(), nullptr);
      if (*end != '\0' || !(std::abs(x - y) <= tol)) return false;
    }
  }
  return true;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string text = read_text_file(e.path());
    if (e.path().filename() == "manifest.json") {
      json m = json::parse(text);
      m.erase("started_at");
      m.erase("wall_time_seconds");
      text = m.dump();
    }
    out[e.path().filename().string()] = std::move(text);
  }
  return out;
}

Outcome criterion10() {
  int configs = 0;
  std::vector<std::string> failures;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(CTPO_CONFIG_DIR)) {
    if (e.path().extension() == ".json") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    const std::string name = path.filename().string();
    const fs::path a = scratch_dir("c10_" + name);
    const fs::path b = scratch_dir("c10_" + name + "_threads");
    const auto first = run_shipped(name, a, 1);
    const auto s1 = snapshot(a);
    const auto second = run_shipped(name, a, 1);
    const auto s2 = snapshot(a);
    const auto threaded = run_shipped(name, b, 4);
    ++configs;
    if (first.exit_code != 0 || second.exit_code != 0 || threaded.exit_code != 0) {
      failures.push_back(name + " (exit code)");
      continue;
    }
    if (s1 != s2) failures.push_back(name + " (rerun not byte-identical)");
    for (const auto& [file, _] : s1) {
      if (file == "manifest.json") continue;
      bool close = true;
      if (file.ends_with(".csv")) {
        close = csv_close(a / file, b / file, 1e-12);
      } else if (file.ends_with(".jsonl")) {
        std::istringstream la(s1.at(file)), lb(read_text_file(b / file));
        std::string x, y;
        while (close && std::getline(la, x)) {
          close = std::getline(lb, y) && numbers_close(json::parse(x), json::parse(y), 1e-12);
        }
        close = close && !std::getline(lb, y);
      } else {
        close = numbers_close(json::parse(s1.at(file)), json::parse(read_text_file(b / file)), 1e-12);
      }
      if (!close) failures.push_back(name + "/" + file + " (threads 1 vs 4)");
    }
  }
  std::string detail = fmt("%d shipped configs: reruns byte-identical, threads 1 vs 4 within 1e-12", configs);
  if (!failures.empty()) {
    detail = "failures:";
    for (const auto& f : failures) detail += " " + f;
  }
  return {failures.empty() && configs == 7, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Cumulative estimator matches the exact gradient", criterion1},
      {"Bias witnesses (token, GSPO biased; cumulative, sequence unbiased)", criterion2},
      {"Sequence ratio variance dominates cumulative", criterion3},
      {"Chi-square product formula and H/t limit", criterion4},
      {"Log-std sqrt(t) growth", criterion5},
      {"Clip-rate uniformity", criterion6},
      {"Objective gradients vs finite differences", criterion7},
      {"Likelihood-ratio identities", criterion8},
      {"CTPO toy training regression", criterion9},
      {"Determinism", criterion10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.passed ? 0 : 1;
    std::printf("[%s] criterion %zu: %s: %s [%.2f s]\n", o.passed ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / "ctpo_acceptance", ec);
  std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
