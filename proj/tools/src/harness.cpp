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


#include "ctpo/harness.hpp"

#include <chrono>
#include <ctime>
#include <iostream>

#include "ctpo/error.hpp"
#include "ctpo/io.hpp"
#include "experiments.hpp"

#ifndef CTPO_VERSION
#define CTPO_VERSION "0.0.0"
#endif

namespace ctpo::harness {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_output_dir(const std::string& experiment) {
  std::string dir = "ctpo_out/";
  for (char c : experiment) dir += c == '-' ? '_' : c;
  return dir;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kExitIo;
    case ErrorCode::kNonFinite: return kExitAssertion;
    // Everything else means the config asked for something the core refuses.
    default: return kExitConfig;
  }
}

// Best effort: the error report is the only artifact of a failed run.
void write_error_report(RunResult& result, const std::string& kind) {
  if (result.output_dir.empty()) return;
  try {
    std::error_code ec;
    std::filesystem::create_directories(result.output_dir, ec);
    write_json_file(result.output_dir / "error.json",
                    {{"status", "error"},
                     {"kind", kind},
                     {"exit_code", result.exit_code},
                     {"message", result.message}});
  } catch (const Error&) {
  }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : experiments()) out.push_back(e.name);
    return out;
  }();
  return names;
}

RunResult run(const RunOptions& options) {
  RunResult result;
  if (options.out_dir) result.output_dir = *options.out_dir;
  std::string text;
  try {
    text = read_text_file(options.config_path);
  } catch (const Error& e) {
    result.exit_code = kExitIo;
    result.message = e.what();
    write_error_report(result, "io");
    return result;
  }
  json config;
  try {
    config = json::parse(text);
  } catch (const json::parse_error& e) {
    result.exit_code = kExitConfig;
    result.message = options.config_path.string() + ": invalid JSON: " + e.what();
    write_error_report(result, "config");
    return result;
  }
  return run_config(config, options);
}

RunResult run_config(const json& config, const RunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_timestamp();
  RunResult result;
  if (options.out_dir) result.output_dir = *options.out_dir;

  std::string name;
  Context ctx;
  ExperimentResult experiment;
  json resolved;
  try {
    ConfigReader root(config, "config");
    name = root.required<std::string>("experiment");
    const Experiment* chosen = nullptr;
    for (const auto& e : experiments()) {
      if (e.name == name) chosen = &e;
    }
    if (!chosen) {
      std::string known;
      for (const auto& n : experiment_names()) known += (known.empty() ? "" : ", ") + n;
      throw Error(ErrorCode::kConfig,
                  "config.experiment: unknown experiment '" + name + "' (expected one of " + known + ")");
    }
    const auto out_dir = root.optional<std::string>("output_dir", default_output_dir(name));
    if (!options.out_dir) result.output_dir = out_dir;
    root.set_resolved("output_dir", result.output_dir.string());
    ctx.seed = root.optional<std::uint64_t>("seed", 0);
    ctx.threads = root.optional("threads", 1);
    if (options.seed) {
      ctx.seed = *options.seed;
      root.set_resolved("seed", ctx.seed);
    }
    if (options.threads) {
      ctx.threads = *options.threads;
      root.set_resolved("threads", ctx.threads);
    }
    if (ctx.threads < 1) throw Error(ErrorCode::kConfig, "config.threads: must be >= 1");
    if (root.has("description")) root.required<std::string>("description");
    static const json empty = json::object();
    ConfigReader params = root.has("params") ? root.child("params") : ConfigReader(empty, "config.params");
    root.finish();
    experiment = chosen->runner(params, ctx);
    params.finish();
    root.set_resolved("params", params.resolved());
    resolved = root.resolved();
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.code());
    result.message = e.what();
    write_error_report(result, std::string(to_string(e.code())));
    return result;
  }

  const bool passed = experiment.checks.passed();
  result.exit_code = passed ? kExitPass : kExitAssertion;
  result.report = {{"experiment", name},
                   {"seed", ctx.seed},
                   {"passed", passed},
                   {"assertions", experiment.checks.to_json()},
                   {"results", experiment.results}};
  if (!passed) {
    std::string failed;
    for (const auto& f : experiment.checks.failures()) failed += (failed.empty() ? "" : ", ") + f;
    result.message = "assertion failure: " + failed;
  }

  try {
    std::filesystem::create_directories(result.output_dir);
    json artifacts = json::array();
    for (const auto& a : experiment.artifacts) {
      write_text_file(result.output_dir / a.name, a.content);
      artifacts.push_back(a.name);
    }
    write_json_file(result.output_dir / "report.json", result.report);
    artifacts.push_back("report.json");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_json_file(result.output_dir / "manifest.json",
                    {{"tool", "ctpo_lab"},
                     {"version", CTPO_VERSION},
                     {"experiment", name},
                     {"config_path", options.config_path.string()},
                     {"seed", ctx.seed},
                     {"threads", ctx.threads},
                     {"status", passed ? "pass" : "fail"},
                     {"exit_code", result.exit_code},
                     {"artifacts", artifacts},
                     {"resolved_config", resolved},
                     {"started_at", started_at},
                     {"wall_time_seconds", wall}});
  } catch (const std::filesystem::filesystem_error& e) {
    result.exit_code = kExitIo;
    result.message = e.what();
  } catch (const Error& e) {
    result.exit_code = kExitIo;
    result.message = e.what();
  }
  return result;
}

}  // namespace ctpo::harness
