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


#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "ctpo/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ctpo_lab: importance-ratio experiments on toy token MDPs"};
  app.require_subcommand(1);

  ctpo::harness::RunOptions options;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("config", config, "Experiment config (JSON)")->required();
  auto* out_opt = run->add_option("--out", out, "Output directory (overrides output_dir)");
  auto* seed_opt = run->add_option("--seed", seed, "Seed (overrides the config seed)");
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list", "List experiment kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ctpo::harness::kExitConfig;
  }

  if (list->parsed()) {
    for (const auto& name : ctpo::harness::experiment_names()) std::cout << name << "\n";
    return 0;
  }

  options.config_path = config;
  if (*out_opt) options.out_dir = out;
  if (*seed_opt) options.seed = seed;
  if (*threads_opt) options.threads = threads;

  const auto result = ctpo::harness::run(options);
  if (result.exit_code == ctpo::harness::kExitPass) {
    std::cout << "pass: " << result.report["experiment"].get<std::string>() << " -> "
              << result.output_dir.string() << "\n";
  } else {
    std::cerr << "error (exit " << result.exit_code << "): " << result.message << "\n";
  }
  return result.exit_code;
}
