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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctpo/config.hpp"
#include "ctpo/harness.hpp"

namespace ctpo::harness {

struct Context {
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Artifact {
  std::string name;
  std::string content;
};

struct ExperimentResult {
  json results = json::object();
  Checks checks;
  std::vector<Artifact> artifacts;
};

// Runners read and finish() their params before doing any work, so schema
// errors surface before computation starts.
using Runner = std::function<ExperimentResult(ConfigReader& params, const Context& ctx)>;

struct Experiment {
  std::string name;
  Runner runner;
};

const std::vector<Experiment>& experiments();

}  // namespace ctpo::harness
