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

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ctpo {

// 17 significant digits ("%.17g"): enough to round-trip any double.
std::string format_double(double x);

// In-memory CSV with a fixed header; cells are preformatted.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row();
  CsvTable& cell(double x);
  CsvTable& cell(std::int64_t x);
  CsvTable& cell(int x) { return cell(static_cast<std::int64_t>(x)); }
  CsvTable& cell(const std::string& s);
  // Empty cell for absent values.
  CsvTable& cell(std::optional<double> x);

  std::string str() const;
  std::size_t rows() const noexcept { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Throw ErrorCode::kIo on failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ctpo
