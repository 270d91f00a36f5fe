/*
 * Copyright 2026 The TACOS Gateway Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace tacos {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Unicode NFC, whitespace trimmed and internal runs of whitespace collapsed
// to a single ASCII space. This is the dedup key space for query texts.
std::string normalize_text(std::string_view text);

std::string trim(std::string_view text);
std::string ascii_lower(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never observe a
// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// UTC timestamp, ISO-8601 with millisecond precision.
std::string utc_timestamp();

// Deterministic RNG. The engine (mt19937_64) is fully specified by the
// standard; the distributions below are implemented here because the
// standard library's are not portable bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  double unit();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64-style mix of a seed and a stream key.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream);

// Line-delimited JSON with a leading {"schema": ...} header record.
struct JsonLines {
  nlohmann::json header;
  std::vector<nlohmann::json> records;
  // 1-based line numbers of records that failed to parse as JSON objects.
  std::vector<std::size_t> malformed_lines;
};

JsonLines parse_json_lines(std::string_view text, std::string_view expected_schema,
                           std::string_view source_name);
JsonLines read_json_lines(const std::filesystem::path& path,
                          std::string_view expected_schema);
std::string dump_json_lines(const nlohmann::json& header,
                            std::span<const nlohmann::json> records);

// Unicode case folding (full folding, via ICU).
std::string fold_case(std::string_view text);

// YAML document -> JSON value. Plain scalars become null/bool/integer/float
// when they parse as such; quoted scalars stay strings.
nlohmann::json yaml_to_json(std::string_view document, std::string_view source_name = "<memory>");
nlohmann::json load_yaml_file_as_json(const std::filesystem::path& path);

}  // namespace tacos
