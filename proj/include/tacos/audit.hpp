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
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tacos/routing.hpp"

namespace tacos {

struct UnsafeAuditRecord {
  std::uint64_t sequence = 0;
  std::string timestamp;
  std::string label_id;
  std::string query_digest;
  // Absent for private-information categories.
  std::optional<std::string> query_text;
};

// Append-only line-delimited audit log of unsafe routing decisions, with a
// counter snapshot every `snapshot_every` records. Appends are serialized;
// the store may be shared across request threads.
class AuditStore {
 public:
  explicit AuditStore(std::filesystem::path path, std::size_t snapshot_every = 100);

  // Throws kPrecondition when decision.log_unsafe is false and kStorage when
  // the log cannot be written (nothing is counted in that case).
  UnsafeAuditRecord record_unsafe(const RoutingDecision& decision, std::string_view query_text);

  std::map<std::string, std::uint64_t> counters() const;
  std::uint64_t count(std::string_view label_id) const;
  std::uint64_t last_sequence() const;
  const std::filesystem::path& path() const { return path_; }

  static std::vector<UnsafeAuditRecord> read_records(const std::filesystem::path& path);

  static const std::set<std::string>& digest_only_labels();

 private:
  void append_line(const std::string& line);

  std::filesystem::path path_;
  std::size_t snapshot_every_;
  mutable std::mutex mutex_;
  std::uint64_t sequence_ = 0;
  std::map<std::string, std::uint64_t> counters_;
};

}  // namespace tacos
