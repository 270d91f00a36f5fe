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

#include "tacos/audit.hpp"

#include <fstream>

#include "json.hpp"
#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::string_view kAuditSchema = "tacos-audit/1";

}  // namespace

const std::set<std::string>& AuditStore::digest_only_labels() {
  static const std::set<std::string> labels{"private_information_injection",
                                            "private_information_leakage"};
  return labels;
}

AuditStore::AuditStore(std::filesystem::path path, std::size_t snapshot_every)
    : path_(std::move(path)), snapshot_every_(snapshot_every == 0 ? 1 : snapshot_every) {
  if (std::filesystem::exists(path_)) {
    // Resume sequence and counters from the existing log.
    for (const auto& record : read_records(path_)) {
      sequence_ = record.sequence;
      ++counters_[record.label_id];
    }
  } else {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    append_line(nlohmann::json{{"schema", kAuditSchema}}.dump());
  }
}

void AuditStore::append_line(const std::string& line) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::kStorage, "cannot open audit log", path_.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kStorage, "audit log write failed", path_.string());
}

UnsafeAuditRecord AuditStore::record_unsafe(const RoutingDecision& decision,
                                            std::string_view query_text) {
  if (!decision.log_unsafe) {
    throw Error(ErrorCode::kPrecondition, "decision is not marked for unsafe logging",
                decision.label_id);
  }
  UnsafeAuditRecord record;
  record.timestamp = utc_timestamp();
  record.label_id = decision.label_id;
  record.query_digest = sha256_hex(query_text);
  if (digest_only_labels().count(decision.label_id) == 0) {
    record.query_text = std::string(query_text);
  }

  std::lock_guard lock(mutex_);
  record.sequence = sequence_ + 1;
  nlohmann::json line{{"type", "unsafe"},
                      {"sequence", record.sequence},
                      {"timestamp", record.timestamp},
                      {"label_id", record.label_id},
                      {"query_digest", record.query_digest}};
  if (record.query_text) line["query_text"] = *record.query_text;
  append_line(line.dump());
  sequence_ = record.sequence;
  ++counters_[record.label_id];
  if (sequence_ % snapshot_every_ == 0) {
    nlohmann::json snapshot{{"type", "snapshot"},
                            {"sequence", sequence_},
                            {"timestamp", utc_timestamp()},
                            {"counters", counters_}};
    try {
      append_line(snapshot.dump());
    } catch (const Error&) {
      // Snapshots are derivable from the records; the record itself landed.
    }
  }
  return record;
}

std::map<std::string, std::uint64_t> AuditStore::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

std::uint64_t AuditStore::count(std::string_view label_id) const {
  std::lock_guard lock(mutex_);
  auto it = counters_.find(std::string(label_id));
  return it == counters_.end() ? 0 : it->second;
}

std::uint64_t AuditStore::last_sequence() const {
  std::lock_guard lock(mutex_);
  return sequence_;
}

std::vector<UnsafeAuditRecord> AuditStore::read_records(const std::filesystem::path& path) {
  JsonLines lines = read_json_lines(path, kAuditSchema);
  std::vector<UnsafeAuditRecord> out;
  for (const auto& line : lines.records) {
    if (line.value("type", "") != "unsafe") continue;
    UnsafeAuditRecord record;
    record.sequence = line.at("sequence").get<std::uint64_t>();
    record.timestamp = line.at("timestamp").get<std::string>();
    record.label_id = line.at("label_id").get<std::string>();
    record.query_digest = line.at("query_digest").get<std::string>();
    if (line.contains("query_text")) record.query_text = line["query_text"].get<std::string>();
    out.push_back(std::move(record));
  }
  return out;
}

}  // namespace tacos
