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
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacos/dataset.hpp"
#include "tacos/taxonomy.hpp"

namespace tacos {

// One reviewer action. `revision` is global and strictly increasing;
// `base_version` is the item version the annotator saw.
struct Revision {
  std::uint64_t revision = 0;
  std::string item_id;
  std::string annotator_id;
  ReviewAction action = ReviewAction::kConfirmed;
  std::optional<std::string> label_id;  // relabeled
  std::optional<std::string> text;      // edited
  std::uint64_t base_version = 0;
  std::string timestamp;
};

nlohmann::json to_json(const Revision& revision);
Revision revision_from_json(const nlohmann::json& node);

struct AnnotationItem {
  LabeledQuery item;
  std::uint64_t version = 0;  // revisions applied to this item
  std::vector<Revision> history;
};

nlohmann::json to_json(const AnnotationItem& item);

struct AnnotationFilter {
  std::optional<Provenance> provenance;
  std::optional<std::string> label_id;
  std::optional<std::string> source;
  bool pending_only = false;  // not yet human-reviewed and not removed
  bool include_removed = false;
};

struct ActionRequest {
  std::string annotator_id;
  ReviewAction action = ReviewAction::kConfirmed;
  std::optional<std::string> label_id;
  std::optional<std::string> text;
  // When set, the action only applies if the item is still at this version
  // (first writer wins); otherwise kConflict.
  std::optional<std::uint64_t> base_version;
};

// Review state over a base pool plus an append-only revision log. Opening
// the store replays the log; the current state is always base + log.
// Item ids are stable across text edits.
class AnnotationStore {
 public:
  AnnotationStore(Pool base, std::filesystem::path log_path, Taxonomy taxonomy);

  // Throws kNotFound, kConflict (stale base_version or removed item),
  // kInvalidArgument (missing annotator, bad label or text), kStorage.
  AnnotationItem apply(std::string_view item_id, const ActionRequest& request);

  AnnotationItem get(std::string_view item_id) const;
  std::vector<AnnotationItem> list(const AnnotationFilter& filter, std::size_t offset,
                                   std::size_t limit, std::size_t* total = nullptr) const;
  // Current state as a pool (for sampling and export).
  Pool snapshot() const;
  // Actions per annotator.
  std::map<std::string, std::uint64_t> progress() const;
  std::uint64_t last_revision() const;

  // Rebuilds state from a base pool and a log file without opening a store.
  static Pool replay(const Pool& base, const std::filesystem::path& log_path);

 private:
  // Checks and applies to in-memory state; no I/O.
  void apply_in_memory(const Revision& revision, const std::optional<std::uint64_t>& base_version);

  mutable std::mutex mutex_;
  Taxonomy taxonomy_;
  Pool pool_;
  std::filesystem::path log_path_;
  std::ofstream log_;
  std::map<std::string, std::uint64_t> versions_;
  std::map<std::string, std::vector<Revision>> history_;
  std::map<std::string, std::uint64_t> progress_;
  std::uint64_t last_revision_ = 0;
};

}  // namespace tacos
