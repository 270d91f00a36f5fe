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

#include "tacos/annotation.hpp"

#include <algorithm>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::string_view kRevisionSchema = "tacos-revisions/1";

// The state change a revision makes, shared by live application and replay.
void mutate(LabeledQuery& item, const Revision& r) {
  switch (r.action) {
    case ReviewAction::kConfirmed:
    case ReviewAction::kRemoved:
      break;
    case ReviewAction::kRelabeled:
      item.label_id = r.label_id;
      item.label_failed = false;
      break;
    case ReviewAction::kEdited:
      item.text = *r.text;
      if (r.label_id) item.label_id = r.label_id;
      break;
  }
  item.provenance = Provenance::kHumanReviewed;
  item.review = Review{r.annotator_id, r.action, r.timestamp};
}

JsonLines read_log(const std::filesystem::path& path, const Pool& base) {
  JsonLines lines = read_json_lines(path, kRevisionSchema);
  if (!lines.malformed_lines.empty()) {
    throw Error(ErrorCode::kStorage, "malformed revision record",
                path.string() + ":" + std::to_string(lines.malformed_lines.front()));
  }
  if (lines.header.value("pool_digest", "") != base.digest()) {
    throw Error(ErrorCode::kStorage, "revision log belongs to a different base pool",
                path.string());
  }
  return lines;
}

}  // namespace

nlohmann::json to_json(const Revision& r) {
  nlohmann::json out{{"revision", r.revision},         {"item_id", r.item_id},
                     {"annotator_id", r.annotator_id}, {"action", to_string(r.action)},
                     {"base_version", r.base_version}, {"timestamp", r.timestamp}};
  if (r.label_id) out["label_id"] = *r.label_id;
  if (r.text) out["text"] = *r.text;
  return out;
}

Revision revision_from_json(const nlohmann::json& node) {
  Revision r;
  try {
    r.revision = node.at("revision").get<std::uint64_t>();
    r.item_id = node.at("item_id").get<std::string>();
    r.annotator_id = node.at("annotator_id").get<std::string>();
    auto action = parse_review_action(node.at("action").get<std::string>());
    if (!action) throw Error(ErrorCode::kParse, "unknown review action", r.item_id);
    r.action = *action;
    if (node.contains("label_id")) r.label_id = node["label_id"].get<std::string>();
    if (node.contains("text")) r.text = node["text"].get<std::string>();
    r.base_version = node.value("base_version", std::uint64_t{0});
    r.timestamp = node.value("timestamp", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, e.what(), "revision");
  }
  return r;
}

nlohmann::json to_json(const AnnotationItem& item) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : item.history) history.push_back(to_json(r));
  nlohmann::json out = to_json(item.item);
  out["version"] = item.version;
  out["history"] = std::move(history);
  return out;
}

AnnotationStore::AnnotationStore(Pool base, std::filesystem::path log_path, Taxonomy taxonomy)
    : taxonomy_(std::move(taxonomy)), pool_(std::move(base)), log_path_(std::move(log_path)) {
  if (std::filesystem::exists(log_path_)) {
    JsonLines lines = read_log(log_path_, pool_);
    for (const auto& record : lines.records) {
      Revision r = revision_from_json(record);
      if (r.revision <= last_revision_) {
        throw Error(ErrorCode::kStorage, "revision numbers must increase",
                    std::to_string(r.revision));
      }
      apply_in_memory(r, r.base_version);
    }
  } else {
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    write_file_atomic(log_path_, dump_json_lines({{"schema", kRevisionSchema},
                                                  {"pool_digest", pool_.digest()}},
                                                 {}));
  }
  log_.open(log_path_, std::ios::app | std::ios::binary);
  if (!log_) throw Error(ErrorCode::kStorage, "cannot open revision log", log_path_.string());
}

void AnnotationStore::apply_in_memory(const Revision& r,
                                      const std::optional<std::uint64_t>& base_version) {
  LabeledQuery* item = pool_.find_mutable(r.item_id);
  if (!item) throw Error(ErrorCode::kNotFound, "unknown item", r.item_id);
  std::uint64_t& version = versions_[r.item_id];
  if (base_version && *base_version != version) {
    throw Error(ErrorCode::kConflict,
                "item is at version " + std::to_string(version) + ", request was based on " +
                    std::to_string(*base_version),
                r.item_id);
  }
  if (item->removed()) throw Error(ErrorCode::kConflict, "item was removed", r.item_id);
  if (!is_forward_transition(item->provenance, Provenance::kHumanReviewed)) {
    throw Error(ErrorCode::kConflict, "provenance cannot move backwards", r.item_id);
  }
  mutate(*item, r);
  ++version;
  history_[r.item_id].push_back(r);
  ++progress_[r.annotator_id];
  last_revision_ = r.revision;
}

AnnotationItem AnnotationStore::apply(std::string_view item_id, const ActionRequest& request) {
  if (request.annotator_id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "annotator id is required");
  }
  Revision r;
  r.item_id = std::string(item_id);
  r.annotator_id = request.annotator_id;
  r.action = request.action;
  switch (request.action) {
    case ReviewAction::kRelabeled:
      if (!request.label_id) throw Error(ErrorCode::kInvalidArgument, "relabel needs label_id");
      taxonomy_.require_index(*request.label_id);
      r.label_id = request.label_id;
      break;
    case ReviewAction::kEdited: {
      if (!request.text) throw Error(ErrorCode::kInvalidArgument, "edit needs text");
      std::string text = normalize_text(*request.text);
      if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "edited text is empty");
      r.text = std::move(text);
      if (request.label_id) {
        taxonomy_.require_index(*request.label_id);
        r.label_id = request.label_id;
      }
      break;
    }
    case ReviewAction::kConfirmed:
    case ReviewAction::kRemoved:
      break;
  }

  std::lock_guard lock(mutex_);
  const LabeledQuery* current = pool_.find(item_id);
  if (!current) throw Error(ErrorCode::kNotFound, "unknown item", r.item_id);
  if (request.action == ReviewAction::kConfirmed && !current->label_id) {
    throw Error(ErrorCode::kInvalidArgument, "cannot confirm an unlabeled item", r.item_id);
  }
  r.revision = last_revision_ + 1;
  r.base_version = versions_[r.item_id];
  r.timestamp = utc_timestamp();

  // Validate against a copy so a failed write leaves memory untouched.
  LabeledQuery before = *current;
  auto history_before = history_[r.item_id];
  auto progress_before = progress_;
  auto last_before = last_revision_;
  auto version_before = versions_[r.item_id];
  apply_in_memory(r, request.base_version);
  log_ << to_json(r).dump() << '\n';
  log_.flush();
  if (!log_) {
    *pool_.find_mutable(item_id) = std::move(before);
    history_[r.item_id] = std::move(history_before);
    progress_ = std::move(progress_before);
    last_revision_ = last_before;
    versions_[r.item_id] = version_before;
    log_.clear();
    throw Error(ErrorCode::kStorage, "cannot append to revision log", log_path_.string());
  }
  return AnnotationItem{*pool_.find(item_id), versions_[r.item_id], history_[r.item_id]};
}

AnnotationItem AnnotationStore::get(std::string_view item_id) const {
  std::lock_guard lock(mutex_);
  const LabeledQuery* item = pool_.find(item_id);
  if (!item) throw Error(ErrorCode::kNotFound, "unknown item", std::string(item_id));
  std::string id(item_id);
  auto v = versions_.find(id);
  auto h = history_.find(id);
  return AnnotationItem{*item, v == versions_.end() ? 0 : v->second,
                        h == history_.end() ? std::vector<Revision>{} : h->second};
}

std::vector<AnnotationItem> AnnotationStore::list(const AnnotationFilter& filter,
                                                  std::size_t offset, std::size_t limit,
                                                  std::size_t* total) const {
  std::lock_guard lock(mutex_);
  std::vector<const LabeledQuery*> matched;
  for (const auto& item : pool_.items()) {
    if (item.removed() && !filter.include_removed) continue;
    if (filter.pending_only && (item.provenance == Provenance::kHumanReviewed || item.removed())) {
      continue;
    }
    if (filter.provenance && item.provenance != *filter.provenance) continue;
    if (filter.label_id && item.label_id != filter.label_id) continue;
    if (filter.source && item.source != *filter.source) continue;
    matched.push_back(&item);
  }
  std::sort(matched.begin(), matched.end(),
            [](const LabeledQuery* a, const LabeledQuery* b) { return a->id < b->id; });
  if (total) *total = matched.size();
  std::vector<AnnotationItem> out;
  for (std::size_t i = offset; i < matched.size() && out.size() < limit; ++i) {
    const auto& id = matched[i]->id;
    auto v = versions_.find(id);
    auto h = history_.find(id);
    out.push_back({*matched[i], v == versions_.end() ? 0 : v->second,
                   h == history_.end() ? std::vector<Revision>{} : h->second});
  }
  return out;
}

Pool AnnotationStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return pool_;
}

std::map<std::string, std::uint64_t> AnnotationStore::progress() const {
  std::lock_guard lock(mutex_);
  return progress_;
}

std::uint64_t AnnotationStore::last_revision() const {
  std::lock_guard lock(mutex_);
  return last_revision_;
}

Pool AnnotationStore::replay(const Pool& base, const std::filesystem::path& log_path) {
  Pool pool = base;
  JsonLines lines = read_log(log_path, base);
  for (const auto& record : lines.records) {
    Revision r = revision_from_json(record);
    LabeledQuery* item = pool.find_mutable(r.item_id);
    if (!item) throw Error(ErrorCode::kStorage, "revision for unknown item", r.item_id);
    mutate(*item, r);
  }
  return pool;
}

}  // namespace tacos
