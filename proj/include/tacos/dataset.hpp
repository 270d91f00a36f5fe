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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tacos/classifier.hpp"
#include "tacos/taxonomy.hpp"

namespace tacos {

enum class Provenance { kCollected, kLlmLabeled, kSynthetic, kHumanReviewed };
enum class ReviewAction { kConfirmed, kRelabeled, kEdited, kRemoved };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);
std::string_view to_string(ReviewAction a);
std::optional<ReviewAction> parse_review_action(std::string_view name);

// Provenance only moves forward: collected -> llm_labeled -> human_reviewed,
// synthetic -> human_reviewed. Staying put is allowed.
bool is_forward_transition(Provenance from, Provenance to);

struct Review {
  std::string annotator_id;
  ReviewAction action = ReviewAction::kConfirmed;
  std::string timestamp;

  bool operator==(const Review&) const = default;
};

struct LabeledQuery {
  std::string id;
  std::string text;
  std::optional<std::string> label_id;
  std::string source;
  Provenance provenance = Provenance::kCollected;
  std::optional<Review> review;
  std::string locale;
  // Set when LLM labeling exhausted its retry budget.
  bool label_failed = false;

  bool removed() const { return review && review->action == ReviewAction::kRemoved; }
  bool operator==(const LabeledQuery&) const = default;
};

// Content-derived id of a (normalized) query text.
std::string query_id(std::string_view text);

nlohmann::json to_json(const LabeledQuery& item);
LabeledQuery labeled_query_from_json(const nlohmann::json& record);

// Items keyed by id, kept in insertion order.
class Pool {
 public:
  // False (and no change) when an item with the same id exists.
  bool add(LabeledQuery item);
  bool contains(std::string_view id) const;
  const LabeledQuery* find(std::string_view id) const;
  LabeledQuery* find_mutable(std::string_view id);

  std::size_t size() const { return items_.size(); }
  std::span<const LabeledQuery> items() const { return items_; }
  std::span<LabeledQuery> items_mutable() { return items_; }

  // Labeled, non-removed items per label.
  std::map<std::string, std::size_t> label_counts() const;
  // Hash of the id-sorted serialized records.
  std::string digest() const;

  bool operator==(const Pool& other) const { return items_ == other.items_; }

 private:
  std::vector<LabeledQuery> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

Pool load_pool(const std::filesystem::path& path);
std::string serialize_pool(const Pool& pool);
void save_pool(const Pool& pool, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct IngestReport {
  std::size_t records = 0;
  std::size_t added = 0;
  std::size_t duplicates = 0;
  std::size_t malformed = 0;
};

// Reads corpus files (tacos-corpus/1), normalizes texts and deduplicates by
// normalized-text id. Malformed records are skipped and counted. Throws
// kEmptyPool when nothing valid was read.
Pool ingest(std::span<const std::filesystem::path> files, IngestReport* report = nullptr);
// Corpus text already in memory; `source` names it for provenance.
void ingest_text(Pool& pool, std::string_view corpus, std::string_view source,
                 IngestReport& report);

struct LabelOptions {
  std::filesystem::path checkpoint;  // empty: no checkpointing
  std::size_t checkpoint_every = 50;
  int workers = 1;
  bool retry_failed = false;
};

struct LabelReport {
  std::size_t labeled = 0;
  std::size_t flagged = 0;
  std::size_t skipped = 0;  // already labeled or removed
};

// Labels every unlabeled item with `classifier` over `taxonomy`. Items whose
// classification fails after the backend's retry budget are flagged. A
// transport failure persists the checkpoint and rethrows; rerunning resumes
// without relabeling finished items.
LabelReport llm_label(Pool& pool, Classifier& classifier, const Taxonomy& taxonomy,
                      const LabelOptions& options = {});

// ---------------------------------------------------------------------------

class QueryGenerator {
 public:
  virtual ~QueryGenerator() = default;
  virtual const std::string& id() const = 0;
  // One new query for `leaf`. nonce distinguishes repeated requests.
  virtual std::string generate(const Taxonomy& taxonomy, const ClassLabel& leaf,
                               std::span<const std::string> seeds, std::uint64_t nonce) = 0;
};

inline constexpr std::size_t kGenerationSeedExemplars = 3;

std::string build_generation_prompt(const Taxonomy& taxonomy, const ClassLabel& leaf,
                                    std::span<const std::string> seeds);

// Chat-completion generator; temperature comes from the constructor.
class ChatQueryGenerator final : public QueryGenerator {
 public:
  ChatQueryGenerator(BackendConfig config, std::unique_ptr<HttpTransport> transport,
                     double temperature = 1.0);
  const std::string& id() const override { return config_.backend_id; }
  std::string generate(const Taxonomy& taxonomy, const ClassLabel& leaf,
                       std::span<const std::string> seeds, std::uint64_t nonce) override;

 private:
  BackendConfig config_;
  Url url_;
  std::unique_ptr<HttpTransport> transport_;
  double temperature_;
};

struct AugmentOptions {
  // Consecutive empty/duplicate generations tolerated per class before the
  // class is reported short.
  std::size_t max_duplicate_retries = 10;
  std::filesystem::path checkpoint;
};

struct AugmentReport {
  std::size_t target = 0;
  std::map<std::string, std::size_t> added;
  std::map<std::string, std::size_t> shortfall;
};

// Tops every taxonomy class up to the largest class count with synthetic
// items. Requires >= 1 labeled exemplar per class.
AugmentReport augment_to_parity(Pool& pool, QueryGenerator& generator, const Taxonomy& taxonomy,
                                std::uint64_t seed, const AugmentOptions& options = {});

// ---------------------------------------------------------------------------

enum class PlanKind {
  kBalanced,
  kImbalanced,
  kImbalancedLarge,
  kPerClassFixed,
  kToxicTotal,
  kToxicSeparate,
};

std::string_view to_string(PlanKind kind);
std::optional<PlanKind> parse_plan_kind(std::string_view name);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SamplingPlan {
  PlanKind kind = PlanKind::kBalanced;
  // balanced: items per class; imbalanced(_large): total N (large doubles
  // it); per_class_fixed: items per class; toxic_*: items per class.
  std::size_t size = 0;
  // per_class_fixed only: overrides size with floor(total / K) per class,
  // remainder +1 to the first classes in canonical order.
  std::optional<std::size_t> total;
  std::vector<std::string> subset;  // empty: all leaves
  std::uint64_t seed = 0;
  SplitFractions fractions;
  std::optional<std::size_t> test_per_class;
  // toxic_* plans: maps pool labels onto the evaluation frame.
  std::optional<LabelMapping> collapse;
  std::string name;
};

nlohmann::json to_json(const SamplingPlan& plan);
SamplingPlan plan_from_json(const nlohmann::json& node);
// "kind:size", e.g. "balanced:500", "per_class_fixed:200".
SamplingPlan parse_plan_spec(std::string_view spec);

struct SplitEntry {
  std::string id;
  std::string label_id;  // label as exported (after any collapse)

  bool operator==(const SplitEntry&) const = default;
};

struct DatasetSplit {
  nlohmann::json plan;
  std::string pool_digest;
  std::vector<SplitEntry> train;
  std::vector<SplitEntry> validation;
  std::vector<SplitEntry> test;

  bool operator==(const DatasetSplit& other) const {
    return plan == other.plan && pool_digest == other.pool_digest && train == other.train &&
           validation == other.validation && test == other.test;
  }
};

// Per-class train counts the plan asks for (before holdout draws).
std::map<std::string, std::size_t> plan_train_counts(const Pool& pool, const Taxonomy& taxonomy,
                                                     const SamplingPlan& plan);

// Deterministic under (pool contents, plan). Throws kInsufficientPool.
DatasetSplit sample(const Pool& pool, const Taxonomy& taxonomy, const SamplingPlan& plan);

// Split manifest (tacos-split/1): plan, pool digest and [id, label] pairs.
nlohmann::json to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& node);

std::string export_part(std::span<const SplitEntry> entries, const Pool& pool,
                        const DatasetSplit& split, std::string_view part);
// Writes train.jsonl, validation.jsonl, test.jsonl into `directory`.
void export_split(const DatasetSplit& split, const Pool& pool,
                  const std::filesystem::path& directory);

}  // namespace tacos
