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

#include "tacos/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::string_view kCorpusSchema = "tacos-corpus/1";
constexpr std::string_view kPoolSchema = "tacos-pool/1";
constexpr std::string_view kDatasetSchema = "tacos-dataset/1";

constexpr std::pair<Provenance, std::string_view> kProvenanceNames[] = {
    {Provenance::kCollected, "collected"},
    {Provenance::kLlmLabeled, "llm_labeled"},
    {Provenance::kSynthetic, "synthetic"},
    {Provenance::kHumanReviewed, "human_reviewed"},
};

constexpr std::pair<ReviewAction, std::string_view> kActionNames[] = {
    {ReviewAction::kConfirmed, "confirmed"},
    {ReviewAction::kRelabeled, "relabeled"},
    {ReviewAction::kEdited, "edited"},
    {ReviewAction::kRemoved, "removed"},
};

constexpr std::pair<PlanKind, std::string_view> kPlanNames[] = {
    {PlanKind::kBalanced, "balanced"},
    {PlanKind::kImbalanced, "imbalanced"},
    {PlanKind::kImbalancedLarge, "imbalanced_large"},
    {PlanKind::kPerClassFixed, "per_class_fixed"},
    {PlanKind::kToxicTotal, "toxic_total"},
    {PlanKind::kToxicSeparate, "toxic_separate"},
};

template <typename E, std::size_t N>
std::string_view name_of(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::pair<E, std::string_view> (&table)[N], std::string_view name) {
  for (const auto& [v, n] : table) {
    if (n == name) return v;
  }
  return std::nullopt;
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace

std::string_view to_string(Provenance p) { return name_of(kProvenanceNames, p); }
std::optional<Provenance> parse_provenance(std::string_view name) {
  return value_of(kProvenanceNames, name);
}
std::string_view to_string(ReviewAction a) { return name_of(kActionNames, a); }
std::optional<ReviewAction> parse_review_action(std::string_view name) {
  return value_of(kActionNames, name);
}
std::string_view to_string(PlanKind kind) { return name_of(kPlanNames, kind); }
std::optional<PlanKind> parse_plan_kind(std::string_view name) {
  return value_of(kPlanNames, name);
}

bool is_forward_transition(Provenance from, Provenance to) {
  if (from == to) return true;
  switch (from) {
    case Provenance::kCollected:
      return to == Provenance::kLlmLabeled || to == Provenance::kHumanReviewed;
    case Provenance::kLlmLabeled:
    case Provenance::kSynthetic:
      return to == Provenance::kHumanReviewed;
    case Provenance::kHumanReviewed:
      return false;
  }
  return false;
}

std::string query_id(std::string_view text) {
  return "q" + sha256_hex(normalize_text(text)).substr(0, 24);
}

nlohmann::json to_json(const LabeledQuery& item) {
  nlohmann::json out{{"id", item.id},
                     {"text", item.text},
                     {"source", item.source},
                     {"provenance", to_string(item.provenance)}};
  if (item.label_id) out["label_id"] = *item.label_id;
  if (!item.locale.empty()) out["locale"] = item.locale;
  if (item.label_failed) out["label_failed"] = true;
  if (item.review) {
    out["review"] = {{"annotator_id", item.review->annotator_id},
                     {"action", to_string(item.review->action)},
                     {"timestamp", item.review->timestamp}};
  }
  return out;
}

LabeledQuery labeled_query_from_json(const nlohmann::json& record) {
  LabeledQuery item;
  item.id = record.at("id").get<std::string>();
  item.text = record.at("text").get<std::string>();
  item.source = record.value("source", "");
  auto provenance = parse_provenance(record.value("provenance", "collected"));
  if (!provenance) throw Error(ErrorCode::kParse, "unknown provenance", item.id);
  item.provenance = *provenance;
  if (record.contains("label_id") && record["label_id"].is_string()) {
    item.label_id = record["label_id"].get<std::string>();
  }
  item.locale = record.value("locale", "");
  item.label_failed = record.value("label_failed", false);
  if (record.contains("review")) {
    const auto& r = record["review"];
    auto action = parse_review_action(r.at("action").get<std::string>());
    if (!action) throw Error(ErrorCode::kParse, "unknown review action", item.id);
    item.review = Review{r.at("annotator_id").get<std::string>(), *action,
                         r.value("timestamp", "")};
  }
  return item;
}

bool Pool::add(LabeledQuery item) {
  if (index_.count(item.id)) return false;
  index_.emplace(item.id, items_.size());
  items_.push_back(std::move(item));
  return true;
}

bool Pool::contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

const LabeledQuery* Pool::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

LabeledQuery* Pool::find_mutable(std::string_view id) {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::map<std::string, std::size_t> Pool::label_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& item : items_) {
    if (item.label_id && !item.removed()) ++counts[*item.label_id];
  }
  return counts;
}

std::string Pool::digest() const {
  std::vector<const LabeledQuery*> sorted;
  sorted.reserve(items_.size());
  for (const auto& item : items_) sorted.push_back(&item);
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledQuery* a, const LabeledQuery* b) { return a->id < b->id; });
  std::string bytes;
  for (const auto* item : sorted) {
    bytes += to_json(*item).dump();
    bytes.push_back('\n');
  }
  return sha256_hex(bytes);
}

Pool load_pool(const std::filesystem::path& path) {
  JsonLines lines = read_json_lines(path, kPoolSchema);
  if (!lines.malformed_lines.empty()) {
    throw Error(ErrorCode::kParse, "malformed pool record",
                path.string() + ":" + std::to_string(lines.malformed_lines.front()));
  }
  Pool pool;
  for (const auto& record : lines.records) {
    try {
      pool.add(labeled_query_from_json(record));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, e.what(), path.string());
    }
  }
  return pool;
}

std::string serialize_pool(const Pool& pool) {
  std::vector<nlohmann::json> records;
  records.reserve(pool.size());
  for (const auto& item : pool.items()) records.push_back(to_json(item));
  return dump_json_lines({{"schema", kPoolSchema}}, records);
}

void save_pool(const Pool& pool, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_pool(pool));
}

// ---------------------------------------------------------------------------

void ingest_text(Pool& pool, std::string_view corpus, std::string_view source,
                 IngestReport& report) {
  JsonLines lines = parse_json_lines(corpus, kCorpusSchema, source);
  report.malformed += lines.malformed_lines.size();
  report.records += lines.malformed_lines.size();
  for (const auto& record : lines.records) {
    ++report.records;
    if (!record.contains("text") || !record["text"].is_string()) {
      ++report.malformed;
      continue;
    }
    std::string text;
    try {
      text = normalize_text(record["text"].get<std::string>());
    } catch (const Error&) {
      ++report.malformed;
      continue;
    }
    if (text.empty()) {
      ++report.malformed;
      continue;
    }
    LabeledQuery item;
    item.id = query_id(text);
    item.text = std::move(text);
    item.source = record.contains("source") && record["source"].is_string()
                      ? record["source"].get<std::string>()
                      : std::string(source);
    if (record.contains("label_id") && record["label_id"].is_string()) {
      item.label_id = record["label_id"].get<std::string>();
    }
    if (record.contains("locale") && record["locale"].is_string()) {
      item.locale = record["locale"].get<std::string>();
    }
    item.provenance = Provenance::kCollected;
    if (pool.add(std::move(item))) ++report.added;
    else ++report.duplicates;
  }
}

Pool ingest(std::span<const std::filesystem::path> files, IngestReport* report) {
  Pool pool;
  IngestReport local;
  for (const auto& file : files) {
    ingest_text(pool, read_file(file), file.stem().string(), local);
  }
  if (report) *report = local;
  if (pool.size() == 0) throw Error(ErrorCode::kEmptyPool, "no valid records ingested");
  return pool;
}

// ---------------------------------------------------------------------------

LabelReport llm_label(Pool& pool, Classifier& classifier, const Taxonomy& taxonomy,
                      const LabelOptions& options) {
  LabelReport report;
  std::vector<std::size_t> todo;
  auto items = pool.items_mutable();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    bool pending = !item.label_id && !item.removed() && (!item.label_failed || options.retry_failed);
    if (pending) todo.push_back(i);
    else ++report.skipped;
  }

  std::mutex writer;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::size_t since_checkpoint = 0;

  auto checkpoint = [&] {
    if (!options.checkpoint.empty()) save_pool(pool, options.checkpoint);
  };

  auto worker = [&] {
    while (!stop.load()) {
      std::size_t slot = next.fetch_add(1);
      if (slot >= todo.size()) return;
      LabeledQuery& item = items[todo[slot]];
      std::optional<std::string> label;
      bool flagged = false;
      try {
        label = classifier.classify(taxonomy, item.text).label_id;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kClassificationFailure || e.code() == ErrorCode::kParseFailure) {
          flagged = true;
        } else {
          std::lock_guard lock(writer);
          if (!failure) failure = std::current_exception();
          stop = true;
          return;
        }
      }
      std::lock_guard lock(writer);
      if (label) {
        item.label_id = std::move(label);
        item.label_failed = false;
        item.provenance = Provenance::kLlmLabeled;
        ++report.labeled;
      } else if (flagged) {
        item.label_failed = true;
        ++report.flagged;
      }
      if (++since_checkpoint >= options.checkpoint_every) {
        since_checkpoint = 0;
        checkpoint();
      }
    }
  };

  int workers = std::max(1, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  checkpoint();
  if (failure) std::rethrow_exception(failure);
  return report;
}

// ---------------------------------------------------------------------------

std::string build_generation_prompt(const Taxonomy& taxonomy, const ClassLabel& leaf,
                                    std::span<const std::string> seeds) {
  std::string out;
  out += "You write realistic user messages for a clinical chatbot.\n";
  out += "Category: " + leaf.display_name + "\n";
  out += "Definition: " + taxonomy.description(leaf) + "\n";
  out += "Examples of this category:\n";
  for (const auto& seed : seeds) out += "- " + normalize_text(seed) + "\n";
  out += "Write one new message of this category that differs from the examples.\n";
  out += "Output only the message text.\n";
  return out;
}

ChatQueryGenerator::ChatQueryGenerator(BackendConfig config, std::unique_ptr<HttpTransport> transport,
                                       double temperature)
    : config_(std::move(config)),
      url_(parse_url(config_.endpoint)),
      transport_(std::move(transport)),
      temperature_(temperature) {}

std::string ChatQueryGenerator::generate(const Taxonomy& taxonomy, const ClassLabel& leaf,
                                         std::span<const std::string> seeds, std::uint64_t) {
  return chat_completion(*transport_, config_, url_.path,
                         build_generation_prompt(taxonomy, leaf, seeds), temperature_);
}

AugmentReport augment_to_parity(Pool& pool, QueryGenerator& generator, const Taxonomy& taxonomy,
                                std::uint64_t seed, const AugmentOptions& options) {
  std::map<std::string, std::vector<std::string>> texts;
  for (const auto& item : pool.items()) {
    if (item.label_id && !item.removed() && taxonomy.contains(*item.label_id)) {
      texts[*item.label_id].push_back(item.text);
    }
  }
  AugmentReport report;
  for (const auto& leaf : taxonomy.leaves()) {
    auto it = texts.find(leaf.id);
    if (it == texts.end() || it->second.empty()) {
      throw Error(ErrorCode::kPrecondition, "class has no labeled exemplar to seed generation",
                  leaf.id);
    }
    report.target = std::max(report.target, it->second.size());
  }

  auto checkpoint = [&] {
    if (!options.checkpoint.empty()) save_pool(pool, options.checkpoint);
  };

  for (const auto& leaf : taxonomy.leaves()) {
    auto& existing = texts[leaf.id];
    std::sort(existing.begin(), existing.end());
    std::size_t have = existing.size();
    std::uint64_t nonce = 0;
    std::size_t failures = 0;
    Rng rng(mix_seed(seed, "augment/" + leaf.id));
    while (have < report.target) {
      std::vector<std::string> seeds = existing;
      rng.shuffle(seeds);
      seeds.resize(std::min(seeds.size(), kGenerationSeedExemplars));
      std::string generated;
      try {
        generated = normalize_text(generator.generate(taxonomy, leaf, seeds, nonce++));
      } catch (...) {
        checkpoint();
        throw;
      }
      LabeledQuery item;
      item.id = generated.empty() ? std::string() : query_id(generated);
      if (generated.empty() || pool.contains(item.id)) {
        if (++failures > options.max_duplicate_retries) {
          report.shortfall[leaf.id] = report.target - have;
          break;
        }
        continue;
      }
      failures = 0;
      item.text = generated;
      item.label_id = leaf.id;
      item.source = "synthetic:" + generator.id();
      item.provenance = Provenance::kSynthetic;
      pool.add(std::move(item));
      existing.push_back(generated);
      ++report.added[leaf.id];
      ++have;
    }
  }
  checkpoint();
  return report;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const SamplingPlan& plan) {
  nlohmann::json out{{"kind", to_string(plan.kind)},
                     {"size", plan.size},
                     {"seed", plan.seed},
                     {"fractions",
                      {{"train", plan.fractions.train},
                       {"validation", plan.fractions.validation},
                       {"test", plan.fractions.test}}}};
  if (plan.total) out["total"] = *plan.total;
  if (!plan.subset.empty()) out["subset"] = plan.subset;
  if (plan.test_per_class) out["test_per_class"] = *plan.test_per_class;
  if (plan.collapse) {
    out["collapse"] = plan.collapse->name();
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [s, t] : plan.collapse->entries()) entries.push_back({s, t});
    out["collapse_entries"] = std::move(entries);
  }
  if (!plan.name.empty()) out["name"] = plan.name;
  return out;
}

SamplingPlan plan_from_json(const nlohmann::json& node) {
  SamplingPlan plan;
  try {
    auto kind = parse_plan_kind(node.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kConfig, "unknown plan kind", node["kind"].dump());
    plan.kind = *kind;
    plan.size = node.value("size", std::size_t{0});
    if (node.contains("total")) plan.total = node["total"].get<std::size_t>();
    plan.seed = node.value("seed", std::uint64_t{0});
    if (node.contains("fractions")) {
      const auto& f = node["fractions"];
      plan.fractions.train = f.value("train", 0.8);
      plan.fractions.validation = f.value("validation", 0.1);
      plan.fractions.test = f.value("test", 0.1);
    }
    if (node.contains("subset")) plan.subset = node["subset"].get<std::vector<std::string>>();
    if (node.contains("test_per_class")) {
      plan.test_per_class = node["test_per_class"].get<std::size_t>();
    }
    if (node.contains("collapse_entries")) {
      std::vector<std::pair<std::string, std::string>> entries;
      for (const auto& e : node["collapse_entries"]) {
        entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      }
      plan.collapse = LabelMapping(node.value("collapse", "collapse"), std::move(entries));
    }
    plan.name = node.value("name", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what(), "sampling plan");
  }
  return plan;
}

SamplingPlan parse_plan_spec(std::string_view spec) {
  SamplingPlan plan;
  auto colon = spec.find(':');
  std::string_view kind = spec.substr(0, colon);
  auto parsed = parse_plan_kind(kind);
  if (!parsed) throw Error(ErrorCode::kInvalidArgument, "unknown plan kind", std::string(kind));
  plan.kind = *parsed;
  if (colon != std::string_view::npos) {
    std::string size(spec.substr(colon + 1));
    try {
      std::size_t used = 0;
      plan.size = std::stoull(size, &used);
      if (used != size.size()) throw std::invalid_argument(size);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "plan size must be an integer", std::string(spec));
    }
  }
  return plan;
}

namespace {

bool is_toxic_plan(PlanKind kind) {
  return kind == PlanKind::kToxicTotal || kind == PlanKind::kToxicSeparate;
}

// Labels the plan draws from, in canonical order.
std::vector<std::string> plan_universe(const Taxonomy& taxonomy, const SamplingPlan& plan) {
  if (plan.subset.empty() || is_toxic_plan(plan.kind)) return taxonomy.ids();
  std::set<std::string> wanted(plan.subset.begin(), plan.subset.end());
  for (const auto& id : wanted) taxonomy.require_index(id);
  std::vector<std::string> out;
  for (const auto& leaf : taxonomy.leaves()) {
    if (wanted.count(leaf.id)) out.push_back(leaf.id);
  }
  return out;
}

// Sorted ids of eligible items per label.
std::map<std::string, std::vector<std::string>> eligible_by_label(const Pool& pool) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& item : pool.items()) {
    if (item.label_id && !item.removed()) out[*item.label_id].push_back(item.id);
  }
  for (auto& [label, ids] : out) std::sort(ids.begin(), ids.end());
  return out;
}

std::size_t holdout_count(std::size_t train, double fraction, const SplitFractions& f) {
  if (f.train <= 0.0) throw Error(ErrorCode::kConfig, "train fraction must be positive");
  return round_half_up(static_cast<double>(train) * fraction / f.train);
}

}  // namespace

std::map<std::string, std::size_t> plan_train_counts(const Pool& pool, const Taxonomy& taxonomy,
                                                     const SamplingPlan& plan) {
  std::vector<std::string> universe = plan_universe(taxonomy, plan);
  std::map<std::string, std::size_t> counts;
  switch (plan.kind) {
    case PlanKind::kBalanced:
      for (const auto& id : universe) counts[id] = plan.size;
      break;
    case PlanKind::kPerClassFixed: {
      std::size_t base = plan.total ? *plan.total / universe.size() : plan.size;
      std::size_t remainder = plan.total ? *plan.total % universe.size() : 0;
      for (std::size_t i = 0; i < universe.size(); ++i) {
        counts[universe[i]] = base + (i < remainder ? 1 : 0);
      }
      break;
    }
    case PlanKind::kImbalanced:
    case PlanKind::kImbalancedLarge: {
      std::size_t target = plan.kind == PlanKind::kImbalancedLarge ? 2 * plan.size : plan.size;
      auto pool_counts = pool.label_counts();
      std::size_t population = 0;
      for (const auto& id : universe) population += pool_counts[id];
      if (population == 0 || target > population) {
        throw Error(ErrorCode::kInsufficientPool,
                    "imbalanced plan asks for " + std::to_string(target) + " of " +
                        std::to_string(population) + " items");
      }
      // Largest-remainder apportionment: every count is within 1 of its
      // exact proportional quota.
      std::vector<std::pair<double, std::size_t>> remainders;
      std::size_t assigned = 0;
      for (std::size_t i = 0; i < universe.size(); ++i) {
        // Exact integer arithmetic for floor and remainder.
        unsigned __int128 numerator =
            static_cast<unsigned __int128>(target) * pool_counts[universe[i]];
        std::size_t floor_quota = static_cast<std::size_t>(numerator / population);
        std::size_t rem = static_cast<std::size_t>(numerator % population);
        counts[universe[i]] = floor_quota;
        assigned += floor_quota;
        remainders.emplace_back(static_cast<double>(rem), i);
      }
      std::stable_sort(remainders.begin(), remainders.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k = 0; assigned < target; ++k, ++assigned) {
        ++counts[universe[remainders[k].second]];
      }
      break;
    }
    case PlanKind::kToxicTotal:
    case PlanKind::kToxicSeparate: {
      if (!plan.collapse) {
        throw Error(ErrorCode::kConfig, "toxic plans need a collapse mapping");
      }
      for (const auto& id : universe) {
        const std::string& key =
            plan.kind == PlanKind::kToxicTotal ? plan.collapse->map(id) : id;
        counts[key] = plan.size;
      }
      break;
    }
  }
  return counts;
}

DatasetSplit sample(const Pool& pool, const Taxonomy& taxonomy, const SamplingPlan& plan) {
  const bool toxic = is_toxic_plan(plan.kind);
  if (toxic) {
    if (!plan.collapse) throw Error(ErrorCode::kConfig, "toxic plans need a collapse mapping");
    for (const auto& id : taxonomy.ids()) plan.collapse->map(id);
  }
  std::vector<std::string> universe = plan_universe(taxonomy, plan);
  std::map<std::string, std::size_t> train_counts = plan_train_counts(pool, taxonomy, plan);
  auto by_label = eligible_by_label(pool);

  auto eval_key = [&](const std::string& label) -> std::string {
    return toxic ? plan.collapse->map(label) : label;
  };
  auto train_key = [&](const std::string& label) -> std::string {
    return plan.kind == PlanKind::kToxicTotal ? plan.collapse->map(label) : label;
  };

  // Evaluation strata (toxic subtypes merged for toxic plans), canonical order.
  std::vector<std::string> eval_strata;
  std::map<std::string, std::vector<std::string>> eval_items;
  std::map<std::string, std::size_t> eval_train_total;
  for (const auto& label : universe) {
    std::string key = eval_key(label);
    if (!eval_items.count(key)) eval_strata.push_back(key);
    auto& ids = eval_items[key];
    auto found = by_label.find(label);
    if (found != by_label.end()) ids.insert(ids.end(), found->second.begin(), found->second.end());
  }
  for (const auto& [key, count] : train_counts) {
    // Train strata nest inside evaluation strata.
    std::string eval = toxic && plan.kind == PlanKind::kToxicSeparate ? eval_key(key) : key;
    eval_train_total[eval] += count;
  }

  DatasetSplit split;
  split.plan = to_json(plan);
  split.pool_digest = pool.digest();

  // Test draws come first from a stream keyed only by (seed, stratum), so
  // plans that agree on test counts share one test set.
  std::set<std::string> held_out;
  for (const auto& stratum : eval_strata) {
    auto& ids = eval_items[stratum];
    std::sort(ids.begin(), ids.end());
    std::size_t want = plan.test_per_class
                           ? *plan.test_per_class
                           : holdout_count(eval_train_total[stratum], plan.fractions.test,
                                           plan.fractions);
    if (ids.size() < want) {
      throw Error(ErrorCode::kInsufficientPool,
                  "test stratum needs " + std::to_string(want) + ", pool has " +
                      std::to_string(ids.size()),
                  stratum);
    }
    Rng rng(mix_seed(plan.seed, "test/" + stratum));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < want; ++i) {
      held_out.insert(ids[i]);
      split.test.push_back({ids[i], stratum});
    }
  }

  // Train strata, canonical order of their first source label.
  std::vector<std::string> train_strata;
  std::map<std::string, std::vector<std::string>> train_items;
  for (const auto& label : universe) {
    std::string key = train_key(label);
    if (!train_items.count(key)) train_strata.push_back(key);
    auto& ids = train_items[key];
    auto found = by_label.find(label);
    if (found == by_label.end()) continue;
    for (const auto& id : found->second) {
      if (!held_out.count(id)) ids.push_back(id);
    }
  }
  for (const auto& stratum : train_strata) {
    auto& ids = train_items[stratum];
    std::sort(ids.begin(), ids.end());
    std::size_t train = train_counts[stratum];
    std::size_t validation = holdout_count(train, plan.fractions.validation, plan.fractions);
    if (ids.size() < train + validation) {
      throw Error(ErrorCode::kInsufficientPool,
                  "stratum needs " + std::to_string(train + validation) +
                      " train/validation items after test holdout, pool has " +
                      std::to_string(ids.size()),
                  stratum);
    }
    Rng rng(mix_seed(plan.seed, "train/" + stratum));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < validation; ++i) split.validation.push_back({ids[i], stratum});
    for (std::size_t i = validation; i < validation + train; ++i) {
      split.train.push_back({ids[i], stratum});
    }
  }

  auto by_id = [](const SplitEntry& a, const SplitEntry& b) { return a.id < b.id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.validation.begin(), split.validation.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

nlohmann::json to_json(const DatasetSplit& split) {
  auto entries = [](const std::vector<SplitEntry>& part) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : part) out.push_back({e.id, e.label_id});
    return out;
  };
  return {{"schema", "tacos-split/1"},      {"plan", split.plan},
          {"pool_digest", split.pool_digest}, {"train", entries(split.train)},
          {"validation", entries(split.validation)}, {"test", entries(split.test)}};
}

DatasetSplit split_from_json(const nlohmann::json& node) {
  DatasetSplit split;
  try {
    if (node.value("schema", "") != "tacos-split/1") {
      throw Error(ErrorCode::kParse, "not a tacos-split/1 document");
    }
    split.plan = node.at("plan");
    split.pool_digest = node.at("pool_digest").get<std::string>();
    auto read = [&](const char* key, std::vector<SplitEntry>& part) {
      for (const auto& e : node.at(key)) {
        part.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
      }
    };
    read("train", split.train);
    read("validation", split.validation);
    read("test", split.test);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, e.what(), "split manifest");
  }
  return split;
}

std::string export_part(std::span<const SplitEntry> entries, const Pool& pool,
                        const DatasetSplit& split, std::string_view part) {
  std::vector<SplitEntry> sorted(entries.begin(), entries.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SplitEntry& a, const SplitEntry& b) { return a.id < b.id; });
  std::vector<nlohmann::json> records;
  records.reserve(sorted.size());
  for (const auto& entry : sorted) {
    const LabeledQuery* item = pool.find(entry.id);
    if (!item || item->removed()) {
      throw Error(ErrorCode::kDanglingId,
                  item ? "split references a removed item" : "split id not in pool", entry.id);
    }
    records.push_back({{"id", item->id},
                       {"text", item->text},
                       {"label_id", entry.label_id},
                       {"provenance", to_string(item->provenance)}});
  }
  nlohmann::json header{{"schema", kDatasetSchema},
                        {"part", std::string(part)},
                        {"plan", split.plan},
                        {"pool_digest", split.pool_digest},
                        {"count", records.size()}};
  return dump_json_lines(header, records);
}

void export_split(const DatasetSplit& split, const Pool& pool,
                  const std::filesystem::path& directory) {
  // Render all parts before writing anything so a dangling id leaves no
  // partial export behind.
  std::string train = export_part(split.train, pool, split, "train");
  std::string validation = export_part(split.validation, pool, split, "validation");
  std::string test = export_part(split.test, pool, split, "test");
  write_file_atomic(directory / "train.jsonl", train);
  write_file_atomic(directory / "validation.jsonl", validation);
  write_file_atomic(directory / "test.jsonl", test);
}

}  // namespace tacos
