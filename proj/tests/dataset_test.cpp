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

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <set>

#include "tacos/dataset.hpp"
#include "tacos/error.hpp"
#include "test_support.hpp"

namespace tacos {
namespace {

using testing::canonical_taxonomy;
using testing::data_dir;
using testing::separate_taxonomy;
using testing::synthetic_pool;
using testing::TempDir;
using testing::uniform_counts;

std::string corpus(std::initializer_list<std::string> lines) {
  std::string out = "{\"schema\":\"tacos-corpus/1\"}\n";
  for (const auto& line : lines) out += line + "\n";
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kParse;
}

LabelMapping toxic_mapping() {
  return load_label_mapping_file(data_dir() / "toxic_separate_to_total.tsv");
}

std::map<std::string, std::size_t> count_labels(const std::vector<SplitEntry>& part) {
  std::map<std::string, std::size_t> out;
  for (const auto& e : part) out[e.label_id]++;
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion

TEST(Ingest, DeduplicatesNormalizedTextAndCountsMalformed) {
  Pool pool;
  IngestReport report;
  // "Café" precomposed vs decomposed, plus whitespace variants.
  ingest_text(pool,
              corpus({R"({"text":"Café hours?"})", R"({"text":"Café   hours?"})",
                      R"({"text":"  Café hours? "})", R"({"text":"Parking?","label_id":"general_inquiry"})",
                      "not json at all", R"({"nope":1})", R"({"text":"   "})", R"({"text":42})"}),
              "clinic", report);
  EXPECT_EQ(report.records, 8u);
  EXPECT_EQ(report.added, 2u);
  EXPECT_EQ(report.duplicates, 2u);
  EXPECT_EQ(report.malformed, 4u);
  ASSERT_EQ(pool.size(), 2u);
  const LabeledQuery& first = pool.items()[0];
  EXPECT_EQ(first.text, "Café hours?");
  EXPECT_EQ(first.id, query_id("Café hours?"));
  EXPECT_EQ(first.source, "clinic");
  EXPECT_EQ(first.provenance, Provenance::kCollected);
  EXPECT_FALSE(first.label_id);
  EXPECT_EQ(pool.items()[1].label_id, "general_inquiry");
}

TEST(Ingest, FilesAndEmptyPool) {
  TempDir dir;
  write_file_atomic(dir / "a.jsonl", corpus({R"({"text":"one"})", R"({"text":"two"})"}));
  write_file_atomic(dir / "b.jsonl", corpus({R"({"text":"two"})", R"({"text":"three"})"}));
  write_file_atomic(dir / "empty.jsonl", corpus({"garbage"}));
  std::vector<std::filesystem::path> files{dir / "a.jsonl", dir / "b.jsonl"};
  IngestReport report;
  Pool pool = ingest(files, &report);
  EXPECT_EQ(pool.size(), 3u);
  EXPECT_EQ(report.duplicates, 1u);
  EXPECT_EQ(pool.find(query_id("three"))->source, "b");

  std::vector<std::filesystem::path> empty{dir / "empty.jsonl"};
  EXPECT_EQ(code_of([&] { ingest(empty); }), ErrorCode::kEmptyPool);
}

TEST(Ingest, WrongSchemaRejected) {
  Pool pool;
  IngestReport report;
  EXPECT_THROW(ingest_text(pool, "{\"schema\":\"other/1\"}\n{\"text\":\"x\"}\n", "s", report),
               Error);
}

TEST(Pool, SaveLoadRoundTripAndOrderFreeDigest) {
  TempDir dir;
  Pool pool = synthetic_pool({{"empathy", 3}, {"gibberish", 2}});
  LabeledQuery reviewed;
  reviewed.text = "reviewed";
  reviewed.id = query_id(reviewed.text);
  reviewed.label_id = "self_harm";
  reviewed.provenance = Provenance::kHumanReviewed;
  reviewed.review = Review{"ann-1", ReviewAction::kRelabeled, "2026-01-01T00:00:00Z"};
  reviewed.locale = "ko";
  pool.add(reviewed);
  save_pool(pool, dir / "pool.jsonl");
  Pool loaded = load_pool(dir / "pool.jsonl");
  EXPECT_EQ(loaded, pool);
  EXPECT_EQ(loaded.digest(), pool.digest());

  Pool reversed;
  for (auto it = pool.items().rbegin(); it != pool.items().rend(); ++it) reversed.add(*it);
  EXPECT_EQ(reversed.digest(), pool.digest());
  EXPECT_FALSE(reversed.add(reviewed));
}

TEST(Pool, LabelCountsSkipRemovedAndUnlabeled) {
  Pool pool = synthetic_pool({{"empathy", 3}});
  pool.items_mutable()[0].review = Review{"a", ReviewAction::kRemoved, ""};
  LabeledQuery unlabeled;
  unlabeled.text = "u";
  unlabeled.id = query_id("u");
  pool.add(unlabeled);
  EXPECT_EQ(pool.label_counts(), (std::map<std::string, std::size_t>{{"empathy", 2}}));
}

TEST(Provenance, OnlyMovesForward) {
  using P = Provenance;
  EXPECT_TRUE(is_forward_transition(P::kCollected, P::kLlmLabeled));
  EXPECT_TRUE(is_forward_transition(P::kCollected, P::kHumanReviewed));
  EXPECT_TRUE(is_forward_transition(P::kLlmLabeled, P::kHumanReviewed));
  EXPECT_TRUE(is_forward_transition(P::kSynthetic, P::kHumanReviewed));
  EXPECT_TRUE(is_forward_transition(P::kHumanReviewed, P::kHumanReviewed));
  EXPECT_FALSE(is_forward_transition(P::kHumanReviewed, P::kLlmLabeled));
  EXPECT_FALSE(is_forward_transition(P::kLlmLabeled, P::kCollected));
  EXPECT_FALSE(is_forward_transition(P::kCollected, P::kSynthetic));
}

// ---------------------------------------------------------------------------
// LLM labeling

// Labels by text length; can be told to fail on particular texts or to
// break the transport after a number of calls.
class FakeLabeler : public Classifier {
 public:
  const std::string& id() const override { return id_; }
  bool probabilistic() const override { return false; }

  std::atomic<int> calls{0};
  int transport_dies_after = -1;
  std::set<std::string> unparseable;

 protected:
  Prediction do_classify(const Taxonomy& taxonomy, std::string_view text) override {
    int n = ++calls;
    if (transport_dies_after >= 0 && n > transport_dies_after) {
      throw Error(ErrorCode::kTransport, "connection refused");
    }
    if (unparseable.count(std::string(text))) {
      throw Error(ErrorCode::kClassificationFailure, "garbage reply");
    }
    return one_hot_prediction(taxonomy, taxonomy.leaf(text.size() % taxonomy.size()).id, id_);
  }

 private:
  std::string id_ = "fake";
};

Pool unlabeled_pool(std::size_t n) {
  Pool pool;
  IngestReport report;
  std::string text = "{\"schema\":\"tacos-corpus/1\"}\n";
  for (std::size_t i = 0; i < n; ++i) {
    text += nlohmann::json{{"text", "query number " + std::to_string(i) + std::string(i % 7, '!')}}
                .dump() +
            "\n";
  }
  ingest_text(pool, text, "c", report);
  return pool;
}

TEST(LlmLabel, LabelsEverythingAndFlagsFailures) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = unlabeled_pool(40);
  FakeLabeler labeler;
  labeler.unparseable = {pool.items()[3].text, pool.items()[9].text};
  LabelReport report = llm_label(pool, labeler, t);
  EXPECT_EQ(report.labeled, 38u);
  EXPECT_EQ(report.flagged, 2u);
  EXPECT_TRUE(pool.items()[3].label_failed);
  EXPECT_FALSE(pool.items()[3].label_id);
  EXPECT_EQ(pool.items()[0].provenance, Provenance::kLlmLabeled);

  // Flagged items stay put unless asked; then they can recover.
  labeler.unparseable.clear();
  EXPECT_EQ(llm_label(pool, labeler, t).labeled, 0u);
  LabelReport retry = llm_label(pool, labeler, t, {.retry_failed = true});
  EXPECT_EQ(retry.labeled, 2u);
  EXPECT_FALSE(pool.items()[3].label_failed);
}

TEST(LlmLabel, ResumesFromCheckpointWithoutRelabeling) {
  const Taxonomy& t = canonical_taxonomy();
  TempDir dir;
  Pool pool = unlabeled_pool(30);
  FakeLabeler broken;
  broken.transport_dies_after = 12;
  LabelOptions options{.checkpoint = dir / "ckpt.jsonl", .checkpoint_every = 5};
  EXPECT_EQ(code_of([&] { llm_label(pool, broken, t, options); }), ErrorCode::kTransport);

  Pool resumed = load_pool(dir / "ckpt.jsonl");
  std::size_t done = 0;
  for (const auto& item : resumed.items()) done += item.label_id ? 1 : 0;
  EXPECT_EQ(done, 12u);

  FakeLabeler healthy;
  LabelReport report = llm_label(resumed, healthy, t, options);
  EXPECT_EQ(healthy.calls.load(), 18);
  EXPECT_EQ(report.labeled, 18u);
  EXPECT_EQ(report.skipped, 12u);

  Pool reference = unlabeled_pool(30);
  FakeLabeler clean;
  llm_label(reference, clean, t);
  EXPECT_EQ(resumed.digest(), reference.digest());
}

TEST(LlmLabel, WorkersDoNotChangeResult) {
  const Taxonomy& t = canonical_taxonomy();
  Pool a = unlabeled_pool(100);
  Pool b = unlabeled_pool(100);
  FakeLabeler la, lb;
  llm_label(a, la, t, {.workers = 1});
  llm_label(b, lb, t, {.workers = 4});
  EXPECT_EQ(a, b);
}

// ---------------------------------------------------------------------------
// Augmentation

class StubGenerator : public QueryGenerator {
 public:
  const std::string& id() const override { return id_; }
  std::string generate(const Taxonomy&, const ClassLabel& leaf, std::span<const std::string> seeds,
                       std::uint64_t nonce) override {
    ++calls;
    EXPECT_LE(seeds.size(), kGenerationSeedExemplars);
    EXPECT_FALSE(seeds.empty());
    if (stuck) return "always the same";
    return "generated " + leaf.id + " variant " + std::to_string(nonce) + " from " + seeds[0];
  }
  int calls = 0;
  bool stuck = false;

 private:
  std::string id_ = "stubgen";
};

TEST(Augment, ReachesParityWithPreAugmentationMaximum) {
  const Taxonomy& t = canonical_taxonomy();
  std::map<std::string, std::size_t> skew;
  for (std::size_t i = 0; i < t.size(); ++i) skew[t.leaf(i).id] = 1 + (i * 7) % 23;
  Pool pool = synthetic_pool(skew, 5);
  std::size_t max_before = 0;
  for (const auto& [label, n] : pool.label_counts()) max_before = std::max(max_before, n);

  StubGenerator gen;
  AugmentReport report = augment_to_parity(pool, gen, t, 99);
  EXPECT_EQ(report.target, max_before);
  EXPECT_TRUE(report.shortfall.empty());
  auto after = pool.label_counts();
  for (const auto& id : t.ids()) EXPECT_EQ(after[id], max_before) << id;
  for (const auto& item : pool.items()) {
    if (item.provenance == Provenance::kSynthetic) EXPECT_EQ(item.source, "synthetic:stubgen");
  }

  Pool again = synthetic_pool(skew, 5);
  StubGenerator gen2;
  augment_to_parity(again, gen2, t, 99);
  EXPECT_EQ(again, pool);
}

TEST(Augment, DuplicateGenerationsReportShortfall) {
  const Taxonomy& t = canonical_taxonomy();
  auto counts = uniform_counts(t, 2);
  counts["empathy"] = 5;
  Pool pool = synthetic_pool(counts);
  StubGenerator gen;
  gen.stuck = true;
  AugmentReport report = augment_to_parity(pool, gen, t, 1, {.max_duplicate_retries = 3});
  // The first stuck text is new once; every class after that is short.
  std::size_t added = 0;
  for (const auto& [label, n] : report.added) added += n;
  EXPECT_EQ(added, 1u);
  EXPECT_EQ(report.shortfall.size(), 20u);
}

TEST(Augment, NeedsOneExemplarPerClass) {
  Pool pool = synthetic_pool({{"empathy", 3}});
  StubGenerator gen;
  EXPECT_EQ(code_of([&] { augment_to_parity(pool, gen, canonical_taxonomy(), 1); }),
            ErrorCode::kPrecondition);
}

TEST(Augment, ChatGeneratorSendsSeedsAndReturnsContent) {
  const Taxonomy& t = canonical_taxonomy();
  auto transport = std::make_unique<testing::ScriptedTransport>(
      std::vector<HttpResponse>{{200, testing::chat_reply("  Is the pharmacy open late?  ")}});
  auto* raw = transport.get();
  BackendConfig c;
  c.backend_id = "gen";
  c.kind = BackendKind::kPrompt;
  c.endpoint = "http://x/v1/chat";
  ChatQueryGenerator gen(c, std::move(transport), 0.9);
  std::vector<std::string> seeds{"What time do you open?"};
  std::string out = gen.generate(t, t.at("general_inquiry"), seeds, 0);
  EXPECT_EQ(normalize_text(out), "Is the pharmacy open late?");
  auto request = nlohmann::json::parse(raw->bodies.at(0));
  EXPECT_DOUBLE_EQ(request["temperature"].get<double>(), 0.9);
  std::string prompt = request["messages"][0]["content"];
  EXPECT_NE(prompt.find("What time do you open?"), std::string::npos);
  EXPECT_EQ(prompt, build_generation_prompt(t, t.at("general_inquiry"), seeds));
}

// ---------------------------------------------------------------------------
// Sampling

TEST(Sampling, BalancedTimesTwentyOne) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 700));
  SamplingPlan plan = parse_plan_spec("balanced:500");
  plan.seed = 3;
  DatasetSplit split = sample(pool, t, plan);
  EXPECT_EQ(split.train.size(), 10'500u);
  for (const auto& [label, n] : count_labels(split.train)) EXPECT_EQ(n, 500u) << label;
  // 500 / 0.8 * 0.1 = 62.5, rounded half up.
  EXPECT_EQ(split.validation.size(), 21u * 63);
  EXPECT_EQ(split.test.size(), 21u * 63);

  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& e : *part) {
      EXPECT_TRUE(seen.insert(e.id).second) << "item in two parts: " << e.id;
      EXPECT_EQ(*pool.find(e.id)->label_id, e.label_id);
    }
  }
}

TEST(Sampling, PerClassFixedOnInformationSeekingSubset) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 260));
  SamplingPlan plan = parse_plan_spec("per_class_fixed:200");
  auto is = information_seeking_ids(t);
  plan.subset.assign(is.begin(), is.end());
  DatasetSplit split = sample(pool, t, plan);
  EXPECT_EQ(split.train.size(), 1'600u);
  auto counts = count_labels(split.train);
  EXPECT_EQ(counts.size(), 8u);
  for (const auto& [label, n] : counts) {
    EXPECT_TRUE(is.count(label));
    EXPECT_EQ(n, 200u);
  }
}

TEST(Sampling, PerClassFixedTotalSpreadsRemainder) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 120));
  SamplingPlan plan = parse_plan_spec("per_class_fixed");
  plan.total = 1600;
  auto counts = plan_train_counts(pool, t, plan);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(counts[t.leaf(i).id], 1600 / 21 + (i < 1600 % 21 ? 1u : 0u));
    sum += counts[t.leaf(i).id];
  }
  EXPECT_EQ(sum, 1600u);
}

TEST(Sampling, ToxicSeparateAndTotalShareTheirTestSet) {
  const Taxonomy& sep = separate_taxonomy();
  ASSERT_EQ(sep.size(), 29u);
  Pool pool = synthetic_pool(uniform_counts(sep, 300));

  SamplingPlan separate = parse_plan_spec("toxic_separate:100");
  separate.collapse = toxic_mapping();
  separate.test_per_class = 100;
  separate.seed = 17;
  SamplingPlan total = separate;
  total.kind = PlanKind::kToxicTotal;

  DatasetSplit s = sample(pool, sep, separate);
  DatasetSplit c = sample(pool, sep, total);
  EXPECT_EQ(s.train.size(), 2'900u);
  EXPECT_EQ(count_labels(s.train).size(), 29u);
  EXPECT_EQ(c.train.size(), 2'100u);
  EXPECT_EQ(count_labels(c.train).size(), 21u);
  EXPECT_EQ(count_labels(c.train)["crime_or_toxic"], 100u);

  EXPECT_EQ(s.test.size(), 2'100u);
  EXPECT_EQ(s.test, c.test);
  for (const auto& [label, n] : count_labels(s.test)) {
    EXPECT_TRUE(canonical_taxonomy().contains(label)) << label;
    EXPECT_EQ(n, 100u);
  }
}

TEST(Sampling, ImbalancedWithinOneOfProportionalQuota) {
  const Taxonomy& t = canonical_taxonomy();
  std::map<std::string, std::size_t> skew;
  for (std::size_t i = 0; i < t.size(); ++i) skew[t.leaf(i).id] = 40 + (i * 37) % 211;
  Pool pool = synthetic_pool(skew, 8);
  std::size_t population = 0;
  for (const auto& [label, n] : skew) population += n;

  for (const auto& spec : {"imbalanced:1000", "imbalanced_large:1000", "imbalanced:777"}) {
    SamplingPlan plan = parse_plan_spec(spec);
    std::size_t target = plan.kind == PlanKind::kImbalancedLarge ? 2 * plan.size : plan.size;
    auto counts = plan_train_counts(pool, t, plan);
    std::size_t sum = 0;
    for (const auto& [label, n] : skew) {
      double quota = static_cast<double>(target) * static_cast<double>(n) /
                     static_cast<double>(population);
      EXPECT_LE(std::fabs(static_cast<double>(counts[label]) - quota), 1.0) << spec << label;
      sum += counts[label];
    }
    EXPECT_EQ(sum, target) << spec;
  }
}

TEST(Sampling, ByteDeterministicUnderSeed) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 80));
  SamplingPlan plan = parse_plan_spec("balanced:40");
  plan.seed = 1234;
  DatasetSplit a = sample(pool, t, plan);
  DatasetSplit b = sample(pool, t, plan);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());

  // Insertion order of the pool must not matter either.
  Pool reversed;
  for (auto it = pool.items().rbegin(); it != pool.items().rend(); ++it) reversed.add(*it);
  EXPECT_EQ(to_json(sample(reversed, t, plan)).dump(), to_json(a).dump());

  plan.seed = 1235;
  EXPECT_NE(to_json(sample(pool, t, plan)).dump(), to_json(a).dump());
}

TEST(Sampling, InsufficientPool) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 50));
  EXPECT_EQ(code_of([&] { sample(pool, t, parse_plan_spec("balanced:500")); }),
            ErrorCode::kInsufficientPool);
  EXPECT_EQ(code_of([&] { plan_train_counts(pool, t, parse_plan_spec("imbalanced:5000")); }),
            ErrorCode::kInsufficientPool);
}

TEST(Sampling, RemovedItemsNeverSampled) {
  const Taxonomy& t = canonical_taxonomy();
  Pool pool = synthetic_pool(uniform_counts(t, 12));
  std::set<std::string> removed;
  for (std::size_t i = 0; i < pool.size(); i += 3) {
    pool.items_mutable()[i].review = Review{"a", ReviewAction::kRemoved, ""};
    removed.insert(pool.items()[i].id);
  }
  DatasetSplit split = sample(pool, t, parse_plan_spec("balanced:6"));
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& e : *part) EXPECT_FALSE(removed.count(e.id));
  }
}

TEST(PlanSpec, ParsesAndRoundTrips) {
  SamplingPlan p = parse_plan_spec("imbalanced_large:600");
  EXPECT_EQ(p.kind, PlanKind::kImbalancedLarge);
  EXPECT_EQ(p.size, 600u);
  p.collapse = toxic_mapping();
  p.test_per_class = 10;
  p.subset = {"empathy"};
  EXPECT_EQ(to_json(plan_from_json(to_json(p))), to_json(p));
  EXPECT_THROW(parse_plan_spec("stratified:10"), Error);
  EXPECT_THROW(parse_plan_spec("balanced:ten"), Error);
  EXPECT_THROW(parse_plan_spec("balanced:10x"), Error);
}

// ---------------------------------------------------------------------------
// Export

TEST(Export, WritesThreePartsWithHeaders) {
  const Taxonomy& t = canonical_taxonomy();
  TempDir dir;
  Pool pool = synthetic_pool(uniform_counts(t, 20));
  DatasetSplit split = sample(pool, t, parse_plan_spec("balanced:8"));
  EXPECT_EQ(split_from_json(to_json(split)), split);
  export_split(split, pool, dir.path());
  JsonLines train = read_json_lines(dir / "train.jsonl", "tacos-dataset/1");
  EXPECT_EQ(train.header["part"], "train");
  EXPECT_EQ(train.header["count"], split.train.size());
  EXPECT_EQ(train.header["pool_digest"], pool.digest());
  ASSERT_EQ(train.records.size(), split.train.size());
  EXPECT_EQ(train.records[0]["id"], split.train[0].id);
  EXPECT_EQ(train.records[0]["text"], pool.find(split.train[0].id)->text);

  std::string before = read_file(dir / "test.jsonl");
  export_split(split, pool, dir.path());
  EXPECT_EQ(read_file(dir / "test.jsonl"), before);
}

TEST(Export, DanglingIdsFailWithoutPartialOutput) {
  const Taxonomy& t = canonical_taxonomy();
  TempDir dir;
  Pool pool = synthetic_pool(uniform_counts(t, 20));
  DatasetSplit split = sample(pool, t, parse_plan_spec("balanced:8"));
  split.test.push_back({"qdoesnotexist", "empathy"});
  EXPECT_EQ(code_of([&] { export_split(split, pool, dir.path()); }), ErrorCode::kDanglingId);
  EXPECT_FALSE(std::filesystem::exists(dir / "train.jsonl"));

  split.test.pop_back();
  pool.find_mutable(split.validation[0].id)->review = Review{"a", ReviewAction::kRemoved, ""};
  EXPECT_EQ(code_of([&] { export_split(split, pool, dir.path()); }), ErrorCode::kDanglingId);
}

}  // namespace
}  // namespace tacos
