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

#include <thread>

#include "tacos/audit.hpp"
#include "tacos/error.hpp"
#include "tacos/routing.hpp"
#include "test_support.hpp"

namespace tacos {
namespace {

using testing::canonical_taxonomy;

const RoutingPolicy& default_policy() {
  static const RoutingPolicy p = load_policy_file(testing::data_dir() / "policy.yaml");
  return p;
}

TEST(Routing, DefaultPolicyValidates) {
  EXPECT_NO_THROW(validate_policy(default_policy(), canonical_taxonomy()));
  MessageTemplates templates = load_templates_file(testing::data_dir() / "templates.yaml");
  EXPECT_NO_THROW(validate_templates(templates, default_policy()));
}

TEST(Routing, EveryLeafRoutesWithoutError) {
  const Taxonomy& t = canonical_taxonomy();
  for (const auto& leaf : t.leaves()) {
    RoutingDecision d = route(t, default_policy(), leaf.id);
    EXPECT_FALSE(d.error.has_value()) << leaf.id;
    EXPECT_EQ(d.label_id, leaf.id);
  }
}

TEST(Routing, UnsafeLeavesBlockAndLog) {
  const Taxonomy& t = canonical_taxonomy();
  std::size_t unsafe = 0;
  for (const auto& leaf : t.leaves()) {
    RoutingDecision d = route(t, default_policy(), leaf.id);
    if (leaf.path.safety == Safety::kUnsafe) {
      ++unsafe;
      EXPECT_EQ(d.action, RoutingAction::kBlockWithWarning) << leaf.id;
      EXPECT_TRUE(d.log_unsafe) << leaf.id;
    } else {
      EXPECT_FALSE(d.log_unsafe) << leaf.id;
    }
  }
  EXPECT_EQ(unsafe, 9u);
}

TEST(Routing, InformationSeekingToolsMatchTaxonomy) {
  const Taxonomy& t = canonical_taxonomy();
  for (const auto& id : information_seeking_ids(t)) {
    RoutingDecision d = route(t, default_policy(), id);
    EXPECT_EQ(d.tools, *tool_requirements(t, id)) << id;
    EXPECT_TRUE(is_answer(d.action)) << id;
  }
  EXPECT_EQ(route(t, default_policy(), "general_inquiry").action, RoutingAction::kAnswerDirect);
  EXPECT_TRUE(route(t, default_policy(), "empathy").tools.empty());
}

TEST(Routing, UnknownLabelFailsClosed) {
  RoutingDecision d = route(canonical_taxonomy(), default_policy(), "not_a_label");
  EXPECT_EQ(d.action, RoutingAction::kBlockWithWarning);
  EXPECT_EQ(d.message_template_id, kGenericBlockTemplate);
  EXPECT_TRUE(d.error.has_value());
}

TEST(Routing, MissingRuleFailsClosed) {
  RoutingPolicy partial = default_policy();
  partial.rules.erase("empathy");
  RoutingDecision d = route(canonical_taxonomy(), partial, "empathy");
  EXPECT_EQ(d.action, RoutingAction::kBlockWithWarning);
  EXPECT_TRUE(d.error.has_value());
  EXPECT_THROW(validate_policy(partial, canonical_taxonomy()), Error);
}

TEST(Routing, ClassifierFailureDecision) {
  RoutingDecision d = fail_closed_decision("classification_failed");
  EXPECT_EQ(d.action, RoutingAction::kBlockWithWarning);
  EXPECT_EQ(d.message_template_id, kClassificationFailureTemplate);
  EXPECT_EQ(d.error, "classification_failed");
  EXPECT_FALSE(is_answer(d.action));
}

TEST(Routing, PolicyValidationRejectsUnsafeAnswers) {
  RoutingPolicy p = default_policy();
  p.rules["self_harm"] = {RoutingAction::kAnswerDirect, "answer_plain", false};
  EXPECT_THROW(validate_policy(p, canonical_taxonomy()), Error);

  RoutingPolicy q = default_policy();
  q.rules["self_harm"].log_unsafe = false;
  EXPECT_THROW(validate_policy(q, canonical_taxonomy()), Error);

  RoutingPolicy tools = default_policy();
  tools.rules["empathy"] = {RoutingAction::kAnswerWithTools, "answer_plain", false};
  EXPECT_THROW(validate_policy(tools, canonical_taxonomy()), Error);
}

TEST(Routing, PolicyParseErrors) {
  EXPECT_THROW(load_policy("version: v\nrules:\n  empathy: {action: shout, template: t}\n"), Error);
  EXPECT_THROW(load_policy("rules: [\n"), Error);
}

TEST(Routing, ActionNamesRoundTrip) {
  for (auto a : {RoutingAction::kBlockWithWarning, RoutingAction::kSafeRefusalWithDisclaimer,
                 RoutingAction::kEmpathyResponse, RoutingAction::kFollowUpElicitation,
                 RoutingAction::kReformulationRedirect, RoutingAction::kAnswerDirect,
                 RoutingAction::kAnswerWithTools}) {
    EXPECT_EQ(parse_routing_action(to_string(a)), a);
  }
  EXPECT_FALSE(parse_routing_action("nope").has_value());
}

TEST(Templates, LocaleFallback) {
  MessageTemplates t("en", {{"hello", {{"en", "Hello"}, {"ko", "annyeong"}}}});
  EXPECT_EQ(t.resolve("hello"), "Hello");
  EXPECT_EQ(t.resolve("hello", "ko"), "annyeong");
  EXPECT_EQ(t.resolve("hello", "fr"), "Hello");
  EXPECT_THROW(t.resolve("missing"), Error);
}

TEST(Templates, ValidationCatchesMissingTemplate) {
  MessageTemplates t("en", {{"generic_block", {{"en", "x"}}}});
  EXPECT_THROW(validate_templates(t, default_policy()), Error);
}

// ---------------------------------------------------------------------------

TEST(Audit, RecordsUnsafeDecisionsAndCounts) {
  testing::TempDir dir;
  const Taxonomy& t = canonical_taxonomy();
  {
    AuditStore store(dir / "audit.jsonl", 2);
    store.record_unsafe(route(t, default_policy(), "self_harm"), "I want to end my life");
    store.record_unsafe(route(t, default_policy(), "self_harm"), "suicide");
    auto rec = store.record_unsafe(route(t, default_policy(), "private_information_injection"),
                                   "my phone number is 010");
    EXPECT_FALSE(rec.query_text.has_value());
    EXPECT_EQ(rec.query_digest, sha256_hex("my phone number is 010"));
    EXPECT_EQ(store.count("self_harm"), 2u);
    EXPECT_EQ(store.last_sequence(), 3u);
  }
  auto records = AuditStore::read_records(dir / "audit.jsonl");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].query_text, "I want to end my life");
  EXPECT_EQ(records[2].sequence, 3u);

  AuditStore reopened(dir / "audit.jsonl");
  EXPECT_EQ(reopened.count("self_harm"), 2u);
  EXPECT_EQ(reopened.count("private_information_injection"), 1u);
  EXPECT_EQ(reopened.last_sequence(), 3u);
}

TEST(Audit, RefusesSafeDecisions) {
  testing::TempDir dir;
  AuditStore store(dir / "audit.jsonl");
  try {
    store.record_unsafe(route(canonical_taxonomy(), default_policy(), "empathy"), "hi");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
  EXPECT_TRUE(store.counters().empty());
}

TEST(Audit, WriteFailureCountsNothing) {
  testing::TempDir dir;
  AuditStore store(dir / "audit.jsonl");
  std::filesystem::remove(dir / "audit.jsonl");
  std::filesystem::create_directory(dir / "audit.jsonl");  // appends now fail
  try {
    store.record_unsafe(route(canonical_taxonomy(), default_policy(), "self_harm"), "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStorage);
  }
  EXPECT_EQ(store.count("self_harm"), 0u);
}

TEST(Audit, ConcurrentAppendsKeepSequenceDense) {
  testing::TempDir dir;
  AuditStore store(dir / "audit.jsonl", 7);
  RoutingDecision d = route(canonical_taxonomy(), default_policy(), "adversary");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) store.record_unsafe(d, "jailbreak " + std::to_string(i));
    });
  }
  for (auto& th : threads) th.join();
  auto records = AuditStore::read_records(dir / "audit.jsonl");
  ASSERT_EQ(records.size(), 200u);
  for (std::size_t i = 0; i < records.size(); ++i) EXPECT_EQ(records[i].sequence, i + 1);
  EXPECT_EQ(store.count("adversary"), 200u);
}

}  // namespace
}  // namespace tacos
