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

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "tacos/error.hpp"
#include "tacos/eval.hpp"
#include "metric_oracle.hpp"
#include "test_support.hpp"

namespace tacos {
namespace {

using testing::canonical_taxonomy;
using testing::data_dir;
using testing::separate_taxonomy;
using testing::oracle;
using testing::OracleMetrics;

Taxonomy small_taxonomy(std::size_t k) {
  const Taxonomy& t = canonical_taxonomy();
  std::set<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.insert(t.leaf(i * 4).id);
  return restrict_taxonomy(t, ids, "small" + std::to_string(k));
}

std::vector<Prediction> one_hot(const Taxonomy& t, const std::vector<std::string>& labels) {
  std::vector<Prediction> out;
  for (const auto& l : labels) out.push_back(one_hot_prediction(t, l, "test"));
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

struct Instance {
  std::vector<std::string> gold;
  std::vector<Prediction> predictions;
};

// Small integer weights make ties common; one-hot mode exercises the
// score-degenerate case.
Instance random_instance(const Taxonomy& t, std::mt19937_64& rng, bool one_hot_scores) {
  std::size_t n = 1 + rng() % 50;
  Instance inst;
  for (std::size_t i = 0; i < n; ++i) {
    inst.gold.push_back(t.leaf(rng() % t.size()).id);
    if (one_hot_scores) {
      inst.predictions.push_back(one_hot_prediction(t, t.leaf(rng() % t.size()).id, "r"));
      continue;
    }
    std::vector<double> w(t.size());
    double sum = 0;
    while (sum == 0) {
      for (auto& x : w) sum += (x = static_cast<double>(rng() % 4));
    }
    for (auto& x : w) x /= sum;
    inst.predictions.push_back(prediction_from_scores(t, w, "r"));
  }
  return inst;
}

TEST(MetricOracles, AgreeOnRandomInstances) {
  std::mt19937_64 rng(20240611);
  for (int seed = 0; seed < 200; ++seed) {
    Taxonomy t = small_taxonomy(2 + seed % 4);
    Instance inst = random_instance(t, rng, seed % 3 == 0);
    std::vector<std::string> pred;
    std::vector<std::vector<double>> scores;
    for (const auto& p : inst.predictions) {
      pred.push_back(p.label_id);
      scores.push_back(p.scores);
    }
    OracleMetrics expected = oracle(t, inst.gold, pred, scores);
    EvalReport report = evaluate(inst.gold, inst.predictions, t);
    ASSERT_EQ(report.total.n_items, inst.gold.size());
    EXPECT_NEAR(report.total.accuracy, expected.accuracy, 1e-9) << seed;
    EXPECT_NEAR(report.total.macro_f1, expected.macro_f1, 1e-9) << seed;
    ASSERT_TRUE(report.total.macro_auprc);
    EXPECT_NEAR(*report.total.macro_auprc, expected.macro_auprc, 1e-9) << seed;
    std::size_t k = 0;
    for (const auto& s : report.total.per_class) {
      if (s.support == 0) continue;
      ASSERT_TRUE(s.auprc);
      EXPECT_NEAR(*s.auprc, expected.auprc.at(k++), 1e-9);
    }
  }
}

TEST(MetricOracles, ToyThreeClassSet) {
  Taxonomy t = small_taxonomy(3);
  std::string a = t.leaf(0).id, b = t.leaf(1).id, c = t.leaf(2).id;
  std::vector<std::string> gold{a, a, b, c};
  EvalReport r = evaluate(gold, one_hot(t, {a, b, b, c}), t);
  EXPECT_DOUBLE_EQ(r.total.accuracy, 0.75);
  EXPECT_NEAR(r.total.macro_f1, (2.0 / 3 + 2.0 / 3 + 1.0) / 3, 1e-12);
  EXPECT_NEAR(r.total.macro_f1, 0.7778, 1e-4);
}

TEST(MetricOracles, PerfectPredictions) {
  Taxonomy t = small_taxonomy(4);
  std::vector<std::string> gold;
  for (std::size_t i = 0; i < 12; ++i) gold.push_back(t.leaf(i % 4).id);
  EvalReport r = evaluate(gold, one_hot(t, gold), t);
  EXPECT_EQ(r.total.accuracy, 1.0);
  EXPECT_EQ(r.total.macro_f1, 1.0);
  EXPECT_EQ(*r.total.macro_auprc, 1.0);
}

TEST(MetricOracles, AveragePrecisionGroupsTies) {
  // All scores tied: one threshold, precision = base rate.
  std::vector<double> s{0.5, 0.5, 0.5, 0.5};
  std::vector<std::uint8_t> pos{1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(average_precision(s, pos), 0.25);
  std::vector<double> s2{0.9, 0.8, 0.7};
  std::vector<std::uint8_t> pos2{0, 1, 1};
  EXPECT_DOUBLE_EQ(average_precision(s2, pos2), 0.5 * 0.5 + 0.5 * (2.0 / 3));
}

TEST(MetricOracles, MacroExcludesClassesAbsentFromGold) {
  Taxonomy t = small_taxonomy(3);
  std::string a = t.leaf(0).id, b = t.leaf(1).id, c = t.leaf(2).id;
  // c never appears in gold but is predicted once.
  EvalReport r = evaluate(std::vector<std::string>{a, a, b, b}, one_hot(t, {a, c, b, b}), t);
  // a: P=1 R=.5 F1=2/3; b: F1=1; c: F1=0 (union only).
  EXPECT_NEAR(r.total.macro_f1, (2.0 / 3 + 1.0) / 2, 1e-12);
  EXPECT_NEAR(r.total.macro_f1_union, (2.0 / 3 + 1.0 + 0.0) / 3, 1e-12);
  EXPECT_NEAR(r.total.weighted_f1, (2 * 2.0 / 3 + 2 * 1.0) / 4, 1e-12);
  ASSERT_EQ(r.total.per_class.size(), 3u);
  EXPECT_EQ(r.total.per_class[2].support, 0u);
  EXPECT_FALSE(r.total.per_class[2].auprc);
}

TEST(MetricInvariants, PermutingItemsJointlyChangesNothing) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 30; ++round) {
    Taxonomy t = small_taxonomy(5);
    Instance inst = random_instance(t, rng, false);
    std::string before = to_json(evaluate(inst.gold, inst.predictions, t)).dump();
    std::vector<std::size_t> order(inst.gold.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Instance shuffled;
    for (auto i : order) {
      shuffled.gold.push_back(inst.gold[i]);
      shuffled.predictions.push_back(inst.predictions[i]);
    }
    EXPECT_EQ(to_json(evaluate(shuffled.gold, shuffled.predictions, t)).dump(), before);
  }
}

TEST(MetricInvariants, ConfusionConservation) {
  std::mt19937_64 rng(11);
  const Taxonomy& t = canonical_taxonomy();
  std::vector<std::string> gold, pred;
  std::map<std::string, std::size_t> gold_counts, pred_counts;
  for (int i = 0; i < 500; ++i) {
    gold.push_back(t.leaf(rng() % 21).id);
    pred.push_back(t.leaf(rng() % 21).id);
    gold_counts[gold.back()]++;
    pred_counts[pred.back()]++;
  }
  ConfusionMatrix m = confusion(gold, pred, t);
  EXPECT_EQ(m.total(), 500u);
  auto rows = m.row_sums();
  auto cols = m.column_sums();
  for (std::size_t i = 0; i < 21; ++i) {
    EXPECT_EQ(rows[i], gold_counts[t.leaf(i).id]);
    EXPECT_EQ(cols[i], pred_counts[t.leaf(i).id]);
  }
  EXPECT_EQ(confusion(gold, gold, t).total(), 500u);
  ConfusionMatrix diag = confusion(gold, gold, t);
  for (std::size_t i = 0; i < 21; ++i) {
    for (std::size_t j = 0; j < 21; ++j) {
      if (i != j) EXPECT_EQ(diag.counts[i][j], 0u);
    }
  }
}

TEST(Confusion, IrrelevantRequestRow) {
  const Taxonomy& t = canonical_taxonomy();
  std::vector<std::string> gold(19, "irrelevant_request");
  std::vector<std::string> pred(11, "irrelevant_request");
  pred.insert(pred.end(), 3, "medical_inquiry");
  pred.insert(pred.end(), 5, "general_inquiry");
  ConfusionMatrix m = confusion(gold, pred, t);
  const auto& row = m.counts[t.require_index("irrelevant_request")];
  EXPECT_EQ(row[t.require_index("irrelevant_request")], 11u);
  EXPECT_EQ(row[t.require_index("medical_inquiry")], 3u);
  EXPECT_EQ(row[t.require_index("general_inquiry")], 5u);

  std::string csv = confusion_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find(',')), "gold\\predicted");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 22);
  auto plot = confusion_plot_data(m);
  EXPECT_EQ(plot["labels"].size(), 21u);
  EXPECT_NEAR(plot["row_normalized"][t.require_index("irrelevant_request")]
                  [t.require_index("irrelevant_request")]
                      .get<double>(),
              11.0 / 19, 1e-12);
  EXPECT_EQ(plot["row_normalized"][0][0], 0.0);  // empty row stays zero
}

// ---------------------------------------------------------------------------
// Collapse protocol

TEST(CollapseProtocol, EvaluateAfterCollapseEqualsNativeFrame) {
  const Taxonomy& sep = separate_taxonomy();
  const Taxonomy& total = canonical_taxonomy();
  LabelMapping mapping = load_label_mapping_file(data_dir() / "toxic_separate_to_total.tsv");
  std::mt19937_64 rng(99);
  std::vector<std::string> gold_sep, gold_total;
  std::vector<Prediction> collapsed, native;
  for (int i = 0; i < 200; ++i) {
    std::string g = sep.leaf(rng() % sep.size()).id;
    std::vector<double> w(sep.size());
    double sum = 0;
    for (auto& x : w) sum += (x = static_cast<double>(rng() % 5));
    if (sum == 0) w[0] = sum = 1;
    for (auto& x : w) x /= sum;
    Prediction p = prediction_from_scores(sep, w, "sep");
    gold_sep.push_back(g);
    gold_total.push_back(mapping.map(g));
    collapsed.push_back(collapse_prediction(p, mapping, sep, total));

    // Built directly in the 21-class frame.
    Prediction q;
    q.backend_id = "sep";
    q.label_id = mapping.map(p.label_id);
    q.scores.assign(total.size(), 0.0);
    for (std::size_t s = 0; s < sep.size(); ++s) {
      q.scores[total.require_index(mapping.map(sep.leaf(s).id))] += w[s];
    }
    native.push_back(q);
  }
  GroupSpec groups{{"toxic", {"crime_or_toxic"}}};
  std::vector<std::string> non_toxic;
  for (const auto& id : total.ids()) {
    if (id != "crime_or_toxic") non_toxic.push_back(id);
  }
  groups.emplace_back("non_toxic", non_toxic);
  EXPECT_EQ(to_json(evaluate(gold_total, collapsed, total, groups)).dump(),
            to_json(evaluate(gold_total, native, total, groups)).dump());
  EXPECT_EQ(collapse_labels(mapping, gold_sep), gold_total);
}

// ---------------------------------------------------------------------------
// Groups

TEST(Groups, RestrictToGoldMembers) {
  const Taxonomy& t = canonical_taxonomy();
  std::vector<std::string> gold{"crime_or_toxic", "crime_or_toxic", "crime_or_toxic",
                                "empathy",        "gibberish",      "empathy"};
  std::vector<std::string> pred{"crime_or_toxic", "adversary", "crime_or_toxic",
                                "crime_or_toxic", "gibberish", "empathy"};
  GroupSpec groups{{"toxic", {"crime_or_toxic"}}, {"rest", {"empathy", "gibberish"}}};
  EvalReport r = evaluate(gold, one_hot(t, pred), t, groups);
  ASSERT_EQ(r.groups.size(), 2u);
  const MetricBlock& toxic = r.groups[0].second;
  EXPECT_EQ(toxic.n_items, 3u);
  EXPECT_DOUBLE_EQ(toxic.accuracy, 2.0 / 3);
  EXPECT_FALSE(toxic.macro_auprc);  // single gold class
  const MetricBlock& rest = r.groups[1].second;
  EXPECT_EQ(rest.n_items, 3u);
  EXPECT_TRUE(rest.macro_auprc);
  EXPECT_EQ(toxic.n_items + rest.n_items, r.total.n_items);

  GroupSpec all{{"all", t.ids()}};
  auto whole = group_metrics(gold, one_hot(t, pred), t, all);
  EXPECT_EQ(to_json(whole[0].second), to_json(r.total));

  GroupSpec bad{{"x", {"nope"}}};
  EXPECT_EQ(code_of([&] { group_metrics(gold, one_hot(t, pred), t, bad); }),
            ErrorCode::kUnknownLabel);
}

// ---------------------------------------------------------------------------
// Errors

TEST(EvaluateErrors, Preconditions) {
  Taxonomy t = small_taxonomy(3);
  std::string a = t.leaf(0).id;
  EXPECT_EQ(code_of([&] { evaluate(std::vector<std::string>{a, a}, one_hot(t, {a}), t); }),
            ErrorCode::kInvalidArgument);
  auto preds = one_hot(t, {a});
  preds[0].scores.push_back(0.0);
  EXPECT_EQ(code_of([&] { evaluate(std::vector<std::string>{a}, preds, t); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { evaluate(std::vector<std::string>{"nope"}, one_hot(t, {a}), t); }),
            ErrorCode::kUnknownLabel);
  auto mixed = one_hot(t, {a, a});
  mixed[1].scores.clear();
  EXPECT_EQ(code_of([&] { evaluate(std::vector<std::string>{a, a}, mixed, t); }),
            ErrorCode::kInvalidArgument);
  auto bare = one_hot(t, {a, a});
  for (auto& p : bare) p.scores.clear();
  EXPECT_FALSE(evaluate(std::vector<std::string>{a, a}, bare, t).total.macro_auprc);
}

// ---------------------------------------------------------------------------
// Prediction files

TEST(PredictionFiles, RoundTrip) {
  const Taxonomy& t = canonical_taxonomy();
  PredictionSet set;
  set.taxonomy_version = t.version();
  set.ids = {"q1", "q2"};
  set.gold = {"empathy", "self_harm"};
  set.predictions = one_hot(t, {"empathy", "gibberish"});
  set.predictions[1].scores.clear();
  std::string text = serialize_prediction_set(set);
  PredictionSet back = parse_prediction_set(text);
  EXPECT_EQ(back.ids, set.ids);
  EXPECT_EQ(back.gold, set.gold);
  EXPECT_EQ(back.predictions[0].scores, set.predictions[0].scores);
  EXPECT_TRUE(back.predictions[1].scores.empty());
  EXPECT_EQ(back.predictions[1].label_id, "gibberish");
  EXPECT_EQ(serialize_prediction_set(back), text);
  EXPECT_THROW(parse_prediction_set("{\"schema\":\"tacos-predictions/1\"}\n{\"id\":\"x\"}\n"),
               Error);
}

// ---------------------------------------------------------------------------
// Latency

class CountingClassifier : public Classifier {
 public:
  const std::string& id() const override { return id_; }
  bool probabilistic() const override { return false; }
  int calls = 0;
  int fail_every = 0;

 protected:
  Prediction do_classify(const Taxonomy& t, std::string_view) override {
    ++calls;
    if (fail_every && calls % fail_every == 0) {
      throw Error(ErrorCode::kClassificationFailure, "flaky");
    }
    return one_hot_prediction(t, t.leaf(0).id, id_);
  }

 private:
  std::string id_ = "counting";
};

TEST(Latency, WarmupExcludedFromSamples) {
  const Taxonomy& t = canonical_taxonomy();
  std::vector<std::string> queries(105, "hello");
  CountingClassifier c;
  LatencyReport r = benchmark_latency(c, t, queries, 5, 10);
  EXPECT_EQ(c.calls, 105);
  EXPECT_EQ(r.seconds.size(), 100u);
  EXPECT_EQ(r.warmup, 5u);
  EXPECT_EQ(r.shots, 10u);
  EXPECT_LE(r.p50, r.p95);
  auto j = to_json(r);
  EXPECT_EQ(j["backend_id"], "counting");
  EXPECT_EQ(j["shots"], 10);

  std::vector<std::string> too_few(5, "x");
  EXPECT_EQ(code_of([&] { benchmark_latency(c, t, too_few, 5); }), ErrorCode::kInvalidArgument);
}

TEST(Latency, FailuresCountedNotSampled) {
  const Taxonomy& t = canonical_taxonomy();
  std::vector<std::string> queries(40, "x");
  CountingClassifier c;
  c.fail_every = 4;
  LatencyReport r = benchmark_latency(c, t, queries, 0);
  EXPECT_EQ(r.failures, 10u);
  EXPECT_EQ(r.seconds.size(), 30u);
}

TEST(Latency, PercentilesInterpolateLinearly) {
  std::vector<double> s{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(percentile(s, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile(s, 0.95), 3.85);
  EXPECT_DOUBLE_EQ(percentile(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(s, 1.0), 4.0);
  std::vector<double> one{7};
  EXPECT_DOUBLE_EQ(percentile(one, 0.5), 7.0);
  LatencyReport r = summarize_latency("b", std::nullopt, 0, {3, 1, 2, 4}, 0);
  EXPECT_DOUBLE_EQ(r.p50, 2.5);
  EXPECT_DOUBLE_EQ(r.mean, 2.5);
  EXPECT_EQ(r.seconds, (std::vector<double>{3, 1, 2, 4}));
}

}  // namespace
}  // namespace tacos
