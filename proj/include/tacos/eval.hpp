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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "tacos/classifier.hpp"
#include "tacos/prediction.hpp"
#include "tacos/taxonomy.hpp"

namespace tacos {

struct ClassStats {
  std::string label_id;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
  std::size_t true_positives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auprc;
};

// Square count matrix, rows = gold, columns = predicted, canonical order.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::vector<std::size_t> row_sums() const;
  std::vector<std::size_t> column_sums() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricBlock {
  std::size_t n_items = 0;
  double accuracy = 0.0;
  // Mean per-class F1 over classes with gold support.
  double macro_f1 = 0.0;
  // Mean per-class F1 over classes present in gold or predictions.
  double macro_f1_union = 0.0;
  // Support-weighted mean per-class F1.
  double weighted_f1 = 0.0;
  // Mean per-class average precision over gold-present classes; absent when
  // no scores were supplied or (for groups) fewer than two gold classes.
  std::optional<double> macro_auprc;
  // Every taxonomy leaf that is gold-present or predicted, canonical order.
  std::vector<ClassStats> per_class;
};

struct EvalReport {
  std::string taxonomy_version;
  MetricBlock total;
  ConfusionMatrix confusion;
  std::vector<std::pair<std::string, MetricBlock>> groups;
};

// Named label-id sets used for group breakdowns.
using GroupSpec = std::vector<std::pair<std::string, std::vector<std::string>>>;

// Average precision of one-vs-rest scores: sum over distinct score
// thresholds (descending) of (R_k - R_{k-1}) * P_k. Requires >= 1 positive.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Throws kInvalidArgument on length mismatch or score arity mismatch and
// kUnknownLabel on labels outside the taxonomy. Predictions with empty score
// vectors are allowed only if all are empty (no AUPRC then).
EvalReport evaluate(std::span<const std::string> gold, std::span<const Prediction> predictions,
                    const Taxonomy& taxonomy, const GroupSpec& groups = {});

// Metrics restricted to items whose gold label is in each group.
std::vector<std::pair<std::string, MetricBlock>> group_metrics(
    std::span<const std::string> gold, std::span<const Prediction> predictions,
    const Taxonomy& taxonomy, const GroupSpec& groups);

ConfusionMatrix confusion(std::span<const std::string> gold,
                          std::span<const std::string> predicted, const Taxonomy& taxonomy);

// Grid file: header row "gold\\predicted,<labels...>", one row per gold label.
std::string confusion_csv(const ConfusionMatrix& matrix);
// Plot data: {"labels": [...], "counts": [[...]], "row_normalized": [[...]]}.
nlohmann::json confusion_plot_data(const ConfusionMatrix& matrix);

nlohmann::json to_json(const ClassStats& stats);
nlohmann::json to_json(const MetricBlock& block);
nlohmann::json to_json(const EvalReport& report);

// ---------------------------------------------------------------------------
// Prediction files (tacos-predictions/1): one record per item with id, gold,
// label_id and an optional score vector in canonical order.

struct PredictionSet {
  std::string taxonomy_version;
  std::vector<std::string> ids;
  std::vector<std::string> gold;
  std::vector<Prediction> predictions;
};

PredictionSet parse_prediction_set(std::string_view text, std::string_view source_name = "<memory>");
PredictionSet load_prediction_set(const std::filesystem::path& path);
std::string serialize_prediction_set(const PredictionSet& set);

// ---------------------------------------------------------------------------
// Latency.

struct LatencyReport {
  std::string backend_id;
  std::optional<std::size_t> shots;
  std::size_t warmup = 0;
  std::vector<double> seconds;  // post-warmup successful samples, query order
  std::size_t failures = 0;
  double p50 = 0.0;
  double p95 = 0.0;
  double mean = 0.0;
};

// Linear interpolation between closest ranks over a sorted sample.
double percentile(std::span<const double> sorted, double q);

// Wall-clock per query around Classifier::classify. The first `warmup`
// queries are run but not recorded. Failing queries are counted and skipped.
// Requires queries.size() >= warmup + 1.
LatencyReport benchmark_latency(Classifier& classifier, const Taxonomy& taxonomy,
                                std::span<const std::string> queries, std::size_t warmup,
                                std::optional<std::size_t> shots = std::nullopt);

// Report over already-measured samples (warmup already excluded).
LatencyReport summarize_latency(std::string backend_id, std::optional<std::size_t> shots,
                                std::size_t warmup, std::vector<double> seconds,
                                std::size_t failures);

nlohmann::json to_json(const LatencyReport& report);

}  // namespace tacos
