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

#include "tacos/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "tacos/error.hpp"
#include "tacos/kernels.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::string_view kPredictionsSchema = "tacos-predictions/1";

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

struct Indexed {
  std::vector<std::uint32_t> gold;
  std::vector<std::uint32_t> predicted;
  bool has_scores = false;
};

Indexed index_inputs(std::span<const std::string> gold, std::span<const Prediction> predictions,
                     const Taxonomy& taxonomy) {
  if (gold.size() != predictions.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "gold has " + std::to_string(gold.size()) + " labels, predictions " +
                    std::to_string(predictions.size()));
  }
  Indexed out;
  out.gold.reserve(gold.size());
  out.predicted.reserve(gold.size());
  std::size_t with_scores = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    out.gold.push_back(static_cast<std::uint32_t>(taxonomy.require_index(gold[i])));
    out.predicted.push_back(
        static_cast<std::uint32_t>(taxonomy.require_index(predictions[i].label_id)));
    const auto& scores = predictions[i].scores;
    if (!scores.empty()) {
      if (scores.size() != taxonomy.size()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "score vector has " + std::to_string(scores.size()) + " entries, taxonomy " +
                        std::to_string(taxonomy.size()),
                    "item " + std::to_string(i));
      }
      ++with_scores;
    }
  }
  if (with_scores != 0 && with_scores != gold.size()) {
    throw Error(ErrorCode::kInvalidArgument, "score vectors must be given for all items or none");
  }
  out.has_scores = with_scores != 0 && !gold.empty();
  return out;
}

// Metrics over the item subset `rows`; `auprc_min_classes` gates AUPRC.
MetricBlock compute_block(const Indexed& in, std::span<const Prediction> predictions,
                          const Taxonomy& taxonomy, std::span<const std::size_t> rows,
                          std::size_t auprc_min_classes) {
  const std::size_t k = taxonomy.size();
  MetricBlock block;
  block.n_items = rows.size();
  std::vector<std::size_t> support(k, 0), predicted(k, 0), tp(k, 0);
  std::vector<std::uint32_t> g, p;
  g.reserve(rows.size());
  p.reserve(rows.size());
  for (std::size_t r : rows) {
    g.push_back(in.gold[r]);
    p.push_back(in.predicted[r]);
    ++support[in.gold[r]];
    ++predicted[in.predicted[r]];
    if (in.gold[r] == in.predicted[r]) ++tp[in.gold[r]];
  }
  std::size_t correct = kernels::count_equal(g, p);
  block.accuracy = safe_div(static_cast<double>(correct), static_cast<double>(rows.size()));

  std::size_t gold_classes = 0;
  for (std::size_t c = 0; c < k; ++c) gold_classes += support[c] > 0;
  const bool with_auprc = in.has_scores && gold_classes >= auprc_min_classes && !rows.empty();

  double f1_gold = 0.0, f1_union = 0.0, f1_weighted = 0.0, auprc_sum = 0.0;
  std::size_t n_union = 0;
  std::vector<double> column;
  std::vector<std::uint8_t> positive;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0 && predicted[c] == 0) continue;
    ClassStats stats;
    stats.label_id = taxonomy.leaf(c).id;
    stats.support = support[c];
    stats.predicted = predicted[c];
    stats.true_positives = tp[c];
    stats.precision = safe_div(tp[c], predicted[c]);
    stats.recall = safe_div(tp[c], support[c]);
    stats.f1 = safe_div(2.0 * stats.precision * stats.recall, stats.precision + stats.recall);
    ++n_union;
    f1_union += stats.f1;
    if (support[c] > 0) {
      f1_gold += stats.f1;
      f1_weighted += stats.f1 * static_cast<double>(support[c]);
      if (with_auprc) {
        column.clear();
        positive.clear();
        for (std::size_t r : rows) {
          column.push_back(predictions[r].scores[c]);
          positive.push_back(in.gold[r] == c);
        }
        stats.auprc = average_precision(column, positive);
        auprc_sum += *stats.auprc;
      }
    }
    block.per_class.push_back(std::move(stats));
  }
  block.macro_f1 = safe_div(f1_gold, static_cast<double>(gold_classes));
  block.macro_f1_union = safe_div(f1_union, static_cast<double>(n_union));
  block.weighted_f1 = safe_div(f1_weighted, static_cast<double>(rows.size()));
  if (with_auprc) block.macro_auprc = auprc_sum / static_cast<double>(gold_classes);
  return block;
}

std::vector<std::pair<std::string, MetricBlock>> blocks_for_groups(
    const Indexed& in, std::span<const Prediction> predictions, const Taxonomy& taxonomy,
    const GroupSpec& groups) {
  std::vector<std::pair<std::string, MetricBlock>> out;
  for (const auto& [name, ids] : groups) {
    std::vector<bool> member(taxonomy.size(), false);
    for (const auto& id : ids) member[taxonomy.require_index(id)] = true;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < in.gold.size(); ++i) {
      if (member[in.gold[i]]) rows.push_back(i);
    }
    out.emplace_back(name, compute_block(in, predictions, taxonomy, rows, 2));
  }
  return out;
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

std::vector<std::size_t> ConfusionMatrix::row_sums() const {
  std::vector<std::size_t> out;
  for (const auto& row : counts) out.push_back(std::accumulate(row.begin(), row.end(), std::size_t{0}));
  return out;
}

std::vector<std::size_t> ConfusionMatrix::column_sums() const {
  std::vector<std::size_t> out(labels.size(), 0);
  for (const auto& row : counts) {
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
  }
  return out;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) {
    throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t total_positive = 0;
  for (std::uint8_t p : positive) total_positive += p != 0;
  if (total_positive == 0) {
    throw Error(ErrorCode::kInvalidArgument, "average precision needs a positive item");
  }
  double ap = 0.0, last_recall = 0.0;
  std::size_t seen = 0, hits = 0;
  for (std::size_t i = 0; i < order.size();) {
    // Consume every item tied at this threshold before taking a point.
    double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      hits += positive[order[i]] != 0;
      ++seen;
      ++i;
    }
    double recall = static_cast<double>(hits) / static_cast<double>(total_positive);
    double precision = static_cast<double>(hits) / static_cast<double>(seen);
    ap += (recall - last_recall) * precision;
    last_recall = recall;
  }
  return ap;
}

EvalReport evaluate(std::span<const std::string> gold, std::span<const Prediction> predictions,
                    const Taxonomy& taxonomy, const GroupSpec& groups) {
  Indexed in = index_inputs(gold, predictions, taxonomy);
  std::vector<std::size_t> rows(gold.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  EvalReport report;
  report.taxonomy_version = taxonomy.version();
  report.total = compute_block(in, predictions, taxonomy, rows, 1);
  report.confusion.labels = taxonomy.ids();
  report.confusion.counts.assign(taxonomy.size(), std::vector<std::size_t>(taxonomy.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) ++report.confusion.counts[in.gold[i]][in.predicted[i]];
  report.groups = blocks_for_groups(in, predictions, taxonomy, groups);
  return report;
}

std::vector<std::pair<std::string, MetricBlock>> group_metrics(
    std::span<const std::string> gold, std::span<const Prediction> predictions,
    const Taxonomy& taxonomy, const GroupSpec& groups) {
  Indexed in = index_inputs(gold, predictions, taxonomy);
  return blocks_for_groups(in, predictions, taxonomy, groups);
}

ConfusionMatrix confusion(std::span<const std::string> gold,
                          std::span<const std::string> predicted, const Taxonomy& taxonomy) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gold and predicted differ in length");
  }
  ConfusionMatrix m;
  m.labels = taxonomy.ids();
  m.counts.assign(taxonomy.size(), std::vector<std::size_t>(taxonomy.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++m.counts[taxonomy.require_index(gold[i])][taxonomy.require_index(predicted[i])];
  }
  return m;
}

std::string confusion_csv(const ConfusionMatrix& matrix) {
  std::ostringstream out;
  out << "gold\\predicted";
  for (const auto& label : matrix.labels) out << ',' << label;
  out << '\n';
  for (std::size_t i = 0; i < matrix.labels.size(); ++i) {
    out << matrix.labels[i];
    for (std::size_t c : matrix.counts[i]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

nlohmann::json confusion_plot_data(const ConfusionMatrix& matrix) {
  nlohmann::json normalized = nlohmann::json::array();
  auto rows = matrix.row_sums();
  for (std::size_t i = 0; i < matrix.counts.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c : matrix.counts[i]) {
      row.push_back(safe_div(static_cast<double>(c), static_cast<double>(rows[i])));
    }
    normalized.push_back(std::move(row));
  }
  return {{"labels", matrix.labels}, {"counts", matrix.counts}, {"row_normalized", normalized}};
}

nlohmann::json to_json(const ClassStats& stats) {
  nlohmann::json out{{"label_id", stats.label_id},   {"support", stats.support},
                     {"predicted", stats.predicted}, {"true_positives", stats.true_positives},
                     {"precision", stats.precision}, {"recall", stats.recall},
                     {"f1", stats.f1}};
  if (stats.auprc) out["auprc"] = *stats.auprc;
  return out;
}

nlohmann::json to_json(const MetricBlock& block) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& s : block.per_class) per_class.push_back(to_json(s));
  nlohmann::json out{{"n_items", block.n_items},
                     {"accuracy", block.accuracy},
                     {"macro_f1", block.macro_f1},
                     {"macro_f1_union", block.macro_f1_union},
                     {"weighted_f1", block.weighted_f1},
                     {"macro_auprc", nullptr},
                     {"per_class", std::move(per_class)}};
  if (block.macro_auprc) out["macro_auprc"] = *block.macro_auprc;
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [name, block] : report.groups) groups[name] = to_json(block);
  return {{"taxonomy_version", report.taxonomy_version},
          {"total", to_json(report.total)},
          {"groups", std::move(groups)},
          {"confusion", {{"labels", report.confusion.labels}, {"counts", report.confusion.counts}}}};
}

// ---------------------------------------------------------------------------

PredictionSet parse_prediction_set(std::string_view text, std::string_view source_name) {
  JsonLines lines = parse_json_lines(text, kPredictionsSchema, source_name);
  if (!lines.malformed_lines.empty()) {
    throw Error(ErrorCode::kParse, "malformed prediction record",
                std::string(source_name) + ":" + std::to_string(lines.malformed_lines.front()));
  }
  PredictionSet set;
  set.taxonomy_version = lines.header.value("taxonomy_version", "");
  std::size_t n = 0;
  for (const auto& record : lines.records) {
    ++n;
    try {
      set.ids.push_back(record.value("id", std::to_string(n)));
      set.gold.push_back(record.at("gold").get<std::string>());
      Prediction p;
      p.label_id = record.at("label_id").get<std::string>();
      if (record.contains("scores")) p.scores = record["scores"].get<std::vector<double>>();
      p.latency_seconds = record.value("latency_seconds", 0.0);
      p.backend_id = record.value("backend_id", "");
      set.predictions.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, e.what(),
                  std::string(source_name) + " record " + std::to_string(n));
    }
  }
  return set;
}

PredictionSet load_prediction_set(const std::filesystem::path& path) {
  return parse_prediction_set(read_file(path), path.string());
}

std::string serialize_prediction_set(const PredictionSet& set) {
  std::vector<nlohmann::json> records;
  records.reserve(set.predictions.size());
  for (std::size_t i = 0; i < set.predictions.size(); ++i) {
    const auto& p = set.predictions[i];
    nlohmann::json r{{"id", set.ids.at(i)}, {"gold", set.gold.at(i)}, {"label_id", p.label_id}};
    if (!p.scores.empty()) r["scores"] = p.scores;
    if (!p.backend_id.empty()) r["backend_id"] = p.backend_id;
    records.push_back(std::move(r));
  }
  nlohmann::json header{{"schema", kPredictionsSchema}};
  if (!set.taxonomy_version.empty()) header["taxonomy_version"] = set.taxonomy_version;
  return dump_json_lines(header, records);
}

// ---------------------------------------------------------------------------

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

LatencyReport benchmark_latency(Classifier& classifier, const Taxonomy& taxonomy,
                                std::span<const std::string> queries, std::size_t warmup,
                                std::optional<std::size_t> shots) {
  if (queries.size() < warmup + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "need at least warmup + 1 = " + std::to_string(warmup + 1) + " queries");
  }
  using Clock = std::chrono::steady_clock;
  std::vector<double> seconds;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto start = Clock::now();
    bool ok = true;
    try {
      classifier.classify(taxonomy, queries[i]);
    } catch (const Error&) {
      ok = false;
    }
    double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    if (i < warmup) continue;
    if (ok) seconds.push_back(elapsed);
    else ++failures;
  }
  return summarize_latency(classifier.id(), shots, warmup, std::move(seconds), failures);
}

LatencyReport summarize_latency(std::string backend_id, std::optional<std::size_t> shots,
                                std::size_t warmup, std::vector<double> seconds,
                                std::size_t failures) {
  LatencyReport report;
  report.backend_id = std::move(backend_id);
  report.shots = shots;
  report.warmup = warmup;
  report.seconds = std::move(seconds);
  report.failures = failures;
  std::vector<double> sorted = report.seconds;
  std::sort(sorted.begin(), sorted.end());
  report.p50 = percentile(sorted, 0.50);
  report.p95 = percentile(sorted, 0.95);
  report.mean = sorted.empty() ? 0.0 : kernels::sum(sorted) / static_cast<double>(sorted.size());
  return report;
}

nlohmann::json to_json(const LatencyReport& report) {
  nlohmann::json out{{"backend_id", report.backend_id}, {"warmup", report.warmup},
                     {"samples", report.seconds.size()}, {"failures", report.failures},
                     {"p50_seconds", report.p50},        {"p95_seconds", report.p95},
                     {"mean_seconds", report.mean},      {"seconds", report.seconds}};
  out["shots"] = report.shots ? nlohmann::json(*report.shots) : nlohmann::json(nullptr);
  return out;
}

}  // namespace tacos
