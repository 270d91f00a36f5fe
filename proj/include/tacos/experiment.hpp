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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tacos/classifier.hpp"
#include "tacos/dataset.hpp"
#include "tacos/eval.hpp"

namespace tacos {

enum class ExperimentKind { kUnderSpecificity, kOverSpecificity, kDistribution };

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment_kind(std::string_view name);

// Shot counts allowed in replication mode.
inline constexpr std::size_t kReplicationShots[] = {0, 1, 5, 10, 20, 30, 40, 50, 100};

struct ExperimentBackend {
  BackendConfig config;
  std::string scheme;  // over_specificity: "total" or "separate"
  std::string plan;    // distribution: name of the plan the model was trained on
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kDistribution;
  std::filesystem::path taxonomy_file;
  std::filesystem::path separate_taxonomy_file;  // over_specificity
  std::filesystem::path mapping_file;            // over_specificity
  std::filesystem::path pool_file;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::vector<std::size_t> shots;  // under_specificity
  bool replication = true;
  std::vector<SamplingPlan> plans;
  std::optional<std::size_t> test_per_class;
  std::vector<ExperimentBackend> backends;
  std::size_t concurrency = 4;
  std::size_t warmup = 0;
};

// Relative paths resolve against base_dir. Throws kConfig.
ExperimentConfig parse_experiment_config(const nlohmann::json& node,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Builds the classifier for one run. `active` is the taxonomy the backend
// scores against; `exemplars` is the train split (prompt backends) and
// `shots` the sweep point.
using ClassifierFactory = std::function<std::unique_ptr<Classifier>(
    const BackendConfig& config, const Taxonomy& active, const std::vector<Exemplar>& exemplars,
    std::size_t shots)>;

std::unique_ptr<Classifier> default_classifier_factory(const BackendConfig& config,
                                                       const Taxonomy& active,
                                                       const std::vector<Exemplar>& exemplars,
                                                       std::size_t shots);

struct ExperimentResult {
  std::string config_digest;
  std::filesystem::path bundle_dir;
  nlohmann::json metrics;  // deterministic under fixed seeds
  nlohmann::json latency;  // wall-clock, excluded from determinism
};

// Bundle layout (under output_dir/<config digest>/):
//   manifest.json   config, digests, seeds
//   metrics.json    every EvalReport of the run
//   latency.json    every LatencyReport of the run
//   splits/<plan>/{train,validation,test}.jsonl
//   predictions/<run>.jsonl
//   plot-data CSV/JSON files named per experiment kind
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const ClassifierFactory& factory = default_classifier_factory);

// Classifies every text with at most `concurrency` calls in flight; results
// are stored by index. Items failing with kClassificationFailure or
// kParseFailure are nullopt; other errors abort the run.
std::vector<std::optional<Prediction>> classify_all(Classifier& classifier, const Taxonomy& taxonomy,
                                                    std::span<const std::string> texts,
                                                    std::size_t concurrency);

// ---------------------------------------------------------------------------
// Stored bundles, read-only.

class ReportStore {
 public:
  explicit ReportStore(std::filesystem::path root);

  // Bundle digests, sorted.
  std::vector<std::string> list() const;
  bool contains(std::string_view digest) const;
  // File names inside a bundle (recursive, '/'-separated, sorted).
  // Throws kNotFound.
  std::vector<std::string> files(std::string_view digest) const;
  // Raw bytes of one bundle file. Throws kNotFound (also for paths that
  // escape the bundle).
  std::string read(std::string_view digest, std::string_view file) const;

 private:
  std::filesystem::path bundle_path(std::string_view digest) const;
  std::filesystem::path root_;
};

}  // namespace tacos
