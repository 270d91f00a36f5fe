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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tacos/http.hpp"
#include "tacos/prediction.hpp"
#include "tacos/taxonomy.hpp"

namespace tacos {

// Common contract for every classifier. classify() measures wall-clock
// latency around the whole backend call and validates the result.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const std::string& id() const = 0;
  // Probabilistic backends emit scores summing to 1; others emit one-hot.
  virtual bool probabilistic() const = 0;

  Prediction classify(const Taxonomy& taxonomy, std::string_view text);

 protected:
  virtual Prediction do_classify(const Taxonomy& taxonomy, std::string_view text) = 0;
};

// ---------------------------------------------------------------------------
// Keyword baseline.

struct KeywordRule {
  std::string label_id;
  std::vector<std::string> phrases;
};

struct KeywordRules {
  std::vector<KeywordRule> rules;
  std::string fallback_label;
};

KeywordRules load_keyword_rules(std::string_view document, std::string_view source_name = "<memory>");
KeywordRules load_keyword_rules_file(const std::filesystem::path& path);

// First rule (in file order) with a phrase occurring in the case-folded,
// normalized query wins; otherwise the fallback label. Pure.
class KeywordClassifier final : public Classifier {
 public:
  KeywordClassifier(std::string id, KeywordRules rules);

  const std::string& id() const override { return id_; }
  bool probabilistic() const override { return false; }

  // Label without scoring or timing.
  const std::string& match(std::string_view text) const;

 protected:
  Prediction do_classify(const Taxonomy& taxonomy, std::string_view text) override;

 private:
  std::string id_;
  KeywordRules rules_;
};

// ---------------------------------------------------------------------------
// Remote backends.

enum class BackendKind { kKeyword, kEncoder, kPrompt };

struct BackendConfig {
  std::string backend_id;
  BackendKind kind = BackendKind::kKeyword;
  std::string endpoint;     // absolute URL for remote backends
  std::string model;        // model name sent to prompt endpoints
  std::string api_key_env;  // name of the env var holding the credential
  double timeout_seconds = 30.0;
  int retries = 2;          // transport retries
  int parse_retries = 2;    // extra attempts after an unparseable reply
  int max_in_flight = 8;
  std::size_t shots = 0;    // prompt backends
  std::uint64_t seed = 0;   // prompt exemplar sampling
  std::filesystem::path rules_file;     // keyword backends
  std::filesystem::path exemplar_file;  // prompt backends: dataset export with exemplars
  std::vector<std::string> subset;      // prompt backends: restrict to these leaves

  RetryOptions retry_options() const;
};

BackendConfig parse_backend_config(const nlohmann::json& node);
// Report-safe view: never includes credential values.
nlohmann::json to_json(const BackendConfig& config);
std::string_view to_string(BackendKind kind);

// Remote encoder: POST {"text"} -> {"scores": [...], "model_version"}, scores
// aligned to the taxonomy's canonical leaf order.
class EncoderClassifier final : public Classifier {
 public:
  EncoderClassifier(BackendConfig config, std::unique_ptr<HttpTransport> transport);

  const std::string& id() const override { return config_.backend_id; }
  bool probabilistic() const override { return true; }

 protected:
  Prediction do_classify(const Taxonomy& taxonomy, std::string_view text) override;

 private:
  BackendConfig config_;
  Url url_;
  std::unique_ptr<HttpTransport> transport_;
  InFlightLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Few-shot prompting.

struct Exemplar {
  std::string text;
  std::string label_id;
};

struct PromptSpec {
  Taxonomy taxonomy;  // active class subset
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::vector<Exemplar> pool;
  std::string locale;  // empty -> taxonomy default
};

inline constexpr std::string_view kQuerySlot = "{{query}}";

// Exemplar selection: per-class pools (sorted, then shuffled under the seed)
// are drawn round-robin in canonical class order until `shots` are taken;
// the selection is then shuffled. Throws kInsufficientExemplars.
std::vector<Exemplar> select_exemplars(const PromptSpec& spec);

// Role instruction, numbered class definitions, exemplars, then the query
// slot. Byte-identical for identical specs.
std::string build_prompt(const PromptSpec& spec);
std::string fill_prompt(std::string_view prompt, std::string_view query);

// Trims, strips quotes and trailing punctuation, case-folds and maps spaces
// and hyphens to underscores, then matches ids or display names. nullopt
// when nothing (or more than one leaf) matches.
std::optional<std::string> try_parse_class_response(const Taxonomy& subset, std::string_view raw);
// Throws kParseFailure.
std::string parse_class_response(const Taxonomy& subset, std::string_view raw);

// Sends a single-turn chat completion (temperature 0) and parses the class
// name, re-asking up to parse_retries times.
class PromptClassifier final : public Classifier {
 public:
  PromptClassifier(BackendConfig config, PromptSpec spec, std::unique_ptr<HttpTransport> transport);

  const std::string& id() const override { return config_.backend_id; }
  bool probabilistic() const override { return false; }
  std::size_t shots() const { return spec_.shots; }
  const std::string& prompt_template() const { return prompt_; }

 protected:
  Prediction do_classify(const Taxonomy& taxonomy, std::string_view text) override;

 private:
  BackendConfig config_;
  PromptSpec spec_;
  std::string prompt_;
  Url url_;
  std::unique_ptr<HttpTransport> transport_;
  InFlightLimiter limiter_;
};

// Sends one chat-completion request and returns the message content.
std::string chat_completion(HttpTransport& transport, const BackendConfig& config,
                            const std::string& path, const std::string& prompt,
                            double temperature);

// Reads exemplars from a dataset export file (tacos-dataset/1).
std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);

// Builds any backend. `taxonomy` is the active taxonomy (prompt subsets are
// restricted from it). Relative files resolve against base_dir.
std::unique_ptr<Classifier> make_classifier(const BackendConfig& config, const Taxonomy& taxonomy,
                                            const std::filesystem::path& base_dir = {});

}  // namespace tacos
