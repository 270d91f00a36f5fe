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

#include "tacos/classifier.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

Prediction Classifier::classify(const Taxonomy& taxonomy, std::string_view text) {
  auto start = std::chrono::steady_clock::now();
  Prediction prediction = do_classify(taxonomy, text);
  prediction.latency_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  prediction.backend_id = id();
  validate_prediction(prediction, taxonomy, probabilistic());
  return prediction;
}

// ---------------------------------------------------------------------------

KeywordRules load_keyword_rules(std::string_view document, std::string_view source_name) {
  nlohmann::json root = yaml_to_json(document, source_name);
  if (!root.is_object() || !root.contains("rules") || !root["rules"].is_array() ||
      !root.contains("fallback")) {
    throw Error(ErrorCode::kParse, "keyword rules need 'rules' and 'fallback'",
                std::string(source_name));
  }
  KeywordRules out;
  out.fallback_label = root["fallback"].get<std::string>();
  for (const auto& rule : root["rules"]) {
    KeywordRule r;
    r.label_id = rule.at("label").get<std::string>();
    for (const auto& phrase : rule.at("phrases")) {
      r.phrases.push_back(fold_case(normalize_text(phrase.get<std::string>())));
    }
    out.rules.push_back(std::move(r));
  }
  return out;
}

KeywordRules load_keyword_rules_file(const std::filesystem::path& path) {
  return load_keyword_rules(read_file(path), path.string());
}

KeywordClassifier::KeywordClassifier(std::string id, KeywordRules rules)
    : id_(std::move(id)), rules_(std::move(rules)) {}

const std::string& KeywordClassifier::match(std::string_view text) const {
  std::string folded = fold_case(normalize_text(text));
  for (const auto& rule : rules_.rules) {
    for (const auto& phrase : rule.phrases) {
      if (!phrase.empty() && folded.find(phrase) != std::string::npos) return rule.label_id;
    }
  }
  return rules_.fallback_label;
}

Prediction KeywordClassifier::do_classify(const Taxonomy& taxonomy, std::string_view text) {
  return one_hot_prediction(taxonomy, match(text), id_);
}

// ---------------------------------------------------------------------------

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kKeyword: return "keyword";
    case BackendKind::kEncoder: return "encoder";
    case BackendKind::kPrompt: return "prompt";
  }
  return "keyword";
}

RetryOptions BackendConfig::retry_options() const {
  RetryOptions options;
  options.max_retries = retries;
  options.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000.0));
  return options;
}

BackendConfig parse_backend_config(const nlohmann::json& node) {
  BackendConfig c;
  try {
    c.backend_id = node.at("id").get<std::string>();
    std::string kind = node.at("kind").get<std::string>();
    if (kind == "keyword") c.kind = BackendKind::kKeyword;
    else if (kind == "encoder") c.kind = BackendKind::kEncoder;
    else if (kind == "prompt") c.kind = BackendKind::kPrompt;
    else throw Error(ErrorCode::kConfig, "unknown backend kind '" + kind + "'", c.backend_id);
    c.endpoint = node.value("endpoint", "");
    c.model = node.value("model", "");
    c.api_key_env = node.value("api_key_env", "");
    c.timeout_seconds = node.value("timeout", 30.0);
    c.retries = node.value("retries", 2);
    c.parse_retries = node.value("parse_retries", 2);
    c.max_in_flight = node.value("max_in_flight", 8);
    c.shots = node.value("shots", std::size_t{0});
    c.seed = node.value("seed", std::uint64_t{0});
    c.rules_file = node.value("rules", "");
    c.exemplar_file = node.value("exemplars", "");
    if (node.contains("subset")) c.subset = node["subset"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what(), node.value("id", "<backend>"));
  }
  if (c.kind != BackendKind::kKeyword && c.endpoint.empty()) {
    throw Error(ErrorCode::kConfig, "remote backend needs an endpoint", c.backend_id);
  }
  return c;
}

nlohmann::json to_json(const BackendConfig& c) {
  nlohmann::json out{{"id", c.backend_id}, {"kind", to_string(c.kind)}};
  if (!c.endpoint.empty()) out["endpoint"] = c.endpoint;
  if (!c.model.empty()) out["model"] = c.model;
  if (c.kind == BackendKind::kPrompt) {
    out["shots"] = c.shots;
    out["seed"] = c.seed;
  }
  return out;
}

namespace {

std::map<std::string, std::string> auth_headers(const BackendConfig& config) {
  std::map<std::string, std::string> headers;
  if (!config.api_key_env.empty()) {
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  return headers;
}

nlohmann::json parse_body(const HttpResponse& response, const std::string& where) {
  if (response.status < 200 || response.status >= 300) {
    throw Error(ErrorCode::kTransport, "HTTP " + std::to_string(response.status), where);
  }
  nlohmann::json body = nlohmann::json::parse(response.body, nullptr, false);
  if (body.is_discarded()) {
    throw Error(ErrorCode::kClassificationFailure, "response is not JSON", where);
  }
  return body;
}

}  // namespace

EncoderClassifier::EncoderClassifier(BackendConfig config, std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      url_(parse_url(config_.endpoint)),
      transport_(std::move(transport)),
      limiter_(config_.max_in_flight) {}

Prediction EncoderClassifier::do_classify(const Taxonomy& taxonomy, std::string_view text) {
  nlohmann::json request{{"text", std::string(text)}};
  HttpResponse response;
  {
    InFlightLimiter::Guard guard(limiter_);
    response = post_with_retry(*transport_, url_.path, request.dump(), auth_headers(config_),
                               config_.retry_options());
  }
  nlohmann::json body = parse_body(response, config_.endpoint);
  if (!body.contains("scores") || !body["scores"].is_array()) {
    throw Error(ErrorCode::kClassificationFailure, "response lacks a scores array",
                config_.backend_id);
  }
  std::vector<double> scores;
  for (const auto& s : body["scores"]) {
    if (!s.is_number()) {
      throw Error(ErrorCode::kClassificationFailure, "non-numeric score", config_.backend_id);
    }
    scores.push_back(s.get<double>());
  }
  return prediction_from_scores(taxonomy, std::move(scores), config_.backend_id);
}

// ---------------------------------------------------------------------------

std::vector<Exemplar> select_exemplars(const PromptSpec& spec) {
  const Taxonomy& taxonomy = spec.taxonomy;
  std::vector<std::vector<Exemplar>> per_class(taxonomy.size());
  for (const auto& exemplar : spec.pool) {
    if (auto index = taxonomy.index_of(exemplar.label_id)) per_class[*index].push_back(exemplar);
  }
  Rng rng(spec.seed);
  std::size_t available = 0;
  for (auto& items : per_class) {
    // Pool order must not matter: sort, dedup, then shuffle under the seed.
    std::sort(items.begin(), items.end(), [](const Exemplar& a, const Exemplar& b) {
      return a.text != b.text ? a.text < b.text : a.label_id < b.label_id;
    });
    items.erase(std::unique(items.begin(), items.end(),
                            [](const Exemplar& a, const Exemplar& b) {
                              return a.text == b.text && a.label_id == b.label_id;
                            }),
                items.end());
    rng.shuffle(items);
    available += items.size();
  }
  if (available < spec.shots) {
    throw Error(ErrorCode::kInsufficientExemplars,
                "need " + std::to_string(spec.shots) + " exemplars, pool has " +
                    std::to_string(available));
  }
  std::vector<Exemplar> selected;
  selected.reserve(spec.shots);
  for (std::size_t round = 0; selected.size() < spec.shots; ++round) {
    for (const auto& items : per_class) {
      if (selected.size() == spec.shots) break;
      if (round < items.size()) selected.push_back(items[round]);
    }
  }
  rng.shuffle(selected);
  return selected;
}

std::string build_prompt(const PromptSpec& spec) {
  const Taxonomy& taxonomy = spec.taxonomy;
  std::string locale = spec.locale.empty() ? taxonomy.default_locale() : spec.locale;
  std::string out;
  out += "Assign the user message below to one of " + std::to_string(taxonomy.size()) +
         " intent categories of a healthcare assistant.\n";
  out += "Judge by what the user is trying to do, not by the topic words alone.\n";
  out += "Reply with a single category name (for example \"" + taxonomy.leaf(0).display_name +
         "\") and nothing else.\n";
  out += "Categories:\n\n";
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const ClassLabel& leaf = taxonomy.leaf(i);
    const std::string* definition = nullptr;
    if (auto it = leaf.prompt_description.find(locale); it != leaf.prompt_description.end()) {
      definition = &it->second;
    } else if (auto fallback = leaf.prompt_description.find(taxonomy.default_locale());
               fallback != leaf.prompt_description.end()) {
      definition = &fallback->second;
    } else {
      definition = &taxonomy.description(leaf, locale);
    }
    out += std::to_string(i + 1) + ". " + leaf.id + ": " + *definition + "\n";
  }
  std::vector<Exemplar> exemplars = select_exemplars(spec);
  if (!exemplars.empty()) {
    out += "\nExamples:\n";
    for (const auto& e : exemplars) out += normalize_text(e.text) + " → " + e.label_id + "\n";
  }
  out += "\nUse the category definitions above for the message below.\n";
  out += "Answer with the category name only.\n\n";
  out += "Message: ";
  out += kQuerySlot;
  out += "\n";
  return out;
}

std::string fill_prompt(std::string_view prompt, std::string_view query) {
  auto slot = prompt.rfind(kQuerySlot);
  if (slot == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "prompt has no query slot");
  }
  std::string out(prompt.substr(0, slot));
  out += query;
  out += prompt.substr(slot + kQuerySlot.size());
  return out;
}

namespace {

std::string canonical_class_token(std::string_view raw) {
  std::string text = normalize_text(raw);
  auto strippable_edge = [](char c) {
    return c == '"' || c == '\'' || c == '`' || c == '*' || c == '.' || c == ',' || c == ';' ||
           c == ':' || c == '!' || c == '?' || c == ' ';
  };
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && strippable_edge(text[begin]) && text[begin] != '.') ++begin;
  while (end > begin && strippable_edge(text[end - 1])) --end;
  std::string folded = fold_case(std::string_view(text).substr(begin, end - begin));
  std::string out;
  for (char c : folded) {
    char mapped = (c == ' ' || c == '-') ? '_' : c;
    if (mapped == '_' && !out.empty() && out.back() == '_') continue;
    out.push_back(mapped);
  }
  return out;
}

}  // namespace

std::optional<std::string> try_parse_class_response(const Taxonomy& subset, std::string_view raw) {
  std::string token = canonical_class_token(raw);
  if (token.empty()) return std::nullopt;
  std::set<std::string> matches;
  for (const auto& leaf : subset.leaves()) {
    if (token == leaf.id || token == canonical_class_token(leaf.display_name)) {
      matches.insert(leaf.id);
    }
  }
  if (matches.size() != 1) return std::nullopt;
  return *matches.begin();
}

std::string parse_class_response(const Taxonomy& subset, std::string_view raw) {
  auto label = try_parse_class_response(subset, raw);
  if (!label) {
    std::string shown(raw.substr(0, 80));
    throw Error(ErrorCode::kParseFailure, "no unique class in response '" + shown + "'");
  }
  return *label;
}

std::string chat_completion(HttpTransport& transport, const BackendConfig& config,
                            const std::string& path, const std::string& prompt,
                            double temperature) {
  nlohmann::json request{
      {"model", config.model},
      {"temperature", temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  HttpResponse response = post_with_retry(transport, path, request.dump(), auth_headers(config),
                                          config.retry_options());
  nlohmann::json body = parse_body(response, config.endpoint);
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kParseFailure, "response lacks choices[0].message.content",
                config.backend_id);
  }
}

PromptClassifier::PromptClassifier(BackendConfig config, PromptSpec spec,
                                   std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      spec_(std::move(spec)),
      prompt_(build_prompt(spec_)),
      url_(parse_url(config_.endpoint)),
      transport_(std::move(transport)),
      limiter_(config_.max_in_flight) {}

Prediction PromptClassifier::do_classify(const Taxonomy& taxonomy, std::string_view text) {
  std::string prompt = fill_prompt(prompt_, text);
  std::string last_reply;
  for (int attempt = 0; attempt <= config_.parse_retries; ++attempt) {
    {
      InFlightLimiter::Guard guard(limiter_);
      try {
        last_reply = chat_completion(*transport_, config_, url_.path, prompt, 0.0);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kParseFailure) throw;
        continue;
      }
    }
    if (auto label = try_parse_class_response(spec_.taxonomy, last_reply)) {
      return one_hot_prediction(taxonomy, *label, config_.backend_id);
    }
  }
  throw Error(ErrorCode::kClassificationFailure,
              "unparseable model response after " + std::to_string(config_.parse_retries + 1) +
                  " attempts",
              config_.backend_id);
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
  JsonLines lines = read_json_lines(path, "tacos-dataset/1");
  std::vector<Exemplar> out;
  for (const auto& record : lines.records) {
    if (!record.contains("text") || !record.contains("label_id")) continue;
    out.push_back({record["text"].get<std::string>(), record["label_id"].get<std::string>()});
  }
  return out;
}

std::unique_ptr<Classifier> make_classifier(const BackendConfig& config, const Taxonomy& taxonomy,
                                            const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::filesystem::path& p) {
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  switch (config.kind) {
    case BackendKind::kKeyword: {
      if (config.rules_file.empty()) {
        throw Error(ErrorCode::kConfig, "keyword backend needs a rules file", config.backend_id);
      }
      KeywordRules rules = load_keyword_rules_file(resolve(config.rules_file));
      for (const auto& rule : rules.rules) {
        if (!taxonomy.contains(rule.label_id)) {
          throw Error(ErrorCode::kConfig, "keyword rule label not in taxonomy", rule.label_id);
        }
      }
      if (!taxonomy.contains(rules.fallback_label)) {
        throw Error(ErrorCode::kConfig, "fallback label not in taxonomy", rules.fallback_label);
      }
      return std::make_unique<KeywordClassifier>(config.backend_id, std::move(rules));
    }
    case BackendKind::kEncoder:
      return std::make_unique<EncoderClassifier>(
          config, make_http_transport(parse_url(config.endpoint).base));
    case BackendKind::kPrompt: {
      PromptSpec spec{config.subset.empty()
                          ? taxonomy
                          : restrict_taxonomy(taxonomy,
                                              {config.subset.begin(), config.subset.end()},
                                              config.backend_id),
                      config.shots, config.seed, {}, {}};
      if (!config.exemplar_file.empty()) spec.pool = load_exemplars(resolve(config.exemplar_file));
      return std::make_unique<PromptClassifier>(
          config, std::move(spec), make_http_transport(parse_url(config.endpoint).base));
    }
  }
  throw Error(ErrorCode::kConfig, "unknown backend kind", config.backend_id);
}

}  // namespace tacos
