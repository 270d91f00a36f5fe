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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "tacos/taxonomy.hpp"

namespace tacos {

enum class RoutingAction {
  kBlockWithWarning,
  kSafeRefusalWithDisclaimer,
  kEmpathyResponse,
  kFollowUpElicitation,
  kReformulationRedirect,
  kAnswerDirect,
  kAnswerWithTools,
};

std::string_view to_string(RoutingAction action);
std::optional<RoutingAction> parse_routing_action(std::string_view name);
inline bool is_answer(RoutingAction a) {
  return a == RoutingAction::kAnswerDirect || a == RoutingAction::kAnswerWithTools;
}

struct RoutingRule {
  RoutingAction action = RoutingAction::kBlockWithWarning;
  std::string message_template_id;
  bool log_unsafe = false;

  bool operator==(const RoutingRule&) const = default;
};

struct RoutingPolicy {
  std::string version;
  std::map<std::string, RoutingRule> rules;
};

// Template used when a decision is produced by a fail-closed path.
inline constexpr std::string_view kGenericBlockTemplate = "generic_block";
inline constexpr std::string_view kClassificationFailureTemplate = "classification_failure";

RoutingPolicy load_policy(std::string_view document, std::string_view source_name = "<memory>");
RoutingPolicy load_policy_file(const std::filesystem::path& path);

// Throws kConfig when the policy is not usable with the taxonomy: a leaf
// without a rule, an unsafe leaf not blocked and logged, or answer_with_tools
// on a leaf without tool requirements.
void validate_policy(const RoutingPolicy& policy, const Taxonomy& taxonomy);

struct RoutingDecision {
  std::string label_id;
  RoutingAction action = RoutingAction::kBlockWithWarning;
  ToolSet tools;
  std::string message_template_id;
  bool log_unsafe = false;
  // Set when the decision came from a fail-closed path.
  std::optional<std::string> error;

  bool operator==(const RoutingDecision&) const = default;
};

// Pure and deterministic. A label missing from the taxonomy or policy yields
// a fail-closed block_with_warning with the generic template.
RoutingDecision route(const Taxonomy& taxonomy, const RoutingPolicy& policy,
                      std::string_view label_id);

// Decision used when classification itself failed.
RoutingDecision fail_closed_decision(std::string reason);

class MessageTemplates {
 public:
  MessageTemplates(std::string default_locale,
                   std::map<std::string, std::map<std::string, std::string>> texts);

  bool contains(std::string_view template_id) const;
  // Falls back to the default locale. Throws kNotFound.
  const std::string& resolve(std::string_view template_id, std::string_view locale = {}) const;
  const std::string& default_locale() const { return default_locale_; }

 private:
  std::string default_locale_;
  std::map<std::string, std::map<std::string, std::string>, std::less<>> texts_;
};

MessageTemplates load_templates(std::string_view document, std::string_view source_name = "<memory>");
MessageTemplates load_templates_file(const std::filesystem::path& path);
// Every template id the policy (and fail-closed paths) can emit must resolve.
void validate_templates(const MessageTemplates& templates, const RoutingPolicy& policy);

}  // namespace tacos
