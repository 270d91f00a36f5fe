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

#include "tacos/routing.hpp"

#include <yaml-cpp/yaml.h>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::pair<RoutingAction, std::string_view> kActionNames[] = {
    {RoutingAction::kBlockWithWarning, "block_with_warning"},
    {RoutingAction::kSafeRefusalWithDisclaimer, "safe_refusal_with_disclaimer"},
    {RoutingAction::kEmpathyResponse, "empathy_response"},
    {RoutingAction::kFollowUpElicitation, "follow_up_elicitation"},
    {RoutingAction::kReformulationRedirect, "reformulation_redirect"},
    {RoutingAction::kAnswerDirect, "answer_direct"},
    {RoutingAction::kAnswerWithTools, "answer_with_tools"},
};

std::string where(std::string_view source, const YAML::Node& node) {
  return std::string(source) + ":" + std::to_string(node.Mark().line + 1);
}

YAML::Node parse_yaml(std::string_view document, std::string_view source_name) {
  try {
    return YAML::Load(std::string(document));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kParse, e.msg,
                std::string(source_name) + ":" + std::to_string(e.mark.line + 1));
  }
}

}  // namespace

std::string_view to_string(RoutingAction action) {
  for (const auto& [a, name] : kActionNames) {
    if (a == action) return name;
  }
  return "block_with_warning";
}

std::optional<RoutingAction> parse_routing_action(std::string_view name) {
  for (const auto& [a, n] : kActionNames) {
    if (n == name) return a;
  }
  return std::nullopt;
}

RoutingPolicy load_policy(std::string_view document, std::string_view source_name) {
  YAML::Node root = parse_yaml(document, source_name);
  if (!root.IsMap() || !root["rules"] || !root["rules"].IsMap()) {
    throw Error(ErrorCode::kParse, "policy needs a 'rules' map", std::string(source_name));
  }
  if (root["schema"] && root["schema"].as<std::string>() != "tacos-policy/1") {
    throw Error(ErrorCode::kParse, "unsupported schema", where(source_name, root["schema"]));
  }
  RoutingPolicy policy;
  policy.version = root["version"] ? root["version"].as<std::string>() : "unversioned";
  for (const auto& kv : root["rules"]) {
    const YAML::Node& rule_node = kv.second;
    std::string label = kv.first.as<std::string>();
    std::string loc = where(source_name, rule_node);
    if (!rule_node.IsMap() || !rule_node["action"] || !rule_node["template"]) {
      throw Error(ErrorCode::kParse, "rule for '" + label + "' needs action and template", loc);
    }
    auto action = parse_routing_action(rule_node["action"].as<std::string>());
    if (!action) {
      throw Error(ErrorCode::kParse,
                  "unknown action '" + rule_node["action"].as<std::string>() + "'", loc);
    }
    RoutingRule rule;
    rule.action = *action;
    rule.message_template_id = rule_node["template"].as<std::string>();
    rule.log_unsafe = rule_node["log_unsafe"] ? rule_node["log_unsafe"].as<bool>() : false;
    if (!policy.rules.emplace(label, std::move(rule)).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate rule for '" + label + "'", loc);
    }
  }
  return policy;
}

RoutingPolicy load_policy_file(const std::filesystem::path& path) {
  return load_policy(read_file(path), path.string());
}

void validate_policy(const RoutingPolicy& policy, const Taxonomy& taxonomy) {
  for (const auto& leaf : taxonomy.leaves()) {
    auto it = policy.rules.find(leaf.id);
    if (it == policy.rules.end()) {
      throw Error(ErrorCode::kConfig, "policy has no rule for leaf", leaf.id);
    }
    const RoutingRule& rule = it->second;
    if (leaf.path.safety == Safety::kUnsafe &&
        (rule.action != RoutingAction::kBlockWithWarning || !rule.log_unsafe)) {
      throw Error(ErrorCode::kConfig, "unsafe leaves must block_with_warning and log", leaf.id);
    }
    if (rule.action == RoutingAction::kAnswerWithTools) {
      auto tools = tool_requirements(taxonomy, leaf.id);
      if (!tools || tools->empty()) {
        throw Error(ErrorCode::kConfig,
                    "answer_with_tools needs a leaf with non-empty tool requirements", leaf.id);
      }
    }
  }
}

RoutingDecision fail_closed_decision(std::string reason) {
  RoutingDecision decision;
  decision.action = RoutingAction::kBlockWithWarning;
  decision.message_template_id = std::string(kClassificationFailureTemplate);
  decision.error = std::move(reason);
  return decision;
}

RoutingDecision route(const Taxonomy& taxonomy, const RoutingPolicy& policy,
                      std::string_view label_id) {
  RoutingDecision decision;
  decision.label_id = std::string(label_id);
  auto index = taxonomy.index_of(label_id);
  auto rule = policy.rules.find(decision.label_id);
  if (!index || rule == policy.rules.end()) {
    decision.action = RoutingAction::kBlockWithWarning;
    decision.message_template_id = std::string(kGenericBlockTemplate);
    decision.error = index ? "label missing from routing policy" : "label not in taxonomy";
    return decision;
  }
  const ClassLabel& leaf = taxonomy.leaf(*index);
  decision.action = rule->second.action;
  decision.message_template_id = rule->second.message_template_id;
  decision.log_unsafe = rule->second.log_unsafe;
  if (leaf.path.safety == Safety::kUnsafe) {
    // Never let a misconfigured rule answer an unsafe query.
    decision.action = RoutingAction::kBlockWithWarning;
    decision.log_unsafe = true;
  }
  if (decision.action == RoutingAction::kAnswerWithTools) {
    auto tools = tool_requirements(taxonomy, leaf.id);
    if (!tools || tools->empty()) {
      decision.action = RoutingAction::kBlockWithWarning;
      decision.message_template_id = std::string(kGenericBlockTemplate);
      decision.error = "answer_with_tools on a leaf without tool requirements";
      return decision;
    }
    decision.tools = *tools;
  }
  return decision;
}

MessageTemplates::MessageTemplates(std::string default_locale,
                                   std::map<std::string, std::map<std::string, std::string>> texts)
    : default_locale_(std::move(default_locale)), texts_(texts.begin(), texts.end()) {
  for (const auto& [id, by_locale] : texts_) {
    if (by_locale.count(default_locale_) == 0) {
      throw Error(ErrorCode::kConfig, "template lacks default-locale text", id);
    }
  }
}

bool MessageTemplates::contains(std::string_view template_id) const {
  return texts_.find(template_id) != texts_.end();
}

const std::string& MessageTemplates::resolve(std::string_view template_id,
                                             std::string_view locale) const {
  auto it = texts_.find(template_id);
  if (it == texts_.end()) {
    throw Error(ErrorCode::kNotFound, "unknown message template", std::string(template_id));
  }
  if (!locale.empty()) {
    auto text = it->second.find(std::string(locale));
    if (text != it->second.end()) return text->second;
  }
  return it->second.at(default_locale_);
}

MessageTemplates load_templates(std::string_view document, std::string_view source_name) {
  YAML::Node root = parse_yaml(document, source_name);
  if (!root.IsMap() || !root["templates"] || !root["templates"].IsMap()) {
    throw Error(ErrorCode::kParse, "template file needs a 'templates' map",
                std::string(source_name));
  }
  std::string default_locale =
      root["default_locale"] ? root["default_locale"].as<std::string>() : "en";
  std::map<std::string, std::map<std::string, std::string>> texts;
  for (const auto& kv : root["templates"]) {
    if (!kv.second.IsMap()) {
      throw Error(ErrorCode::kParse, "template must map locale -> text",
                  where(source_name, kv.second));
    }
    auto& by_locale = texts[kv.first.as<std::string>()];
    for (const auto& text : kv.second) {
      by_locale[text.first.as<std::string>()] = text.second.as<std::string>();
    }
  }
  return MessageTemplates(std::move(default_locale), std::move(texts));
}

MessageTemplates load_templates_file(const std::filesystem::path& path) {
  return load_templates(read_file(path), path.string());
}

void validate_templates(const MessageTemplates& templates, const RoutingPolicy& policy) {
  for (auto id : {kGenericBlockTemplate, kClassificationFailureTemplate}) {
    if (!templates.contains(id)) {
      throw Error(ErrorCode::kConfig, "missing fail-closed template", std::string(id));
    }
  }
  for (const auto& [label, rule] : policy.rules) {
    if (!templates.contains(rule.message_template_id)) {
      throw Error(ErrorCode::kConfig, "template '" + rule.message_template_id + "' not defined",
                  label);
    }
  }
}

}  // namespace tacos
