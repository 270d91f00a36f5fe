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

#include "tacos/taxonomy.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <sstream>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

std::string_view to_string(Safety v) { return v == Safety::kSafe ? "safe" : "unsafe"; }

std::string_view to_string(Clinicality v) {
  return v == Clinicality::kClinical ? "clinical" : "non_clinical";
}

std::string_view to_string(Seeking v) {
  switch (v) {
    case Seeking::kInformationSeeking: return "information_seeking";
    case Seeking::kNonInformationSeeking: return "non_information_seeking";
    case Seeking::kNotApplicable: return "not_applicable";
  }
  return "not_applicable";
}

bool is_valid_path(const LabelPath& path) {
  bool needs_na = path.safety == Safety::kUnsafe ||
                  path.clinicality == Clinicality::kNonClinical;
  return needs_na == (path.seeking == Seeking::kNotApplicable);
}

std::string_view to_string(ToolRequirement t) {
  switch (t) {
    case ToolRequirement::kPatientRecord: return "patient_record";
    case ToolRequirement::kMedicalKnowledge: return "medical_knowledge";
    case ToolRequirement::kAppApi: return "app_api";
  }
  return "";
}

std::optional<ToolRequirement> parse_tool_requirement(std::string_view name) {
  if (name == "patient_record") return ToolRequirement::kPatientRecord;
  if (name == "medical_knowledge") return ToolRequirement::kMedicalKnowledge;
  if (name == "app_api") return ToolRequirement::kAppApi;
  return std::nullopt;
}

ToolSet::ToolSet(std::initializer_list<ToolRequirement> tools) {
  for (auto t : tools) insert(t);
}

std::size_t ToolSet::size() const {
  return static_cast<std::size_t>(__builtin_popcount(bits_));
}

std::vector<ToolRequirement> ToolSet::items() const {
  std::vector<ToolRequirement> out;
  for (auto t : {ToolRequirement::kPatientRecord, ToolRequirement::kMedicalKnowledge,
                 ToolRequirement::kAppApi}) {
    if (contains(t)) out.push_back(t);
  }
  return out;
}

Taxonomy::Taxonomy(std::vector<ClassLabel> leaves, std::string version,
                   std::string source_digest, std::string default_locale)
    : leaves_(std::move(leaves)),
      version_(std::move(version)),
      source_digest_(std::move(source_digest)),
      default_locale_(std::move(default_locale)) {
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (!index_.emplace(leaves_[i].id, i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate leaf id", leaves_[i].id);
    }
  }
}

bool Taxonomy::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

std::optional<std::size_t> Taxonomy::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Taxonomy::require_index(std::string_view id) const {
  auto index = index_of(id);
  if (!index) throw Error(ErrorCode::kUnknownLabel, "label not in taxonomy", std::string(id));
  return *index;
}

const ClassLabel& Taxonomy::at(std::string_view id) const {
  return leaves_[require_index(id)];
}

std::vector<std::string> Taxonomy::ids() const {
  std::vector<std::string> out;
  out.reserve(leaves_.size());
  for (const auto& leaf : leaves_) out.push_back(leaf.id);
  return out;
}

const std::string& Taxonomy::description(const ClassLabel& leaf,
                                         std::string_view locale) const {
  if (!locale.empty()) {
    auto it = leaf.description.find(std::string(locale));
    if (it != leaf.description.end()) return it->second;
  }
  return leaf.description.at(default_locale_);
}

const std::vector<std::string>& Taxonomy::examples(const ClassLabel& leaf,
                                                   std::string_view locale) const {
  if (!locale.empty()) {
    auto it = leaf.examples.find(std::string(locale));
    if (it != leaf.examples.end()) return it->second;
  }
  return leaf.examples.at(default_locale_);
}

bool Taxonomy::operator==(const Taxonomy& other) const {
  return leaves_ == other.leaves_ && version_ == other.version_ &&
         source_digest_ == other.source_digest_ &&
         default_locale_ == other.default_locale_;
}

namespace {

std::string where(std::string_view source, const YAML::Node& node) {
  const YAML::Mark mark = node.Mark();
  if (mark.line < 0) return std::string(source);
  return std::string(source) + ":" + std::to_string(mark.line + 1);
}

std::string scalar(const YAML::Node& node, std::string_view key, std::string_view source) {
  YAML::Node value = node[std::string(key)];
  if (!value || !value.IsScalar() || value.as<std::string>().empty()) {
    throw Error(ErrorCode::kParse, "missing or non-scalar field '" + std::string(key) + "'",
                where(source, node));
  }
  return value.as<std::string>();
}

// Accepts either a plain scalar (default locale) or a locale -> text map.
std::map<std::string, std::string> localized_text(const YAML::Node& node,
                                                  const std::string& default_locale,
                                                  std::string_view source) {
  std::map<std::string, std::string> out;
  if (!node) return out;
  if (node.IsScalar()) {
    out[default_locale] = node.as<std::string>();
  } else if (node.IsMap()) {
    for (const auto& kv : node) {
      if (!kv.second.IsScalar()) {
        throw Error(ErrorCode::kParse, "localized text must be a string", where(source, kv.second));
      }
      out[kv.first.as<std::string>()] = kv.second.as<std::string>();
    }
  } else {
    throw Error(ErrorCode::kParse, "expected text or locale map", where(source, node));
  }
  return out;
}

std::vector<std::string> string_list(const YAML::Node& node, std::string_view source) {
  if (!node.IsSequence()) {
    throw Error(ErrorCode::kParse, "expected a list of strings", where(source, node));
  }
  std::vector<std::string> out;
  for (const auto& item : node) {
    if (!item.IsScalar()) throw Error(ErrorCode::kParse, "expected string", where(source, item));
    out.push_back(item.as<std::string>());
  }
  return out;
}

std::map<std::string, std::vector<std::string>> localized_examples(
    const YAML::Node& node, const std::string& default_locale, std::string_view source) {
  std::map<std::string, std::vector<std::string>> out;
  if (!node) return out;
  if (node.IsSequence()) {
    out[default_locale] = string_list(node, source);
  } else if (node.IsMap()) {
    for (const auto& kv : node) out[kv.first.as<std::string>()] = string_list(kv.second, source);
  } else {
    throw Error(ErrorCode::kParse, "examples must be a list or locale map", where(source, node));
  }
  return out;
}

LabelPath parse_path(const YAML::Node& node, std::string_view source) {
  std::string loc = where(source, node);
  if (!node || !node.IsSequence() || node.size() != 3) {
    throw Error(ErrorCode::kInvalidPath, "path must be [safety, clinicality, seeking]", loc);
  }
  LabelPath path;
  std::string safety = node[0].as<std::string>();
  std::string clinicality = node[1].as<std::string>();
  std::string seeking = node[2].as<std::string>();
  if (safety == "safe") path.safety = Safety::kSafe;
  else if (safety == "unsafe") path.safety = Safety::kUnsafe;
  else throw Error(ErrorCode::kInvalidPath, "unknown safety '" + safety + "'", loc);
  if (clinicality == "clinical") path.clinicality = Clinicality::kClinical;
  else if (clinicality == "non_clinical") path.clinicality = Clinicality::kNonClinical;
  else throw Error(ErrorCode::kInvalidPath, "unknown clinicality '" + clinicality + "'", loc);
  if (seeking == "information_seeking") path.seeking = Seeking::kInformationSeeking;
  else if (seeking == "non_information_seeking") path.seeking = Seeking::kNonInformationSeeking;
  else if (seeking == "not_applicable") path.seeking = Seeking::kNotApplicable;
  else throw Error(ErrorCode::kInvalidPath, "unknown seeking '" + seeking + "'", loc);
  if (!is_valid_path(path)) {
    throw Error(ErrorCode::kInvalidPath,
                "seeking must be not_applicable exactly for unsafe or non_clinical paths", loc);
  }
  return path;
}

bool is_snake_case(std::string_view id) {
  if (id.empty() || id.front() == '_' || id.back() == '_') return false;
  for (char c : id) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return true;
}

Taxonomy load_taxonomy_unchecked(std::string_view document, std::string_view source_name) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(document));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kParse, e.msg,
                std::string(source_name) + ":" + std::to_string(e.mark.line + 1));
  }
  if (!root.IsMap()) throw Error(ErrorCode::kParse, "document must be a map", std::string(source_name));
  if (root["schema"] && root["schema"].as<std::string>() != "tacos-taxonomy/1") {
    throw Error(ErrorCode::kParse, "unsupported schema", where(source_name, root["schema"]));
  }
  std::string version = scalar(root, "version", source_name);
  std::string default_locale =
      root["default_locale"] ? root["default_locale"].as<std::string>() : "en";
  YAML::Node leaves_node = root["leaves"];
  if (!leaves_node || !leaves_node.IsSequence() || leaves_node.size() == 0) {
    throw Error(ErrorCode::kParse, "'leaves' must be a non-empty list", where(source_name, root));
  }

  std::vector<ClassLabel> leaves;
  std::set<std::string> seen;
  for (const auto& node : leaves_node) {
    if (!node.IsMap()) throw Error(ErrorCode::kParse, "leaf must be a map", where(source_name, node));
    ClassLabel leaf;
    leaf.id = scalar(node, "id", source_name);
    std::string loc = where(source_name, node);
    if (!is_snake_case(leaf.id)) {
      throw Error(ErrorCode::kParse, "id '" + leaf.id + "' is not lowercase snake_case", loc);
    }
    if (!seen.insert(leaf.id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate leaf id '" + leaf.id + "'", loc);
    }
    leaf.display_name = node["display_name"] ? node["display_name"].as<std::string>() : leaf.id;
    leaf.path = parse_path(node["path"], source_name);
    leaf.description = localized_text(node["description"], default_locale, source_name);
    leaf.prompt_description = localized_text(node["prompt_description"], default_locale, source_name);
    leaf.examples = localized_examples(node["examples"], default_locale, source_name);
    if (leaf.description.count(default_locale) == 0 || leaf.description[default_locale].empty()) {
      throw Error(ErrorCode::kParse, "leaf '" + leaf.id + "' lacks a default-locale description", loc);
    }
    if (leaf.examples[default_locale].empty()) {
      throw Error(ErrorCode::kParse, "leaf '" + leaf.id + "' needs at least one example", loc);
    }
    auto tools = tool_set_from_id(leaf.id);
    bool is_seeking = leaf.path.seeking == Seeking::kInformationSeeking;
    if (is_seeking != tools.has_value()) {
      throw Error(ErrorCode::kInvalidPath,
                  "information_seeking leaves must be exactly the '<subset>_inquiry' ids ('" +
                      leaf.id + "')",
                  loc);
    }
    leaves.push_back(std::move(leaf));
  }
  return Taxonomy(std::move(leaves), std::move(version), sha256_hex(document),
                  std::move(default_locale));
}

}  // namespace

Taxonomy load_taxonomy(std::string_view document, std::string_view source_name) {
  try {
    return load_taxonomy_unchecked(document, source_name);
  } catch (const YAML::Exception& e) {
    // Type conversions (as<>) inside well-formed YAML.
    throw Error(ErrorCode::kParse, e.msg,
                std::string(source_name) + ":" + std::to_string(e.mark.line + 1));
  }
}

Taxonomy load_taxonomy_file(const std::filesystem::path& path) {
  return load_taxonomy(read_file(path), path.string());
}

std::array<std::size_t, 5> bucket_counts(const Taxonomy& taxonomy) {
  std::array<std::size_t, 5> counts{};
  for (const auto& leaf : taxonomy.leaves()) {
    const auto& p = leaf.path;
    if (p.safety == Safety::kUnsafe) {
      ++counts[p.clinicality == Clinicality::kNonClinical ? 0 : 1];
    } else if (p.clinicality == Clinicality::kNonClinical) {
      ++counts[2];
    } else {
      ++counts[p.seeking == Seeking::kNonInformationSeeking ? 3 : 4];
    }
  }
  return counts;
}

void validate_canonical(const Taxonomy& taxonomy) {
  constexpr std::array<std::size_t, 5> kExpected{5, 4, 2, 2, 8};
  auto counts = bucket_counts(taxonomy);
  if (taxonomy.size() != 21 || counts != kExpected) {
    std::ostringstream msg;
    msg << "expected 21 leaves partitioned (5,4,2,2,8), got " << taxonomy.size() << " (";
    for (std::size_t i = 0; i < counts.size(); ++i) msg << (i ? "," : "") << counts[i];
    msg << ")";
    throw Error(ErrorCode::kConfig, msg.str(), taxonomy.version());
  }
}

std::optional<ToolSet> tool_set_from_id(std::string_view id) {
  constexpr std::string_view kSuffix = "_inquiry";
  if (id == "general_inquiry") return ToolSet{};
  if (id.size() <= kSuffix.size() || id.substr(id.size() - kSuffix.size()) != kSuffix) {
    return std::nullopt;
  }
  std::string_view rest = id.substr(0, id.size() - kSuffix.size());
  ToolSet tools;
  int last = -1;
  while (!rest.empty()) {
    std::size_t cut = rest.find('_');
    std::string_view token = rest.substr(0, cut);
    rest = cut == std::string_view::npos ? std::string_view{} : rest.substr(cut + 1);
    int rank;
    if (token == "patient") rank = 0;
    else if (token == "medical") rank = 1;
    else if (token == "app") rank = 2;
    else return std::nullopt;
    // Components appear once each, in patient < medical < app order.
    if (rank <= last) return std::nullopt;
    last = rank;
    tools.insert(static_cast<ToolRequirement>(rank));
  }
  if (tools.empty()) return std::nullopt;
  return tools;
}

std::string id_from_tool_set(const ToolSet& tools) {
  if (tools.empty()) return "general_inquiry";
  std::string id;
  if (tools.contains(ToolRequirement::kPatientRecord)) id += "patient_";
  if (tools.contains(ToolRequirement::kMedicalKnowledge)) id += "medical_";
  if (tools.contains(ToolRequirement::kAppApi)) id += "app_";
  return id + "inquiry";
}

std::optional<ToolSet> tool_requirements(const Taxonomy& taxonomy, std::string_view label_id) {
  const ClassLabel& leaf = taxonomy.at(label_id);
  if (leaf.path.seeking != Seeking::kInformationSeeking) return std::nullopt;
  return tool_set_from_id(leaf.id);
}

LabelMapping::LabelMapping(std::string name,
                           std::vector<std::pair<std::string, std::string>> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].first, i).second) {
      throw Error(ErrorCode::kDuplicateId, "mapping source appears twice", entries_[i].first);
    }
  }
}

std::optional<std::string_view> LabelMapping::target(std::string_view source) const {
  auto it = index_.find(std::string(source));
  if (it == index_.end()) return std::nullopt;
  return std::string_view(entries_[it->second].second);
}

const std::string& LabelMapping::map(std::string_view source) const {
  auto it = index_.find(std::string(source));
  if (it == index_.end()) {
    throw Error(ErrorCode::kUnknownLabel, "label not in mapping '" + name_ + "'",
                std::string(source));
  }
  return entries_[it->second].second;
}

std::set<std::string> LabelMapping::targets() const {
  std::set<std::string> out;
  for (const auto& [s, t] : entries_) out.insert(t);
  return out;
}

void LabelMapping::validate(const Taxonomy& source, const Taxonomy& target) const {
  for (const auto& leaf : source.leaves()) {
    if (index_.count(leaf.id) == 0) {
      throw Error(ErrorCode::kConfig, "mapping '" + name_ + "' is not total", leaf.id);
    }
  }
  for (const auto& [s, t] : entries_) {
    if (!source.contains(s)) {
      throw Error(ErrorCode::kUnknownLabel, "mapping source not in source taxonomy", s);
    }
    if (!target.contains(t)) {
      throw Error(ErrorCode::kUnknownLabel, "mapping target not in target taxonomy", t);
    }
  }
}

LabelMapping identity_mapping(const Taxonomy& taxonomy) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& leaf : taxonomy.leaves()) entries.emplace_back(leaf.id, leaf.id);
  return LabelMapping("identity", std::move(entries));
}

LabelMapping parse_label_mapping(std::string_view text, std::string name,
                                 std::string_view source_name) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string source, target, extra;
    if (!(fields >> source)) continue;
    std::string loc = std::string(source_name) + ":" + std::to_string(line_no);
    if (!(fields >> target) || (fields >> extra)) {
      throw Error(ErrorCode::kParse, "expected exactly two columns", loc);
    }
    entries.emplace_back(std::move(source), std::move(target));
  }
  try {
    return LabelMapping(std::move(name), std::move(entries));
  } catch (const Error& e) {
    throw Error(e.code(), e.message(), std::string(source_name) + ": " + e.location());
  }
}

LabelMapping load_label_mapping_file(const std::filesystem::path& path) {
  return parse_label_mapping(read_file(path), path.stem().string(), path.string());
}

std::vector<std::string> collapse_labels(const LabelMapping& mapping,
                                         std::span<const std::string> labels) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& label : labels) out.push_back(mapping.map(label));
  return out;
}

Taxonomy restrict_taxonomy(const Taxonomy& taxonomy, const std::set<std::string>& leaf_ids,
                           std::string_view subset_name) {
  if (leaf_ids.empty()) throw Error(ErrorCode::kEmptySubset, "empty leaf subset");
  for (const auto& id : leaf_ids) {
    if (!taxonomy.contains(id)) throw Error(ErrorCode::kUnknownLabel, "unknown leaf in subset", id);
  }
  if (leaf_ids.size() == taxonomy.size()) return taxonomy;
  std::vector<ClassLabel> leaves;
  for (const auto& leaf : taxonomy.leaves()) {
    if (leaf_ids.count(leaf.id)) leaves.push_back(leaf);
  }
  return Taxonomy(std::move(leaves), taxonomy.version() + "+" + std::string(subset_name),
                  taxonomy.source_digest(), taxonomy.default_locale());
}

std::set<std::string> information_seeking_ids(const Taxonomy& taxonomy) {
  std::set<std::string> out;
  for (const auto& leaf : taxonomy.leaves()) {
    if (leaf.path.seeking == Seeking::kInformationSeeking) out.insert(leaf.id);
  }
  return out;
}

}  // namespace tacos
