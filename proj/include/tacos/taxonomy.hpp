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

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tacos {

enum class Safety { kSafe, kUnsafe };
enum class Clinicality { kClinical, kNonClinical };
enum class Seeking { kInformationSeeking, kNonInformationSeeking, kNotApplicable };

std::string_view to_string(Safety v);
std::string_view to_string(Clinicality v);
std::string_view to_string(Seeking v);

struct LabelPath {
  Safety safety = Safety::kSafe;
  Clinicality clinicality = Clinicality::kClinical;
  Seeking seeking = Seeking::kNotApplicable;

  bool operator==(const LabelPath&) const = default;
};

// seeking is not_applicable exactly when the path is unsafe or non-clinical.
bool is_valid_path(const LabelPath& path);

enum class ToolRequirement { kPatientRecord, kMedicalKnowledge, kAppApi };

std::string_view to_string(ToolRequirement t);
std::optional<ToolRequirement> parse_tool_requirement(std::string_view name);

// Set of external tools, iterated in enum order.
class ToolSet {
 public:
  ToolSet() = default;
  ToolSet(std::initializer_list<ToolRequirement> tools);

  void insert(ToolRequirement t) { bits_ |= bit(t); }
  bool contains(ToolRequirement t) const { return (bits_ & bit(t)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<ToolRequirement> items() const;
  unsigned bits() const { return bits_; }

  bool operator==(const ToolSet&) const = default;
  auto operator<=>(const ToolSet&) const = default;

 private:
  static unsigned bit(ToolRequirement t) { return 1u << static_cast<unsigned>(t); }
  unsigned bits_ = 0;
};

struct ClassLabel {
  std::string id;
  std::string display_name;
  LabelPath path;
  // locale -> text; the taxonomy's default locale is always present.
  std::map<std::string, std::string> description;
  std::map<std::string, std::vector<std::string>> examples;
  // Shorter definition used inside classification prompts; may be empty.
  std::map<std::string, std::string> prompt_description;

  bool operator==(const ClassLabel&) const = default;
};

// Immutable after load. Leaf order is the canonical index order for score
// vectors and confusion matrices.
class Taxonomy {
 public:
  Taxonomy(std::vector<ClassLabel> leaves, std::string version,
           std::string source_digest, std::string default_locale);

  std::size_t size() const { return leaves_.size(); }
  std::span<const ClassLabel> leaves() const { return leaves_; }
  const ClassLabel& leaf(std::size_t index) const { return leaves_.at(index); }
  const std::string& version() const { return version_; }
  const std::string& source_digest() const { return source_digest_; }
  const std::string& default_locale() const { return default_locale_; }

  bool contains(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  // Throws kUnknownLabel.
  std::size_t require_index(std::string_view id) const;
  const ClassLabel& at(std::string_view id) const;
  std::vector<std::string> ids() const;

  const std::string& description(const ClassLabel& leaf, std::string_view locale = {}) const;
  const std::vector<std::string>& examples(const ClassLabel& leaf,
                                           std::string_view locale = {}) const;

  bool operator==(const Taxonomy& other) const;

 private:
  std::vector<ClassLabel> leaves_;
  std::string version_;
  std::string source_digest_;
  std::string default_locale_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parses and validates a taxonomy definition document (YAML, see
// docs/formats.md). Errors carry "source:line" locations.
Taxonomy load_taxonomy(std::string_view document, std::string_view source_name = "<memory>");
Taxonomy load_taxonomy_file(const std::filesystem::path& path);

// Per-bucket leaf counts in the order unsafe/non_clinical, unsafe/clinical,
// safe/non_clinical, safe/clinical/non_information_seeking,
// safe/clinical/information_seeking.
std::array<std::size_t, 5> bucket_counts(const Taxonomy& taxonomy);
// Throws kConfig unless the taxonomy has the canonical 21-leaf shape.
void validate_canonical(const Taxonomy& taxonomy);

// Tool subset named by an information-seeking id ("general_inquiry" is the
// empty subset); nullopt for ids outside that family.
std::optional<ToolSet> tool_set_from_id(std::string_view id);
std::string id_from_tool_set(const ToolSet& tools);

// nullopt means not applicable (the leaf is not information-seeking).
// Throws kUnknownLabel for ids outside the taxonomy.
std::optional<ToolSet> tool_requirements(const Taxonomy& taxonomy, std::string_view label_id);

class LabelMapping {
 public:
  LabelMapping(std::string name, std::vector<std::pair<std::string, std::string>> entries);

  const std::string& name() const { return name_; }
  std::span<const std::pair<std::string, std::string>> entries() const { return entries_; }
  std::optional<std::string_view> target(std::string_view source) const;
  // Throws kUnknownLabel.
  const std::string& map(std::string_view source) const;
  std::set<std::string> targets() const;

  // Every source and target must exist in the given taxonomies.
  void validate(const Taxonomy& source, const Taxonomy& target) const;

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

LabelMapping identity_mapping(const Taxonomy& taxonomy);
// Two whitespace-separated columns per line; '#' starts a comment.
LabelMapping parse_label_mapping(std::string_view text, std::string name,
                                 std::string_view source_name = "<memory>");
LabelMapping load_label_mapping_file(const std::filesystem::path& path);

std::vector<std::string> collapse_labels(const LabelMapping& mapping,
                                         std::span<const std::string> labels);

// Sub-taxonomy in canonical relative order. version becomes
// "<version>+<subset_name>".
Taxonomy restrict_taxonomy(const Taxonomy& taxonomy, const std::set<std::string>& leaf_ids,
                           std::string_view subset_name = "subset");

// The eight safe/clinical/information_seeking leaf ids of a taxonomy.
std::set<std::string> information_seeking_ids(const Taxonomy& taxonomy);

}  // namespace tacos
