#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace issuetraj {

class IssueThread;
class LlmGateway;

enum class LabelType {
  bug,
  enhancement,
  question,
  help_wanted,
  good_first_issue,
  documentation,
  general,
};

enum class DetectionMethod { keyword_match, llm_classified };

std::string_view to_string(LabelType label);
std::string_view to_string(DetectionMethod method);
std::optional<LabelType> label_from_string(std::string_view name);
std::optional<DetectionMethod> detection_from_string(std::string_view name);

const std::vector<LabelType> &all_labels();

struct FieldSchema {
  LabelType label = LabelType::general;
  std::vector<std::string> field_keys;
  std::map<std::string, std::string> field_descriptions;

  bool contains(std::string_view key) const;
  const std::string &description(const std::string &key) const;
};

/// The label-specific ordered field list. Total and deterministic.
const FieldSchema &schema_for(LabelType label);

/// Repository-label keywords and the order used when several labels match.
struct KeywordTable {
  std::vector<std::pair<LabelType, std::vector<std::string>>> keywords;
  std::vector<LabelType> priority;

  static KeywordTable defaults();

  /// Load `{"keywords": {"bug": [...], ...}, "priority": ["bug", ...]}`.
  /// Either key may be omitted to keep the default. Throws ConfigError.
  static KeywordTable from_json_text(std::string_view text);
  static KeywordTable load(const std::string &path);
};

/// Lowercase and fold `-`, `_` and whitespace runs into single spaces.
std::string normalize_label_text(std::string_view label);

std::optional<LabelType> match_labels_by_keyword(
    const std::vector<std::string> &repo_labels,
    const KeywordTable &table = KeywordTable::defaults());

/// Ask the label_classifier role. Unparseable answers are retried once;
/// anything still unusable, including gateway failure, yields general.
LabelType classify_label_llm(std::string_view title, std::string_view body,
                             LlmGateway &gateway);

struct LabelDecision {
  LabelType label = LabelType::general;
  DetectionMethod method = DetectionMethod::llm_classified;

  bool operator==(const LabelDecision &) const = default;
};

LabelDecision detect_label(const IssueThread &thread,
                           const std::vector<std::string> &repo_labels,
                           LlmGateway &gateway,
                           const KeywordTable &table = KeywordTable::defaults());

}  // namespace issuetraj
