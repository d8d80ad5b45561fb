#include "issuetraj/label_router.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

#include <json.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/text.hpp"
#include "issuetraj/thread_model.hpp"
#include "prompts.hpp"

namespace issuetraj {

namespace {

constexpr std::array<std::pair<LabelType, std::string_view>, 7> kLabelNames = {{
    {LabelType::bug, "bug"},
    {LabelType::enhancement, "enhancement"},
    {LabelType::question, "question"},
    {LabelType::help_wanted, "help_wanted"},
    {LabelType::good_first_issue, "good_first_issue"},
    {LabelType::documentation, "documentation"},
    {LabelType::general, "general"},
}};

using FieldList = std::vector<std::pair<std::string, std::string>>;

FieldSchema make_schema(LabelType label, const FieldList &fields) {
  FieldSchema s;
  s.label = label;
  for (const auto &[key, guidance] : fields) {
    s.field_keys.push_back(key);
    s.field_descriptions.emplace(key, guidance);
  }
  return s;
}

std::vector<FieldSchema> build_schemas() {
  std::vector<FieldSchema> out;
  out.push_back(make_schema(
      LabelType::bug,
      {{"problem_description", "What is broken: observed versus expected behavior, error messages, affected versions."},
       {"reproduction_steps", "Concrete steps, inputs or environment needed to reproduce the failure."},
       {"scope_and_impact", "Who or what is affected, severity, platforms and components involved."},
       {"root_cause_analysis", "Hypotheses and confirmed explanations of why the failure happens, including code locations."},
       {"workaround", "Temporary mitigations users can apply before a fix lands."},
       {"solution_plan", "The proposed or implemented fix and the reasoning behind it."},
       {"decision_consensus", "Agreements, rejections and final decisions reached by maintainers and participants."},
       {"testing_and_verification", "Tests added, verification steps and confirmation that the fix works."}}));
  out.push_back(make_schema(
      LabelType::enhancement,
      {{"feature_description", "The requested capability and its expected behavior."},
       {"motivation_and_use_case", "Why the feature is needed and the use cases it serves."},
       {"solution_approaches", "Candidate designs or implementations that were proposed."},
       {"technical_challenges", "Obstacles, constraints and risks raised during discussion."},
       {"design_decisions", "Choices made between alternatives and their rationale."},
       {"implementation_progress", "Pull requests, partial work and current state of the implementation."}}));
  out.push_back(make_schema(
      LabelType::question,
      {{"question_asked", "The question posed and what the asker wants to achieve."},
       {"context_and_evidence", "Environment, code, logs and attempts provided as context."},
       {"clarification_requests", "Follow-up questions asked to narrow the problem down."},
       {"answers_and_explanations", "Answers given and the explanations supporting them."},
       {"root_cause_identified", "The underlying cause of the confusion or problem, if found."},
       {"resolution_outcome", "How the question was resolved or why it remains open."}}));
  out.push_back(make_schema(
      LabelType::help_wanted,
      {{"task_description", "The work that needs a contributor."},
       {"proposed_solution", "Suggested approach to complete the task."},
       {"technical_context", "Relevant code areas, APIs and background knowledge."},
       {"dependencies_and_scope", "Prerequisites, related issues and the boundaries of the task."},
       {"contributor_engagement", "Volunteers, questions from contributors and maintainer responses."},
       {"current_status", "Where the task stands now: unclaimed, in progress, or done."}}));
  out.push_back(make_schema(
      LabelType::good_first_issue,
      {{"task_description", "The starter task to be completed."},
       {"beginner_friendly_rationale", "Why the task suits a newcomer."},
       {"technical_requirements", "Skills, tools and code areas the task touches."},
       {"implementation_guidance", "Hints and step-by-step guidance given by maintainers."},
       {"reference_examples", "Similar code, prior pull requests or docs to learn from."},
       {"mentor_interaction", "Exchanges between newcomers and mentors or maintainers."},
       {"progress_tracking", "Claims, pull requests and completion status."}}));
  out.push_back(make_schema(
      LabelType::documentation,
      {{"documentation_issue_type", "Kind of documentation problem: missing, wrong, outdated or unclear."},
       {"affected_components", "Pages, sections, APIs or examples affected."},
       {"proposed_changes", "Suggested wording, structure or content changes."},
       {"maintainer_response", "How maintainers reacted to the report and proposals."},
       {"dependencies_and_blockers", "Anything that blocks the documentation change."},
       {"current_status", "Whether the change was made, planned or declined."}}));
  out.push_back(make_schema(
      LabelType::general,
      {{"issue_description", "What the issue is about."},
       {"context_and_background", "Background, environment and history needed to understand it."},
       {"discussion_points", "Main arguments, proposals and concerns raised."},
       {"proposed_actions", "Next steps or actions suggested by participants."},
       {"decision_consensus", "Decisions and agreements reached in the thread."}}));
  return out;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '&';
}

// Keyword occurs in `text` delimited by non-word characters or the ends.
bool contains_keyword(const std::string &text, const std::string &keyword) {
  if (keyword.empty()) return false;
  std::size_t pos = 0;
  while ((pos = text.find(keyword, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + keyword.size();
    const bool right_ok = end == text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

std::optional<LabelType> parse_answer(std::string_view reply) {
  std::string s = to_lower(trim(reply));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'' || s.front() == '`') &&
      s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  if (!s.empty() && s.back() == '.') s.pop_back();
  return label_from_string(trim(s));
}

}  // namespace

std::string_view to_string(LabelType label) {
  for (const auto &[l, name] : kLabelNames) {
    if (l == label) return name;
  }
  return "general";
}

std::string_view to_string(DetectionMethod method) {
  return method == DetectionMethod::keyword_match ? "keyword_match" : "llm_classified";
}

std::optional<LabelType> label_from_string(std::string_view name) {
  for (const auto &[l, n] : kLabelNames) {
    if (n == name) return l;
  }
  return std::nullopt;
}

std::optional<DetectionMethod> detection_from_string(std::string_view name) {
  if (name == "keyword_match") return DetectionMethod::keyword_match;
  if (name == "llm_classified") return DetectionMethod::llm_classified;
  return std::nullopt;
}

const std::vector<LabelType> &all_labels() {
  static const std::vector<LabelType> kAll = [] {
    std::vector<LabelType> v;
    for (const auto &[l, n] : kLabelNames) v.push_back(l);
    return v;
  }();
  return kAll;
}

bool FieldSchema::contains(std::string_view key) const {
  return std::find(field_keys.begin(), field_keys.end(), key) != field_keys.end();
}

const std::string &FieldSchema::description(const std::string &key) const {
  return field_descriptions.at(key);
}

const FieldSchema &schema_for(LabelType label) {
  static const std::vector<FieldSchema> kSchemas = build_schemas();
  for (const auto &s : kSchemas) {
    if (s.label == label) return s;
  }
  return kSchemas.back();
}

KeywordTable KeywordTable::defaults() {
  KeywordTable t;
  t.keywords = {
      {LabelType::bug, {"bug", "defect", "crash", "regression"}},
      {LabelType::enhancement, {"enhancement", "feature", "feature request", "improvement"}},
      {LabelType::documentation, {"documentation", "docs"}},
      {LabelType::question, {"question", "support", "q&a"}},
      {LabelType::good_first_issue, {"good first issue", "beginner", "easy", "starter"}},
      {LabelType::help_wanted, {"help wanted", "help-wanted", "contributions welcome"}},
  };
  t.priority = {LabelType::bug,      LabelType::enhancement,      LabelType::documentation,
                LabelType::question, LabelType::good_first_issue, LabelType::help_wanted};
  return t;
}

KeywordTable KeywordTable::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(fmt::format("keyword table is not JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ConfigError("keyword table must be a JSON object");

  KeywordTable t = defaults();
  auto label_of = [](const std::string &name) {
    const auto l = label_from_string(name);
    if (!l || *l == LabelType::general) {
      throw ConfigError(fmt::format("keyword table names unknown label '{}'", name));
    }
    return *l;
  };
  if (doc.contains("keywords")) {
    const auto &kw = doc["keywords"];
    if (!kw.is_object()) throw ConfigError("'keywords' must be an object");
    t.keywords.clear();
    for (const auto &[name, list] : kw.items()) {
      if (!list.is_array()) throw ConfigError(fmt::format("keywords for '{}' must be a list", name));
      std::vector<std::string> words;
      for (const auto &w : list) {
        if (!w.is_string()) throw ConfigError("keywords must be strings");
        words.push_back(w.get<std::string>());
      }
      t.keywords.emplace_back(label_of(name), std::move(words));
    }
  }
  if (doc.contains("priority")) {
    const auto &pr = doc["priority"];
    if (!pr.is_array()) throw ConfigError("'priority' must be a list");
    t.priority.clear();
    for (const auto &p : pr) {
      if (!p.is_string()) throw ConfigError("priority entries must be strings");
      t.priority.push_back(label_of(p.get<std::string>()));
    }
  }
  // A label with keywords but no priority slot would never win; append it.
  for (const auto &[label, words] : t.keywords) {
    if (std::find(t.priority.begin(), t.priority.end(), label) == t.priority.end()) {
      t.priority.push_back(label);
    }
  }
  return t;
}

KeywordTable KeywordTable::load(const std::string &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error &e) {
    throw ConfigError(e.what());
  }
  return from_json_text(text);
}

std::string normalize_label_text(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  bool pending = false;
  for (char c : label) {
    if (c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::optional<LabelType> match_labels_by_keyword(const std::vector<std::string> &repo_labels,
                                                 const KeywordTable &table) {
  std::vector<LabelType> matched;
  for (const auto &raw : repo_labels) {
    const std::string label = normalize_label_text(raw);
    for (const auto &[type, words] : table.keywords) {
      for (const auto &w : words) {
        if (contains_keyword(label, normalize_label_text(w))) {
          matched.push_back(type);
          break;
        }
      }
    }
  }
  for (LabelType p : table.priority) {
    if (p == LabelType::general) continue;
    if (std::find(matched.begin(), matched.end(), p) != matched.end()) return p;
  }
  return std::nullopt;
}

LabelType classify_label_llm(std::string_view title, std::string_view body,
                             LlmGateway &gateway) {
  const auto messages = prompts::render(
      "label_classifier",
      {{"title", std::string(title)}, {"body", std::string(utf8_prefix(body, 6000))}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string reply;
    try {
      reply = gateway.complete(Role::label_classifier, messages);
    } catch (const GatewayFailure &e) {
      spdlog::warn("label classifier unavailable, falling back to general: {}", e.what());
      return LabelType::general;
    }
    if (const auto label = parse_answer(reply)) return *label;
    spdlog::warn("label classifier reply '{}' is not a known label", trim(utf8_prefix(reply, 80)));
  }
  return LabelType::general;
}

LabelDecision detect_label(const IssueThread &thread, const std::vector<std::string> &repo_labels,
                           LlmGateway &gateway, const KeywordTable &table) {
  if (const auto matched = match_labels_by_keyword(repo_labels, table)) {
    return {*matched, DetectionMethod::keyword_match};
  }
  const Comment &header = header_comment(thread);
  return {classify_label_llm(issue_title(thread), header.body, gateway),
          DetectionMethod::llm_classified};
}

}  // namespace issuetraj
