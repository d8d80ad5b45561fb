#include "issuetraj/comment_analyzer.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/artifacts.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/markdown.hpp"
#include "issuetraj/url.hpp"
#include "prompts.hpp"

namespace issuetraj {

using nlohmann::json;

namespace {

std::string field_guidance(const FieldSchema &schema) {
  std::string out;
  for (const auto &key : schema.field_keys) {
    out += fmt::format("- {}: {}\n", key, schema.description(key));
  }
  return trim(out);
}

std::vector<std::string> referenced_urls(const Comment &comment) {
  std::vector<std::string> urls;
  for (const auto &m : extract_urls(comment.body)) {
    try {
      std::string n = normalize_url(m.raw_url);
      if (std::find(urls.begin(), urls.end(), n) == urls.end()) urls.push_back(std::move(n));
    } catch (const InvalidUrl &) {
    }
  }
  return urls;
}

std::string render_snippets(const std::vector<CodeSnippet> &snippets) {
  if (snippets.empty()) return "(none)";
  std::string out;
  for (const auto &s : snippets) {
    if (s.snippet_kind == SnippetKind::fenced) {
      out += fmt::format("```{}\n{}\n```\n", s.language_hint.value_or(""), s.text);
    } else {
      out += fmt::format("`{}`\n", s.text);
    }
  }
  return trim(out);
}

std::string render_links(const std::vector<std::string> &urls, const LinkCache &cache) {
  if (urls.empty()) return "(none)";
  std::string out;
  for (const auto &url : urls) {
    const auto entry = cache.find(url);
    if (!entry) {
      out += fmt::format("- {}: not resolved\n", url);
    } else if (entry->fetch_status == FetchStatus::ok) {
      out += fmt::format("- {} [{}]: {}\n", url, to_string(entry->kind), entry->summary);
    } else {
      out += fmt::format("- {} [{}]: unavailable ({})\n", url, to_string(entry->kind),
                         entry->failure_reason.value_or(std::string(to_string(entry->fetch_status))));
    }
  }
  return trim(out);
}

// Lowercased text with whitespace removed, for overlap checks.
std::string squash(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (!std::isspace(c)) out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::optional<std::vector<std::pair<std::string, std::string>>> parse_pairs(std::string_view reply) {
  const auto doc = extract_json_value(reply);
  if (!doc) return std::nullopt;
  const json *items = nullptr;
  if (doc->is_array()) {
    items = &*doc;
  } else if (doc->is_object() && doc->contains("excerpts") && (*doc)["excerpts"].is_array()) {
    items = &(*doc)["excerpts"];
  }
  if (items == nullptr) return std::nullopt;
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto &item : *items) {
    if (item.is_array() && item.size() == 2 && item[0].is_string() && item[1].is_string()) {
      pairs.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
      continue;
    }
    if (!item.is_object()) return std::nullopt;
    const char *field_key = item.contains("field") ? "field" : "field_key";
    const char *text_key = item.contains("text") ? "text" : "excerpt";
    if (!item.contains(field_key) || !item[field_key].is_string() || !item.contains(text_key) ||
        !item[text_key].is_string()) {
      return std::nullopt;
    }
    pairs.emplace_back(item[field_key].get<std::string>(), item[text_key].get<std::string>());
  }
  return pairs;
}

}  // namespace

FieldBuckets::FieldBuckets(const FieldSchema &schema) {
  for (const auto &key : schema.field_keys) buckets_.push_back(FieldBucket{key, {}});
}

const std::vector<Excerpt> &FieldBuckets::at(const std::string &key) const {
  for (const auto &b : buckets_) {
    if (b.field_key == key) return b.excerpts;
  }
  throw ForeignFieldKey(fmt::format("'{}' is not a field of this schema", key));
}

void FieldBuckets::append(const Excerpt &excerpt) {
  for (auto &b : buckets_) {
    if (b.field_key == excerpt.field_key) {
      b.excerpts.push_back(excerpt);
      return;
    }
  }
  throw ForeignFieldKey(fmt::format("'{}' is not a field of this schema", excerpt.field_key));
}

std::vector<std::string> FieldBuckets::keys() const {
  std::vector<std::string> out;
  for (const auto &b : buckets_) out.push_back(b.field_key);
  return out;
}

std::size_t FieldBuckets::total_excerpts() const {
  std::size_t n = 0;
  for (const auto &b : buckets_) n += b.excerpts.size();
  return n;
}

nlohmann::ordered_json excerpt_to_json(const Excerpt &e) {
  nlohmann::ordered_json j;
  j["text"] = e.text;
  j["comment_id"] = e.comment_id;
  j["author_login"] = e.author_login;
  j["association"] = e.association;
  j["reaction_score"] = e.reaction_score;
  return j;
}

Excerpt excerpt_from_json(const std::string &field_key, const json &j) {
  if (!j.is_object()) throw MalformedInput("excerpt must be an object");
  try {
    Excerpt e;
    e.field_key = field_key;
    e.text = j.at("text").get<std::string>();
    e.comment_id = j.at("comment_id").get<std::string>();
    e.author_login = j.value("author_login", std::string{});
    e.association = j.value("association", std::string{});
    e.reaction_score = j.value("reaction_score", std::int64_t{0});
    if (e.reaction_score < 0) throw MalformedInput("excerpt reaction_score is negative");
    return e;
  } catch (const json::exception &ex) {
    throw MalformedInput(fmt::format("bad excerpt: {}", ex.what()));
  }
}

CommentAnalysis analyze_comment(const Comment &comment, const FieldSchema &schema,
                                const LinkCache &cache, LlmGateway &gateway) {
  CommentAnalysis a;
  a.comment_id = comment.comment_id;
  a.referenced_urls = referenced_urls(comment);
  const auto snippets = extract_code_snippets(comment.body, comment.comment_id);
  a.snippets_considered = snippets.size();

  const auto messages = prompts::render(
      "comment_analyst",
      {{"label", std::string(to_string(schema.label))},
       {"field_guidance", field_guidance(schema)},
       {"comment_id", comment.comment_id},
       {"author", comment.author_login},
       {"association", comment.association.empty() ? "none" : comment.association},
       {"header_note", comment.is_header ? " [issue description]" : ""},
       {"comment_body", comment.body},
       {"code_snippets", render_snippets(snippets)},
       {"linked_artifacts", render_links(a.referenced_urls, cache)}});
  try {
    a.analysis_text = trim(gateway.complete(Role::comment_analyst, messages));
  } catch (const GatewayFailure &e) {
    spdlog::warn("comment {}: analysis failed: {}", comment.comment_id, e.what());
    a.analysis_text.clear();
    a.failed = true;
  }
  return a;
}

std::vector<Excerpt> bucket_excerpts(const Comment &comment, const CommentAnalysis &analysis,
                                     const FieldSchema &schema, LlmGateway &gateway) {
  const auto messages = prompts::render(
      "field_bucket_classifier",
      {{"field_guidance", field_guidance(schema)},
       {"comment_id", comment.comment_id},
       {"comment_body", comment.body},
       {"analysis", analysis.failed || analysis.analysis_text.empty() ? "(analysis unavailable)"
                                                                      : analysis.analysis_text}});
  std::optional<std::vector<std::pair<std::string, std::string>>> pairs;
  for (int attempt = 0; attempt < 2 && !pairs; ++attempt) {
    std::string reply;
    try {
      reply = gateway.complete(Role::field_bucket_classifier, messages);
    } catch (const GatewayFailure &e) {
      spdlog::warn("comment {}: bucket classification failed: {}", comment.comment_id, e.what());
      return {};
    }
    pairs = parse_pairs(reply);
  }
  if (!pairs) {
    spdlog::warn("comment {}: unparseable bucket classification, no excerpts kept",
                 comment.comment_id);
    return {};
  }

  const std::string source = comment.body + "\n" + analysis.analysis_text;
  std::vector<Excerpt> out;
  for (auto &[field, text] : *pairs) {
    if (!schema.contains(field)) {
      spdlog::warn("comment {}: dropping excerpt for unknown field '{}'", comment.comment_id, field);
      continue;
    }
    std::string t = trim(text);
    if (t.empty()) continue;
    if (!has_source_overlap(t, source)) {
      spdlog::info("comment {}: excerpt for '{}' has no overlap with its source", comment.comment_id,
                   field);
    }
    out.push_back(Excerpt{field, std::move(t), comment.comment_id, comment.author_login,
                          comment.association, reaction_score(comment)});
  }
  return out;
}

FieldBuckets accumulate_buckets(const std::vector<std::vector<Excerpt>> &excerpts_per_comment,
                                const FieldSchema &schema) {
  FieldBuckets buckets(schema);
  for (const auto &list : excerpts_per_comment) {
    for (const auto &e : list) buckets.append(e);
  }
  return buckets;
}

bool has_source_overlap(const std::string &excerpt, const std::string &source,
                        std::size_t min_overlap) {
  const std::string e = squash(excerpt);
  const std::string s = squash(source);
  if (min_overlap == 0) return true;
  if (e.size() < min_overlap) return !e.empty() && s.find(e) != std::string::npos;
  for (std::size_t i = 0; i + min_overlap <= e.size(); ++i) {
    if (s.find(std::string_view(e).substr(i, min_overlap)) != std::string::npos) return true;
  }
  return false;
}

}  // namespace issuetraj
