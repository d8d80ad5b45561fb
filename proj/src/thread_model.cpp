#include "issuetraj/thread_model.hpp"

#include <algorithm>
#include <initializer_list>
#include <set>

#include <fmt/format.h>

#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"

namespace issuetraj {

using nlohmann::json;

namespace {

// Exports in the wild use a few spellings for the same field; the first key
// in each list is the canonical one written by serialize_thread.
const json *find_key(const json &obj, std::initializer_list<const char *> keys) {
  for (const char *k : keys) {
    const auto it = obj.find(k);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

const json &require_key(const json &obj, std::initializer_list<const char *> keys,
                        std::string_view where) {
  if (const json *v = find_key(obj, keys)) return *v;
  throw MalformedInput(
      fmt::format("{}: missing required key '{}'", where, *keys.begin()));
}

std::string as_string(const json &v, std::string_view what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  throw MalformedInput(fmt::format("'{}' must be a string", what));
}

std::int64_t as_int(const json &v, std::string_view what) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      const auto s = v.get<std::string>();
      const auto n = std::stoll(s, &used);
      if (used == s.size()) return n;
    } catch (const std::exception &) {
    }
  }
  throw MalformedInput(fmt::format("'{}' must be an integer", what));
}

bool as_bool(const json &v, std::string_view what) {
  if (v.is_boolean()) return v.get<bool>();
  throw MalformedInput(fmt::format("'{}' must be a boolean", what));
}

std::map<std::string, std::int64_t> parse_reactions(const json &v) {
  std::map<std::string, std::int64_t> out;
  if (!v.is_object()) throw MalformedInput("'reactions' must be an object");
  for (const auto &[name, count] : v.items()) {
    // GitHub's reaction rollup carries bookkeeping next to the counts.
    if (name == "url" || name == "total_count") continue;
    if (!count.is_number_integer()) continue;
    const auto n = count.get<std::int64_t>();
    if (n < 0) {
      throw MalformedInput(fmt::format("negative reaction count for '{}'", name));
    }
    out.emplace(name, n);
  }
  return out;
}

Comment parse_comment(const json &c, std::size_t index) {
  if (!c.is_object()) {
    throw MalformedInput(fmt::format("comment #{} is not an object", index));
  }
  const std::string where = fmt::format("comment #{}", index);
  Comment out;
  out.comment_id = as_string(require_key(c, {"comment_id", "id"}, where), "comment_id");

  if (const json *login = find_key(c, {"author_login", "author", "login"})) {
    out.author_login = as_string(*login, "author_login");
  } else if (const json *user = find_key(c, {"user"});
             user && user->is_object() && user->contains("login")) {
    out.author_login = as_string(user->at("login"), "user.login");
  } else {
    throw MalformedInput(fmt::format("{}: missing required key 'author_login'", where));
  }

  if (const json *t = find_key(c, {"type", "comment_type"})) {
    out.comment_type = as_string(*t, "type");
  }
  if (const json *a = find_key(c, {"association", "author_association"})) {
    out.association = as_string(*a, "association");
  }
  if (const json *b = find_key(c, {"is_bot", "bot"})) out.is_bot = as_bool(*b, "is_bot");

  out.created_at =
      parse_iso8601(as_string(require_key(c, {"created_at"}, where), "created_at"));
  out.updated_at = out.created_at;
  if (const json *u = find_key(c, {"updated_at"})) {
    out.updated_at = parse_iso8601(as_string(*u, "updated_at"));
  }
  out.body = as_string(require_key(c, {"body"}, where), "body");
  if (const json *r = find_key(c, {"reactions"})) out.reactions = parse_reactions(*r);
  if (const json *h = find_key(c, {"is_header"})) out.is_header = as_bool(*h, "is_header");
  return out;
}

std::vector<std::string> parse_labels(const json &v) {
  std::vector<std::string> out;
  if (!v.is_array()) throw MalformedInput("'labels' must be an array");
  for (const auto &item : v) {
    if (item.is_string()) {
      out.push_back(item.get<std::string>());
    } else if (item.is_object() && item.contains("name") && item["name"].is_string()) {
      out.push_back(item["name"].get<std::string>());
    }
  }
  return out;
}

json reactions_json(const std::map<std::string, std::int64_t> &reactions) {
  json out = json::object();
  for (const auto &[k, v] : reactions) out[k] = v;
  return out;
}

Comment comment_from_api(const json &c, bool header, const std::string &id) {
  Comment out;
  out.comment_id = id;
  if (c.contains("user") && c["user"].is_object()) {
    out.author_login = c["user"].value("login", "");
    out.is_bot = c["user"].value("type", "") == "Bot";
  }
  if (out.author_login.size() > 5 &&
      out.author_login.ends_with("[bot]")) {
    out.is_bot = true;
  }
  out.comment_type = header ? "issue" : "comment";
  out.association = c.value("author_association", "NONE");
  out.created_at = parse_iso8601(c.value("created_at", "1970-01-01T00:00:00Z"));
  out.updated_at = parse_iso8601(c.value("updated_at", c.value("created_at", "1970-01-01T00:00:00Z")));
  if (out.updated_at < out.created_at) out.updated_at = out.created_at;
  const auto body = c.find("body");
  out.body = (body != c.end() && body->is_string()) ? sanitize_utf8(body->get<std::string>()) : "";
  if (c.contains("reactions") && c["reactions"].is_object()) {
    out.reactions = parse_reactions(c["reactions"]);
  }
  out.is_header = header;
  return out;
}

}  // namespace

IssueThread IssueThread::make(IssueThread draft) {
  if (draft.issue_number <= 0) {
    throw MalformedInput(
        fmt::format("issue_number must be positive, got {}", draft.issue_number));
  }
  if (draft.comment_count != static_cast<std::int64_t>(draft.comments.size())) {
    throw MalformedInput(fmt::format("comment_count {} does not match {} comments",
                                     draft.comment_count, draft.comments.size()));
  }
  std::set<std::string> ids;
  std::size_t headers = 0;
  for (const auto &c : draft.comments) {
    if (c.comment_id.empty()) throw MalformedInput("empty comment_id");
    if (!ids.insert(c.comment_id).second) {
      throw MalformedInput(fmt::format("duplicate comment_id '{}'", c.comment_id));
    }
    if (c.updated_at < c.created_at) {
      throw MalformedInput(
          fmt::format("comment '{}' updated before it was created", c.comment_id));
    }
    for (const auto &[name, n] : c.reactions) {
      if (n < 0) throw MalformedInput(fmt::format("negative reaction count '{}'", name));
    }
    if (c.is_header) ++headers;
  }
  if (headers != 1) {
    throw NoHeader(fmt::format("expected exactly one header comment, found {}", headers));
  }
  std::stable_sort(draft.comments.begin(), draft.comments.end(),
                   [](const Comment &a, const Comment &b) {
                     return a.created_at < b.created_at;
                   });
  return draft;
}

IssueThread parse_thread(std::string_view raw_text) {
  json doc;
  try {
    doc = json::parse(sanitize_utf8(raw_text));
  } catch (const json::parse_error &e) {
    throw MalformedInput(fmt::format("not a JSON document: {}", e.what()));
  }
  if (!doc.is_object()) throw MalformedInput("thread document must be a JSON object");

  IssueThread t;
  const std::string_view where = "thread";
  t.source_url = as_string(require_key(doc, {"source_url", "url", "html_url"}, where),
                           "source_url");
  t.repo_owner = as_string(require_key(doc, {"repo_owner", "owner"}, where), "repo_owner");
  t.repo_name = as_string(require_key(doc, {"repo_name", "repo"}, where), "repo_name");
  t.issue_number =
      as_int(require_key(doc, {"issue_number", "number"}, where), "issue_number");
  t.comment_count = as_int(
      require_key(doc, {"comment_count", "total_comments", "comments_count"}, where),
      "comment_count");
  const json &comments = require_key(doc, {"comments"}, where);
  if (!comments.is_array()) throw MalformedInput("'comments' must be an array");
  for (std::size_t i = 0; i < comments.size(); ++i) {
    t.comments.push_back(parse_comment(comments[i], i));
  }
  if (const json *title = find_key(doc, {"title", "issue_title"})) {
    t.title = as_string(*title, "title");
  }
  if (const json *labels = find_key(doc, {"labels"})) t.labels = parse_labels(*labels);
  return IssueThread::make(std::move(t));
}

IssueThread parse_thread_file(const std::string &path) {
  return parse_thread(read_file(path));
}

nlohmann::ordered_json thread_to_json(const IssueThread &thread) {
  nlohmann::ordered_json doc;
  doc["source_url"] = thread.source_url;
  doc["repo_owner"] = thread.repo_owner;
  doc["repo_name"] = thread.repo_name;
  doc["issue_number"] = thread.issue_number;
  doc["comment_count"] = thread.comment_count;
  if (thread.title) doc["title"] = *thread.title;
  if (!thread.labels.empty()) doc["labels"] = thread.labels;
  auto comments = nlohmann::ordered_json::array();
  for (const auto &c : thread.comments) {
    nlohmann::ordered_json j;
    j["comment_id"] = c.comment_id;
    j["author_login"] = c.author_login;
    j["type"] = c.comment_type;
    j["association"] = c.association;
    j["is_bot"] = c.is_bot;
    j["created_at"] = format_iso8601(c.created_at);
    j["updated_at"] = format_iso8601(c.updated_at);
    j["body"] = c.body;
    j["reactions"] = reactions_json(c.reactions);
    j["is_header"] = c.is_header;
    comments.push_back(std::move(j));
  }
  doc["comments"] = std::move(comments);
  return doc;
}

std::string serialize_thread(const IssueThread &thread) {
  return thread_to_json(thread).dump(2) + "\n";
}

std::string thread_filename(std::int64_t issue_number, std::int64_t pr_number) {
  return fmt::format("issue#{}_comments_pr#{}.json", issue_number, pr_number);
}

const Comment &header_comment(const IssueThread &thread) {
  const auto it = std::find_if(thread.comments.begin(), thread.comments.end(),
                               [](const Comment &c) { return c.is_header; });
  // IssueThread::make guarantees exactly one.
  return *it;
}

std::string issue_title(const IssueThread &thread) {
  if (thread.title && !trim(*thread.title).empty()) return trim(*thread.title);
  for (const auto &line : split(header_comment(thread).body, '\n')) {
    auto t = trim(line);
    // Markdown headings are the usual first line of an issue template.
    while (!t.empty() && t.front() == '#') t.erase(t.begin());
    t = trim(t);
    if (!t.empty()) return t;
  }
  return {};
}

std::int64_t reaction_score(const Comment &comment) {
  std::int64_t sum = 0;
  for (const auto &[name, count] : comment.reactions) sum += count;
  return sum;
}

IssueThread fetch_issue_thread(GitHubClient &client, const std::string &owner,
                               const std::string &repo, std::int64_t issue_number) {
  const std::string base = fmt::format("/repos/{}/{}/issues/{}", owner, repo, issue_number);
  const json issue = client.get_json(base);
  const json comments = client.get_paginated(base + "/comments?per_page=100");

  IssueThread t;
  t.source_url = issue.value("html_url", fmt::format("https://github.com/{}/{}/issues/{}",
                                                     owner, repo, issue_number));
  t.repo_owner = owner;
  t.repo_name = repo;
  t.issue_number = issue_number;
  if (issue.contains("title") && issue["title"].is_string()) {
    t.title = sanitize_utf8(issue["title"].get<std::string>());
  }
  if (issue.contains("labels")) t.labels = parse_labels(issue["labels"]);

  const std::string header_id =
      issue.contains("id") ? as_string(issue["id"], "id") : fmt::format("issue-{}", issue_number);
  t.comments.push_back(comment_from_api(issue, true, header_id));
  for (const auto &c : comments) {
    t.comments.push_back(comment_from_api(c, false, as_string(c.at("id"), "id")));
  }
  t.comment_count = static_cast<std::int64_t>(t.comments.size());
  return IssueThread::make(std::move(t));
}

}  // namespace issuetraj
