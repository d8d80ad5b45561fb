#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "issuetraj/text.hpp"

namespace issuetraj {

class GitHubClient;

/// One record of an exported discussion thread.
struct Comment {
  std::string comment_id;
  std::string author_login;
  std::string comment_type;
  std::string association;
  bool is_bot = false;
  Timestamp created_at{};
  Timestamp updated_at{};
  std::string body;
  std::map<std::string, std::int64_t> reactions;
  bool is_header = false;

  bool operator==(const Comment &) const = default;
};

/// A parsed `issue#{N}_comments_pr#{M}.json` export. Immutable once built;
/// `parse_thread` and `IssueThread::make` are the only ways to get one.
class IssueThread {
 public:
  std::string source_url;
  std::string repo_owner;
  std::string repo_name;
  std::int64_t issue_number = 0;
  std::int64_t comment_count = 0;
  std::vector<Comment> comments;

  // Optional metadata carried by richer exports.
  std::optional<std::string> title;
  std::vector<std::string> labels;

  /// Validates the invariants and stable-sorts comments by creation time.
  /// Throws MalformedInput or NoHeader.
  static IssueThread make(IssueThread draft);

  bool operator==(const IssueThread &) const = default;
};

IssueThread parse_thread(std::string_view raw_text);
IssueThread parse_thread_file(const std::string &path);

nlohmann::ordered_json thread_to_json(const IssueThread &thread);
std::string serialize_thread(const IssueThread &thread);

/// `issue#{N}_comments_pr#{M}.json`
std::string thread_filename(std::int64_t issue_number, std::int64_t pr_number);

const Comment &header_comment(const IssueThread &thread);

/// Issue title, falling back to the first non-empty line of the header body.
std::string issue_title(const IssueThread &thread);

/// Unweighted sum of all reaction counts.
std::int64_t reaction_score(const Comment &comment);

/// Retrieve a live issue and its comments, synthesizing the header comment
/// from the issue body. Throws NotFound, RateLimited, NetworkFailure.
IssueThread fetch_issue_thread(GitHubClient &client, const std::string &owner,
                               const std::string &repo,
                               std::int64_t issue_number);

}  // namespace issuetraj
