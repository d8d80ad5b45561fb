#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "issuetraj/markdown.hpp"

namespace issuetraj {

enum class ArtifactKind {
  commit,
  blob,
  pull_request,
  issue,
  issue_comment,
  review_comment,
  pr_review,
  reddit_post,
  gdrive_doc,
  gdrive_sheet,
  gdrive_slides,
  image,
  pdf,
  docx,
  legacy_doc,
  spreadsheet,
  archive,
  generic_web,
};

std::string_view to_string(ArtifactKind kind);
std::optional<ArtifactKind> artifact_kind_from_string(std::string_view name);
const std::vector<ArtifactKind> &all_artifact_kinds();
bool is_github_kind(ArtifactKind kind);
bool supports_anchor(ArtifactKind kind);

struct UrlMatch {
  std::string raw_url;
  ByteSpan span;

  bool operator==(const UrlMatch &) const = default;
};

/// Every http(s) URL outside fenced code, in order of appearance. Handles
/// bare, markdown-target and angle-bracket forms; strips trailing
/// punctuation, keeping balanced closing parentheses.
std::vector<UrlMatch> extract_urls(std::string_view body);

/// Decomposed http(s) URL.
struct ParsedUrl {
  std::string scheme;
  std::string userinfo;
  std::string host;
  std::optional<int> port;
  std::string path;
  std::string query;  // without '?'
  std::string fragment;  // without '#'
  bool has_query = false;
  bool has_fragment = false;

  std::vector<std::string> path_segments() const;
  /// Lowercased extension of the last path segment, without the dot.
  std::string extension() const;
  std::string to_string() const;
};

/// Throws InvalidUrl.
ParsedUrl parse_url(std::string_view raw);

/// Canonical form used as the link-cache key. Idempotent. Throws InvalidUrl.
std::string normalize_url(std::string_view raw);

/// Total mapping of a canonical URL to its artifact category.
ArtifactKind classify_url(std::string_view normalized);

enum class AnchorKind { line_range, issue_comment, review_comment, pr_review };

std::string_view to_string(AnchorKind kind);

struct Anchor {
  AnchorKind kind = AnchorKind::line_range;
  /// Line range (1-based, inclusive) for line_range; first_line == last_line
  /// for single-line anchors.
  std::int64_t first_line = 0;
  std::int64_t last_line = 0;
  /// Comment or review id for the other kinds.
  std::int64_t id = 0;

  bool operator==(const Anchor &) const = default;
};

std::optional<Anchor> parse_anchor(std::string_view fragment);

struct ArtifactRef {
  std::string raw_url;
  std::string normalized_url;
  ArtifactKind kind = ArtifactKind::generic_web;
  std::optional<Anchor> anchor;
  std::string source_comment_id;

  bool operator==(const ArtifactRef &) const = default;
};

/// Normalize, classify and attach the anchor. Throws InvalidUrl.
ArtifactRef make_artifact_ref(std::string_view raw_url,
                              std::string_view source_comment_id = {});

/// GitHub coordinates of a github.com artifact URL.
struct GitHubLocation {
  std::string owner;
  std::string repo;
  /// Commit sha, issue/PR number, or blob ref.
  std::string target;
  /// Blob path within the repository.
  std::string path;
};

std::optional<GitHubLocation> github_location(const ArtifactRef &ref);

}  // namespace issuetraj
