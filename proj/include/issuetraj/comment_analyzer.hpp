#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "issuetraj/label_router.hpp"
#include "issuetraj/thread_model.hpp"

namespace issuetraj {

class LinkCache;
class LlmGateway;

struct CommentAnalysis {
  std::string comment_id;
  std::string analysis_text;
  std::vector<std::string> referenced_urls;
  std::size_t snippets_considered = 0;
  /// Set when the analyst call failed; analysis_text is then empty.
  bool failed = false;

  bool operator==(const CommentAnalysis &) const = default;
};

struct Excerpt {
  std::string field_key;
  std::string text;
  std::string comment_id;
  std::string author_login;
  std::string association;
  std::int64_t reaction_score = 0;

  bool operator==(const Excerpt &) const = default;
};

struct FieldBucket {
  std::string field_key;
  std::vector<Excerpt> excerpts;

  bool operator==(const FieldBucket &) const = default;
};

/// One bucket per schema key, in schema order.
class FieldBuckets {
 public:
  explicit FieldBuckets(const FieldSchema &schema);
  FieldBuckets() = default;

  const std::vector<FieldBucket> &buckets() const { return buckets_; }
  /// Throws ForeignFieldKey.
  const std::vector<Excerpt> &at(const std::string &key) const;
  void append(const Excerpt &excerpt);
  std::vector<std::string> keys() const;
  std::size_t total_excerpts() const;

  bool operator==(const FieldBuckets &) const = default;

 private:
  std::vector<FieldBucket> buckets_;
};

nlohmann::ordered_json excerpt_to_json(const Excerpt &excerpt);
Excerpt excerpt_from_json(const std::string &field_key, const nlohmann::json &j);

/// Prompt the comment_analyst role with the body, its code snippets and the
/// cached summaries of its links. Gateway failure yields a failed analysis.
CommentAnalysis analyze_comment(const Comment &comment,
                                const FieldSchema &schema,
                                const LinkCache &cache, LlmGateway &gateway);

/// Ask the field_bucket_classifier role for `(field_key, excerpt)` pairs and
/// attach attribution. Foreign keys are dropped; an unparseable reply is
/// retried once; any remaining failure yields no excerpts.
std::vector<Excerpt> bucket_excerpts(const Comment &comment,
                                     const CommentAnalysis &analysis,
                                     const FieldSchema &schema,
                                     LlmGateway &gateway);

/// Throws ForeignFieldKey.
FieldBuckets accumulate_buckets(
    const std::vector<std::vector<Excerpt>> &excerpts_per_comment,
    const FieldSchema &schema);

/// True when `excerpt` shares at least `min_overlap` consecutive characters
/// (case- and whitespace-insensitive) with `source`.
bool has_source_overlap(const std::string &excerpt, const std::string &source,
                        std::size_t min_overlap = 10);

}  // namespace issuetraj
