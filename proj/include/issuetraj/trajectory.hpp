#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "issuetraj/artifacts.hpp"
#include "issuetraj/comment_analyzer.hpp"
#include "issuetraj/label_router.hpp"

namespace issuetraj {

class IssueThread;
class LinkCache;
class LlmGateway;

/// Exact reply the synthesizer emits when a bucket holds nothing usable.
inline constexpr std::string_view kNoEvidenceSentinel = "NO_MEANINGFUL_EVIDENCE";

struct SynthesizedField {
  std::string field_key;
  std::optional<std::string> paragraph;

  bool operator==(const SynthesizedField &) const = default;
};

struct Trajectory {
  std::string issue_title;
  std::vector<std::string> labels;
  LabelType label_type = LabelType::general;
  DetectionMethod label_detection = DetectionMethod::llm_classified;
  std::vector<std::string> field_schema;
  /// Thread-local link cache in first-reference order.
  std::vector<std::pair<std::string, CacheEntry>> link_cache;
  std::vector<CommentAnalysis> comment_analyses;
  FieldBuckets field_buckets;
  /// Schema order.
  std::vector<SynthesizedField> synthesized;

  const std::optional<std::string> &field(const std::string &key) const;

  bool operator==(const Trajectory &) const = default;
};

/// Owner, member or collaborator, case-insensitive.
bool is_maintainer_tier(std::string_view association);

/// Stable order: maintainer tier first, then reaction score descending,
/// then thread order.
std::vector<Excerpt> rank_evidence(const std::vector<Excerpt> &bucket);

enum class FieldOutcome { synthesized, empty_bucket, no_evidence, failed };

std::string_view to_string(FieldOutcome outcome);

struct FieldResult {
  std::optional<std::string> paragraph;
  FieldOutcome outcome = FieldOutcome::empty_bucket;
};

/// Empty bucket: null without a gateway call.
FieldResult synthesize_field(const std::string &field_key,
                             std::string_view guidance,
                             const std::vector<Excerpt> &ranked,
                             std::string_view issue_title, LlmGateway &gateway);

struct SynthesisOutput {
  Trajectory trajectory;
  /// Markers such as `synthesis_failed:root_cause_analysis`.
  std::vector<std::string> diagnostics;
};

SynthesisOutput synthesize_trajectory(
    const IssueThread &thread, const std::vector<std::string> &repo_labels,
    const LabelDecision &label, const FieldSchema &schema,
    const LinkCache &cache, const std::vector<CommentAnalysis> &analyses,
    const FieldBuckets &buckets, LlmGateway &gateway);

/// `{N}_issue_trajectory.json`
std::string trajectory_filename(std::int64_t issue_number);

/// Canonical JSON: fixed key order, 2-space indent, trailing newline.
std::string serialize_trajectory(const Trajectory &trajectory);
nlohmann::ordered_json trajectory_to_json(const Trajectory &trajectory);

/// Throws MalformedInput.
Trajectory parse_trajectory(std::string_view text);

/// Structural validation against the published output schema. Returns the
/// list of violations (empty when valid).
std::vector<std::string> validate_trajectory_json(const nlohmann::json &doc);

}  // namespace issuetraj
