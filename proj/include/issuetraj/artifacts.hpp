#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "issuetraj/text.hpp"
#include "issuetraj/url.hpp"

namespace issuetraj {

class GitHubClient;
class HttpClient;
class LlmGateway;

enum class FetchStatus { ok, failed, skipped };

std::string_view to_string(FetchStatus status);
std::optional<FetchStatus> fetch_status_from_string(std::string_view name);

/// Tunable bounds for artifact retrieval and summarization.
struct ResolverLimits {
  std::int64_t context_lines = 20;
  std::size_t max_artifact_chars = 50'000;
  std::size_t max_summary_chars = 2'000;
  std::size_t max_image_bytes = 10 * 1024 * 1024;
  std::size_t reddit_top_comments = 10;
  std::size_t max_document_bytes = 25 * 1024 * 1024;
  std::string user_agent =
      "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/124.0 Safari/537.36";
  /// `{file}` is replaced with the downloaded document path.
  std::vector<std::string> legacy_doc_converters = {"antiword {file}",
                                                    "catdoc {file}"};
  std::vector<std::string> legacy_sheet_converters = {"xls2csv {file}"};
};

struct ArtifactContent {
  ArtifactRef ref;
  std::string text;
  bool truncated = false;
  FetchStatus fetch_status = FetchStatus::failed;
  std::optional<std::string> failure_reason;

  static ArtifactContent ok(ArtifactRef ref, std::string text,
                            std::size_t max_chars);
  static ArtifactContent failed(ArtifactRef ref, std::string reason);
  static ArtifactContent skipped(ArtifactRef ref, std::string reason);
};

/// Every network-facing collaborator the resolvers need.
struct ArtifactClients {
  HttpClient &http;
  GitHubClient &github;
  LlmGateway &gateway;
  ResolverLimits limits{};
};

// Resolvers never throw: failures come back as failed content.
ArtifactContent resolve_github_artifact(const ArtifactRef &ref,
                                        GitHubClient &github,
                                        const ResolverLimits &limits = {});
ArtifactContent resolve_web_resource(const ArtifactRef &ref, HttpClient &http,
                                     const ResolverLimits &limits = {});
ArtifactContent resolve_binary_document(const ArtifactRef &ref,
                                        HttpClient &http,
                                        const ResolverLimits &limits = {});
ArtifactContent describe_image(const ArtifactRef &ref, HttpClient &http,
                               LlmGateway &gateway,
                               const ResolverLimits &limits = {});

/// Dispatch to the resolver for `ref.kind`.
ArtifactContent resolve_artifact(const ArtifactRef &ref,
                                 ArtifactClients &clients);

/// `blob` line window: anchor range widened by `context` lines, clamped.
struct LineWindow {
  std::int64_t first = 1;
  std::int64_t last = 1;
};
LineWindow line_window(std::int64_t first, std::int64_t last,
                       std::int64_t context, std::int64_t total_lines);

/// Requires `content.fetch_status == ok` (std::invalid_argument otherwise).
/// Throws SummaryFailure. Result is non-empty and at most
/// `limits.max_summary_chars` bytes.
std::string summarize_artifact(const ArtifactContent &content,
                               std::string_view issue_context,
                               LlmGateway &gateway,
                               const ResolverLimits &limits = {});

inline constexpr std::string_view kTruncationMarker = " [...truncated]";

struct CacheEntry {
  std::string summary;
  FetchStatus fetch_status = FetchStatus::failed;
  Timestamp fetched_at{};
  ArtifactKind kind = ArtifactKind::generic_web;
  std::optional<std::string> failure_reason;

  bool operator==(const CacheEntry &) const = default;
};

nlohmann::ordered_json cache_entry_to_json(const CacheEntry &entry);
CacheEntry cache_entry_from_json(const nlohmann::json &j);

using Clock = std::function<Timestamp()>;
Clock system_clock();
/// Always returns the epoch; used for byte-stable output.
Clock frozen_clock();

/// Normalized URL to summary map, append-only within a run. Insertions are
/// serialized and at most one resolution per URL is ever in flight.
class LinkCache {
 public:
  LinkCache() = default;
  LinkCache(const LinkCache &) = delete;
  LinkCache &operator=(const LinkCache &) = delete;

  /// Missing file yields an empty cache. Throws MalformedInput.
  static void load_into(LinkCache &cache, const std::string &path);
  void save(const std::string &path) const;

  std::optional<CacheEntry> find(const std::string &normalized_url) const;
  /// Returns false (and keeps the old entry) when the key already exists.
  bool insert(const std::string &normalized_url, CacheEntry entry);

  /// Look up or produce the entry for `key`. Concurrent callers for the same
  /// key wait for the single producer.
  CacheEntry get_or_compute(const std::string &key,
                            const std::function<CacheEntry()> &produce);

  std::size_t size() const;
  std::map<std::string, CacheEntry> snapshot() const;
  std::size_t purge_failed();

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

  nlohmann::ordered_json to_json() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, CacheEntry> entries_;
  std::map<std::string, std::shared_future<CacheEntry>> in_flight_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Cache hit: stored entry, no fetch, no gateway call. Miss: resolve,
/// summarize on success, store whatever came out (failed/skipped included).
CacheEntry get_or_summarize(LinkCache &cache, const ArtifactRef &ref,
                            ArtifactClients &clients,
                            std::string_view issue_context,
                            const Clock &clock = system_clock());

}  // namespace issuetraj
