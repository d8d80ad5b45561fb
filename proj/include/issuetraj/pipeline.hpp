#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "issuetraj/artifacts.hpp"
#include "issuetraj/label_router.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/quality_judge.hpp"
#include "issuetraj/trajectory.hpp"

namespace issuetraj {

class GitHubClient;
class HttpClient;

struct RunConfig {
  std::vector<std::string> inputs;
  std::string output_dir = "out";
  std::string cache_path;
  GatewayMode gateway_mode = GatewayMode::live;
  std::string exchange_path;
  std::string stub_script_path;
  std::int64_t parallelism = 4;
  ResolverLimits limits;
  std::string keyword_table_path;
  bool stable_output = false;

  // Gateway transport.
  std::string llm_base_url = "https://api.openai.com/v1";
  std::string llm_api_key_env = "OPENAI_API_KEY";
  nlohmann::json route_overrides = nlohmann::json::object();
  std::string github_token_env = "GITHUB_TOKEN";
  std::string github_api_base = "https://api.github.com";

  // judge
  std::string threads_dir;
  std::string trajectories_dir;
  CategoryThresholds thresholds;

  // stats: (split name, verdict directory or JSON-lines file)
  std::vector<std::pair<std::string, std::string>> splits;

  /// Throws ConfigError.
  void validate_for_extract() const;
};

/// Overlay a JSON config document onto `config`. Throws ConfigError.
void apply_config_json(RunConfig &config, const nlohmann::json &doc);
void apply_config_file(RunConfig &config, const std::string &path);

using EnvLookup = std::function<std::optional<std::string>(const std::string &)>;
EnvLookup process_env();
/// `ISSUETRAJ_*` variables. Throws ConfigError.
void apply_environment(RunConfig &config, const EnvLookup &env);

struct IssueStatus {
  std::string input;
  std::optional<std::int64_t> issue_number;
  bool ok = false;
  std::string stage;  // parse | label | augment | analyze | synthesize | write | judge
  std::string reason;
  std::string output;
  std::vector<std::string> diagnostics;
};

struct RunReport {
  std::vector<IssueStatus> issues;
  std::map<Role, std::size_t> gateway_calls;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::chrono::milliseconds wall_time{0};

  bool all_ok() const;
  /// 0 all ok, 1 partial failures.
  int exit_code() const;
  nlohmann::ordered_json to_json() const;
};

/// Collaborators for one run. Tests inject instrumented clients here.
struct PipelineServices {
  HttpClient &http;
  GitHubClient &github;
  LlmGateway &gateway;
  Clock clock = system_clock();
};

/// Owns the live clients described by a RunConfig.
class ServiceBundle {
 public:
  /// Throws ConfigError.
  explicit ServiceBundle(const RunConfig &config);
  ~ServiceBundle();

  PipelineServices services();
  LlmGateway &gateway();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Output of the per-thread phases before serialization.
struct ThreadResult {
  Trajectory trajectory;
  std::vector<std::string> diagnostics;
};

/// Label, augment, analyze and synthesize one thread.
ThreadResult process_thread(const IssueThread &thread, LinkCache &cache,
                            PipelineServices &services,
                            const ResolverLimits &limits,
                            const KeywordTable &keywords);

/// Expand files, directories (`*.json`) and glob patterns, sorted.
std::vector<std::string> expand_inputs(const std::vector<std::string> &inputs);

/// Runs every phase for each input and writes `{N}_issue_trajectory.json`.
/// Per-issue failures are recorded, never thrown. Throws ConfigError.
RunReport cmd_extract(const RunConfig &config, PipelineServices &services);

/// Judges (thread, trajectory) pairs matched by issue number and writes
/// `{N}_verdict.json`, `approved.json` and `review_worksheet.csv`.
/// Throws EmptyInput or ConfigError.
RunReport cmd_judge(const RunConfig &config, LlmGateway &gateway);

struct StatsOutput {
  std::vector<SplitStats> verdict_stats;
  std::vector<SplitStats> label_stats;
  std::string verdict_table;
  std::string issue_type_table;
};

/// Load verdicts for each split and write `stats.json`, `verdicts_table.txt`
/// and `issue_types_table.txt`. Throws EmptyInput or ConfigError.
StatsOutput cmd_stats(const RunConfig &config);

/// Verdicts from a directory of `*_verdict.json` or a JSON-lines file.
std::vector<Verdict> load_verdicts(const std::string &path);

enum class CacheCommand { stats, purge_failed };

/// Human-readable summary of the cache file at `config.cache_path`.
std::string cmd_cache(const RunConfig &config, CacheCommand command);

}  // namespace issuetraj
