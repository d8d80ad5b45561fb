// issuetraj: extract, judge and summarize issue resolution trajectories.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"
#include "issuetraj/pipeline.hpp"
#include "issuetraj/thread_model.hpp"

using namespace issuetraj;

namespace {

struct Flags {
  std::optional<std::string> config_file;
  std::vector<std::string> inputs;
  std::optional<std::string> output_dir;
  std::optional<std::string> cache_path;
  std::optional<std::string> gateway_mode;
  std::optional<std::string> exchange_path;
  std::optional<std::string> stub_script;
  std::optional<std::int64_t> parallelism;
  std::optional<std::int64_t> context_lines;
  std::optional<std::size_t> max_artifact_chars;
  std::optional<std::size_t> max_summary_chars;
  std::optional<std::size_t> max_image_bytes;
  std::optional<std::size_t> reddit_top_comments;
  std::optional<std::string> keyword_table;
  std::optional<std::string> llm_base_url;
  std::optional<std::string> github_api_base;
  std::optional<std::string> threads_dir;
  std::optional<std::string> trajectories_dir;
  std::vector<std::string> splits;
  bool stable_output = false;
  std::string log_level = "warn";
};

template <typename T>
void set_if(std::optional<T> &src, T &dst) {
  if (src) dst = *src;
}

void add_common(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config_file, "JSON config file");
  cmd->add_option("-o,--output-dir", f.output_dir, "Directory for output files");
  cmd->add_option("--log-level", f.log_level, "trace|debug|info|warn|error|off")->capture_default_str();
}

void add_gateway(CLI::App *cmd, Flags &f) {
  cmd->add_option("--gateway", f.gateway_mode, "live|record|replay|stub");
  cmd->add_option("--exchange", f.exchange_path, "Exchange log for record/replay");
  cmd->add_option("--stub-script", f.stub_script, "Scripted replies for stub mode");
  cmd->add_option("-j,--parallelism", f.parallelism, "Issues processed concurrently");
  cmd->add_option("--llm-base-url", f.llm_base_url, "OpenAI-compatible API base URL");
  cmd->add_flag("--stable-output", f.stable_output, "Zero timestamps for byte-stable output");
}

// Defaults, then config file, then ISSUETRAJ_* environment, then flags.
RunConfig build_config(Flags &f) {
  RunConfig c;
  if (f.config_file) apply_config_file(c, *f.config_file);
  apply_environment(c, process_env());
  if (!f.inputs.empty()) c.inputs = f.inputs;
  set_if(f.output_dir, c.output_dir);
  set_if(f.cache_path, c.cache_path);
  if (f.gateway_mode) {
    const auto m = gateway_mode_from_string(*f.gateway_mode);
    if (!m) throw ConfigError(fmt::format("unknown gateway mode '{}'", *f.gateway_mode));
    c.gateway_mode = *m;
  }
  set_if(f.exchange_path, c.exchange_path);
  set_if(f.stub_script, c.stub_script_path);
  set_if(f.parallelism, c.parallelism);
  set_if(f.context_lines, c.limits.context_lines);
  set_if(f.max_artifact_chars, c.limits.max_artifact_chars);
  set_if(f.max_summary_chars, c.limits.max_summary_chars);
  set_if(f.max_image_bytes, c.limits.max_image_bytes);
  set_if(f.reddit_top_comments, c.limits.reddit_top_comments);
  set_if(f.keyword_table, c.keyword_table_path);
  set_if(f.llm_base_url, c.llm_base_url);
  set_if(f.github_api_base, c.github_api_base);
  set_if(f.threads_dir, c.threads_dir);
  set_if(f.trajectories_dir, c.trajectories_dir);
  if (f.stable_output) c.stable_output = true;
  if (!f.splits.empty()) {
    c.splits.clear();
    for (const auto &s : f.splits) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("split '{}' must be NAME=PATH", s));
      c.splits.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
  }
  if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  return c;
}

void print_summary(const RunReport &r) {
  std::size_t ok = 0;
  for (const auto &s : r.issues) {
    if (s.ok) {
      ++ok;
    } else {
      std::cerr << fmt::format("FAILED {} [{}]: {}\n", s.input, s.stage, s.reason);
    }
  }
  std::cout << fmt::format("{} ok, {} failed, {} cache hits, {} cache misses\n", ok, r.issues.size() - ok,
                           r.cache_hits, r.cache_misses);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Mine structured resolution trajectories from GitHub issue threads"};
  app.require_subcommand(1);
  Flags f;

  auto *extract = app.add_subcommand("extract", "Build trajectory files from thread exports");
  add_common(extract, f);
  add_gateway(extract, f);
  extract->add_option("inputs", f.inputs, "Thread files, directories or glob patterns");
  extract->add_option("--cache", f.cache_path, "Persistent link cache file");
  extract->add_option("--keyword-table", f.keyword_table, "Label keyword table (JSON)");
  extract->add_option("--context-lines", f.context_lines, "Lines of context around referenced code");
  extract->add_option("--max-artifact-chars", f.max_artifact_chars, "Cap on retrieved artifact text");
  extract->add_option("--max-summary-chars", f.max_summary_chars, "Cap on artifact summaries");
  extract->add_option("--max-image-bytes", f.max_image_bytes, "Largest image sent for description");
  extract->add_option("--reddit-top-comments", f.reddit_top_comments, "Reddit comments kept per post");
  extract->add_option("--github-api-base", f.github_api_base, "GitHub REST base URL");

  auto *judge = app.add_subcommand("judge", "Score trajectories against their threads");
  add_common(judge, f);
  add_gateway(judge, f);
  judge->add_option("--threads", f.threads_dir, "Directory of thread exports");
  judge->add_option("--trajectories", f.trajectories_dir, "Directory of trajectory files");

  auto *stats = app.add_subcommand("stats", "Aggregate verdicts into summary tables");
  add_common(stats, f);
  stats->add_option("--split", f.splits, "NAME=PATH to verdict directory or JSON-lines file");

  auto *cache = app.add_subcommand("cache", "Inspect or maintain the link cache");
  cache->require_subcommand(1);
  cache->add_option("--config", f.config_file, "JSON config file");
  cache->add_option("--cache", f.cache_path, "Link cache file");
  auto *cache_stats = cache->add_subcommand("stats", "Entry counts by status and kind");
  auto *cache_purge = cache->add_subcommand("purge-failed", "Drop failed entries so they are retried");
  cache_stats->fallthrough();
  cache_purge->fallthrough();

  std::string repo_slug;
  std::int64_t fetch_issue = 0;
  std::int64_t fetch_pr = 0;
  auto *fetch = app.add_subcommand("fetch", "Export a live GitHub issue thread");
  add_common(fetch, f);
  fetch->add_option("repo", repo_slug, "owner/repo")->required();
  fetch->add_option("issue", fetch_issue, "Issue number")->required();
  fetch->add_option("--pr", fetch_pr, "Linked pull request number for the file name");
  fetch->add_option("--github-api-base", f.github_api_base, "GitHub REST base URL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  auto console = spdlog::stderr_color_mt("issuetraj");
  spdlog::set_default_logger(console);
  spdlog::set_level(spdlog::level::from_str(f.log_level));

  try {
    RunConfig config = build_config(f);

    if (extract->parsed()) {
      config.validate_for_extract();
      ServiceBundle bundle(config);
      auto services = bundle.services();
      const RunReport report = cmd_extract(config, services);
      print_summary(report);
      return report.exit_code();
    }
    if (judge->parsed()) {
      if (config.gateway_mode == GatewayMode::replay && config.exchange_path.empty()) {
        throw ConfigError("replay mode needs --exchange");
      }
      ServiceBundle bundle(config);
      const RunReport report = cmd_judge(config, bundle.gateway());
      print_summary(report);
      return report.exit_code();
    }
    if (stats->parsed()) {
      const StatsOutput out = cmd_stats(config);
      std::cout << out.verdict_table;
      if (!out.issue_type_table.empty()) std::cout << "\n" << out.issue_type_table;
      return 0;
    }
    if (cache->parsed()) {
      const auto command = cache_purge->parsed() ? CacheCommand::purge_failed : CacheCommand::stats;
      (void)cache_stats;
      std::cout << cmd_cache(config, command);
      return 0;
    }
    if (fetch->parsed()) {
      const auto slash = repo_slug.find('/');
      if (slash == std::string::npos) throw ConfigError("repo must be owner/repo");
      CurlHttpClient http;
      const auto token = process_env()(config.github_token_env).value_or("");
      GitHubClient github(http, token, config.github_api_base);
      const IssueThread thread =
          fetch_issue_thread(github, repo_slug.substr(0, slash), repo_slug.substr(slash + 1), fetch_issue);
      const std::string dir = config.output_dir;
      std::filesystem::create_directories(dir);
      const std::string path = (std::filesystem::path(dir) / thread_filename(fetch_issue, fetch_pr)).string();
      write_file_atomic(path, serialize_thread(thread));
      std::cout << path << "\n";
      return 0;
    }
  } catch (const ConfigError &e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const EmptyInput &e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
