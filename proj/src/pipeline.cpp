#include "issuetraj/pipeline.hpp"

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/comment_analyzer.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"
#include "issuetraj/thread_model.hpp"

namespace issuetraj {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
T get_as(const json &doc, const char *key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
  }
}

std::vector<std::string> string_list(const json &v, const char *key) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(fmt::format("config key '{}' must be a string or list", key));
  std::vector<std::string> out;
  for (const auto &item : v) {
    if (!item.is_string()) throw ConfigError(fmt::format("config key '{}' must hold strings", key));
    out.push_back(item.get<std::string>());
  }
  return out;
}

void apply_limits(ResolverLimits &limits, const json &doc) {
  if (!doc.is_object()) throw ConfigError("config key 'limits' must be an object");
  for (const auto &[key, value] : doc.items()) {
    if (key == "context_lines") {
      limits.context_lines = get_as<std::int64_t>(doc, "context_lines");
      if (limits.context_lines < 0) throw ConfigError("context_lines must be >= 0");
    } else if (key == "max_artifact_chars") {
      limits.max_artifact_chars = get_as<std::size_t>(doc, "max_artifact_chars");
    } else if (key == "max_summary_chars") {
      limits.max_summary_chars = get_as<std::size_t>(doc, "max_summary_chars");
    } else if (key == "max_image_bytes") {
      limits.max_image_bytes = get_as<std::size_t>(doc, "max_image_bytes");
    } else if (key == "reddit_top_comments") {
      limits.reddit_top_comments = get_as<std::size_t>(doc, "reddit_top_comments");
    } else if (key == "max_document_bytes") {
      limits.max_document_bytes = get_as<std::size_t>(doc, "max_document_bytes");
    } else if (key == "user_agent") {
      limits.user_agent = get_as<std::string>(doc, "user_agent");
    } else if (key == "legacy_doc_converters") {
      limits.legacy_doc_converters = string_list(value, "legacy_doc_converters");
    } else if (key == "legacy_sheet_converters") {
      limits.legacy_sheet_converters = string_list(value, "legacy_sheet_converters");
    } else {
      throw ConfigError(fmt::format("unknown limits key '{}'", key));
    }
  }
  if (limits.max_summary_chars <= kTruncationMarker.size()) {
    throw ConfigError("max_summary_chars is too small");
  }
}

void apply_thresholds(CategoryThresholds &t, const json &doc) {
  if (!doc.is_object()) throw ConfigError("config key 'thresholds' must be an object");
  for (const auto &[key, value] : doc.items()) {
    if (!value.is_number()) throw ConfigError(fmt::format("threshold '{}' must be a number", key));
    const double v = value.get<double>();
    if (key == "excellent") t.excellent = v;
    else if (key == "good") t.good = v;
    else if (key == "acceptable") t.acceptable = v;
    else if (key == "poor") t.poor = v;
    else throw ConfigError(fmt::format("unknown threshold '{}'", key));
  }
  if (!(t.excellent >= t.good && t.good >= t.acceptable && t.acceptable >= t.poor)) {
    throw ConfigError("thresholds must be non-increasing from excellent to poor");
  }
}

GatewayMode parse_mode(const std::string &text) {
  const auto m = gateway_mode_from_string(to_lower(trim(text)));
  if (!m) throw ConfigError(fmt::format("unknown gateway mode '{}'", text));
  return *m;
}

std::int64_t parse_int(const std::string &name, const std::string &text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception &) {
    throw ConfigError(fmt::format("{} must be an integer, got '{}'", name, text));
  }
}

bool parse_bool(const std::string &name, const std::string &text) {
  const std::string t = to_lower(trim(text));
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off" || t.empty()) return false;
  throw ConfigError(fmt::format("{} must be a boolean, got '{}'", name, text));
}

bool is_glob(const std::string &s) { return s.find_first_of("*?[") != std::string::npos; }

std::string join_path(const std::string &dir, const std::string &name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError(fmt::format("cannot create directory '{}': {}", dir, ec.message()));
}

std::string issue_context(const IssueThread &thread) {
  const std::string body = header_comment(thread).body;
  return fmt::format("{}\n\n{}", issue_title(thread), utf8_prefix(body, 2000));
}

// All referenced URLs of a thread, normalized, in first-reference order.
std::vector<ArtifactRef> thread_artifacts(const IssueThread &thread) {
  std::vector<ArtifactRef> refs;
  std::set<std::string> seen;
  for (const auto &c : thread.comments) {
    for (const auto &m : extract_urls(c.body)) {
      try {
        ArtifactRef ref = make_artifact_ref(m.raw_url, c.comment_id);
        if (seen.insert(ref.normalized_url).second) refs.push_back(std::move(ref));
      } catch (const InvalidUrl &) {
      }
    }
  }
  return refs;
}

ThreadResult run_phases(const IssueThread &thread, LinkCache &cache, PipelineServices &services,
                        const ResolverLimits &limits, const KeywordTable &keywords,
                        std::string &stage) {
  stage = "label";
  const LabelDecision label = detect_label(thread, thread.labels, services.gateway, keywords);
  const FieldSchema &schema = schema_for(label.label);

  std::vector<std::string> diagnostics;
  stage = "augment";
  ArtifactClients clients{services.http, services.github, services.gateway, limits};
  const std::string context = issue_context(thread);
  for (const auto &ref : thread_artifacts(thread)) {
    const CacheEntry entry = get_or_summarize(cache, ref, clients, context, services.clock);
    if (entry.fetch_status != FetchStatus::ok) {
      diagnostics.push_back(fmt::format("link_{}:{}", to_string(entry.fetch_status), ref.normalized_url));
    }
  }

  stage = "analyze";
  std::vector<CommentAnalysis> analyses;
  std::vector<std::vector<Excerpt>> excerpts;
  analyses.reserve(thread.comments.size());
  for (const auto &c : thread.comments) {
    analyses.push_back(analyze_comment(c, schema, cache, services.gateway));
    if (analyses.back().failed) diagnostics.push_back("analysis_failed:" + c.comment_id);
  }
  for (std::size_t i = 0; i < thread.comments.size(); ++i) {
    excerpts.push_back(bucket_excerpts(thread.comments[i], analyses[i], schema, services.gateway));
  }
  const FieldBuckets buckets = accumulate_buckets(excerpts, schema);

  stage = "synthesize";
  SynthesisOutput out = synthesize_trajectory(thread, thread.labels, label, schema, cache, analyses,
                                              buckets, services.gateway);
  diagnostics.insert(diagnostics.end(), out.diagnostics.begin(), out.diagnostics.end());
  return ThreadResult{std::move(out.trajectory), std::move(diagnostics)};
}

// Runs `job(i)` for i in [0, n) on up to `workers` threads.
void run_bounded(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &job) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto &t : pool) t.join();
}

std::optional<std::int64_t> issue_number_from_name(const std::string &name, std::string_view suffix) {
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return std::nullopt;
  }
  const std::string digits = name.substr(0, name.size() - suffix.size());
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
  return std::stoll(digits);
}

std::vector<std::string> sorted_dir(const std::string &dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto &e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file()) out.push_back(e.path().string());
  }
  if (ec) throw ConfigError(fmt::format("cannot read directory '{}': {}", dir, ec.message()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void RunConfig::validate_for_extract() const {
  if (inputs.empty()) throw ConfigError("no inputs given");
  if (output_dir.empty()) throw ConfigError("output directory is empty");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  switch (gateway_mode) {
    case GatewayMode::replay:
      if (exchange_path.empty() || !fs::is_regular_file(exchange_path)) {
        throw ConfigError(fmt::format("replay mode needs an existing exchange file, got '{}'", exchange_path));
      }
      break;
    case GatewayMode::record:
      if (exchange_path.empty()) throw ConfigError("record mode needs an exchange file path");
      break;
    case GatewayMode::stub:
      if (!stub_script_path.empty() && !fs::is_regular_file(stub_script_path)) {
        throw ConfigError(fmt::format("stub script '{}' does not exist", stub_script_path));
      }
      break;
    case GatewayMode::live:
      break;
  }
  if (!keyword_table_path.empty() && !fs::is_regular_file(keyword_table_path)) {
    throw ConfigError(fmt::format("keyword table '{}' does not exist", keyword_table_path));
  }
}

void apply_config_json(RunConfig &c, const json &doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto &[key, value] : doc.items()) {
    if (key == "inputs") c.inputs = string_list(value, "inputs");
    else if (key == "output_dir") c.output_dir = get_as<std::string>(doc, "output_dir");
    else if (key == "cache_path") c.cache_path = get_as<std::string>(doc, "cache_path");
    else if (key == "gateway_mode") c.gateway_mode = parse_mode(get_as<std::string>(doc, "gateway_mode"));
    else if (key == "exchange_path") c.exchange_path = get_as<std::string>(doc, "exchange_path");
    else if (key == "stub_script_path") c.stub_script_path = get_as<std::string>(doc, "stub_script_path");
    else if (key == "parallelism") c.parallelism = get_as<std::int64_t>(doc, "parallelism");
    else if (key == "limits") apply_limits(c.limits, value);
    else if (key == "keyword_table_path") c.keyword_table_path = get_as<std::string>(doc, "keyword_table_path");
    else if (key == "stable_output") c.stable_output = get_as<bool>(doc, "stable_output");
    else if (key == "llm_base_url") c.llm_base_url = get_as<std::string>(doc, "llm_base_url");
    else if (key == "llm_api_key_env") c.llm_api_key_env = get_as<std::string>(doc, "llm_api_key_env");
    else if (key == "routes") {
      if (!value.is_object()) throw ConfigError("config key 'routes' must be an object");
      c.route_overrides = value;
    } else if (key == "github_token_env") c.github_token_env = get_as<std::string>(doc, "github_token_env");
    else if (key == "github_api_base") c.github_api_base = get_as<std::string>(doc, "github_api_base");
    else if (key == "threads_dir") c.threads_dir = get_as<std::string>(doc, "threads_dir");
    else if (key == "trajectories_dir") c.trajectories_dir = get_as<std::string>(doc, "trajectories_dir");
    else if (key == "thresholds") apply_thresholds(c.thresholds, value);
    else if (key == "splits") {
      if (!value.is_array()) throw ConfigError("config key 'splits' must be a list");
      c.splits.clear();
      for (const auto &s : value) {
        if (!s.is_object() || !s.contains("name") || !s.contains("path")) {
          throw ConfigError("each split needs 'name' and 'path'");
        }
        c.splits.emplace_back(get_as<std::string>(s, "name"), get_as<std::string>(s, "path"));
      }
    } else {
      throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  }
  if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

void apply_config_file(RunConfig &config, const std::string &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception &e) {
    throw ConfigError(fmt::format("cannot read config '{}': {}", path, e.what()));
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
  }
  apply_config_json(config, doc);
}

EnvLookup process_env() {
  return [](const std::string &name) -> std::optional<std::string> {
    const char *v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

void apply_environment(RunConfig &c, const EnvLookup &env) {
  auto str = [&](const char *name, std::string &target) {
    if (auto v = env(name)) target = *v;
  };
  str("ISSUETRAJ_OUTPUT_DIR", c.output_dir);
  str("ISSUETRAJ_CACHE", c.cache_path);
  str("ISSUETRAJ_EXCHANGE", c.exchange_path);
  str("ISSUETRAJ_STUB_SCRIPT", c.stub_script_path);
  str("ISSUETRAJ_KEYWORD_TABLE", c.keyword_table_path);
  str("ISSUETRAJ_LLM_BASE_URL", c.llm_base_url);
  str("ISSUETRAJ_GITHUB_API_BASE", c.github_api_base);
  if (auto v = env("ISSUETRAJ_GATEWAY_MODE")) c.gateway_mode = parse_mode(*v);
  if (auto v = env("ISSUETRAJ_PARALLELISM")) {
    c.parallelism = parse_int("ISSUETRAJ_PARALLELISM", *v);
    if (c.parallelism < 1) throw ConfigError("ISSUETRAJ_PARALLELISM must be >= 1");
  }
  if (auto v = env("ISSUETRAJ_CONTEXT_LINES")) {
    c.limits.context_lines = parse_int("ISSUETRAJ_CONTEXT_LINES", *v);
    if (c.limits.context_lines < 0) throw ConfigError("ISSUETRAJ_CONTEXT_LINES must be >= 0");
  }
  if (auto v = env("ISSUETRAJ_STABLE_OUTPUT")) c.stable_output = parse_bool("ISSUETRAJ_STABLE_OUTPUT", *v);
}

bool RunReport::all_ok() const {
  return std::all_of(issues.begin(), issues.end(), [](const IssueStatus &s) { return s.ok; });
}

int RunReport::exit_code() const { return all_ok() ? 0 : 1; }

ordered_json RunReport::to_json() const {
  ordered_json j;
  std::size_t ok = 0;
  ordered_json list = ordered_json::array();
  for (const auto &s : issues) {
    ok += s.ok ? 1 : 0;
    ordered_json e;
    e["input"] = s.input;
    e["issue_number"] = s.issue_number ? ordered_json(*s.issue_number) : ordered_json(nullptr);
    e["status"] = s.ok ? "ok" : "failed";
    if (!s.ok) {
      e["stage"] = s.stage;
      e["reason"] = s.reason;
    }
    if (!s.output.empty()) e["output"] = s.output;
    e["diagnostics"] = s.diagnostics;
    list.push_back(std::move(e));
  }
  j["ok"] = ok;
  j["failed"] = issues.size() - ok;
  j["issues"] = std::move(list);
  ordered_json calls = ordered_json::object();
  for (Role r : all_roles()) {
    const auto it = gateway_calls.find(r);
    calls[std::string(to_string(r))] = it == gateway_calls.end() ? 0 : it->second;
  }
  j["gateway_calls"] = std::move(calls);
  j["cache"] = {{"hits", cache_hits}, {"misses", cache_misses}};
  j["wall_time_ms"] = wall_time.count();
  return j;
}

struct ServiceBundle::Impl {
  CurlHttpClient curl;
  BoundedHttpClient http;
  GitHubClient github;
  std::unique_ptr<OpenAiTransport> transport;
  std::optional<LlmGateway> gateway;

  Impl(const RunConfig &c, const std::string &token)
      : http(curl, static_cast<std::ptrdiff_t>(std::min<std::int64_t>(c.parallelism, 1024))),
        github(http, token, c.github_api_base) {}
};

ServiceBundle::ServiceBundle(const RunConfig &config) {
  if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  const auto env = process_env();
  impl_ = std::make_unique<Impl>(config, env(config.github_token_env).value_or(""));
  RoutingTable routes = RoutingTable::defaults();
  try {
    routes.apply_overrides(config.route_overrides);
  } catch (const UnknownRole &e) {
    throw ConfigError(e.what());
  }
  auto make_transport = [&] {
    const auto key = env(config.llm_api_key_env);
    if (!key || key->empty()) {
      throw ConfigError(fmt::format("{} is not set; it is required in {} mode", config.llm_api_key_env,
                                    to_string(config.gateway_mode)));
    }
    impl_->transport = std::make_unique<OpenAiTransport>(impl_->http, config.llm_base_url, *key);
  };
  switch (config.gateway_mode) {
    case GatewayMode::live:
      make_transport();
      impl_->gateway.emplace(LlmGateway::live(routes, *impl_->transport));
      break;
    case GatewayMode::record:
      if (config.exchange_path.empty()) throw ConfigError("record mode needs an exchange file path");
      make_transport();
      impl_->gateway.emplace(LlmGateway::record(routes, *impl_->transport, config.exchange_path));
      break;
    case GatewayMode::replay:
      impl_->gateway.emplace(LlmGateway::replay(routes, config.exchange_path));
      break;
    case GatewayMode::stub:
      impl_->gateway.emplace(config.stub_script_path.empty()
                                 ? LlmGateway::stub(routes)
                                 : LlmGateway::stub_from_script(routes, config.stub_script_path));
      break;
  }
}

ServiceBundle::~ServiceBundle() = default;

PipelineServices ServiceBundle::services() {
  return PipelineServices{impl_->http, impl_->github, *impl_->gateway, system_clock()};
}

LlmGateway &ServiceBundle::gateway() { return *impl_->gateway; }

ThreadResult process_thread(const IssueThread &thread, LinkCache &cache, PipelineServices &services,
                            const ResolverLimits &limits, const KeywordTable &keywords) {
  std::string stage;
  return run_phases(thread, cache, services, limits, keywords, stage);
}

std::vector<std::string> expand_inputs(const std::vector<std::string> &inputs) {
  std::set<std::string> out;
  for (const auto &in : inputs) {
    if (is_glob(in)) {
      glob_t g{};
      const int rc = ::glob(in.c_str(), 0, nullptr, &g);
      if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) {
          if (fs::is_regular_file(g.gl_pathv[i])) out.insert(g.gl_pathv[i]);
        }
      }
      globfree(&g);
      if (rc != 0 && rc != GLOB_NOMATCH) throw ConfigError(fmt::format("cannot expand '{}'", in));
    } else if (fs::is_directory(in)) {
      for (const auto &p : sorted_dir(in)) {
        if (fs::path(p).extension() == ".json") out.insert(p);
      }
    } else {
      // Missing files stay in the list so they show up as parse failures.
      out.insert(in);
    }
  }
  return {out.begin(), out.end()};
}

RunReport cmd_extract(const RunConfig &config, PipelineServices &services) {
  config.validate_for_extract();
  const auto started = std::chrono::steady_clock::now();
  const auto inputs = expand_inputs(config.inputs);
  if (inputs.empty()) throw ConfigError("inputs matched no files");
  ensure_dir(config.output_dir);
  const KeywordTable keywords =
      config.keyword_table_path.empty() ? KeywordTable::defaults() : KeywordTable::load(config.keyword_table_path);

  LinkCache cache;
  if (!config.cache_path.empty()) LinkCache::load_into(cache, config.cache_path);
  const auto calls_before = services.gateway.call_counts();

  PipelineServices svc = services;
  if (config.stable_output) svc.clock = frozen_clock();

  RunReport report;
  report.issues.resize(inputs.size());
  std::mutex claim_mu;
  std::set<std::int64_t> claimed;

  // Scripted stub queues are consumed in call order, so they need a single worker.
  const std::size_t workers =
      services.gateway.order_sensitive() ? 1 : static_cast<std::size_t>(config.parallelism);
  run_bounded(inputs.size(), workers, [&](std::size_t i) {
    IssueStatus &status = report.issues[i];
    status.input = inputs[i];
    std::string stage = "parse";
    try {
      const IssueThread thread = parse_thread_file(inputs[i]);
      status.issue_number = thread.issue_number;
      ThreadResult result = run_phases(thread, cache, svc, config.limits, keywords, stage);
      status.diagnostics = std::move(result.diagnostics);
      stage = "write";
      {
        std::lock_guard lock(claim_mu);
        if (!claimed.insert(thread.issue_number).second) {
          throw MalformedInput(fmt::format("issue #{} appears in more than one input", thread.issue_number));
        }
      }
      const std::string path = join_path(config.output_dir, trajectory_filename(thread.issue_number));
      write_file_atomic(path, serialize_trajectory(result.trajectory));
      status.output = path;
      status.ok = true;
    } catch (const std::exception &e) {
      status.ok = false;
      status.stage = stage;
      status.reason = e.what();
      spdlog::error("{}: failed at {}: {}", inputs[i], stage, e.what());
    }
  });

  if (!config.cache_path.empty()) cache.save(config.cache_path);
  for (const auto &[role, n] : services.gateway.call_counts()) {
    const auto it = calls_before.find(role);
    report.gateway_calls[role] = n - (it == calls_before.end() ? 0 : it->second);
  }
  report.cache_hits = cache.hits();
  report.cache_misses = cache.misses();
  if (!config.stable_output) {
    report.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
  }
  write_file_atomic(join_path(config.output_dir, "run_report.json"), report.to_json().dump(2) + "\n");
  return report;
}

RunReport cmd_judge(const RunConfig &config, LlmGateway &gateway) {
  if (config.trajectories_dir.empty() || !fs::is_directory(config.trajectories_dir)) {
    throw ConfigError(fmt::format("trajectory directory '{}' does not exist", config.trajectories_dir));
  }
  if (config.threads_dir.empty() || !fs::is_directory(config.threads_dir)) {
    throw ConfigError(fmt::format("thread directory '{}' does not exist", config.threads_dir));
  }
  if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::pair<std::int64_t, std::string>> trajectories;
  for (const auto &p : sorted_dir(config.trajectories_dir)) {
    if (auto n = issue_number_from_name(fs::path(p).filename().string(), "_issue_trajectory.json")) {
      trajectories.emplace_back(*n, p);
    }
  }
  if (trajectories.empty()) {
    throw EmptyInput(fmt::format("no trajectory files in '{}'", config.trajectories_dir));
  }
  std::sort(trajectories.begin(), trajectories.end());

  // Thread files are matched by issue number.
  std::map<std::int64_t, std::string> thread_files;
  for (const auto &p : sorted_dir(config.threads_dir)) {
    const std::string name = fs::path(p).filename().string();
    if (name.rfind("issue#", 0) != 0) continue;
    const auto end = name.find('_');
    if (end == std::string::npos) continue;
    const std::string digits = name.substr(6, end - 6);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    thread_files.emplace(std::stoll(digits), p);
  }

  ensure_dir(config.output_dir);
  const auto calls_before = gateway.call_counts();
  RunReport report;
  report.issues.resize(trajectories.size());
  std::vector<std::optional<Verdict>> verdicts(trajectories.size());

  const std::size_t workers = gateway.order_sensitive() ? 1 : static_cast<std::size_t>(config.parallelism);
  run_bounded(trajectories.size(), workers, [&](std::size_t i) {
    const auto &[number, path] = trajectories[i];
    IssueStatus &status = report.issues[i];
    status.input = path;
    status.issue_number = number;
    std::string stage = "parse";
    try {
      const Trajectory traj = parse_trajectory(read_file(path));
      const auto tf = thread_files.find(number);
      if (tf == thread_files.end()) throw MalformedInput(fmt::format("no thread file for issue #{}", number));
      const IssueThread thread = parse_thread_file(tf->second);
      stage = "judge";
      Verdict v = judge_trajectory(traj, thread, gateway, config.thresholds);
      stage = "write";
      const std::string out = join_path(config.output_dir, fmt::format("{}_verdict.json", number));
      write_file_atomic(out, verdict_to_json(v).dump(2) + "\n");
      status.output = out;
      if (v.category_mismatch()) {
        status.diagnostics.push_back(fmt::format("category_mismatch:{}", to_string(*v.model_category)));
      }
      verdicts[i] = std::move(v);
      status.ok = true;
    } catch (const std::exception &e) {
      status.ok = false;
      status.stage = stage;
      status.reason = e.what();
      spdlog::error("{}: failed at {}: {}", path, stage, e.what());
    }
  });

  std::vector<Verdict> judged;
  ordered_json approved = ordered_json::array();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (!verdicts[i]) continue;
    if (is_approved(verdicts[i]->category)) {
      approved.push_back({{"issue_id", verdicts[i]->issue_id},
                          {"trajectory", fs::path(trajectories[i].second).filename().string()},
                          {"category", std::string(to_string(verdicts[i]->category))}});
    }
    judged.push_back(*verdicts[i]);
  }
  write_file_atomic(join_path(config.output_dir, "approved.json"), approved.dump(2) + "\n");
  write_file_atomic(join_path(config.output_dir, "review_worksheet.csv"), review_worksheet_csv(judged));

  for (const auto &[role, n] : gateway.call_counts()) {
    const auto it = calls_before.find(role);
    report.gateway_calls[role] = n - (it == calls_before.end() ? 0 : it->second);
  }
  if (!config.stable_output) {
    report.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
  }
  write_file_atomic(join_path(config.output_dir, "judge_report.json"), report.to_json().dump(2) + "\n");
  return report;
}

std::vector<Verdict> load_verdicts(const std::string &path) {
  std::vector<Verdict> out;
  auto parse_doc = [&](const std::string &text, const std::string &where) {
    try {
      return json::parse(text);
    } catch (const json::exception &e) {
      throw MalformedInput(fmt::format("{}: {}", where, e.what()));
    }
  };
  if (fs::is_directory(path)) {
    for (const auto &p : sorted_dir(path)) {
      if (issue_number_from_name(fs::path(p).filename().string(), "_verdict.json")) {
        out.push_back(verdict_from_json(parse_doc(read_file(p), p)));
      }
    }
    return out;
  }
  if (!fs::is_regular_file(path)) throw ConfigError(fmt::format("verdict source '{}' does not exist", path));
  const std::string text = read_file(path);
  const std::string head = trim(text);
  if (!head.empty() && head.front() == '[') {
    for (const auto &v : parse_doc(text, path)) out.push_back(verdict_from_json(v));
    return out;
  }
  std::size_t line_no = 0;
  for (const auto &line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    out.push_back(verdict_from_json(parse_doc(line, fmt::format("{}:{}", path, line_no))));
  }
  return out;
}

StatsOutput cmd_stats(const RunConfig &config) {
  if (config.splits.empty()) throw ConfigError("no splits given");
  StatsOutput out;
  std::vector<Verdict> all;
  for (const auto &[name, path] : config.splits) {
    auto verdicts = load_verdicts(path);
    out.verdict_stats.push_back(aggregate_verdicts(verdicts, name));
    std::vector<LabelType> labels;
    for (const auto &v : verdicts) {
      if (is_approved(v.category) && v.label_type) labels.push_back(*v.label_type);
    }
    if (!labels.empty()) out.label_stats.push_back(issue_type_stats(labels, name));
    all.insert(all.end(), verdicts.begin(), verdicts.end());
  }
  if (config.splits.size() > 1) out.verdict_stats.push_back(aggregate_verdicts(all, "All"));

  out.verdict_table = render_verdict_table(out.verdict_stats);
  if (!out.label_stats.empty()) out.issue_type_table = render_issue_type_table(out.label_stats);

  ensure_dir(config.output_dir);
  ordered_json doc;
  doc["verdicts"] = ordered_json::array();
  for (const auto &s : out.verdict_stats) doc["verdicts"].push_back(split_stats_to_json(s));
  doc["issue_types"] = ordered_json::array();
  for (const auto &s : out.label_stats) doc["issue_types"].push_back(split_stats_to_json(s));
  write_file_atomic(join_path(config.output_dir, "stats.json"), doc.dump(2) + "\n");
  write_file_atomic(join_path(config.output_dir, "verdicts_table.txt"), out.verdict_table);
  if (!out.issue_type_table.empty()) {
    write_file_atomic(join_path(config.output_dir, "issue_types_table.txt"), out.issue_type_table);
  }
  return out;
}

std::string cmd_cache(const RunConfig &config, CacheCommand command) {
  if (config.cache_path.empty()) throw ConfigError("no cache file given");
  LinkCache cache;
  LinkCache::load_into(cache, config.cache_path);
  if (command == CacheCommand::purge_failed) {
    const std::size_t removed = cache.purge_failed();
    if (removed > 0) cache.save(config.cache_path);
    return fmt::format("purged {} failed entries, {} remain\n", removed, cache.size());
  }
  std::map<FetchStatus, std::size_t> by_status;
  std::map<std::string, std::size_t> by_kind;
  for (const auto &[url, e] : cache.snapshot()) {
    ++by_status[e.fetch_status];
    ++by_kind[std::string(to_string(e.kind))];
  }
  std::string text = fmt::format("cache: {}\nentries: {}\nok: {}\nfailed: {}\nskipped: {}\n",
                                 config.cache_path, cache.size(), by_status[FetchStatus::ok],
                                 by_status[FetchStatus::failed], by_status[FetchStatus::skipped]);
  for (const auto &[kind, n] : by_kind) text += fmt::format("kind {}: {}\n", kind, n);
  return text;
}

}  // namespace issuetraj
