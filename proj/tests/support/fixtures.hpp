#pragma once

// Offline doubles and builders shared by the unit and acceptance tests.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "issuetraj/http.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/thread_model.hpp"

namespace fixtures {

using issuetraj::HttpRequest;
using issuetraj::HttpResponse;

/// In-process HTTP double. Unknown URLs raise NetworkFailure, like an
/// unreachable host.
class FixtureHttpClient final : public issuetraj::HttpClient {
 public:
  using Handler = std::function<std::optional<HttpResponse>(const HttpRequest &)>;

  void add(const std::string &url, HttpResponse response);
  void add_body(const std::string &url, std::string body,
                std::string content_type = "text/plain", int status = 200);
  void add_handler(Handler handler);
  /// Requests whose URL starts with `prefix` fail with NetworkFailure.
  void fail_prefix(const std::string &prefix);
  /// Hold each request for this long (to observe concurrency).
  void set_delay_ms(int ms) { delay_ms_ = ms; }

  HttpResponse send(const HttpRequest &request) override;

  std::size_t requests() const;
  std::size_t requests_for(const std::string &url) const;
  std::size_t max_in_flight() const { return max_in_flight_.load(); }
  std::vector<std::string> log() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, HttpResponse> routes_;
  std::vector<Handler> handlers_;
  std::vector<std::string> failing_;
  std::vector<std::string> log_;
  std::atomic<int> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  int delay_ms_ = 0;
};

/// Transport double for live and record mode: answers with `responder`
/// and counts every attempt.
class FakeTransport final : public issuetraj::LlmTransport {
 public:
  explicit FakeTransport(issuetraj::Responder responder) : responder_(std::move(responder)) {}
  std::string complete(const issuetraj::ModelRoute &route,
                       const std::vector<issuetraj::Message> &messages) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  issuetraj::Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic stand-in for every model role, driven by prompt content.
///
/// Bucket classifier: each comment-body line `[field_key] text` becomes an
/// excerpt for that field. Synthesizer: a paragraph naming the field and its
/// excerpt count, or the no-evidence sentinel when an excerpt contains
/// `NOEVIDENCE`. Judge: scores from `judge_scores`.
struct ScriptedModel {
  std::string label = "bug";
  std::vector<int> judge_scores = {5, 4, 4, 4, 4};
  std::string judge_category = "Good";

  std::string operator()(issuetraj::Role role, const std::vector<issuetraj::Message> &messages) const;
};

issuetraj::Responder scripted_model(ScriptedModel model = {});

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::string file(const std::string &name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

struct CommentSpec {
  std::string id;
  std::string author = "user";
  std::string association = "NONE";
  std::string body;
  std::map<std::string, std::int64_t> reactions;
  bool is_bot = false;
};

/// Thread with `comments[0]` as header, one minute apart.
issuetraj::IssueThread make_thread(std::int64_t number, const std::vector<CommentSpec> &comments,
                                   std::vector<std::string> labels = {},
                                   std::optional<std::string> title = std::nullopt,
                                   std::string owner = "acme", std::string repo = "widget");

/// Stored (uncompressed) zip archive, or deflated when `deflate` is set.
std::string zip_archive(const std::vector<std::pair<std::string, std::string>> &members,
                        bool deflate = false);

/// Minimal .docx: paragraphs, then one table of rows of cells.
std::string docx_bytes(const std::vector<std::string> &paragraphs,
                       const std::vector<std::vector<std::string>> &table);

/// Minimal .xlsx with shared strings; each sheet is (name, rows).
std::string xlsx_bytes(
    const std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> &sheets);

/// PDF with one page per entry, text drawn with Tj; optionally Flate-compressed
/// content streams.
std::string pdf_bytes(const std::vector<std::string> &pages, bool compress = false);

/// 1x1 PNG.
std::string tiny_png();

}  // namespace fixtures
