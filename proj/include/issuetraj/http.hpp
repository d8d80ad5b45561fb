#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace issuetraj {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  /// Abort the transfer once the body exceeds this many bytes.
  std::optional<std::size_t> max_body_bytes;
};

struct HttpResponse {
  int status = 0;
  /// Header names are lowercased.
  std::map<std::string, std::string> headers;
  std::string body;
  /// Set when `max_body_bytes` cut the transfer short.
  bool body_truncated = false;

  std::string header(const std::string &name) const;
};

/// Synchronous HTTP transport. Implementations throw NetworkFailure when no
/// response could be obtained; any HTTP status is returned, not thrown.
class HttpClient {
 public:
  virtual ~HttpClient() = default;
  virtual HttpResponse send(const HttpRequest &request) = 0;

  HttpResponse get(const std::string &url,
                   std::vector<std::pair<std::string, std::string>> headers = {});
};

class CurlHttpClient final : public HttpClient {
 public:
  explicit CurlHttpClient(std::chrono::seconds timeout = std::chrono::seconds{30});
  ~CurlHttpClient() override;

  HttpResponse send(const HttpRequest &request) override;

 private:
  std::chrono::seconds timeout_;
};

/// Caps the number of requests in flight through `inner`.
class BoundedHttpClient final : public HttpClient {
 public:
  BoundedHttpClient(HttpClient &inner, std::ptrdiff_t max_in_flight);

  HttpResponse send(const HttpRequest &request) override;

 private:
  HttpClient &inner_;
  std::counting_semaphore<1024> slots_;
};

/// Thin GitHub REST client over an HttpClient.
class GitHubClient {
 public:
  explicit GitHubClient(HttpClient &http, std::string token = {},
                        std::string api_base = "https://api.github.com");

  /// GET an API path such as `/repos/o/r/issues/1`. Throws NotFound,
  /// RateLimited, NetworkFailure.
  nlohmann::json get_json(const std::string &path);

  /// GET with the raw media type; returns the body verbatim.
  std::string get_raw(const std::string &path);

  /// Follow `Link: rel="next"` pagination and concatenate array pages.
  nlohmann::json get_paginated(const std::string &path,
                               std::size_t max_pages = 50);

  const std::string &api_base() const noexcept { return api_base_; }

 private:
  HttpResponse request(const std::string &url, const std::string &accept);

  HttpClient &http_;
  std::string token_;
  std::string api_base_;
};

/// Extract the `rel="next"` target from a Link header.
std::optional<std::string> next_link(const std::string &link_header);

}  // namespace issuetraj
