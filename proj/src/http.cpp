#include "issuetraj/http.hpp"

#include <curl/curl.h>

#include <algorithm>
#include <chrono>
#include <mutex>

#include <fmt/format.h>

#include "issuetraj/error.hpp"
#include "issuetraj/text.hpp"

namespace issuetraj {

using nlohmann::json;

std::string HttpResponse::header(const std::string &name) const {
  const auto it = headers.find(to_lower(name));
  return it == headers.end() ? std::string{} : it->second;
}

HttpResponse HttpClient::get(const std::string &url,
                             std::vector<std::pair<std::string, std::string>> headers) {
  HttpRequest req;
  req.url = url;
  req.headers = std::move(headers);
  return send(req);
}

namespace {

struct CurlTransfer {
  HttpResponse response;
  std::optional<std::size_t> max_body;
};

std::size_t on_body(char *data, std::size_t size, std::size_t nmemb, void *user) {
  auto *t = static_cast<CurlTransfer *>(user);
  const std::size_t n = size * nmemb;
  if (t->max_body && t->response.body.size() + n > *t->max_body) {
    t->response.body.append(data, *t->max_body - t->response.body.size());
    t->response.body_truncated = true;
    return 0;  // aborts the transfer
  }
  t->response.body.append(data, n);
  return n;
}

std::size_t on_header(char *data, std::size_t size, std::size_t nmemb, void *user) {
  auto *t = static_cast<CurlTransfer *>(user);
  const std::size_t n = size * nmemb;
  const std::string_view line(data, n);
  if (line.starts_with("HTTP/")) {
    t->response.headers.clear();  // redirects: keep only the final response
    return n;
  }
  const auto colon = line.find(':');
  if (colon != std::string_view::npos) {
    t->response.headers[to_lower(trim(line.substr(0, colon)))] =
        trim(line.substr(colon + 1));
  }
  return n;
}

void curl_global_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

}  // namespace

CurlHttpClient::CurlHttpClient(std::chrono::seconds timeout) : timeout_(timeout) {
  curl_global_once();
}

CurlHttpClient::~CurlHttpClient() = default;

HttpResponse CurlHttpClient::send(const HttpRequest &request) {
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(),
                                                           &curl_easy_cleanup);
  if (!curl) throw NetworkFailure("curl_easy_init failed");

  CurlTransfer transfer;
  transfer.max_body = request.max_body_bytes;

  curl_slist *headers = nullptr;
  for (const auto &[k, v] : request.headers) {
    headers = curl_slist_append(headers, fmt::format("{}: {}", k, v).c_str());
  }
  std::unique_ptr<curl_slist, decltype(&curl_slist_free_all)> header_guard(
      headers, &curl_slist_free_all);

  CURL *h = curl.get();
  curl_easy_setopt(h, CURLOPT_URL, request.url.c_str());
  curl_easy_setopt(h, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(h, CURLOPT_MAXREDIRS, 10L);
  curl_easy_setopt(h, CURLOPT_TIMEOUT, static_cast<long>(timeout_.count()));
  curl_easy_setopt(h, CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(h, CURLOPT_ACCEPT_ENCODING, "");
  curl_easy_setopt(h, CURLOPT_HTTPHEADER, headers);
  curl_easy_setopt(h, CURLOPT_WRITEFUNCTION, &on_body);
  curl_easy_setopt(h, CURLOPT_WRITEDATA, &transfer);
  curl_easy_setopt(h, CURLOPT_HEADERFUNCTION, &on_header);
  curl_easy_setopt(h, CURLOPT_HEADERDATA, &transfer);
  if (request.method == "POST") {
    curl_easy_setopt(h, CURLOPT_POST, 1L);
    curl_easy_setopt(h, CURLOPT_POSTFIELDS, request.body.c_str());
    curl_easy_setopt(h, CURLOPT_POSTFIELDSIZE, static_cast<long>(request.body.size()));
  } else if (request.method != "GET") {
    curl_easy_setopt(h, CURLOPT_CUSTOMREQUEST, request.method.c_str());
  }

  const CURLcode rc = curl_easy_perform(h);
  if (rc != CURLE_OK && !(rc == CURLE_WRITE_ERROR && transfer.response.body_truncated)) {
    throw NetworkFailure(
        fmt::format("{} {}: {}", request.method, request.url, curl_easy_strerror(rc)));
  }
  long status = 0;
  curl_easy_getinfo(h, CURLINFO_RESPONSE_CODE, &status);
  transfer.response.status = static_cast<int>(status);
  return std::move(transfer.response);
}

BoundedHttpClient::BoundedHttpClient(HttpClient &inner, std::ptrdiff_t max_in_flight)
    : inner_(inner), slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)) {}

HttpResponse BoundedHttpClient::send(const HttpRequest &request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024> &s;
    ~Release() { s.release(); }
  } release{slots_};
  return inner_.send(request);
}

GitHubClient::GitHubClient(HttpClient &http, std::string token, std::string api_base)
    : http_(http), token_(std::move(token)), api_base_(std::move(api_base)) {
  while (!api_base_.empty() && api_base_.back() == '/') api_base_.pop_back();
}

HttpResponse GitHubClient::request(const std::string &url, const std::string &accept) {
  HttpRequest req;
  req.url = url;
  req.headers = {{"Accept", accept},
                 {"User-Agent", "issuetraj"},
                 {"X-GitHub-Api-Version", "2022-11-28"}};
  if (!token_.empty()) req.headers.emplace_back("Authorization", "Bearer " + token_);
  HttpResponse resp = http_.send(req);
  if (resp.status >= 200 && resp.status < 300) return resp;

  if (resp.status == 404 || resp.status == 410) {
    throw NotFound(fmt::format("GitHub returned {} for {}", resp.status, url));
  }
  if (resp.status == 403 || resp.status == 429) {
    const std::string retry_after = resp.header("retry-after");
    const std::string remaining = resp.header("x-ratelimit-remaining");
    if (!retry_after.empty() || remaining == "0" || resp.status == 429) {
      std::chrono::seconds wait{60};
      try {
        if (!retry_after.empty()) {
          wait = std::chrono::seconds{std::stoll(retry_after)};
        } else if (const std::string reset = resp.header("x-ratelimit-reset"); !reset.empty()) {
          const auto now = std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch());
          wait = std::max(std::chrono::seconds{0},
                          std::chrono::seconds{std::stoll(reset)} - now);
        }
      } catch (const std::exception &) {
      }
      throw RateLimited(fmt::format("GitHub rate limit hit for {}", url), wait);
    }
  }
  throw NetworkFailure(fmt::format("GitHub returned HTTP {} for {}", resp.status, url));
}

json GitHubClient::get_json(const std::string &path) {
  const HttpResponse resp = request(api_base_ + path, "application/vnd.github+json");
  try {
    return json::parse(sanitize_utf8(resp.body));
  } catch (const json::parse_error &e) {
    throw NetworkFailure(fmt::format("invalid JSON from {}: {}", path, e.what()));
  }
}

std::string GitHubClient::get_raw(const std::string &path) {
  return request(api_base_ + path, "application/vnd.github.raw").body;
}

json GitHubClient::get_paginated(const std::string &path, std::size_t max_pages) {
  json all = json::array();
  std::string url = api_base_ + path;
  for (std::size_t page = 0; page < max_pages && !url.empty(); ++page) {
    const HttpResponse resp = request(url, "application/vnd.github+json");
    json chunk;
    try {
      chunk = json::parse(sanitize_utf8(resp.body));
    } catch (const json::parse_error &e) {
      throw NetworkFailure(fmt::format("invalid JSON from {}: {}", url, e.what()));
    }
    if (!chunk.is_array()) throw NetworkFailure(fmt::format("expected array from {}", url));
    for (auto &item : chunk) all.push_back(std::move(item));
    url = next_link(resp.header("link")).value_or("");
  }
  return all;
}

std::optional<std::string> next_link(const std::string &link_header) {
  // <https://api.github.com/...&page=2>; rel="next", <...>; rel="last"
  for (const auto &part : split(link_header, ',')) {
    const auto lt = part.find('<');
    const auto gt = part.find('>');
    if (lt == std::string::npos || gt == std::string::npos || gt < lt) continue;
    if (part.find("rel=\"next\"", gt) != std::string::npos) {
      return part.substr(lt + 1, gt - lt - 1);
    }
  }
  return std::nullopt;
}

}  // namespace issuetraj
