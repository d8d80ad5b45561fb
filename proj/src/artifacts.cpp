#include "issuetraj/artifacts.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/documents.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "prompts.hpp"

namespace issuetraj {

using nlohmann::json;

namespace {

std::string json_str(const json &j, const char *key) {
  if (!j.is_object()) return {};
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

std::int64_t json_int(const json &j, const char *key) {
  if (!j.is_object()) return 0;
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return 0;
  return it->get<std::int64_t>();
}

std::string login_of(const json &j) {
  if (j.is_object() && j.contains("user") && j["user"].is_object()) {
    return json_str(j["user"], "login");
  }
  return {};
}

std::string discussion_text(GitHubClient &github, const GitHubLocation &loc) {
  const json comments = github.get_paginated(
      fmt::format("/repos/{}/{}/issues/{}/comments?per_page=100", loc.owner, loc.repo, loc.target));
  std::string out;
  for (const auto &c : comments) {
    const std::string body = trim(json_str(c, "body"));
    if (body.empty()) continue;
    out += fmt::format("\n\n@{} ({}):\n{}", login_of(c), json_str(c, "created_at"), body);
  }
  return out;
}

std::string commit_text(GitHubClient &github, const GitHubLocation &loc) {
  const json c = github.get_json(
      fmt::format("/repos/{}/{}/commits/{}", loc.owner, loc.repo, loc.target));
  std::string out = fmt::format("Commit {}\n", json_str(c, "sha").empty() ? loc.target : json_str(c, "sha"));
  if (c.contains("commit") && c["commit"].is_object()) {
    const json &meta = c["commit"];
    if (meta.contains("author") && meta["author"].is_object()) {
      out += fmt::format("Author: {} ({})\n", json_str(meta["author"], "name"),
                         json_str(meta["author"], "date"));
    }
    out += "\n" + trim(json_str(meta, "message")) + "\n";
  }
  const json files = c.value("files", json::array());
  if (files.is_array() && !files.empty()) {
    out += "\nFiles changed:\n";
    for (const auto &f : files) {
      out += fmt::format("- {} ({}, +{} -{})\n", json_str(f, "filename"), json_str(f, "status"),
                         json_int(f, "additions"), json_int(f, "deletions"));
    }
    for (const auto &f : files) {
      const std::string patch = json_str(f, "patch");
      if (patch.empty()) continue;
      out += fmt::format("\n--- {}\n{}\n", json_str(f, "filename"), patch);
    }
  }
  return out;
}

std::string blob_text(GitHubClient &github, const GitHubLocation &loc, const ArtifactRef &ref,
                      const ResolverLimits &limits) {
  const std::string raw = sanitize_utf8(github.get_raw(
      fmt::format("/repos/{}/{}/contents/{}?ref={}", loc.owner, loc.repo, loc.path, loc.target)));
  if (!ref.anchor || ref.anchor->kind != AnchorKind::line_range) {
    return fmt::format("File {} @ {}\n\n{}", loc.path, loc.target, raw);
  }
  std::vector<std::string> lines = split(raw, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  const auto total = static_cast<std::int64_t>(lines.size());
  if (total == 0) return {};
  const LineWindow w =
      line_window(ref.anchor->first_line, ref.anchor->last_line, limits.context_lines, total);
  std::string out = fmt::format("File {} @ {}, lines {}-{} of {} (referenced {}-{})\n\n",
                                loc.path, loc.target, w.first, w.last, total,
                                ref.anchor->first_line, ref.anchor->last_line);
  for (std::int64_t i = w.first; i <= w.last; ++i) {
    out += fmt::format("{}: {}\n", i, lines[static_cast<std::size_t>(i - 1)]);
  }
  return out;
}

std::string issue_or_pr_text(GitHubClient &github, const GitHubLocation &loc, bool pull) {
  const json j = github.get_json(fmt::format("/repos/{}/{}/{}/{}", loc.owner, loc.repo,
                                             pull ? "pulls" : "issues", loc.target));
  std::string state = json_str(j, "state");
  if (pull && j.value("merged", false)) state = "merged";
  std::string out = fmt::format("{} #{}: {}\nState: {}\nAuthor: @{}\n\n{}",
                                pull ? "Pull request" : "Issue", loc.target,
                                json_str(j, "title"), state, login_of(j),
                                trim(json_str(j, "body")));
  const std::string discussion = discussion_text(github, loc);
  if (!discussion.empty()) out += "\n\nDiscussion:" + discussion;
  return out;
}

std::string comment_text(GitHubClient &github, const GitHubLocation &loc, const ArtifactRef &ref) {
  const std::int64_t id = ref.anchor ? ref.anchor->id : 0;
  switch (ref.kind) {
    case ArtifactKind::issue_comment: {
      const json c = github.get_json(
          fmt::format("/repos/{}/{}/issues/comments/{}", loc.owner, loc.repo, id));
      return json_str(c, "body");
    }
    case ArtifactKind::review_comment: {
      const json c = github.get_json(
          fmt::format("/repos/{}/{}/pulls/comments/{}", loc.owner, loc.repo, id));
      std::string out = json_str(c, "body");
      const std::string hunk = json_str(c, "diff_hunk");
      if (!hunk.empty()) out += fmt::format("\n\nOn {}:\n{}", json_str(c, "path"), hunk);
      return out;
    }
    case ArtifactKind::pr_review: {
      const json r = github.get_json(fmt::format("/repos/{}/{}/pulls/{}/reviews/{}", loc.owner,
                                                 loc.repo, loc.target, id));
      return fmt::format("Review by @{} ({})\n\n{}", login_of(r), json_str(r, "state"),
                         json_str(r, "body"));
    }
    default:
      return {};
  }
}

HttpResponse browser_get(HttpClient &http, const std::string &url, const ResolverLimits &limits,
                         std::size_t max_bytes, const char *accept = "*/*") {
  HttpRequest req;
  req.url = url;
  req.headers = {{"User-Agent", limits.user_agent}, {"Accept", accept}};
  req.max_body_bytes = max_bytes;
  return http.send(req);
}

void require_success(const HttpResponse &resp, const std::string &url) {
  if (resp.status == 404 || resp.status == 410) throw NotFound(fmt::format("HTTP {} for {}", resp.status, url));
  if (resp.status == 429) throw RateLimited(fmt::format("HTTP 429 for {}", url), std::chrono::seconds{60});
  if (resp.status < 200 || resp.status >= 300) {
    throw NetworkFailure(fmt::format("HTTP {} for {}", resp.status, url));
  }
}

std::string reddit_text(HttpClient &http, const ArtifactRef &ref, const ResolverLimits &limits) {
  ParsedUrl u = parse_url(ref.normalized_url);
  while (u.path.size() > 1 && u.path.back() == '/') u.path.pop_back();
  if (!u.path.ends_with(".json")) u.path += ".json";
  u.has_query = true;
  u.query = fmt::format("sort=top&limit={}", std::max<std::size_t>(limits.reddit_top_comments, 1));
  u.has_fragment = false;
  const std::string url = u.to_string();
  const HttpResponse resp = browser_get(http, url, limits, limits.max_document_bytes, "application/json");
  require_success(resp, url);
  json doc;
  try {
    doc = json::parse(sanitize_utf8(resp.body));
  } catch (const json::parse_error &e) {
    throw ParseFailure(fmt::format("reddit: invalid JSON: {}", e.what()));
  }
  if (!doc.is_array() || doc.empty()) throw ParseFailure("reddit: unexpected listing shape");

  auto children = [](const json &listing) {
    if (listing.is_object() && listing.contains("data") && listing["data"].is_object() &&
        listing["data"].contains("children") && listing["data"]["children"].is_array()) {
      return listing["data"]["children"];
    }
    return json::array();
  };
  const json posts = children(doc[0]);
  if (posts.empty()) throw ParseFailure("reddit: no post in listing");
  const json post = posts[0].value("data", json::object());
  std::string out = fmt::format("r/{} post by u/{} (score {})\n{}\n", json_str(post, "subreddit"),
                                json_str(post, "author"), json_int(post, "score"),
                                json_str(post, "title"));
  const std::string selftext = trim(json_str(post, "selftext"));
  if (!selftext.empty()) out += "\n" + selftext + "\n";
  const std::string link = json_str(post, "url");
  if (!link.empty() && !post.value("is_self", true)) out += "\nLink: " + link + "\n";

  if (doc.size() > 1) {
    std::size_t taken = 0;
    std::string comments;
    for (const auto &c : children(doc[1])) {
      if (taken >= limits.reddit_top_comments) break;
      if (json_str(c, "kind") != "t1") continue;
      const json data = c.value("data", json::object());
      const std::string body = trim(json_str(data, "body"));
      if (body.empty()) continue;
      comments += fmt::format("\n- u/{} (score {}): {}", json_str(data, "author"),
                              json_int(data, "score"), body);
      ++taken;
    }
    if (taken > 0) out += "\nTop comments:" + comments + "\n";
  }
  return out;
}

std::optional<std::string> gdrive_id(const ParsedUrl &u) {
  const auto segs = u.path_segments();
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    if (segs[i] == "d") return segs[i + 1];
  }
  for (const auto &param : split(u.query, '&')) {
    if (param.starts_with("id=")) return param.substr(3);
  }
  return std::nullopt;
}

// Minimal RFC 4180 reader turning CSV into tab-separated rows.
std::string csv_to_tsv(std::string_view csv) {
  std::string out, field;
  std::vector<std::string> row;
  bool quoted = false;
  auto end_row = [&] {
    row.push_back(field);
    field.clear();
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) line += '\t';
      line += row[i];
    }
    row.clear();
    if (!trim(line).empty()) {
      if (!out.empty()) out += '\n';
      out += line;
    }
  };
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const char c = csv[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += (c == '\n' || c == '\t') ? ' ' : c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) end_row();
  return out;
}

bool bare_drive_file(const ParsedUrl &u) { return to_lower(u.host) == "drive.google.com"; }

std::string gdrive_text(HttpClient &http, const ArtifactRef &ref, const ResolverLimits &limits) {
  const ParsedUrl u = parse_url(ref.normalized_url);
  const auto id = gdrive_id(u);
  if (!id) throw ParseFailure("google drive: no document id in URL");
  std::string url;
  switch (ref.kind) {
    case ArtifactKind::gdrive_sheet:
      url = fmt::format("https://docs.google.com/spreadsheets/d/{}/export?format=csv", *id);
      break;
    case ArtifactKind::gdrive_slides:
      url = fmt::format("https://docs.google.com/presentation/d/{}/export/txt", *id);
      break;
    default:
      url = bare_drive_file(u) ? fmt::format("https://drive.google.com/uc?export=download&id={}", *id)
                               : fmt::format("https://docs.google.com/document/d/{}/export?format=txt", *id);
  }
  const HttpResponse resp = browser_get(http, url, limits, limits.max_document_bytes);
  require_success(resp, url);
  if (resp.body_truncated) throw ParseFailure("google drive: export exceeds the size limit");
  const std::string type = to_lower(resp.header("content-type"));
  if (type.find("text/html") != std::string::npos) {
    throw ParseFailure("google drive: document is not publicly exported");
  }
  std::string body = sanitize_utf8(resp.body);
  if (body.starts_with("\xEF\xBB\xBF")) body.erase(0, 3);
  return ref.kind == ArtifactKind::gdrive_sheet ? csv_to_tsv(body) : body;
}

std::string web_text(HttpClient &http, const ArtifactRef &ref, const ResolverLimits &limits) {
  const HttpResponse resp = browser_get(http, ref.normalized_url, limits, limits.max_document_bytes,
                                        "text/html,application/xhtml+xml;q=0.9,*/*;q=0.8");
  require_success(resp, ref.normalized_url);
  const std::string type = to_lower(resp.header("content-type"));
  if (type.find("application/pdf") != std::string::npos) return pdf_text(resp.body);
  const bool html = type.empty() || type.find("html") != std::string::npos ||
                    type.find("xml") != std::string::npos;
  if (html) {
    const HtmlText page = html_main_text(sanitize_utf8(resp.body));
    if (page.title.empty()) return page.text;
    return page.title + "\n\n" + page.text;
  }
  if (type.starts_with("text/") || type.find("json") != std::string::npos) {
    return sanitize_utf8(resp.body);
  }
  throw ParseFailure(fmt::format("unsupported content type '{}'", type));
}

std::string sniff_image_mime(std::string_view bytes, const std::string &header,
                             const std::string &ext) {
  const std::string h = to_lower(header.substr(0, header.find(';')));
  if (h.starts_with("image/")) return trim(h);
  if (bytes.starts_with("\x89PNG")) return "image/png";
  if (bytes.starts_with("\xFF\xD8\xFF")) return "image/jpeg";
  if (bytes.starts_with("GIF8")) return "image/gif";
  if (bytes.size() >= 12 && bytes.substr(0, 4) == "RIFF" && bytes.substr(8, 4) == "WEBP") return "image/webp";
  if (bytes.starts_with("BM")) return "image/bmp";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (!ext.empty()) return "image/" + ext;
  return "image/png";
}

ArtifactContent failure_from(const ArtifactRef &ref, const std::exception &e) {
  return ArtifactContent::failed(ref, e.what()[0] != '\0' ? e.what() : "unknown failure");
}

}  // namespace

std::string_view to_string(FetchStatus status) {
  switch (status) {
    case FetchStatus::ok: return "ok";
    case FetchStatus::failed: return "failed";
    case FetchStatus::skipped: return "skipped";
  }
  return "failed";
}

std::optional<FetchStatus> fetch_status_from_string(std::string_view name) {
  for (FetchStatus s : {FetchStatus::ok, FetchStatus::failed, FetchStatus::skipped}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

ArtifactContent ArtifactContent::ok(ArtifactRef ref, std::string text, std::size_t max_chars) {
  text = sanitize_utf8(text);
  if (trim(text).empty()) return failed(std::move(ref), "artifact has no textual content");
  ArtifactContent c;
  c.ref = std::move(ref);
  if (text.size() > max_chars) {
    text = std::string(utf8_prefix(text, max_chars));
    c.truncated = true;
  }
  c.text = std::move(text);
  c.fetch_status = FetchStatus::ok;
  return c;
}

ArtifactContent ArtifactContent::failed(ArtifactRef ref, std::string reason) {
  ArtifactContent c;
  c.ref = std::move(ref);
  c.fetch_status = FetchStatus::failed;
  c.failure_reason = reason.empty() ? "unknown failure" : std::move(reason);
  return c;
}

ArtifactContent ArtifactContent::skipped(ArtifactRef ref, std::string reason) {
  ArtifactContent c;
  c.ref = std::move(ref);
  c.fetch_status = FetchStatus::skipped;
  c.failure_reason = std::move(reason);
  return c;
}

LineWindow line_window(std::int64_t first, std::int64_t last, std::int64_t context,
                       std::int64_t total_lines) {
  if (total_lines < 1) return {1, 0};
  if (last < first) std::swap(first, last);
  context = std::max<std::int64_t>(context, 0);
  LineWindow w;
  w.last = std::clamp<std::int64_t>(last + context, 1, total_lines);
  w.first = std::clamp<std::int64_t>(first - context, 1, w.last);
  return w;
}

ArtifactContent resolve_github_artifact(const ArtifactRef &ref, GitHubClient &github,
                                        const ResolverLimits &limits) {
  if (!is_github_kind(ref.kind)) {
    return ArtifactContent::failed(ref, fmt::format("'{}' is not a GitHub artifact", to_string(ref.kind)));
  }
  const auto loc = github_location(ref);
  if (!loc) return ArtifactContent::failed(ref, "cannot locate GitHub artifact from URL");
  try {
    std::string text;
    switch (ref.kind) {
      case ArtifactKind::commit: text = commit_text(github, *loc); break;
      case ArtifactKind::blob: text = blob_text(github, *loc, ref, limits); break;
      case ArtifactKind::pull_request: text = issue_or_pr_text(github, *loc, true); break;
      case ArtifactKind::issue: text = issue_or_pr_text(github, *loc, false); break;
      default:
        if (!ref.anchor) return ArtifactContent::failed(ref, "comment URL without an anchor");
        text = comment_text(github, *loc, ref);
    }
    return ArtifactContent::ok(ref, std::move(text), limits.max_artifact_chars);
  } catch (const std::exception &e) {
    return failure_from(ref, e);
  }
}

ArtifactContent resolve_web_resource(const ArtifactRef &ref, HttpClient &http,
                                     const ResolverLimits &limits) {
  try {
    std::string text;
    switch (ref.kind) {
      case ArtifactKind::reddit_post: text = reddit_text(http, ref, limits); break;
      case ArtifactKind::gdrive_doc:
      case ArtifactKind::gdrive_sheet:
      case ArtifactKind::gdrive_slides: text = gdrive_text(http, ref, limits); break;
      case ArtifactKind::generic_web: text = web_text(http, ref, limits); break;
      default:
        return ArtifactContent::failed(ref, fmt::format("'{}' is not a web resource", to_string(ref.kind)));
    }
    return ArtifactContent::ok(ref, std::move(text), limits.max_artifact_chars);
  } catch (const std::exception &e) {
    return failure_from(ref, e);
  }
}

ArtifactContent resolve_binary_document(const ArtifactRef &ref, HttpClient &http,
                                        const ResolverLimits &limits) {
  if (ref.kind == ArtifactKind::archive) {
    return ArtifactContent::skipped(ref, "archives are not unpacked");
  }
  try {
    const HttpResponse resp = browser_get(http, ref.normalized_url, limits, limits.max_document_bytes);
    require_success(resp, ref.normalized_url);
    if (resp.body_truncated) {
      return ArtifactContent::failed(
          ref, fmt::format("document exceeds {} bytes", limits.max_document_bytes));
    }
    const std::string ext = parse_url(ref.normalized_url).extension();
    std::string text;
    switch (ref.kind) {
      case ArtifactKind::pdf: text = pdf_text(resp.body); break;
      case ArtifactKind::docx: text = docx_text(resp.body); break;
      case ArtifactKind::spreadsheet:
        if (std::string_view(resp.body).starts_with("PK")) {
          text = xlsx_text(resp.body);
          break;
        }
        [[fallthrough]];
      case ArtifactKind::legacy_doc: {
        const auto &converters = ref.kind == ArtifactKind::legacy_doc
                                     ? limits.legacy_doc_converters
                                     : limits.legacy_sheet_converters;
        std::optional<std::string> converted;
        for (const auto &cmd : converters) {
          converted = run_converter(cmd, resp.body, "." + (ext.empty() ? std::string("bin") : ext));
          if (converted) break;
        }
        if (!converted) {
          return ArtifactContent::failed(ref, "no external converter available for legacy format");
        }
        text = ref.kind == ArtifactKind::spreadsheet ? csv_to_tsv(*converted) : *converted;
        break;
      }
      default:
        return ArtifactContent::failed(ref, fmt::format("'{}' is not a binary document", to_string(ref.kind)));
    }
    return ArtifactContent::ok(ref, std::move(text), limits.max_artifact_chars);
  } catch (const std::exception &e) {
    return failure_from(ref, e);
  }
}

ArtifactContent describe_image(const ArtifactRef &ref, HttpClient &http, LlmGateway &gateway,
                               const ResolverLimits &limits) {
  try {
    const HttpResponse resp = browser_get(http, ref.normalized_url, limits, limits.max_image_bytes + 1,
                                          "image/*,*/*;q=0.8");
    require_success(resp, ref.normalized_url);
    if (resp.body_truncated || resp.body.size() > limits.max_image_bytes) {
      throw OversizeImage(fmt::format("image exceeds {} bytes", limits.max_image_bytes));
    }
    if (resp.body.empty()) return ArtifactContent::failed(ref, "image download is empty");
    const std::string mime = sniff_image_mime(resp.body, resp.header("content-type"),
                                              parse_url(ref.normalized_url).extension());
    auto messages = prompts::render("vision_describer", {{"image_url", ref.normalized_url}});
    messages.back().image = ImagePayload{resp.body, mime};
    const std::string description = trim(gateway.complete(Role::vision_describer, messages));
    if (description.empty()) return ArtifactContent::failed(ref, "vision model returned no description");
    return ArtifactContent::ok(ref, description, limits.max_artifact_chars);
  } catch (const std::exception &e) {
    return failure_from(ref, e);
  }
}

ArtifactContent resolve_artifact(const ArtifactRef &ref, ArtifactClients &clients) {
  if (is_github_kind(ref.kind)) return resolve_github_artifact(ref, clients.github, clients.limits);
  switch (ref.kind) {
    case ArtifactKind::reddit_post:
    case ArtifactKind::gdrive_doc:
    case ArtifactKind::gdrive_sheet:
    case ArtifactKind::gdrive_slides:
    case ArtifactKind::generic_web:
      return resolve_web_resource(ref, clients.http, clients.limits);
    case ArtifactKind::image:
      return describe_image(ref, clients.http, clients.gateway, clients.limits);
    default:
      return resolve_binary_document(ref, clients.http, clients.limits);
  }
}

std::string summarize_artifact(const ArtifactContent &content, std::string_view issue_context,
                               LlmGateway &gateway, const ResolverLimits &limits) {
  if (content.fetch_status != FetchStatus::ok) {
    throw std::invalid_argument("summarize_artifact requires successfully fetched content");
  }
  const auto messages = prompts::render(
      "link_summarizer", {{"issue_context", std::string(issue_context)},
                          {"artifact_kind", std::string(to_string(content.ref.kind))},
                          {"artifact_url", content.ref.normalized_url},
                          {"artifact_text", content.text}});
  std::string reply;
  try {
    reply = trim(gateway.complete(Role::link_summarizer, messages));
  } catch (const GatewayFailure &e) {
    throw SummaryFailure(fmt::format("summarizer failed: {}", e.what()));
  }
  if (reply.empty()) throw SummaryFailure("summarizer returned an empty summary");
  reply = sanitize_utf8(reply);
  if (reply.size() > limits.max_summary_chars) {
    const std::size_t keep = limits.max_summary_chars > kTruncationMarker.size()
                                 ? limits.max_summary_chars - kTruncationMarker.size()
                                 : 0;
    reply = std::string(utf8_prefix(reply, keep)) + std::string(kTruncationMarker);
    if (reply.size() > limits.max_summary_chars) reply.resize(limits.max_summary_chars);
  }
  return reply;
}

nlohmann::ordered_json cache_entry_to_json(const CacheEntry &entry) {
  nlohmann::ordered_json j;
  j["summary"] = entry.summary;
  j["fetch_status"] = std::string(to_string(entry.fetch_status));
  j["fetched_at"] = format_iso8601(entry.fetched_at);
  j["kind"] = std::string(to_string(entry.kind));
  if (entry.failure_reason) j["failure_reason"] = *entry.failure_reason;
  return j;
}

CacheEntry cache_entry_from_json(const json &j) {
  if (!j.is_object()) throw MalformedInput("cache entry must be an object");
  CacheEntry e;
  try {
    e.summary = j.value("summary", std::string{});
    const auto status = fetch_status_from_string(j.value("fetch_status", std::string{"failed"}));
    if (!status) throw MalformedInput("cache entry has an unknown fetch_status");
    e.fetch_status = *status;
    if (j.contains("fetched_at") && j["fetched_at"].is_string()) {
      e.fetched_at = parse_iso8601(j["fetched_at"].get<std::string>());
    }
    if (j.contains("kind")) {
      const auto kind = artifact_kind_from_string(j["kind"].get<std::string>());
      if (!kind) throw MalformedInput("cache entry has an unknown kind");
      e.kind = *kind;
    }
    if (j.contains("failure_reason") && j["failure_reason"].is_string()) {
      e.failure_reason = j["failure_reason"].get<std::string>();
    }
  } catch (const json::exception &ex) {
    throw MalformedInput(fmt::format("bad cache entry: {}", ex.what()));
  }
  return e;
}

Clock system_clock() {
  return [] { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); };
}

Clock frozen_clock() {
  return [] { return Timestamp{}; };
}

void LinkCache::load_into(LinkCache &cache, const std::string &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error &) {
    return;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw MalformedInput(fmt::format("link cache '{}' is not valid JSON: {}", path, e.what()));
  }
  if (!doc.is_object()) throw MalformedInput(fmt::format("link cache '{}' must be an object", path));
  for (const auto &[url, entry] : doc.items()) cache.insert(url, cache_entry_from_json(entry));
}

void LinkCache::save(const std::string &path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

std::optional<CacheEntry> LinkCache::find(const std::string &normalized_url) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(normalized_url);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

bool LinkCache::insert(const std::string &normalized_url, CacheEntry entry) {
  std::lock_guard lock(mu_);
  return entries_.emplace(normalized_url, std::move(entry)).second;
}

CacheEntry LinkCache::get_or_compute(const std::string &key,
                                     const std::function<CacheEntry()> &produce) {
  std::unique_lock lock(mu_);
  if (const auto it = entries_.find(key); it != entries_.end()) {
    ++hits_;
    return it->second;
  }
  if (const auto it = in_flight_.find(key); it != in_flight_.end()) {
    std::shared_future<CacheEntry> pending = it->second;
    ++hits_;
    lock.unlock();
    return pending.get();
  }
  std::promise<CacheEntry> promise;
  in_flight_.emplace(key, promise.get_future().share());
  ++misses_;
  lock.unlock();

  try {
    CacheEntry entry = produce();
    lock.lock();
    const auto [it, inserted] = entries_.emplace(key, entry);
    in_flight_.erase(key);
    lock.unlock();
    promise.set_value(it->second);
    return inserted ? entry : it->second;
  } catch (...) {
    lock.lock();
    in_flight_.erase(key);
    lock.unlock();
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::size_t LinkCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::map<std::string, CacheEntry> LinkCache::snapshot() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t LinkCache::purge_failed() {
  std::lock_guard lock(mu_);
  return std::erase_if(entries_, [](const auto &kv) { return kv.second.fetch_status == FetchStatus::failed; });
}

nlohmann::ordered_json LinkCache::to_json() const {
  std::lock_guard lock(mu_);
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &[url, entry] : entries_) j[url] = cache_entry_to_json(entry);
  return j;
}

CacheEntry get_or_summarize(LinkCache &cache, const ArtifactRef &ref, ArtifactClients &clients,
                            std::string_view issue_context, const Clock &clock) {
  return cache.get_or_compute(ref.normalized_url, [&] {
    const ArtifactContent content = resolve_artifact(ref, clients);
    CacheEntry entry;
    entry.kind = ref.kind;
    entry.fetch_status = content.fetch_status;
    entry.failure_reason = content.failure_reason;
    if (content.fetch_status == FetchStatus::ok) {
      try {
        entry.summary = summarize_artifact(content, issue_context, clients.gateway, clients.limits);
      } catch (const SummaryFailure &e) {
        entry.fetch_status = FetchStatus::failed;
        entry.failure_reason = e.what();
      }
    }
    entry.fetched_at = clock();
    spdlog::debug("resolved {} ({}): {}", ref.normalized_url, to_string(ref.kind),
                  to_string(entry.fetch_status));
    return entry;
  });
}

}  // namespace issuetraj
