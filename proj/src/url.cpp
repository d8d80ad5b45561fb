#include "issuetraj/url.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "issuetraj/error.hpp"
#include "issuetraj/text.hpp"

namespace issuetraj {

namespace {

constexpr std::array<std::pair<ArtifactKind, std::string_view>, 18> kKindNames = {{
    {ArtifactKind::commit, "commit"},
    {ArtifactKind::blob, "blob"},
    {ArtifactKind::pull_request, "pull_request"},
    {ArtifactKind::issue, "issue"},
    {ArtifactKind::issue_comment, "issue_comment"},
    {ArtifactKind::review_comment, "review_comment"},
    {ArtifactKind::pr_review, "pr_review"},
    {ArtifactKind::reddit_post, "reddit_post"},
    {ArtifactKind::gdrive_doc, "gdrive_doc"},
    {ArtifactKind::gdrive_sheet, "gdrive_sheet"},
    {ArtifactKind::gdrive_slides, "gdrive_slides"},
    {ArtifactKind::image, "image"},
    {ArtifactKind::pdf, "pdf"},
    {ArtifactKind::docx, "docx"},
    {ArtifactKind::legacy_doc, "legacy_doc"},
    {ArtifactKind::spreadsheet, "spreadsheet"},
    {ArtifactKind::archive, "archive"},
    {ArtifactKind::generic_web, "generic_web"},
}};

bool is_all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

std::optional<std::int64_t> to_int(std::string_view s) {
  if (!is_all_digits(s)) return std::nullopt;
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool url_terminator(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u <= 0x20 || c == '<' || c == '>' || c == '"' || c == '`' || c == '[' ||
         c == ']' || c == '{' || c == '}' || c == '|' || c == '\\' || c == '^';
}

std::string strip_trailing_punctuation(std::string url) {
  while (!url.empty()) {
    const char c = url.back();
    if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
        c == '\'' || c == '*') {
      url.pop_back();
    } else if (c == ')') {
      const auto opens = std::count(url.begin(), url.end(), '(');
      const auto closes = std::count(url.begin(), url.end(), ')');
      if (closes > opens) {
        url.pop_back();
      } else {
        break;
      }
    } else {
      break;
    }
  }
  return url;
}

bool is_tracking_param(std::string_view key) {
  const std::string k = to_lower(key);
  return k.starts_with("utm_") || k == "ref" || k == "fbclid" || k == "gclid";
}

std::string bare_host(std::string_view host) {
  std::string h = to_lower(host);
  if (h.starts_with("www.")) h.erase(0, 4);
  return h;
}

bool is_github_host(std::string_view host) { return bare_host(host) == "github.com"; }

std::optional<ArtifactKind> kind_by_extension(const std::string &ext) {
  static const std::array<std::pair<std::string_view, ArtifactKind>, 17> kExt = {{
      {"png", ArtifactKind::image},   {"jpg", ArtifactKind::image},
      {"jpeg", ArtifactKind::image},  {"gif", ArtifactKind::image},
      {"webp", ArtifactKind::image},  {"bmp", ArtifactKind::image},
      {"pdf", ArtifactKind::pdf},     {"docx", ArtifactKind::docx},
      {"doc", ArtifactKind::legacy_doc},
      {"xlsx", ArtifactKind::spreadsheet}, {"xls", ArtifactKind::spreadsheet},
      {"zip", ArtifactKind::archive}, {"tar", ArtifactKind::archive},
      {"gz", ArtifactKind::archive},  {"tgz", ArtifactKind::archive},
      {"7z", ArtifactKind::archive},  {"rar", ArtifactKind::archive},
  }};
  for (const auto &[e, k] : kExt) {
    if (e == ext) return k;
  }
  return std::nullopt;
}

std::optional<ArtifactKind> github_kind(const ParsedUrl &url) {
  const auto segs = url.path_segments();
  if (segs.size() >= 2 && segs[0] == "user-attachments" && segs[1] == "assets") {
    return ArtifactKind::image;
  }
  if (segs.size() < 4) return std::nullopt;
  const std::string &section = segs[2];
  const auto anchor = url.has_fragment ? parse_anchor(url.fragment) : std::nullopt;
  if (section == "commit") return ArtifactKind::commit;
  if (section == "blob") return ArtifactKind::blob;
  if (section == "pull" && is_all_digits(segs[3])) {
    if (segs.size() >= 6 && segs[4] == "commits") return ArtifactKind::commit;
    if (anchor) {
      switch (anchor->kind) {
        case AnchorKind::review_comment: return ArtifactKind::review_comment;
        case AnchorKind::pr_review: return ArtifactKind::pr_review;
        case AnchorKind::issue_comment: return ArtifactKind::issue_comment;
        case AnchorKind::line_range: break;
      }
    }
    return ArtifactKind::pull_request;
  }
  if (section == "issues" && is_all_digits(segs[3])) {
    if (anchor && anchor->kind == AnchorKind::issue_comment) return ArtifactKind::issue_comment;
    return ArtifactKind::issue;
  }
  return std::nullopt;
}

bool is_image_host(const std::string &host) {
  return host == "i.imgur.com" || host == "imgur.com" ||
         host == "user-images.githubusercontent.com" ||
         host == "private-user-images.githubusercontent.com" ||
         host == "camo.githubusercontent.com" || host == "avatars.githubusercontent.com";
}

}  // namespace

std::string_view to_string(ArtifactKind kind) {
  for (const auto &[k, n] : kKindNames) {
    if (k == kind) return n;
  }
  return "generic_web";
}

std::optional<ArtifactKind> artifact_kind_from_string(std::string_view name) {
  for (const auto &[k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

const std::vector<ArtifactKind> &all_artifact_kinds() {
  static const std::vector<ArtifactKind> kAll = [] {
    std::vector<ArtifactKind> v;
    for (const auto &[k, n] : kKindNames) v.push_back(k);
    return v;
  }();
  return kAll;
}

bool is_github_kind(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::commit:
    case ArtifactKind::blob:
    case ArtifactKind::pull_request:
    case ArtifactKind::issue:
    case ArtifactKind::issue_comment:
    case ArtifactKind::review_comment:
    case ArtifactKind::pr_review:
      return true;
    default:
      return false;
  }
}

bool supports_anchor(ArtifactKind kind) {
  return kind == ArtifactKind::blob || kind == ArtifactKind::issue_comment ||
         kind == ArtifactKind::review_comment || kind == ArtifactKind::pr_review;
}

std::vector<UrlMatch> extract_urls(std::string_view body) {
  std::vector<UrlMatch> out;
  const auto fences = fenced_regions(body);
  auto fenced_at = [&](std::size_t pos) {
    return std::any_of(fences.begin(), fences.end(),
                       [pos](const ByteSpan &s) { return s.contains(pos); });
  };

  std::size_t i = 0;
  while (i < body.size()) {
    const auto rest = body.substr(i);
    std::size_t scheme_len = 0;
    if (starts_with_icase(rest, "https://")) {
      scheme_len = 8;
    } else if (starts_with_icase(rest, "http://")) {
      scheme_len = 7;
    }
    const bool boundary = i == 0 || !std::isalnum(static_cast<unsigned char>(body[i - 1]));
    if (scheme_len == 0 || !boundary) {
      ++i;
      continue;
    }
    if (fenced_at(i)) {
      const auto it = std::find_if(fences.begin(), fences.end(),
                                   [i](const ByteSpan &s) { return s.contains(i); });
      i = it->end;
      continue;
    }
    std::size_t end = i + scheme_len;
    while (end < body.size() && !url_terminator(body[end])) ++end;
    std::string url = strip_trailing_punctuation(std::string(body.substr(i, end - i)));
    if (url.size() > scheme_len) {
      const std::size_t len = url.size();
      out.push_back(UrlMatch{std::move(url), ByteSpan{i, i + len}});
    }
    i = std::max(end, i + 1);
  }
  return out;
}

std::vector<std::string> ParsedUrl::path_segments() const {
  std::vector<std::string> segs;
  for (auto &s : split(path, '/')) {
    if (!s.empty()) segs.push_back(std::move(s));
  }
  return segs;
}

std::string ParsedUrl::extension() const {
  const auto segs = path_segments();
  if (segs.empty()) return {};
  const std::string &last = segs.back();
  const auto dot = last.rfind('.');
  if (dot == std::string::npos || dot + 1 == last.size()) return {};
  return to_lower(last.substr(dot + 1));
}

std::string ParsedUrl::to_string() const {
  std::string out = scheme + "://";
  if (!userinfo.empty()) out += userinfo + "@";
  out += host;
  if (port) out += fmt::format(":{}", *port);
  out += path;
  if (has_query) out += "?" + query;
  if (has_fragment) out += "#" + fragment;
  return out;
}

ParsedUrl parse_url(std::string_view raw) {
  const std::string s = trim(raw);
  const auto sep = s.find("://");
  if (sep == std::string::npos) throw InvalidUrl(fmt::format("not an absolute URL: '{}'", s));
  ParsedUrl u;
  u.scheme = to_lower(s.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") {
    throw InvalidUrl(fmt::format("unsupported scheme in '{}'", s));
  }
  std::string_view rest = std::string_view(s).substr(sep + 3);

  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    u.has_fragment = true;
    u.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    u.has_query = true;
    u.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  u.path = slash == std::string_view::npos ? std::string{} : std::string(rest.substr(slash));

  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    u.userinfo = std::string(authority.substr(0, at));
    authority = authority.substr(at + 1);
  }
  std::string_view host = authority;
  std::string_view port;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw InvalidUrl(fmt::format("bad IPv6 host in '{}'", s));
    host = authority.substr(0, close + 1);
    if (close + 1 < authority.size()) {
      if (authority[close + 1] != ':') throw InvalidUrl(fmt::format("bad authority in '{}'", s));
      port = authority.substr(close + 2);
    }
  } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    port = authority.substr(colon + 1);
  }
  if (host.empty()) throw InvalidUrl(fmt::format("missing host in '{}'", s));
  if (host.front() != '[') {
    for (char c : host) {
      const auto uc = static_cast<unsigned char>(c);
      if (!(std::isalnum(uc) || c == '.' || c == '-' || c == '_' || uc >= 0x80)) {
        throw InvalidUrl(fmt::format("invalid host in '{}'", s));
      }
    }
  }
  u.host = std::string(host);
  if (!port.empty()) {
    const auto p = to_int(port);
    if (!p || *p > 65535) throw InvalidUrl(fmt::format("invalid port in '{}'", s));
    u.port = static_cast<int>(*p);
  }
  return u;
}

std::string normalize_url(std::string_view raw) {
  ParsedUrl u = parse_url(raw);
  u.host = to_lower(u.host);
  if (u.port && ((u.scheme == "http" && *u.port == 80) || (u.scheme == "https" && *u.port == 443))) {
    u.port.reset();
  }

  if (u.has_query) {
    std::vector<std::string> kept;
    for (auto &param : split(u.query, '&')) {
      if (param.empty()) continue;
      const std::string key = param.substr(0, param.find('='));
      if (!is_tracking_param(key)) kept.push_back(std::move(param));
    }
    u.query.clear();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i > 0) u.query += '&';
      u.query += kept[i];
    }
    u.has_query = !kept.empty();
  }

  if (u.path.empty()) u.path = "/";
  if (!u.has_query) {
    while (u.path.size() > 1 && u.path.back() == '/') u.path.pop_back();
  }

  if (u.has_fragment) {
    const bool keep = is_github_host(u.host) && parse_anchor(u.fragment).has_value();
    if (!keep) {
      u.has_fragment = false;
      u.fragment.clear();
    }
  }
  return u.to_string();
}

ArtifactKind classify_url(std::string_view normalized) {
  ParsedUrl u;
  try {
    u = parse_url(normalized);
  } catch (const InvalidUrl &) {
    return ArtifactKind::generic_web;
  }
  const std::string host = bare_host(u.host);
  if (host == "github.com") {
    if (const auto k = github_kind(u)) return *k;
  }
  if (is_image_host(host)) return ArtifactKind::image;
  if (host == "reddit.com" || host.ends_with(".reddit.com") || host == "redd.it") {
    return ArtifactKind::reddit_post;
  }
  if (host == "docs.google.com") {
    const auto segs = u.path_segments();
    const std::string first = segs.empty() ? "" : segs[0];
    if (first == "spreadsheets") return ArtifactKind::gdrive_sheet;
    if (first == "presentation") return ArtifactKind::gdrive_slides;
    return ArtifactKind::gdrive_doc;
  }
  if (host == "sheets.google.com") return ArtifactKind::gdrive_sheet;
  if (host == "slides.google.com") return ArtifactKind::gdrive_slides;
  if (host == "drive.google.com") return ArtifactKind::gdrive_doc;
  if (const auto k = kind_by_extension(u.extension())) return *k;
  return ArtifactKind::generic_web;
}

std::string_view to_string(AnchorKind kind) {
  switch (kind) {
    case AnchorKind::line_range: return "line_range";
    case AnchorKind::issue_comment: return "issue_comment";
    case AnchorKind::review_comment: return "review_comment";
    case AnchorKind::pr_review: return "pr_review";
  }
  return "line_range";
}

std::optional<Anchor> parse_anchor(std::string_view fragment) {
  auto with_prefix = [&](std::string_view prefix, AnchorKind kind) -> std::optional<Anchor> {
    if (!fragment.starts_with(prefix)) return std::nullopt;
    const auto id = to_int(fragment.substr(prefix.size()));
    if (!id) return std::nullopt;
    Anchor a;
    a.kind = kind;
    a.id = *id;
    return a;
  };
  if (auto a = with_prefix("issuecomment-", AnchorKind::issue_comment)) return a;
  if (auto a = with_prefix("discussion_r", AnchorKind::review_comment)) return a;
  if (auto a = with_prefix("pullrequestreview-", AnchorKind::pr_review)) return a;

  if (fragment.size() < 2 || fragment[0] != 'L') return std::nullopt;
  const auto dash = fragment.find('-');
  const auto first = to_int(fragment.substr(1, dash == std::string_view::npos ? std::string_view::npos : dash - 1));
  if (!first || *first < 1) return std::nullopt;
  std::int64_t last = *first;
  if (dash != std::string_view::npos) {
    std::string_view tail = fragment.substr(dash + 1);
    if (tail.starts_with('L')) tail.remove_prefix(1);
    const auto l = to_int(tail);
    if (!l || *l < 1) return std::nullopt;
    last = *l;
  }
  Anchor a;
  a.kind = AnchorKind::line_range;
  a.first_line = std::min(*first, last);
  a.last_line = std::max(*first, last);
  return a;
}

ArtifactRef make_artifact_ref(std::string_view raw_url, std::string_view source_comment_id) {
  ArtifactRef ref;
  ref.raw_url = std::string(raw_url);
  ref.normalized_url = normalize_url(raw_url);
  ref.kind = classify_url(ref.normalized_url);
  ref.source_comment_id = std::string(source_comment_id);
  if (supports_anchor(ref.kind)) {
    const ParsedUrl u = parse_url(ref.normalized_url);
    if (u.has_fragment) {
      const auto anchor = parse_anchor(u.fragment);
      const bool matches =
          anchor && ((ref.kind == ArtifactKind::blob && anchor->kind == AnchorKind::line_range) ||
                     (ref.kind == ArtifactKind::issue_comment &&
                      anchor->kind == AnchorKind::issue_comment) ||
                     (ref.kind == ArtifactKind::review_comment &&
                      anchor->kind == AnchorKind::review_comment) ||
                     (ref.kind == ArtifactKind::pr_review && anchor->kind == AnchorKind::pr_review));
      if (matches) ref.anchor = anchor;
    }
  }
  return ref;
}

std::optional<GitHubLocation> github_location(const ArtifactRef &ref) {
  if (!is_github_kind(ref.kind)) return std::nullopt;
  ParsedUrl u;
  try {
    u = parse_url(ref.normalized_url);
  } catch (const InvalidUrl &) {
    return std::nullopt;
  }
  if (!is_github_host(u.host)) return std::nullopt;
  const auto segs = u.path_segments();
  if (segs.size() < 4) return std::nullopt;
  GitHubLocation loc{segs[0], segs[1], segs[3], {}};
  if (ref.kind == ArtifactKind::commit && segs[2] == "pull" && segs.size() >= 6) {
    loc.target = segs[5];
  }
  if (ref.kind == ArtifactKind::blob) {
    for (std::size_t i = 4; i < segs.size(); ++i) {
      if (!loc.path.empty()) loc.path += '/';
      loc.path += segs[i];
    }
    if (loc.path.empty()) return std::nullopt;
  }
  return loc;
}

}  // namespace issuetraj
