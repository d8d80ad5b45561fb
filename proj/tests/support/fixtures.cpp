#include "fixtures.hpp"

#include <zlib.h>

#include <chrono>
#include <random>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "issuetraj/error.hpp"
#include "issuetraj/text.hpp"
#include "issuetraj/trajectory.hpp"

namespace fixtures {

using namespace issuetraj;

void FixtureHttpClient::add(const std::string &url, HttpResponse response) {
  std::lock_guard lock(mu_);
  routes_[url] = std::move(response);
}

void FixtureHttpClient::add_body(const std::string &url, std::string body, std::string content_type,
                                 int status) {
  HttpResponse r;
  r.status = status;
  r.headers["content-type"] = std::move(content_type);
  r.body = std::move(body);
  add(url, std::move(r));
}

void FixtureHttpClient::add_handler(Handler handler) {
  std::lock_guard lock(mu_);
  handlers_.push_back(std::move(handler));
}

void FixtureHttpClient::fail_prefix(const std::string &prefix) {
  std::lock_guard lock(mu_);
  failing_.push_back(prefix);
}

HttpResponse FixtureHttpClient::send(const HttpRequest &request) {
  const int now = ++in_flight_;
  std::size_t seen = max_in_flight_.load();
  while (static_cast<std::size_t>(now) > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  struct Leave {
    std::atomic<int> &n;
    ~Leave() { --n; }
  } leave{in_flight_};
  if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));

  std::optional<HttpResponse> found;
  {
    std::lock_guard lock(mu_);
    log_.push_back(request.url);
    for (const auto &prefix : failing_) {
      if (request.url.rfind(prefix, 0) == 0) throw NetworkFailure("injected failure for " + request.url);
    }
    if (auto it = routes_.find(request.url); it != routes_.end()) found = it->second;
  }
  if (!found) {
    std::vector<Handler> handlers;
    {
      std::lock_guard lock(mu_);
      handlers = handlers_;
    }
    for (const auto &h : handlers) {
      if ((found = h(request))) break;
    }
  }
  if (!found) throw NetworkFailure("no fixture for " + request.url);
  if (request.max_body_bytes && found->body.size() > *request.max_body_bytes) {
    found->body.resize(*request.max_body_bytes);
    found->body_truncated = true;
  }
  return *found;
}

std::size_t FixtureHttpClient::requests() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

std::size_t FixtureHttpClient::requests_for(const std::string &url) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(log_.begin(), log_.end(), url));
}

std::vector<std::string> FixtureHttpClient::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::string FakeTransport::complete(const ModelRoute &route, const std::vector<Message> &messages) {
  ++calls_;
  return responder_(route.role, messages);
}

namespace {

std::string user_text(const std::vector<Message> &messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return {};
}

std::string section_after(const std::string &text, const std::string &marker) {
  const auto at = text.find(marker);
  if (at == std::string::npos) return {};
  return text.substr(at + marker.size());
}

std::string line_value(const std::string &text, const std::string &prefix) {
  for (const auto &line : split(text, '\n')) {
    if (line.rfind(prefix, 0) == 0) return trim(line.substr(prefix.size()));
  }
  return {};
}

}  // namespace

std::string ScriptedModel::operator()(Role role, const std::vector<Message> &messages) const {
  const std::string user = user_text(messages);
  switch (role) {
    case Role::label_classifier:
      return label;
    case Role::comment_analyst: {
      const std::string header = split(user, '\n').front();
      const std::string links = trim(section_after(user, "Linked artifacts:\n"));
      return fmt::format("Analysis of {} Links: {}", header, links);
    }
    case Role::field_bucket_classifier: {
      const std::string body = section_after(user, ":\n");
      const std::string comment = body.substr(0, body.find("\n\nAnalysis of the comment:"));
      static const std::regex line_re(R"(^\[([A-Za-z_]+)\] (.+)$)");
      nlohmann::json out = {{"excerpts", nlohmann::json::array()}};
      for (const auto &line : split(comment, '\n')) {
        std::smatch m;
        if (std::regex_match(line, m, line_re)) {
          out["excerpts"].push_back({{"field", m[1].str()}, {"text", m[2].str()}});
        }
      }
      return out.dump();
    }
    case Role::link_summarizer: {
      const std::string url = line_value(user, "Artifact URL:");
      const std::string content = collapse_whitespace(section_after(user, "Artifact content:\n"));
      return fmt::format("Summary of {}: {}", url, utf8_prefix(content, 80));
    }
    case Role::vision_describer:
      return "Screenshot of an error dialog";
    case Role::trajectory_synthesizer: {
      if (user.find("NOEVIDENCE") != std::string::npos) return std::string(kNoEvidenceSentinel);
      const std::string field = line_value(user, "Field:");
      const std::string evidence = section_after(user, "Evidence (most authoritative first):\n");
      std::size_t n = 0;
      for (const auto &line : split(evidence, '\n')) {
        if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) ++n;
      }
      return fmt::format("The {} field rests on {} excerpt(s).", field, n);
    }
    case Role::quality_judge: {
      static const char *names[] = {"field_coverage", "factual_accuracy", "technical_depth",
                                    "structural_faithfulness", "conciseness_clarity"};
      nlohmann::json scores;
      for (std::size_t i = 0; i < 5; ++i) scores[names[i]] = judge_scores.at(i);
      return nlohmann::json{{"scores", scores}, {"category", judge_category}, {"rationale", "Scripted."}}
          .dump();
    }
  }
  return {};
}

Responder scripted_model(ScriptedModel model) {
  return [model](Role role, const std::vector<Message> &messages) { return model(role, messages); };
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          fmt::format("issuetraj-test-{}-{}-{}", ::getpid(), counter++, rd());
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

IssueThread make_thread(std::int64_t number, const std::vector<CommentSpec> &comments,
                        std::vector<std::string> labels, std::optional<std::string> title,
                        std::string owner, std::string repo) {
  IssueThread t;
  t.source_url = fmt::format("https://github.com/{}/{}/issues/{}", owner, repo, number);
  t.repo_owner = std::move(owner);
  t.repo_name = std::move(repo);
  t.issue_number = number;
  t.comment_count = static_cast<std::int64_t>(comments.size());
  t.labels = std::move(labels);
  t.title = std::move(title);
  const Timestamp base = parse_iso8601("2024-03-01T12:00:00Z");
  for (std::size_t i = 0; i < comments.size(); ++i) {
    const auto &s = comments[i];
    Comment c;
    c.comment_id = s.id;
    c.author_login = s.author;
    c.comment_type = i == 0 ? "issue" : "comment";
    c.association = s.association;
    c.is_bot = s.is_bot;
    c.created_at = base + std::chrono::minutes(static_cast<int>(i));
    c.updated_at = c.created_at;
    c.body = s.body;
    c.reactions = s.reactions;
    c.is_header = i == 0;
    t.comments.push_back(std::move(c));
  }
  return IssueThread::make(std::move(t));
}

namespace {

void put16(std::string &out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>((v >> 8) & 0xff);
}

void put32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::string raw_deflate(const std::string &data) {
  z_stream zs{};
  deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY);
  std::string out(deflateBound(&zs, data.size()) + 16, '\0');
  zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef *>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  return out;
}

std::string xml_escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string zip_archive(const std::vector<std::pair<std::string, std::string>> &members, bool deflate) {
  std::string out;
  std::string central;
  for (const auto &[name, data] : members) {
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef *>(data.data()), static_cast<uInt>(data.size())));
    const std::string stored = deflate ? raw_deflate(data) : data;
    const std::uint32_t offset = static_cast<std::uint32_t>(out.size());
    put32(out, 0x04034b50);
    put16(out, 20);
    put16(out, 0);
    put16(out, deflate ? 8 : 0);
    put16(out, 0);
    put16(out, 0);
    put32(out, crc);
    put32(out, static_cast<std::uint32_t>(stored.size()));
    put32(out, static_cast<std::uint32_t>(data.size()));
    put16(out, static_cast<std::uint16_t>(name.size()));
    put16(out, 0);
    out += name;
    out += stored;

    put32(central, 0x02014b50);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, deflate ? 8 : 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, crc);
    put32(central, static_cast<std::uint32_t>(stored.size()));
    put32(central, static_cast<std::uint32_t>(data.size()));
    put16(central, static_cast<std::uint16_t>(name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central += name;
  }
  const std::uint32_t cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(members.size()));
  put16(out, static_cast<std::uint16_t>(members.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::string docx_bytes(const std::vector<std::string> &paragraphs,
                       const std::vector<std::vector<std::string>> &table) {
  std::string body;
  for (const auto &p : paragraphs) {
    body += "<w:p><w:r><w:t xml:space=\"preserve\">" + xml_escape(p) + "</w:t></w:r></w:p>";
  }
  if (!table.empty()) {
    body += "<w:tbl>";
    for (const auto &row : table) {
      body += "<w:tr>";
      for (const auto &cell : row) {
        body += "<w:tc><w:p><w:r><w:t>" + xml_escape(cell) + "</w:t></w:r></w:p></w:tc>";
      }
      body += "</w:tr>";
    }
    body += "</w:tbl>";
  }
  const std::string document =
      "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>"
      "<w:document xmlns:w=\"http://schemas.openxmlformats.org/wordprocessingml/2006/main\">"
      "<w:body>" + body + "</w:body></w:document>";
  return zip_archive({{"[Content_Types].xml", "<Types/>"}, {"word/document.xml", document}}, true);
}

std::string xlsx_bytes(
    const std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> &sheets) {
  std::vector<std::string> strings;
  auto string_index = [&](const std::string &s) {
    const auto it = std::find(strings.begin(), strings.end(), s);
    if (it != strings.end()) return static_cast<std::size_t>(it - strings.begin());
    strings.push_back(s);
    return strings.size() - 1;
  };
  const std::string ns = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
  const std::string rns = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";
  std::vector<std::pair<std::string, std::string>> members;
  std::string workbook = "<workbook xmlns=\"" + ns + "\" xmlns:r=\"" + rns + "\"><sheets>";
  std::string rels = "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">";
  for (std::size_t i = 0; i < sheets.size(); ++i) {
    const auto &[name, rows] = sheets[i];
    workbook += fmt::format("<sheet name=\"{}\" sheetId=\"{}\" r:id=\"rId{}\"/>", xml_escape(name), i + 1, i + 1);
    rels += fmt::format(
        "<Relationship Id=\"rId{}\" Type=\"{}/worksheet\" Target=\"worksheets/sheet{}.xml\"/>", i + 1, rns,
        i + 1);
    std::string data = "<worksheet xmlns=\"" + ns + "\"><sheetData>";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      data += fmt::format("<row r=\"{}\">", r + 1);
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        const std::string ref = fmt::format("{}{}", static_cast<char>('A' + c), r + 1);
        const std::string &v = rows[r][c];
        const bool numeric = !v.empty() && std::all_of(v.begin(), v.end(), [](char ch) {
          return std::isdigit(static_cast<unsigned char>(ch)) || ch == '.';
        });
        if (numeric) {
          data += fmt::format("<c r=\"{}\"><v>{}</v></c>", ref, v);
        } else {
          data += fmt::format("<c r=\"{}\" t=\"s\"><v>{}</v></c>", ref, string_index(v));
        }
      }
      data += "</row>";
    }
    data += "</sheetData></worksheet>";
    members.emplace_back(fmt::format("xl/worksheets/sheet{}.xml", i + 1), data);
  }
  workbook += "</sheets></workbook>";
  rels += "</Relationships>";
  std::string shared = fmt::format("<sst xmlns=\"{}\" count=\"{}\" uniqueCount=\"{}\">", ns, strings.size(),
                                   strings.size());
  for (const auto &s : strings) shared += "<si><t>" + xml_escape(s) + "</t></si>";
  shared += "</sst>";
  members.emplace_back("xl/workbook.xml", workbook);
  members.emplace_back("xl/_rels/workbook.xml.rels", rels);
  members.emplace_back("xl/sharedStrings.xml", shared);
  return zip_archive(members, true);
}

std::string pdf_bytes(const std::vector<std::string> &pages, bool compress) {
  std::vector<std::string> objects;  // object bodies, numbered from 1
  // 1: catalog, 2: pages, 3: font, then (page, content) pairs.
  std::string kids;
  for (std::size_t i = 0; i < pages.size(); ++i) kids += fmt::format("{} 0 R ", 4 + 2 * i);
  objects.push_back("<< /Type /Catalog /Pages 2 0 R >>");
  objects.push_back(fmt::format("<< /Type /Pages /Kids [{}] /Count {} >>", kids, pages.size()));
  objects.push_back("<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding >>");
  for (std::size_t i = 0; i < pages.size(); ++i) {
    objects.push_back(fmt::format(
        "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /Font << /F1 3 0 R >> >> "
        "/Contents {} 0 R >>",
        5 + 2 * i));
    std::string escaped;
    for (char c : pages[i]) {
      if (c == '(' || c == ')' || c == '\\') escaped += '\\';
      escaped += c;
    }
    std::string content = "BT /F1 12 Tf 72 720 Td (" + escaped + ") Tj ET";
    if (compress) {
      uLongf len = compressBound(static_cast<uLong>(content.size()));
      std::string z(len, '\0');
      ::compress(reinterpret_cast<Bytef *>(z.data()), &len, reinterpret_cast<const Bytef *>(content.data()),
                 static_cast<uLong>(content.size()));
      z.resize(len);
      objects.push_back(fmt::format("<< /Length {} /Filter /FlateDecode >>\nstream\n", z.size()) + z +
                        "\nendstream");
    } else {
      objects.push_back(fmt::format("<< /Length {} >>\nstream\n", content.size()) + content + "\nendstream");
    }
  }
  std::string out = "%PDF-1.4\n%\xe2\xe3\xcf\xd3\n";
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    offsets.push_back(out.size());
    out += fmt::format("{} 0 obj\n", i + 1) + objects[i] + "\nendobj\n";
  }
  const std::size_t xref = out.size();
  out += fmt::format("xref\n0 {}\n0000000000 65535 f \n", objects.size() + 1);
  for (auto off : offsets) out += fmt::format("{:010d} 00000 n \n", off);
  out += fmt::format("trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{}\n%%EOF\n", objects.size() + 1, xref);
  return out;
}

std::string tiny_png() {
  static const unsigned char png[] = {
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
      0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4,
      0x89, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0xf8, 0xcf, 0xc0, 0xf0,
      0x1f, 0x00, 0x05, 0x00, 0x01, 0xff, 0x89, 0x99, 0x3d, 0x1d, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45,
      0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
  return std::string(reinterpret_cast<const char *>(png), sizeof(png));
}

}  // namespace fixtures
