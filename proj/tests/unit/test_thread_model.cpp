#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"
#include "issuetraj/thread_model.hpp"

using namespace issuetraj;
using nlohmann::json;

namespace {

json comment_json(const std::string &id, bool header, const std::string &created = "2024-01-01T00:00:00Z",
                  json reactions = json::object()) {
  return {{"comment_id", id},   {"author_login", "alice"}, {"type", "comment"},
          {"association", "NONE"}, {"is_bot", false},       {"created_at", created},
          {"updated_at", created}, {"body", "body of " + id}, {"reactions", reactions},
          {"is_header", header}};
}

json thread_json(std::vector<json> comments) {
  return {{"source_url", "https://github.com/o/r/issues/42"},
          {"repo_owner", "o"},
          {"repo_name", "r"},
          {"issue_number", 42},
          {"comment_count", comments.size()},
          {"comments", comments}};
}

}  // namespace

TEST_CASE("parse_thread reads a three-comment export") {
  const auto doc = thread_json({comment_json("c1", true, "2024-01-01T00:00:00Z"),
                                comment_json("c2", false, "2024-01-01T01:00:00Z"),
                                comment_json("c3", false, "2024-01-01T02:00:00Z")});
  const IssueThread t = parse_thread(doc.dump());
  CHECK(t.comment_count == 3);
  CHECK(t.comments.size() == 3);
  CHECK(t.issue_number == 42);
  CHECK(t.repo_owner == "o");
  CHECK(header_comment(t).comment_id == "c1");
  CHECK(thread_filename(42, 7) == "issue#42_comments_pr#7.json");
}

TEST_CASE("zero comments has no header") {
  CHECK_THROWS_AS(parse_thread(thread_json({}).dump()), NoHeader);
}

TEST_CASE("two header flags are rejected") {
  std::vector<json> cs;
  for (int i = 0; i < 5; ++i) cs.push_back(comment_json(fmt::format("c{}", i), false));
  cs[0]["is_header"] = true;
  cs[3]["is_header"] = true;
  int headers = 0;
  for (const auto &c : cs) headers += c["is_header"].get<bool>() ? 1 : 0;
  REQUIRE(headers == 2);
  CHECK_THROWS_AS(parse_thread(thread_json(cs).dump()), NoHeader);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_thread("not json"), MalformedInput);
  auto doc = thread_json({comment_json("c1", true)});
  doc.erase("repo_owner");
  CHECK_THROWS_AS(parse_thread(doc.dump()), MalformedInput);
  auto count = thread_json({comment_json("c1", true)});
  count["comment_count"] = 2;
  CHECK_THROWS_AS(parse_thread(count.dump()), MalformedInput);
  auto dup = thread_json({comment_json("c1", true), comment_json("c1", false)});
  CHECK_THROWS_AS(parse_thread(dup.dump()), MalformedInput);
  auto neg = thread_json({comment_json("c1", true, "2024-01-01T00:00:00Z", json{{"+1", -1}})});
  CHECK_THROWS_AS(parse_thread(neg.dump()), MalformedInput);
  auto bad_number = thread_json({comment_json("c1", true)});
  bad_number["issue_number"] = 0;
  CHECK_THROWS_AS(parse_thread(bad_number.dump()), MalformedInput);
}

TEST_CASE("missing reactions default to empty and unknown keys are ignored") {
  auto c = comment_json("c1", true);
  c.erase("reactions");
  c["extra"] = "ignored";
  auto doc = thread_json({c});
  doc["whatever"] = 1;
  const IssueThread t = parse_thread(doc.dump());
  CHECK(t.comments[0].reactions.empty());
  CHECK(reaction_score(t.comments[0]) == 0);
}

TEST_CASE("reaction_score sums every count") {
  Comment c;
  c.reactions = {{"+1", 3}, {"heart", 2}};
  CHECK(reaction_score(c) == 5);
  c.reactions = {{"-1", 4}};
  CHECK(reaction_score(c) == 4);
  c.reactions.clear();
  CHECK(reaction_score(c) == 0);
}

TEST_CASE("reaction_score is monotone under added entries") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> count(0, 50);
  for (int trial = 0; trial < 200; ++trial) {
    Comment c;
    const int n = count(rng) % 6;
    for (int i = 0; i < n; ++i) c.reactions[fmt::format("r{}", i)] = count(rng);
    const auto before = reaction_score(c);
    c.reactions[fmt::format("extra{}", trial)] = count(rng);
    CHECK(reaction_score(c) >= before);
  }
}

TEST_CASE("GitHub reaction rollups skip bookkeeping keys") {
  auto doc = thread_json({comment_json(
      "c1", true, "2024-01-01T00:00:00Z",
      json{{"url", "https://api.github.com/x"}, {"total_count", 9}, {"+1", 2}, {"rocket", 1}})});
  CHECK(reaction_score(parse_thread(doc.dump()).comments[0]) == 3);
}

TEST_CASE("shuffled ten-comment thread finds the header by flag") {
  std::vector<json> cs;
  for (int i = 0; i < 10; ++i) {
    cs.push_back(comment_json(fmt::format("c{}", i), i == 7, fmt::format("2024-01-01T00:{:02d}:00Z", i)));
  }
  std::mt19937 rng(11);
  std::shuffle(cs.begin(), cs.end(), rng);
  std::string expected;
  for (const auto &c : cs) {
    if (c["is_header"].get<bool>()) expected = c["comment_id"];
  }
  const IssueThread t = parse_thread(thread_json(cs).dump());
  CHECK(header_comment(t).comment_id == expected);
  // comments come back in creation order
  for (std::size_t i = 1; i < t.comments.size(); ++i) {
    CHECK(t.comments[i - 1].created_at <= t.comments[i].created_at);
  }
}

TEST_CASE("equal timestamps keep input order") {
  const auto doc = thread_json({comment_json("b", false, "2024-01-01T00:00:00Z"),
                                comment_json("a", true, "2024-01-01T00:00:00Z"),
                                comment_json("c", false, "2024-01-01T00:00:00Z")});
  const IssueThread t = parse_thread(doc.dump());
  CHECK(t.comments[0].comment_id == "b");
  CHECK(t.comments[1].comment_id == "a");
  CHECK(t.comments[2].comment_id == "c");
}

TEST_CASE("serialize then parse is the identity") {
  const IssueThread t = fixtures::make_thread(
      9,
      {{"h", "alice", "OWNER", "Title line\nDetails", {{"+1", 2}}},
       {"c2", "bob", "NONE", "ünïcode body ✓", {{"heart", 1}, {"-1", 3}}, true}},
      {"bug", "area: io"}, std::string("A title"));
  const IssueThread back = parse_thread(serialize_thread(t));
  CHECK(back == t);
  CHECK(serialize_thread(back) == serialize_thread(t));
}

TEST_CASE("invalid UTF-8 is replaced, not rejected") {
  auto doc = thread_json({comment_json("c1", true)});
  std::string text = doc.dump();
  const auto at = text.find("body of c1");
  text.insert(at, "\xff\xfe");
  const IssueThread t = parse_thread(text);
  CHECK(t.comments[0].body.find("\xEF\xBF\xBD") != std::string::npos);
}

TEST_CASE("issue_title falls back to the first header line") {
  const IssueThread a = fixtures::make_thread(1, {{"h", "u", "NONE", "\n  First line  \nsecond"}});
  CHECK(issue_title(a) == "First line");
  const IssueThread b = fixtures::make_thread(1, {{"h", "u", "NONE", "body"}}, {}, std::string("Real title"));
  CHECK(issue_title(b) == "Real title");
}

TEST_CASE("fetch_issue_thread synthesizes the header and paginates") {
  fixtures::FixtureHttpClient http;
  const std::string base = "https://api.github.com/repos/o/r/issues/5";
  http.add_body(base, json{{"title", "Crash on start"},
                           {"body", "It crashes"},
                           {"html_url", "https://github.com/o/r/issues/5"},
                           {"user", {{"login", "alice"}}},
                           {"author_association", "NONE"},
                           {"created_at", "2024-01-01T00:00:00Z"},
                           {"updated_at", "2024-01-01T00:00:00Z"},
                           {"labels", json::array({json{{"name", "bug"}}})},
                           {"reactions", {{"+1", 1}}}}
                          .dump(),
                "application/json");
  HttpResponse page1;
  page1.status = 200;
  page1.headers["link"] = "<" + base + "/comments?per_page=100&page=2>; rel=\"next\"";
  page1.body = json::array({json{{"id", 100},
                                 {"user", {{"login", "bob"}, {"type", "User"}}},
                                 {"author_association", "MEMBER"},
                                 {"created_at", "2024-01-02T00:00:00Z"},
                                 {"updated_at", "2024-01-02T00:00:00Z"},
                                 {"body", "Looking"}}})
                   .dump();
  http.add(base + "/comments?per_page=100", page1);
  http.add_body(base + "/comments?per_page=100&page=2",
                json::array({json{{"id", 101},
                                  {"user", {{"login", "ci-bot"}, {"type", "Bot"}}},
                                  {"author_association", "NONE"},
                                  {"created_at", "2024-01-03T00:00:00Z"},
                                  {"updated_at", "2024-01-03T00:00:00Z"},
                                  {"body", "Automated"}}})
                    .dump(),
                "application/json");
  GitHubClient gh(http);
  const IssueThread t = fetch_issue_thread(gh, "o", "r", 5);
  REQUIRE(t.comments.size() == 3);
  CHECK(t.comments[0].is_header);
  CHECK(t.comments[0].body == "It crashes");
  CHECK(t.comments[2].is_bot);
  CHECK(t.labels == std::vector<std::string>{"bug"});
  CHECK(issue_title(t) == "Crash on start");
}

TEST_CASE("fetch_issue_thread maps 404 and rate limits") {
  fixtures::FixtureHttpClient http;
  http.add_body("https://api.github.com/repos/o/r/issues/404", "{}", "application/json", 404);
  HttpResponse limited;
  limited.status = 403;
  limited.headers["x-ratelimit-remaining"] = "0";
  limited.headers["retry-after"] = "30";
  limited.body = "{}";
  http.add("https://api.github.com/repos/o/r/issues/403", limited);
  GitHubClient gh(http);
  CHECK_THROWS_AS(fetch_issue_thread(gh, "o", "r", 404), NotFound);
  try {
    fetch_issue_thread(gh, "o", "r", 403);
    FAIL("expected RateLimited");
  } catch (const RateLimited &e) {
    CHECK(e.retry_after() == std::chrono::seconds(30));
  }
}
