#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "issuetraj/artifacts.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/trajectory.hpp"

using namespace issuetraj;
using nlohmann::json;

namespace {

Excerpt ex(std::string id, std::string assoc, std::int64_t reactions) {
  return Excerpt{"workaround", "text " + id, std::move(id), "u", std::move(assoc), reactions};
}

std::vector<std::string> ids(const std::vector<Excerpt> &v) {
  std::vector<std::string> out;
  for (const auto &e : v) out.push_back(e.comment_id);
  return out;
}

LlmGateway scripted() {
  auto g = LlmGateway::stub();
  g.set_responder(fixtures::scripted_model());
  return g;
}

SynthesisOutput build(const IssueThread &thread, LabelType label, LlmGateway &g, const LinkCache &cache) {
  const auto &schema = schema_for(label);
  std::vector<CommentAnalysis> analyses;
  std::vector<std::vector<Excerpt>> per_comment;
  for (const auto &c : thread.comments) {
    analyses.push_back(analyze_comment(c, schema, cache, g));
    per_comment.push_back(bucket_excerpts(c, analyses.back(), schema, g));
  }
  return synthesize_trajectory(thread, thread.labels, {label, DetectionMethod::keyword_match}, schema, cache,
                               analyses, accumulate_buckets(per_comment, schema), g);
}

}  // namespace

TEST_CASE("maintainer tier") {
  for (const char *a : {"OWNER", "member", "Collaborator", " MEMBER "}) CHECK(is_maintainer_tier(a));
  for (const char *a : {"CONTRIBUTOR", "NONE", "", "FIRST_TIMER"}) CHECK_FALSE(is_maintainer_tier(a));
}

TEST_CASE("rank evidence examples") {
  const std::vector<Excerpt> bucket = {ex("a", "NONE", 9), ex("b", "MEMBER", 0), ex("c", "CONTRIBUTOR", 9),
                                       ex("d", "OWNER", 2), ex("e", "NONE", 1)};
  CHECK(ids(rank_evidence(bucket)) == std::vector<std::string>{"d", "b", "a", "c", "e"});
  CHECK(rank_evidence({}).empty());
  const auto once = rank_evidence(bucket);
  CHECK(rank_evidence(once) == once);
}

TEST_CASE("rank evidence against brute force") {
  std::mt19937 rng(7);
  const char *assocs[] = {"OWNER", "MEMBER", "COLLABORATOR", "CONTRIBUTOR", "NONE"};
  for (int round = 0; round < 300; ++round) {
    const int n = std::uniform_int_distribution<int>(0, 9)(rng);
    std::vector<Excerpt> bucket;
    for (int i = 0; i < n; ++i) {
      bucket.push_back(ex(std::to_string(i), assocs[rng() % 5], std::uniform_int_distribution<int>(0, 3)(rng)));
    }
    // Oracle: pick the best remaining excerpt each step, earliest on ties.
    std::vector<Excerpt> expected, pool = bucket;
    while (!pool.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < pool.size(); ++i) {
        const auto key = [](const Excerpt &e) {
          const std::string a = e.association;
          const int tier = (a == "OWNER" || a == "MEMBER" || a == "COLLABORATOR") ? 1 : 0;
          return std::pair(tier, e.reaction_score);
        };
        if (key(pool[i]) > key(pool[best])) best = i;
      }
      expected.push_back(pool[best]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    CHECK(rank_evidence(bucket) == expected);
  }
}

TEST_CASE("synthesize field outcomes") {
  auto g = scripted();
  auto r = synthesize_field("workaround", "guidance", {}, "title", g);
  CHECK(r.outcome == FieldOutcome::empty_bucket);
  CHECK_FALSE(r.paragraph);
  CHECK(g.calls(Role::trajectory_synthesizer) == 0);

  r = synthesize_field("workaround", "guidance", {ex("a", "NONE", 0), ex("b", "NONE", 0)}, "title", g);
  CHECK(r.outcome == FieldOutcome::synthesized);
  CHECK(r.paragraph == std::optional<std::string>("The workaround field rests on 2 excerpt(s)."));

  Excerpt junk = ex("c", "NONE", 0);
  junk.text = "NOEVIDENCE just a +1";
  r = synthesize_field("workaround", "guidance", {junk}, "title", g);
  CHECK(r.outcome == FieldOutcome::no_evidence);
  CHECK_FALSE(r.paragraph);

  g.inject_failure(Role::trajectory_synthesizer);
  r = synthesize_field("workaround", "guidance", {ex("a", "NONE", 0)}, "title", g);
  CHECK(r.outcome == FieldOutcome::failed);
  CHECK_FALSE(r.paragraph);
}

TEST_CASE("bug trajectory leaves evidence-free fields null") {
  const auto thread = fixtures::make_thread(
      12, {{"c0", "alice", "NONE", "[problem_description] Pager drops the last byte of output"},
           {"c1", "bob", "MEMBER", "[root_cause_analysis] Loop bound is off by one\n[solution_plan] Use <= in the loop"},
           {"c2", "carol", "NONE", "+1 same here"}},
      {"bug"}, "Pager drops a byte");
  auto g = scripted();
  LinkCache cache;
  const auto out = build(thread, LabelType::bug, g, cache);
  const Trajectory &t = out.trajectory;
  CHECK(out.diagnostics.empty());
  CHECK(t.field_schema == schema_for(LabelType::bug).field_keys);
  CHECK(g.calls(Role::trajectory_synthesizer) == 3);
  std::size_t nulls = 0;
  for (const auto &f : t.synthesized) nulls += f.paragraph ? 0 : 1;
  CHECK(nulls == 5);
  CHECK(t.field("root_cause_analysis") == std::optional<std::string>("The root_cause_analysis field rests on 1 excerpt(s)."));
  CHECK_FALSE(t.field("workaround"));
  CHECK_THROWS_AS(t.field("feature_description"), ForeignFieldKey);
  CHECK(validate_trajectory_json(json::parse(serialize_trajectory(t))).empty());
}

TEST_CASE("general trajectory has five keys") {
  const auto thread = fixtures::make_thread(4, {{"c0", "a", "NONE", "[issue_description] Misc discussion about naming"}});
  auto g = scripted();
  LinkCache cache;
  const auto out = build(thread, LabelType::general, g, cache);
  CHECK(out.trajectory.synthesized.size() == 5);
  const auto doc = trajectory_to_json(out.trajectory);
  CHECK(doc["trajectory"].size() == 5);
  CHECK(doc["field_buckets"].size() == 5);
}

TEST_CASE("synthesis failure is a diagnostic") {
  const auto thread = fixtures::make_thread(5, {{"c0", "a", "NONE", "[workaround] Restart the daemon after upgrade"}});
  auto g = scripted();
  LinkCache cache;
  const auto &schema = schema_for(LabelType::bug);
  const auto analysis = analyze_comment(thread.comments[0], schema, cache, g);
  const auto buckets = accumulate_buckets({bucket_excerpts(thread.comments[0], analysis, schema, g)}, schema);
  g.inject_failure(Role::trajectory_synthesizer);
  const auto out = synthesize_trajectory(thread, {}, {LabelType::bug, DetectionMethod::llm_classified}, schema,
                                         cache, {analysis}, buckets, g);
  CHECK(out.diagnostics == std::vector<std::string>{"synthesis_failed:workaround"});
  CHECK_FALSE(out.trajectory.field("workaround"));
}

TEST_CASE("link cache slice follows first reference") {
  const auto thread = fixtures::make_thread(
      6, {{"c0", "a", "NONE", "see https://z.example.com/ and https://a.example.com/"},
          {"c1", "b", "NONE", "again https://a.example.com/ plus https://unseen.example.com/"}});
  LinkCache cache;
  cache.insert("https://a.example.com/", {"A", FetchStatus::ok, {}, ArtifactKind::generic_web, std::nullopt});
  cache.insert("https://z.example.com/", {"", FetchStatus::failed, {}, ArtifactKind::generic_web, "HTTP 500"});
  cache.insert("https://other.example.com/", {"O", FetchStatus::ok, {}, ArtifactKind::generic_web, std::nullopt});
  auto g = scripted();
  const auto out = build(thread, LabelType::general, g, cache);
  REQUIRE(out.trajectory.link_cache.size() == 2);
  CHECK(out.trajectory.link_cache[0].first == "https://z.example.com/");
  CHECK(out.trajectory.link_cache[1].first == "https://a.example.com/");
}

TEST_CASE("serialization fixpoint and validation") {
  const auto thread = fixtures::make_thread(
      8, {{"c0", "alice", "NONE", "[problem_description] It crashes on empty input\nhttps://a.example.com/"},
          {"c1", "bob", "OWNER", "[testing_and_verification] Added a regression test"}},
      {"bug", "p1"});
  LinkCache cache;
  cache.insert("https://a.example.com/", {"A", FetchStatus::ok, parse_iso8601("2024-02-02T00:00:00Z"), ArtifactKind::generic_web, std::nullopt});
  auto g = scripted();
  const Trajectory t = build(thread, LabelType::bug, g, cache).trajectory;
  const std::string text = serialize_trajectory(t);
  CHECK(text.ends_with("}\n"));
  const Trajectory back = parse_trajectory(text);
  CHECK(back == t);
  CHECK(serialize_trajectory(back) == text);
  CHECK(trajectory_filename(8) == "8_issue_trajectory.json");

  json doc = json::parse(text);
  CHECK(validate_trajectory_json(doc).empty());

  json extra = doc;
  extra["surprise"] = 1;
  CHECK_FALSE(validate_trajectory_json(extra).empty());
  json missing = doc;
  missing.erase("link_cache");
  CHECK_FALSE(validate_trajectory_json(missing).empty());
  json unsupported = doc;
  unsupported["trajectory"]["workaround"] = "claims without evidence";
  CHECK_FALSE(validate_trajectory_json(unsupported).empty());
  json foreign = doc;
  foreign["trajectory"]["feature_description"] = nullptr;
  CHECK_FALSE(validate_trajectory_json(foreign).empty());
  json mislabeled = doc;
  mislabeled["label_type"] = "question";
  CHECK_FALSE(validate_trajectory_json(mislabeled).empty());
  CHECK_THROWS_AS(parse_trajectory(extra.dump()), MalformedInput);
  CHECK_THROWS_AS(parse_trajectory("{"), MalformedInput);
}
