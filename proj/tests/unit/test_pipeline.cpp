#include <doctest.h>

#include <filesystem>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/http.hpp"
#include "issuetraj/pipeline.hpp"
#include "issuetraj/text.hpp"
#include "issuetraj/thread_model.hpp"

using namespace issuetraj;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Rig {
  fixtures::TempDir dir;
  fixtures::FixtureHttpClient http;
  GitHubClient github{http, "", "https://api.github.test"};
  LlmGateway gateway = LlmGateway::stub();
  PipelineServices services{http, github, gateway, frozen_clock()};
  RunConfig config;

  Rig() {
    gateway.set_responder(fixtures::scripted_model());
    fs::create_directories(dir.path() / "threads");
    config.output_dir = dir.file("out");
    config.cache_path = dir.file("cache.json");
    config.gateway_mode = GatewayMode::stub;
    config.stable_output = true;
    config.inputs = {dir.file("threads")};
  }

  std::string write_thread(const IssueThread &t) {
    const std::string path = (dir.path() / "threads" / thread_filename(t.issue_number, 0)).string();
    write_file_atomic(path, serialize_thread(t));
    return path;
  }
};

IssueThread bug_thread(std::int64_t n, const std::string &link = "") {
  return fixtures::make_thread(
      n, {{"c0", "alice", "NONE", "[problem_description] Export fails for issue " + std::to_string(n)},
          {"c1", "bob", "MEMBER", "[root_cause_analysis] The encoder rejects empty rows " + link}},
      {"bug"}, "Export fails");
}

}  // namespace

TEST_CASE("extract writes one trajectory per thread") {
  Rig rig;
  for (int n : {3, 1, 2}) rig.write_thread(bug_thread(n));
  const RunReport r = cmd_extract(rig.config, rig.services);
  CHECK(r.all_ok());
  CHECK(r.exit_code() == 0);
  REQUIRE(r.issues.size() == 3);
  for (int n : {1, 2, 3}) {
    const std::string path = rig.config.output_dir + "/" + trajectory_filename(n);
    REQUIRE(fs::exists(path));
    const Trajectory t = parse_trajectory(read_file(path));
    CHECK(t.label_type == LabelType::bug);
    CHECK(t.label_detection == DetectionMethod::keyword_match);
  }
  const json report = json::parse(read_file(rig.config.output_dir + "/run_report.json"));
  CHECK(report["ok"] == 3);
  CHECK(report["failed"] == 0);
}

TEST_CASE("one malformed thread does not sink the run") {
  Rig rig;
  rig.write_thread(bug_thread(1));
  rig.write_thread(bug_thread(2));
  write_file_atomic(rig.dir.file("threads/issue#9_comments_pr#0.json"), "{\"comments\": [");
  const RunReport r = cmd_extract(rig.config, rig.services);
  CHECK(r.exit_code() == 1);
  std::size_t ok = 0;
  for (const auto &s : r.issues) {
    if (s.ok) {
      ++ok;
    } else {
      CHECK(s.stage == "parse");
      CHECK(s.input.find("issue#9") != std::string::npos);
    }
  }
  CHECK(ok == 2);
  CHECK(fs::exists(rig.config.output_dir + "/1_issue_trajectory.json"));
  CHECK(fs::exists(rig.config.output_dir + "/2_issue_trajectory.json"));
}

TEST_CASE("link failures become diagnostics") {
  Rig rig;
  rig.write_thread(bug_thread(4, "https://down.example.com/log"));
  const RunReport r = cmd_extract(rig.config, rig.services);
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].ok);
  CHECK(r.issues[0].diagnostics == std::vector<std::string>{"link_failed:https://down.example.com/log"});
  const Trajectory t = parse_trajectory(read_file(rig.config.output_dir + "/4_issue_trajectory.json"));
  REQUIRE(t.link_cache.size() == 1);
  CHECK(t.link_cache[0].second.fetch_status == FetchStatus::failed);
}

TEST_CASE("config precedence") {
  fixtures::TempDir dir;
  RunConfig c;
  apply_config_json(c, json{{"output_dir", "from-file"}, {"parallelism", 3}, {"limits", {{"context_lines", 5}}},
                            {"thresholds", {{"excellent", 4.8}}}, {"splits", json::array({{{"name", "A"}, {"path", "a.jsonl"}}})}});
  CHECK(c.output_dir == "from-file");
  CHECK(c.parallelism == 3);
  CHECK(c.limits.context_lines == 5);
  CHECK(c.thresholds.excellent == doctest::Approx(4.8));
  REQUIRE(c.splits.size() == 1);

  const std::map<std::string, std::string> env = {{"ISSUETRAJ_OUTPUT_DIR", "from-env"}, {"ISSUETRAJ_PARALLELISM", "7"}};
  apply_environment(c, [&](const std::string &k) -> std::optional<std::string> {
    const auto it = env.find(k);
    return it == env.end() ? std::nullopt : std::optional(it->second);
  });
  CHECK(c.output_dir == "from-env");
  CHECK(c.parallelism == 7);
  CHECK(c.limits.context_lines == 5);

  CHECK_THROWS_AS(apply_config_json(c, json{{"ouput_dir", "typo"}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json{{"limits", {{"bogus", 1}}}}), ConfigError);
  CHECK_THROWS_AS(apply_config_json(c, json{{"gateway_mode", "psychic"}}), ConfigError);
  CHECK_THROWS_AS(apply_environment(c, [](const std::string &k) -> std::optional<std::string> {
                    if (k == "ISSUETRAJ_PARALLELISM") return "lots";
                    return std::nullopt;
                  }),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_file(c, dir.file("missing.json")), ConfigError);

  RunConfig bad;
  bad.inputs = {"x"};
  bad.gateway_mode = GatewayMode::replay;
  bad.exchange_path = dir.file("none.jsonl");
  CHECK_THROWS_AS(bad.validate_for_extract(), ConfigError);
  RunConfig none;
  CHECK_THROWS_AS(none.validate_for_extract(), ConfigError);
}

TEST_CASE("judge and stats over extracted trajectories") {
  Rig rig;
  for (int n : {1, 2}) rig.write_thread(bug_thread(n));
  REQUIRE(cmd_extract(rig.config, rig.services).all_ok());

  RunConfig jc = rig.config;
  jc.threads_dir = rig.dir.file("threads");
  jc.trajectories_dir = rig.config.output_dir;
  jc.output_dir = rig.dir.file("judged");
  const RunReport jr = cmd_judge(jc, rig.gateway);
  CHECK(jr.all_ok());
  CHECK(fs::exists(jc.output_dir + "/1_verdict.json"));
  CHECK(fs::exists(jc.output_dir + "/review_worksheet.csv"));
  const json approved = json::parse(read_file(jc.output_dir + "/approved.json"));
  CHECK(approved.size() == 2);

  RunConfig sc;
  sc.output_dir = rig.dir.file("stats");
  sc.splits = {{"Demo", jc.output_dir}};
  const StatsOutput s = cmd_stats(sc);
  REQUIRE(s.verdict_stats.size() == 1);
  CHECK(s.verdict_stats[0].total == 2);
  CHECK(s.verdict_stats[0].count(VerdictCategory::Good) == 2);
  CHECK(s.verdict_table.find("Demo") != std::string::npos);
  CHECK(fs::exists(sc.output_dir + "/stats.json"));

  fs::create_directories(rig.dir.path() / "empty");
  RunConfig ec = jc;
  ec.trajectories_dir = rig.dir.file("empty");
  CHECK_THROWS_AS(cmd_judge(ec, rig.gateway), EmptyInput);
  RunConfig missing = jc;
  missing.threads_dir = rig.dir.file("nowhere");
  CHECK_THROWS_AS(cmd_judge(missing, rig.gateway), ConfigError);
  sc.splits = {{"Empty", rig.dir.file("empty")}};
  CHECK_THROWS_AS(cmd_stats(sc), EmptyInput);
}

TEST_CASE("cache maintenance") {
  fixtures::TempDir dir;
  LinkCache cache;
  cache.insert("https://a.example.com/", {"A", FetchStatus::ok, {}, ArtifactKind::generic_web, std::nullopt});
  cache.insert("https://b.example.com/", {"", FetchStatus::failed, {}, ArtifactKind::pdf, "HTTP 500"});
  cache.save(dir.file("cache.json"));
  RunConfig c;
  c.cache_path = dir.file("cache.json");
  const std::string stats = cmd_cache(c, CacheCommand::stats);
  CHECK(stats.find("entries: 2\n") != std::string::npos);
  CHECK(stats.find("failed: 1\n") != std::string::npos);
  CHECK(cmd_cache(c, CacheCommand::purge_failed) == "purged 1 failed entries, 1 remain\n");
  LinkCache after;
  LinkCache::load_into(after, c.cache_path);
  CHECK(after.size() == 1);
}

TEST_CASE("parallelism bounds concurrent fetches") {
  Rig rig;
  rig.http.set_delay_ms(40);
  for (int n = 1; n <= 6; ++n) {
    const std::string url = fmt::format("https://site{}.example.com/page", n);
    rig.http.add_body(url, "<p>Details for page " + std::to_string(n) + "</p>", "text/html");
    rig.write_thread(bug_thread(n, url));
  }
  rig.config.parallelism = 2;
  const RunReport r = cmd_extract(rig.config, rig.services);
  CHECK(r.all_ok());
  CHECK(rig.http.requests() == 6);
  CHECK(rig.http.max_in_flight() <= 2);
  CHECK(rig.http.max_in_flight() >= 1);
}

TEST_CASE("input expansion") {
  fixtures::TempDir dir;
  for (const char *name : {"b.json", "a.json", "notes.txt"}) write_file_atomic(dir.file(name), "{}");
  const auto files = expand_inputs({dir.path().string()});
  CHECK(files == std::vector<std::string>{dir.file("a.json"), dir.file("b.json")});
  CHECK(expand_inputs({dir.file("*.txt")}) == std::vector<std::string>{dir.file("notes.txt")});
  CHECK(expand_inputs({dir.file("ghost.json")}) == std::vector<std::string>{dir.file("ghost.json")});
}
