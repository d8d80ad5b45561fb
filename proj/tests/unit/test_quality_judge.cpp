#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/quality_judge.hpp"
#include "issuetraj/trajectory.hpp"

using namespace issuetraj;
using nlohmann::json;

namespace {

std::map<Criterion, int> scores(std::vector<int> s) {
  std::map<Criterion, int> out;
  for (std::size_t i = 0; i < 5; ++i) out[all_criteria()[i]] = s[i];
  return out;
}

// Independent oracle: one-decimal percentage with halves rounded up.
std::int64_t oracle_tenths(std::int64_t c, std::int64_t t) {
  const std::int64_t q = c * 1000 / t;
  const std::int64_t r = c * 1000 % t;
  return q + (2 * r >= t ? 1 : 0);
}

std::vector<VerdictCategory> categories(std::int64_t e, std::int64_t g, std::int64_t a, std::int64_t p) {
  std::vector<VerdictCategory> out;
  out.insert(out.end(), e, VerdictCategory::Excellent);
  out.insert(out.end(), g, VerdictCategory::Good);
  out.insert(out.end(), a, VerdictCategory::Acceptable);
  out.insert(out.end(), p, VerdictCategory::Poor);
  return out;
}

Trajectory tiny_trajectory() {
  Trajectory t;
  t.issue_title = "Pager drops a byte";
  t.label_type = LabelType::bug;
  t.field_schema = schema_for(LabelType::bug).field_keys;
  t.field_buckets = FieldBuckets(schema_for(LabelType::bug));
  for (const auto &k : t.field_schema) t.synthesized.push_back({k, std::nullopt});
  return t;
}

}  // namespace

TEST_CASE("category thresholds") {
  CHECK(category_for_scores(scores({5, 5, 5, 5, 5})) == VerdictCategory::Excellent);
  CHECK(category_for_scores(scores({5, 5, 5, 4, 4})) == VerdictCategory::Excellent);  // 4.6
  CHECK(category_for_scores(scores({5, 5, 4, 4, 4})) == VerdictCategory::Good);
  CHECK(category_for_scores(scores({4, 4, 4, 4, 3})) == VerdictCategory::Good);  // 3.8
  CHECK(category_for_scores(scores({4, 4, 3, 4, 4})) == VerdictCategory::Good);
  CHECK(category_for_scores(scores({3, 3, 3, 3, 3})) == VerdictCategory::Acceptable);
  CHECK(category_for_scores(scores({2, 2, 2, 2, 2})) == VerdictCategory::Poor);
  CHECK(category_for_scores(scores({1, 2, 2, 2, 2})) == VerdictCategory::Inadequate);
  CHECK_THROWS_AS(category_for_scores(scores({0, 5, 5, 5, 5})), std::invalid_argument);
  CHECK_THROWS_AS(category_for_scores({{Criterion::field_coverage, 5}}), std::invalid_argument);

  CategoryThresholds strict;
  strict.excellent = 5.0;
  CHECK(category_for_scores(scores({5, 5, 5, 4, 4}), strict) == VerdictCategory::Good);

  // Exhaustive check of every score vector against the mean.
  for (int i = 0; i < 3125; ++i) {
    std::vector<int> s;
    int x = i, sum = 0;
    for (int k = 0; k < 5; ++k) {
      s.push_back(x % 5 + 1);
      sum += x % 5 + 1;
      x /= 5;
    }
    const double mean = sum / 5.0;
    VerdictCategory want = VerdictCategory::Inadequate;
    if (mean >= 2.0 - 1e-9) want = VerdictCategory::Poor;
    if (mean >= 3.0 - 1e-9) want = VerdictCategory::Acceptable;
    if (mean >= 3.8 - 1e-9) want = VerdictCategory::Good;
    if (mean >= 4.6 - 1e-9) want = VerdictCategory::Excellent;
    CHECK(category_for_scores(scores(s)) == want);
  }
}

TEST_CASE("judge recomputes the category") {
  const auto thread = fixtures::make_thread(21, {{"c0", "a", "NONE", "It breaks"}});
  auto g = LlmGateway::stub();

  fixtures::ScriptedModel m;
  m.judge_scores = {5, 5, 5, 5, 5};
  m.judge_category = "Excellent";
  g.set_responder(fixtures::scripted_model(m));
  Verdict v = judge_trajectory(tiny_trajectory(), thread, g);
  CHECK(v.category == VerdictCategory::Excellent);
  CHECK_FALSE(v.category_mismatch());
  CHECK(v.issue_id == "acme/widget#21");
  CHECK(v.label_type == LabelType::bug);

  m.judge_scores = {4, 4, 3, 4, 4};
  m.judge_category = "Excellent";
  g.set_responder(fixtures::scripted_model(m));
  v = judge_trajectory(tiny_trajectory(), thread, g);
  CHECK(v.category == VerdictCategory::Good);
  CHECK(v.model_category == VerdictCategory::Excellent);
  CHECK(v.category_mismatch());

  CHECK(verdict_from_json(verdict_to_json(v)).category == v.category);
  CHECK(verdict_from_json(json::parse(verdict_to_json(v).dump())).criterion_scores == v.criterion_scores);
}

TEST_CASE("judge reply handling") {
  const auto thread = fixtures::make_thread(22, {{"c0", "a", "NONE", "It breaks"}});
  auto g = LlmGateway::stub();
  g.script(Role::quality_judge, {"I think it is fine.", "Still prose."});
  CHECK_THROWS_AS(judge_trajectory(tiny_trajectory(), thread, g), JudgeFailure);
  CHECK(g.calls(Role::quality_judge) == 2);

  g.script(Role::quality_judge,
           {"prose", R"(```json
{"scores": {"field_coverage": "4", "factual_accuracy": 4.0, "technical_depth": 3, "structural_faithfulness": 3, "conciseness_clarity": 3}, "category": "acceptable", "rationale": "ok"}
```)"});
  const Verdict v = judge_trajectory(tiny_trajectory(), thread, g);
  CHECK(v.category == VerdictCategory::Acceptable);
  CHECK(v.rationale == "ok");

  g.script(Role::quality_judge, {R"({"field_coverage": 9, "factual_accuracy": 4, "technical_depth": 3, "structural_faithfulness": 3, "conciseness_clarity": 3})",
                                 R"({"field_coverage": 4})"});
  CHECK_THROWS_AS(judge_trajectory(tiny_trajectory(), thread, g), JudgeFailure);

  g.inject_failure(Role::quality_judge);
  CHECK_THROWS_AS(judge_trajectory(tiny_trajectory(), thread, g), JudgeFailure);
}

TEST_CASE("percent rounding matches the oracle") {
  for (std::int64_t t = 1; t <= 400; ++t) {
    for (std::int64_t c = 0; c <= t; ++c) CHECK(percent_of(c, t).tenths == oracle_tenths(c, t));
  }
  CHECK(percent_of(1, 8).str() == "12.5");
  CHECK(percent_of(1, 3).str() == "33.3");
  CHECK(percent_of(0, 5).str() == "0.0");
  CHECK(percent_of(5, 5).str() == "100.0");
  CHECK_THROWS_AS(percent_of(1, 0), std::invalid_argument);
}

TEST_CASE("verdict table reproduces the published split figures") {
  struct Row {
    const char *name;
    std::int64_t e, g, a, p;
    std::vector<const char *> pct;  // E, G, A, P
    std::int64_t total, approved;
    const char *rate;
  };
  const std::vector<Row> rows = {
      {"Multilingual", 2, 108, 148, 24, {"0.7", "38.3", "52.5", "8.5"}, 282, 258, "91.5"},
      {"Verified", 19, 127, 117, 7, {"7.0", "47.0", "43.3", "2.6"}, 270, 263, "97.3"},
      {"Pro", 0, 66, 147, 35, {"0.0", "26.6", "59.3", "14.1"}, 248, 213, "85.9"},
      {"All", 21, 301, 412, 66, {"2.6", "37.6", "51.5", "8.3"}, 800, 734, "91.7"},
  };
  std::vector<SplitStats> all;
  for (const auto &r : rows) {
    CAPTURE(r.name);
    auto cats = categories(r.e, r.g, r.a, r.p);
    std::shuffle(cats.begin(), cats.end(), std::mt19937(42));
    const SplitStats s = aggregate_categories(cats, r.name);
    CHECK(s.total == r.total);
    CHECK(s.approved == r.approved);
    CHECK(s.percent(VerdictCategory::Excellent).str() == r.pct[0]);
    CHECK(s.percent(VerdictCategory::Good).str() == r.pct[1]);
    CHECK(s.percent(VerdictCategory::Acceptable).str() == r.pct[2]);
    CHECK(s.percent(VerdictCategory::Poor).str() == r.pct[3]);
    CHECK(s.approval_rate.str() == r.rate);
    CHECK(s.count(VerdictCategory::Inadequate) == 0);
    all.push_back(s);
  }
  const std::string table = render_verdict_table(all);
  CHECK(table.find("Total Approved (E+G+A)") != std::string::npos);
  CHECK(table.find("91.7") != std::string::npos);
  CHECK(table.find("Inadequate") == std::string::npos);
}

TEST_CASE("issue type distribution") {
  // Bug and Enhancement rows of the published issue-type table.
  struct Row {
    const char *name;
    std::vector<std::int64_t> counts;  // bug, enh, gfi, hw, q, doc, gen
    const char *bug, *enh;
  };
  const std::vector<Row> rows = {{"Multilingual", {220, 25, 4, 8, 1, 0, 0}, "85.2", "9.7"},
                                 {"Verified", {222, 35, 0, 1, 3, 2, 0}, "84.4", "13.3"},
                                 {"Pro", {122, 78, 6, 1, 4, 2, 0}, "57.2", "36.6"}};
  const LabelType order[] = {LabelType::bug, LabelType::enhancement, LabelType::good_first_issue,
                             LabelType::help_wanted, LabelType::question, LabelType::documentation,
                             LabelType::general};
  for (const auto &r : rows) {
    CAPTURE(r.name);
    std::vector<LabelType> labels;
    std::int64_t total = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      labels.insert(labels.end(), r.counts[i], order[i]);
      total += r.counts[i];
    }
    const SplitStats s = issue_type_stats(labels, r.name);
    CHECK(s.total == total);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(s.count(order[i]) == r.counts[i]);
      CHECK(s.percent(order[i]).tenths == oracle_tenths(r.counts[i], total));
    }
    CHECK(s.percent(LabelType::enhancement).str() == r.enh);
    // The published bug share is one tenth below half-up rounding for two splits.
    const std::int64_t published = static_cast<std::int64_t>(std::stod(r.bug) * 10 + 0.5);
    CHECK(std::abs(s.percent(LabelType::bug).tenths - published) <= 1);
  }
  CHECK_THROWS_AS(issue_type_stats(std::vector<LabelType>{}, "x"), EmptyInput);
}

TEST_CASE("singleton and empty aggregations") {
  const SplitStats one = aggregate_categories({VerdictCategory::Poor}, "one");
  CHECK(one.total == 1);
  CHECK(one.percent(VerdictCategory::Poor).str() == "100.0");
  CHECK(one.approved == 0);
  CHECK(one.approval_rate.str() == "0.0");
  CHECK_THROWS_AS(aggregate_categories({}, "none"), EmptyInput);
  CHECK_THROWS_AS(aggregate_verdicts({}, "none"), EmptyInput);

  const SplitStats inad = aggregate_categories({VerdictCategory::Inadequate, VerdictCategory::Good}, "x");
  CHECK(render_verdict_table({inad}).find("Inadequate") != std::string::npos);
}

TEST_CASE("approval filter and verdict aggregation") {
  std::vector<std::pair<Trajectory, Verdict>> pairs;
  std::vector<Verdict> verdicts;
  const auto cats = categories(21, 301, 412, 66);
  for (std::size_t i = 0; i < cats.size(); ++i) {
    Trajectory t = tiny_trajectory();
    t.issue_title = "issue " + std::to_string(i);
    t.label_type = i % 3 == 0 ? LabelType::enhancement : LabelType::bug;
    Verdict v;
    v.issue_id = "o/r#" + std::to_string(i);
    v.criterion_scores = scores({3, 3, 3, 3, 3});
    v.category = cats[i];
    v.label_type = t.label_type;
    pairs.emplace_back(t, v);
    verdicts.push_back(v);
  }
  const auto approved = filter_approved(pairs);
  CHECK(approved.size() == 734);
  const SplitStats s = aggregate_verdicts(verdicts, "All");
  CHECK(s.approved == 734);
  CHECK(s.approval_rate.str() == "91.7");
  std::int64_t labelled = 0;
  for (const auto &[label, n] : s.label_counts) labelled += n;
  CHECK(labelled == 734);

  const std::string csv = review_worksheet_csv({verdicts.front()});
  CHECK(csv.starts_with("issue_id,label_type,field_coverage,factual_accuracy,technical_depth,structural_faithfulness,conciseness_clarity,category,model_category,rationale,reviewer_category,reviewer_notes\n"));
  const json j = split_stats_to_json(s);
  CHECK(j["approved"] == 734);
  CHECK(j["approval_rate"].get<double>() == doctest::Approx(91.7));
}
