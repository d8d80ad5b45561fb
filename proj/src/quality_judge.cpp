#include "issuetraj/quality_judge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "issuetraj/error.hpp"
#include "issuetraj/llm_gateway.hpp"
#include "issuetraj/thread_model.hpp"
#include "issuetraj/trajectory.hpp"
#include "prompts.hpp"

namespace issuetraj {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<std::pair<Criterion, std::string_view>, 5> kCriterionNames = {{
    {Criterion::field_coverage, "field_coverage"},
    {Criterion::factual_accuracy, "factual_accuracy"},
    {Criterion::technical_depth, "technical_depth"},
    {Criterion::structural_faithfulness, "structural_faithfulness"},
    {Criterion::conciseness_clarity, "conciseness_clarity"},
}};

constexpr std::array<std::pair<VerdictCategory, std::string_view>, 5> kCategoryNames = {{
    {VerdictCategory::Excellent, "Excellent"},
    {VerdictCategory::Good, "Good"},
    {VerdictCategory::Acceptable, "Acceptable"},
    {VerdictCategory::Poor, "Poor"},
    {VerdictCategory::Inadequate, "Inadequate"},
}};

// Row order and display names of the issue type table.
constexpr std::array<std::pair<LabelType, std::string_view>, 7> kLabelRows = {{
    {LabelType::bug, "Bug"},
    {LabelType::enhancement, "Enhancement"},
    {LabelType::good_first_issue, "Good First Issue"},
    {LabelType::help_wanted, "Help Wanted"},
    {LabelType::question, "Question"},
    {LabelType::documentation, "Documentation"},
    {LabelType::general, "General"},
}};

constexpr std::size_t kMaxThreadChars = 60'000;

std::string render_thread(const IssueThread &thread) {
  std::string out = fmt::format("{}/{}#{}: {}\n", thread.repo_owner, thread.repo_name,
                                thread.issue_number, issue_title(thread));
  for (const auto &c : thread.comments) {
    out += fmt::format("\n[{}] @{} ({}) at {}{}:\n{}\n", c.comment_id, c.author_login,
                       c.association.empty() ? "none" : c.association,
                       format_iso8601(c.created_at), c.is_header ? " [issue description]" : "",
                       c.body);
  }
  if (out.size() > kMaxThreadChars) {
    out = std::string(utf8_prefix(out, kMaxThreadChars)) + "\n[thread truncated]";
  }
  return out;
}

std::string render_for_judge(const Trajectory &t) {
  ordered_json j;
  j["title"] = t.issue_title;
  j["label_type"] = std::string(to_string(t.label_type));
  j["field_schema"] = t.field_schema;
  ordered_json links = ordered_json::object();
  for (const auto &[url, entry] : t.link_cache) {
    links[url] = entry.fetch_status == FetchStatus::ok ? entry.summary
                                                       : fmt::format("unavailable ({})", to_string(entry.fetch_status));
  }
  j["link_cache"] = std::move(links);
  ordered_json synthesized = ordered_json::object();
  for (const auto &f : t.synthesized) {
    synthesized[f.field_key] = f.paragraph ? ordered_json(*f.paragraph) : ordered_json(nullptr);
  }
  j["trajectory"] = std::move(synthesized);
  return j.dump(2);
}

std::optional<int> score_value(const json &v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d) return static_cast<int>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') return s[0] - '0';
  }
  return std::nullopt;
}

struct ParsedJudgement {
  std::map<Criterion, int> scores;
  std::optional<VerdictCategory> category;
  std::string rationale;
};

std::optional<ParsedJudgement> parse_judgement(std::string_view reply) {
  const auto doc = extract_json_value(reply);
  if (!doc || !doc->is_object()) return std::nullopt;
  const json *scores = doc->contains("scores") ? &(*doc)["scores"] : &*doc;
  if (!scores->is_object()) return std::nullopt;
  ParsedJudgement p;
  for (const auto &[c, name] : kCriterionNames) {
    if (!scores->contains(name)) return std::nullopt;
    const auto v = score_value((*scores)[std::string(name)]);
    if (!v || *v < 1 || *v > 5) return std::nullopt;
    p.scores[c] = *v;
  }
  if (doc->contains("category") && (*doc)["category"].is_string()) {
    std::string cat = trim((*doc)["category"].get<std::string>());
    if (!cat.empty()) {
      cat = to_lower(cat);
      cat[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cat[0])));
      p.category = category_from_string(cat);
    }
  }
  if (doc->contains("rationale") && (*doc)["rationale"].is_string()) {
    p.rationale = trim((*doc)["rationale"].get<std::string>());
  }
  return p;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string pad_left(std::string_view s, std::size_t width) {
  return s.size() >= width ? std::string(s) : std::string(width - s.size(), ' ') + std::string(s);
}

std::string pad_right(std::string_view s, std::size_t width) {
  return s.size() >= width ? std::string(s) : std::string(s) + std::string(width - s.size(), ' ');
}

}  // namespace

std::string_view to_string(Criterion criterion) {
  for (const auto &[c, n] : kCriterionNames) {
    if (c == criterion) return n;
  }
  return "field_coverage";
}

std::string_view to_string(VerdictCategory category) {
  for (const auto &[c, n] : kCategoryNames) {
    if (c == category) return n;
  }
  return "Inadequate";
}

std::optional<Criterion> criterion_from_string(std::string_view name) {
  for (const auto &[c, n] : kCriterionNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::optional<VerdictCategory> category_from_string(std::string_view name) {
  for (const auto &[c, n] : kCategoryNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

const std::array<Criterion, 5> &all_criteria() {
  static const std::array<Criterion, 5> kAll = {
      Criterion::field_coverage, Criterion::factual_accuracy, Criterion::technical_depth,
      Criterion::structural_faithfulness, Criterion::conciseness_clarity};
  return kAll;
}

const std::array<VerdictCategory, 5> &all_categories() {
  static const std::array<VerdictCategory, 5> kAll = {
      VerdictCategory::Excellent, VerdictCategory::Good, VerdictCategory::Acceptable,
      VerdictCategory::Poor, VerdictCategory::Inadequate};
  return kAll;
}

bool is_approved(VerdictCategory category) {
  return category == VerdictCategory::Excellent || category == VerdictCategory::Good ||
         category == VerdictCategory::Acceptable;
}

VerdictCategory category_for_scores(const std::map<Criterion, int> &scores,
                                    const CategoryThresholds &t) {
  int sum = 0;
  for (Criterion c : all_criteria()) {
    const auto it = scores.find(c);
    if (it == scores.end()) {
      throw std::invalid_argument(fmt::format("missing score for {}", to_string(c)));
    }
    if (it->second < 1 || it->second > 5) {
      throw std::invalid_argument(fmt::format("score for {} out of 1..5", to_string(c)));
    }
    sum += it->second;
  }
  if (scores.size() != all_criteria().size()) throw std::invalid_argument("unknown criterion in scores");
  // Compare sums rather than means so 3.8 * 5 lands exactly on 19.
  constexpr double kEps = 1e-9;
  const double n = static_cast<double>(all_criteria().size());
  if (sum >= t.excellent * n - kEps) return VerdictCategory::Excellent;
  if (sum >= t.good * n - kEps) return VerdictCategory::Good;
  if (sum >= t.acceptable * n - kEps) return VerdictCategory::Acceptable;
  if (sum >= t.poor * n - kEps) return VerdictCategory::Poor;
  return VerdictCategory::Inadequate;
}

ordered_json verdict_to_json(const Verdict &v) {
  ordered_json j;
  j["issue_id"] = v.issue_id;
  ordered_json scores = ordered_json::object();
  for (Criterion c : all_criteria()) {
    if (const auto it = v.criterion_scores.find(c); it != v.criterion_scores.end()) {
      scores[std::string(to_string(c))] = it->second;
    }
  }
  j["criterion_scores"] = std::move(scores);
  j["category"] = std::string(to_string(v.category));
  j["rationale"] = v.rationale;
  if (v.model_category) j["model_category"] = std::string(to_string(*v.model_category));
  if (v.label_type) j["label_type"] = std::string(to_string(*v.label_type));
  return j;
}

Verdict verdict_from_json(const json &j) {
  if (!j.is_object()) throw MalformedInput("verdict must be an object");
  Verdict v;
  try {
    v.issue_id = j.at("issue_id").get<std::string>();
    const json &scores = j.at("criterion_scores");
    for (Criterion c : all_criteria()) {
      const int s = scores.at(std::string(to_string(c))).get<int>();
      if (s < 1 || s > 5) throw MalformedInput(fmt::format("{} score out of range", to_string(c)));
      v.criterion_scores[c] = s;
    }
    const auto cat = category_from_string(j.at("category").get<std::string>());
    if (!cat) throw MalformedInput("verdict has an unknown category");
    v.category = *cat;
    v.rationale = j.value("rationale", std::string{});
    if (j.contains("model_category")) v.model_category = category_from_string(j["model_category"].get<std::string>());
    if (j.contains("label_type")) v.label_type = label_from_string(j["label_type"].get<std::string>());
  } catch (const json::exception &e) {
    throw MalformedInput(fmt::format("bad verdict: {}", e.what()));
  }
  return v;
}

Verdict judge_trajectory(const Trajectory &trajectory, const IssueThread &thread,
                         LlmGateway &gateway, const CategoryThresholds &thresholds) {
  const auto messages = prompts::render(
      "quality_judge", {{"label", std::string(to_string(trajectory.label_type))},
                        {"thread", render_thread(thread)},
                        {"trajectory", render_for_judge(trajectory)}});
  const std::string issue_id =
      fmt::format("{}/{}#{}", thread.repo_owner, thread.repo_name, thread.issue_number);
  std::optional<ParsedJudgement> parsed;
  for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
    std::string reply;
    try {
      reply = gateway.complete(Role::quality_judge, messages);
    } catch (const GatewayFailure &e) {
      throw JudgeFailure(fmt::format("{}: judge call failed: {}", issue_id, e.what()));
    }
    parsed = parse_judgement(reply);
    if (!parsed) spdlog::warn("{}: judge reply has no usable scores (attempt {})", issue_id, attempt + 1);
  }
  if (!parsed) throw JudgeFailure(fmt::format("{}: judge reply unparseable after retry", issue_id));

  Verdict v;
  v.issue_id = issue_id;
  v.criterion_scores = parsed->scores;
  v.category = category_for_scores(v.criterion_scores, thresholds);
  v.model_category = parsed->category;
  v.rationale = parsed->rationale;
  v.label_type = trajectory.label_type;
  if (v.category_mismatch()) {
    spdlog::info("{}: judge said {} but scores give {}; using {}", issue_id,
                 to_string(*v.model_category), to_string(v.category), to_string(v.category));
  }
  return v;
}

std::string Percent::str() const { return fmt::format("{}.{}", tenths / 10, tenths % 10); }

Percent percent_of(std::int64_t count, std::int64_t total) {
  if (total <= 0) throw std::invalid_argument("percent_of needs a positive total");
  if (count < 0) throw std::invalid_argument("percent_of needs a non-negative count");
  return Percent{(count * 2000 + total) / (2 * total)};
}

std::int64_t SplitStats::count(VerdictCategory c) const {
  for (const auto &[k, n] : category_counts) {
    if (k == c) return n;
  }
  return 0;
}

Percent SplitStats::percent(VerdictCategory c) const {
  for (const auto &[k, p] : category_percent) {
    if (k == c) return p;
  }
  return {};
}

std::int64_t SplitStats::count(LabelType l) const {
  for (const auto &[k, n] : label_counts) {
    if (k == l) return n;
  }
  return 0;
}

Percent SplitStats::percent(LabelType l) const {
  for (const auto &[k, p] : label_percent) {
    if (k == l) return p;
  }
  return {};
}

ordered_json split_stats_to_json(const SplitStats &s) {
  ordered_json j;
  j["split"] = s.split_name;
  j["total"] = s.total;
  if (!s.category_counts.empty()) {
    ordered_json cats = ordered_json::object();
    for (const auto &[c, n] : s.category_counts) {
      cats[std::string(to_string(c))] = {{"count", n}, {"percent", s.percent(c).value()}};
    }
    j["categories"] = std::move(cats);
    j["approved"] = s.approved;
    j["approval_rate"] = s.approval_rate.value();
  }
  if (!s.label_counts.empty()) {
    ordered_json labels = ordered_json::object();
    for (const auto &[l, n] : s.label_counts) {
      labels[std::string(to_string(l))] = {{"count", n}, {"percent", s.percent(l).value()}};
    }
    j["issue_types"] = std::move(labels);
  }
  return j;
}

SplitStats aggregate_categories(const std::vector<VerdictCategory> &categories,
                                const std::string &split_name) {
  if (categories.empty()) throw EmptyInput(fmt::format("split '{}' has no verdicts", split_name));
  SplitStats s;
  s.split_name = split_name;
  s.total = static_cast<std::int64_t>(categories.size());
  std::int64_t approved_tenths = 0;
  for (VerdictCategory c : all_categories()) {
    const auto n = static_cast<std::int64_t>(std::count(categories.begin(), categories.end(), c));
    const Percent p = percent_of(n, s.total);
    s.category_counts.emplace_back(c, n);
    s.category_percent.emplace_back(c, p);
    if (is_approved(c)) {
      s.approved += n;
      approved_tenths += p.tenths;
    }
  }
  s.approval_rate = Percent{approved_tenths};
  return s;
}

SplitStats aggregate_verdicts(const std::vector<Verdict> &verdicts, const std::string &split_name) {
  std::vector<VerdictCategory> cats;
  cats.reserve(verdicts.size());
  for (const auto &v : verdicts) cats.push_back(v.category);
  SplitStats s = aggregate_categories(cats, split_name);

  std::vector<LabelType> approved_labels;
  for (const auto &v : verdicts) {
    if (is_approved(v.category) && v.label_type) approved_labels.push_back(*v.label_type);
  }
  if (!approved_labels.empty()) {
    const SplitStats types = issue_type_stats(approved_labels, split_name);
    s.label_counts = types.label_counts;
    s.label_percent = types.label_percent;
  }
  return s;
}

SplitStats issue_type_stats(const std::vector<LabelType> &labels, const std::string &split_name) {
  if (labels.empty()) throw EmptyInput(fmt::format("split '{}' has no trajectories", split_name));
  SplitStats s;
  s.split_name = split_name;
  s.total = static_cast<std::int64_t>(labels.size());
  for (const auto &[l, name] : kLabelRows) {
    const auto n = static_cast<std::int64_t>(std::count(labels.begin(), labels.end(), l));
    s.label_counts.emplace_back(l, n);
    s.label_percent.emplace_back(l, percent_of(n, s.total));
  }
  s.approved = s.total;
  s.approval_rate = percent_of(s.total, s.total);
  return s;
}

SplitStats issue_type_stats(const std::vector<Trajectory> &trajectories,
                            const std::string &split_name) {
  std::vector<LabelType> labels;
  labels.reserve(trajectories.size());
  for (const auto &t : trajectories) labels.push_back(t.label_type);
  return issue_type_stats(labels, split_name);
}

std::vector<Trajectory> filter_approved(const std::vector<std::pair<Trajectory, Verdict>> &pairs) {
  std::vector<Trajectory> out;
  for (const auto &[t, v] : pairs) {
    if (is_approved(v.category)) out.push_back(t);
  }
  return out;
}

std::string render_verdict_table(const std::vector<SplitStats> &splits) {
  constexpr std::size_t kLabelWidth = 24;
  constexpr std::size_t kCountWidth = 6;
  constexpr std::size_t kPctWidth = 7;
  std::string out = pad_right("Verdict", kLabelWidth);
  std::string sub = std::string(kLabelWidth, ' ');
  for (const auto &s : splits) {
    out += " | " + pad_left(s.split_name, kCountWidth + kPctWidth + 1);
    sub += " | " + pad_left("C", kCountWidth) + " " + pad_left("%", kPctWidth);
  }
  out += "\n" + sub + "\n";
  const std::string rule(out.find('\n'), '-');
  out += rule + "\n";
  for (VerdictCategory c : all_categories()) {
    // Inadequate only gets a row when some split has one.
    const bool any = std::any_of(splits.begin(), splits.end(), [c](const SplitStats &s) { return s.count(c) > 0; });
    if (c == VerdictCategory::Inadequate && !any) continue;
    const std::string name = fmt::format("{} ({})", to_string(c), to_string(c).substr(0, 1));
    out += pad_right(name, kLabelWidth);
    for (const auto &s : splits) {
      out += " | " + pad_left(std::to_string(s.count(c)), kCountWidth) + " " +
             pad_left(s.percent(c).str(), kPctWidth);
    }
    out += "\n";
  }
  out += rule + "\n" + pad_right("Total", kLabelWidth);
  for (const auto &s : splits) {
    out += " | " + pad_left(std::to_string(s.total), kCountWidth) + " " + pad_left("100", kPctWidth);
  }
  out += "\n" + pad_right("Total Approved (E+G+A)", kLabelWidth);
  for (const auto &s : splits) {
    out += " | " + pad_left(std::to_string(s.approved), kCountWidth) + " " +
           pad_left(s.approval_rate.str(), kPctWidth);
  }
  out += "\n";
  return out;
}

std::string render_issue_type_table(const std::vector<SplitStats> &splits) {
  constexpr std::size_t kLabelWidth = 18;
  constexpr std::size_t kCountWidth = 6;
  constexpr std::size_t kPctWidth = 7;
  std::string out = pad_right("Category", kLabelWidth);
  std::string sub = std::string(kLabelWidth, ' ');
  for (const auto &s : splits) {
    out += " | " + pad_left(s.split_name, kCountWidth + kPctWidth + 1);
    sub += " | " + pad_left("Count", kCountWidth) + " " + pad_left("%", kPctWidth);
  }
  out += "\n" + sub + "\n";
  const std::string rule(out.find('\n'), '-');
  out += rule + "\n";
  for (const auto &[l, name] : kLabelRows) {
    out += pad_right(name, kLabelWidth);
    for (const auto &s : splits) {
      out += " | " + pad_left(std::to_string(s.count(l)), kCountWidth) + " " +
             pad_left(s.percent(l).str(), kPctWidth);
    }
    out += "\n";
  }
  out += rule + "\n" + pad_right("Total Approved", kLabelWidth);
  for (const auto &s : splits) {
    out += " | " + pad_left(std::to_string(s.total), kCountWidth) + " " + pad_left("100.0", kPctWidth);
  }
  out += "\n";
  return out;
}

std::string review_worksheet_csv(const std::vector<Verdict> &verdicts) {
  std::string out = "issue_id,label_type";
  for (Criterion c : all_criteria()) out += fmt::format(",{}", to_string(c));
  out += ",category,model_category,rationale,reviewer_category,reviewer_notes\n";
  for (const auto &v : verdicts) {
    out += csv_field(v.issue_id);
    out += "," + (v.label_type ? std::string(to_string(*v.label_type)) : std::string{});
    for (Criterion c : all_criteria()) {
      const auto it = v.criterion_scores.find(c);
      out += "," + (it == v.criterion_scores.end() ? std::string{} : std::to_string(it->second));
    }
    out += fmt::format(",{},{},{},,\n", to_string(v.category),
                       v.model_category ? to_string(*v.model_category) : "", csv_field(v.rationale));
  }
  return out;
}

}  // namespace issuetraj
