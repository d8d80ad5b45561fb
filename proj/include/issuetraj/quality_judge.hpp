#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "issuetraj/label_router.hpp"

namespace issuetraj {

class IssueThread;
class LlmGateway;
struct Trajectory;

enum class Criterion {
  field_coverage,
  factual_accuracy,
  technical_depth,
  structural_faithfulness,
  conciseness_clarity,
};

enum class VerdictCategory { Excellent, Good, Acceptable, Poor, Inadequate };

std::string_view to_string(Criterion criterion);
std::string_view to_string(VerdictCategory category);
std::optional<Criterion> criterion_from_string(std::string_view name);
std::optional<VerdictCategory> category_from_string(std::string_view name);
const std::array<Criterion, 5> &all_criteria();
const std::array<VerdictCategory, 5> &all_categories();
bool is_approved(VerdictCategory category);

/// Lower bounds on the mean criterion score for each category above
/// Inadequate.
struct CategoryThresholds {
  double excellent = 4.6;
  double good = 3.8;
  double acceptable = 3.0;
  double poor = 2.0;
};

/// Scores must be in 1..5; throws std::invalid_argument otherwise.
VerdictCategory category_for_scores(const std::map<Criterion, int> &scores,
                                    const CategoryThresholds &t = {});

struct Verdict {
  std::string issue_id;
  std::map<Criterion, int> criterion_scores;
  VerdictCategory category = VerdictCategory::Inadequate;
  std::string rationale;
  /// What the model claimed before recomputation.
  std::optional<VerdictCategory> model_category;
  /// Carried along so statistics can be computed from verdicts alone.
  std::optional<LabelType> label_type;

  bool category_mismatch() const {
    return model_category.has_value() && *model_category != category;
  }
};

nlohmann::ordered_json verdict_to_json(const Verdict &verdict);
Verdict verdict_from_json(const nlohmann::json &j);

/// Throws JudgeFailure after one retry on an unparseable reply.
Verdict judge_trajectory(const Trajectory &trajectory,
                         const IssueThread &thread, LlmGateway &gateway,
                         const CategoryThresholds &thresholds = {});

/// A percentage held in tenths so that one-decimal output is exact.
struct Percent {
  std::int64_t tenths = 0;

  std::string str() const;
  double value() const { return static_cast<double>(tenths) / 10.0; }
  bool operator==(const Percent &) const = default;
};

/// count / total * 100 rounded half-up to one decimal (integer arithmetic).
Percent percent_of(std::int64_t count, std::int64_t total);

struct SplitStats {
  std::string split_name;
  std::int64_t total = 0;
  std::vector<std::pair<VerdictCategory, std::int64_t>> category_counts;
  std::vector<std::pair<VerdictCategory, Percent>> category_percent;
  std::vector<std::pair<LabelType, std::int64_t>> label_counts;
  std::vector<std::pair<LabelType, Percent>> label_percent;
  std::int64_t approved = 0;
  /// Sum of the rounded Excellent, Good and Acceptable percentages, which is
  /// how the approval row relates to the category rows of a verdict table.
  Percent approval_rate;

  std::int64_t count(VerdictCategory c) const;
  Percent percent(VerdictCategory c) const;
  std::int64_t count(LabelType l) const;
  Percent percent(LabelType l) const;
};

nlohmann::ordered_json split_stats_to_json(const SplitStats &stats);

/// Throws EmptyInput.
SplitStats aggregate_verdicts(const std::vector<Verdict> &verdicts,
                              const std::string &split_name);
SplitStats aggregate_categories(const std::vector<VerdictCategory> &categories,
                                const std::string &split_name);

/// Label distribution over (approved) trajectories. Throws EmptyInput.
SplitStats issue_type_stats(const std::vector<Trajectory> &trajectories,
                            const std::string &split_name);
SplitStats issue_type_stats(const std::vector<LabelType> &labels,
                            const std::string &split_name);

/// Keep trajectories whose verdict is Excellent, Good or Acceptable.
std::vector<Trajectory> filter_approved(
    const std::vector<std::pair<Trajectory, Verdict>> &pairs);

/// Aligned text tables laid out like the dataset summary tables.
std::string render_verdict_table(const std::vector<SplitStats> &splits);
std::string render_issue_type_table(const std::vector<SplitStats> &splits);

/// CSV worksheet for manual review (one row per verdict).
std::string review_worksheet_csv(const std::vector<Verdict> &verdicts);

}  // namespace issuetraj
