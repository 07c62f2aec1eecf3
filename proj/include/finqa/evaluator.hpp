#pragma once

// Correctness of a predicted value against the gold answer, and run-level
// scoring with the table/text, step-count and question-kind breakdowns.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "finqa/dataset.hpp"
#include "finqa/dsl.hpp"
#include "finqa/numeric.hpp"

namespace finqa::eval {

class EvaluationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kDefaultRelTol = 0.001;
inline constexpr double kRelaxedRelTol = 0.01;

/// abs(pred - gold) <= rel_tol * max(abs(pred), abs(gold)), evaluated as written.
/// Throws EvaluationError on non-finite input or rel_tol <= 0.
bool tolerant_equal(double pred, double gold, double rel_tol = kDefaultRelTol);

enum class ScaleLabel {
  identity, percent_up, percent_down, thousand_up, thousand_down, million_up, million_down
};

struct NormalizationScale {
  double factor = 1.0;
  ScaleLabel label = ScaleLabel::identity;
  bool operator==(const NormalizationScale&) const = default;
};

std::string_view scale_label_name(ScaleLabel label);
std::optional<NormalizationScale> scale_from_label(std::string_view name);

/// Candidate factors in the order they are tried (smallest |log10| first).
const std::array<NormalizationScale, 7>& scale_candidates();

enum class Verdict { correct, incorrect, failed };
enum class FailureCategory { extraction, parse, execution, answer_mismatch };
enum class MatchMode { exact, relaxed };

std::string_view verdict_name(Verdict verdict);
std::optional<Verdict> verdict_from_name(std::string_view name);
std::string_view failure_category_name(FailureCategory category);
std::optional<FailureCategory> failure_category_from_name(std::string_view name);
std::string_view match_mode_name(MatchMode mode);
std::optional<MatchMode> match_mode_from_name(std::string_view name);

struct EvalOutcome {
  Verdict verdict = Verdict::failed;
  std::optional<NormalizationScale> matched_scale;  // only for correct numeric matches
  std::optional<FailureCategory> failure_category;  // failed, or incorrect (answer_mismatch)
  MatchMode mode = MatchMode::exact;
  std::string detail;
};

/// What an executor or extractor produced for one record.
struct Prediction {
  std::optional<dsl::Value> value;
  UnitHint hint;
  std::optional<FailureCategory> failure;  // set iff value is empty
  std::string detail;

  static Prediction of(dsl::Value v, UnitHint hint = {}) { return {v, hint, std::nullopt, {}}; }
  static Prediction failed(FailureCategory category, std::string detail) {
    return {std::nullopt, {}, category, std::move(detail)};
  }
};

EvalOutcome match(const Prediction& pred, const dataset::GoldAnswer& gold, MatchMode mode);

struct RecordMeta {
  std::string id;
  dataset::FactsLocation facts_location = dataset::FactsLocation::unknown;
  std::optional<int> gold_steps;
  dataset::QuestionKind question_kind = dataset::QuestionKind::numerical;
};

RecordMeta meta_of(const dataset::QARecord& record);

struct ScoredItem {
  RecordMeta meta;
  EvalOutcome outcome;
};

struct Bucket {
  std::string name;
  int correct = 0;
  int total = 0;
  std::optional<double> accuracy() const;  // percent; nullopt when total == 0
};

struct Breakdown {
  std::string title;
  std::vector<Bucket> buckets;
  std::string notice;  // non-empty when the table carries no usable rows
};

struct RunReport {
  Bucket overall;
  std::vector<Breakdown> breakdowns;  // facts location, gold steps, question kind
  std::map<std::string, int> failures;  // category -> count, failed and incorrect records
  std::string mode;                     // "exact", "relaxed", "mixed" or "none"
  std::string notice;
};

RunReport score_run(const std::vector<ScoredItem>& items);

nlohmann::json report_to_json(const RunReport& report);
/// Aligned plain-text rendering: overall row, the three breakdown tables and
/// the failure histogram.
std::string report_to_text(const RunReport& report);

/// "75.00", or "n/a" for an empty bucket.
std::string format_accuracy(const Bucket& bucket);

nlohmann::json outcome_to_json(const EvalOutcome& outcome);
/// Throws EvaluationError on malformed input.
EvalOutcome outcome_from_json(const nlohmann::json& j);

}  // namespace finqa::eval
