#include "finqa/evaluator.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace finqa::eval {
namespace {

using nlohmann::json;
using dataset::FactsLocation;
using dataset::QuestionKind;

double round2(double x) { return std::round(x * 100.0) / 100.0; }

bool finite(double x) { return std::isfinite(x); }

EvalOutcome mismatch(MatchMode mode, std::string detail) {
  return {Verdict::incorrect, std::nullopt, FailureCategory::answer_mismatch, mode, std::move(detail)};
}

std::optional<NormalizationScale> scaled_match(double pred, double gold, double rel_tol, bool rounded) {
  for (const auto& scale : scale_candidates()) {
    double p = pred * scale.factor;
    double g = gold;
    if (!finite(p)) continue;
    if (rounded) {
      p = round2(p);
      g = round2(g);
      // rounding both sides to 0.00 would accept any two small values
      if (g == 0.0) continue;
    }
    if (tolerant_equal(p, g, rel_tol)) return scale;
  }
  return std::nullopt;
}

std::string bucket_name(FactsLocation location) {
  switch (location) {
    case FactsLocation::table_only: return "table-only";
    case FactsLocation::text_only: return "text-only";
    case FactsLocation::table_text: return "table-text";
    case FactsLocation::unknown: return "unknown";
  }
  return "unknown";
}

Bucket* find_bucket(Breakdown& breakdown, const std::string& name) {
  for (auto& b : breakdown.buckets) {
    if (b.name == name) return &b;
  }
  breakdown.buckets.push_back({name, 0, 0});
  return &breakdown.buckets.back();
}

void tally(Bucket& bucket, bool correct) {
  ++bucket.total;
  if (correct) ++bucket.correct;
}

// Fixed rows stay even when empty; extra rows (unknown, unavailable) only
// appear when something landed in them.
void drop_empty_extras(Breakdown& breakdown, std::size_t fixed_rows) {
  std::vector<Bucket> kept(breakdown.buckets.begin(), breakdown.buckets.begin() + fixed_rows);
  for (std::size_t i = fixed_rows; i < breakdown.buckets.size(); ++i) {
    if (breakdown.buckets[i].total > 0) kept.push_back(breakdown.buckets[i]);
  }
  breakdown.buckets = std::move(kept);
}

std::string count_cell(const Bucket& b) {
  return std::to_string(b.correct) + "/" + std::to_string(b.total);
}

}  // namespace

bool tolerant_equal(double pred, double gold, double rel_tol) {
  if (!finite(pred) || !finite(gold)) throw EvaluationError("tolerant_equal needs finite values");
  if (!(rel_tol > 0.0) || !finite(rel_tol)) throw EvaluationError("rel_tol must be positive");
  return std::abs(pred - gold) <= rel_tol * std::max(std::abs(pred), std::abs(gold));
}

std::string_view scale_label_name(ScaleLabel label) {
  switch (label) {
    case ScaleLabel::identity: return "identity";
    case ScaleLabel::percent_up: return "percent_up";
    case ScaleLabel::percent_down: return "percent_down";
    case ScaleLabel::thousand_up: return "thousand_up";
    case ScaleLabel::thousand_down: return "thousand_down";
    case ScaleLabel::million_up: return "million_up";
    case ScaleLabel::million_down: return "million_down";
  }
  return "?";
}

const std::array<NormalizationScale, 7>& scale_candidates() {
  static const std::array<NormalizationScale, 7> kScales = {{
      {1.0, ScaleLabel::identity},
      {100.0, ScaleLabel::percent_up},
      {0.01, ScaleLabel::percent_down},
      {1000.0, ScaleLabel::thousand_up},
      {0.001, ScaleLabel::thousand_down},
      {1e6, ScaleLabel::million_up},
      {1e-6, ScaleLabel::million_down},
  }};
  return kScales;
}

std::optional<NormalizationScale> scale_from_label(std::string_view name) {
  for (const auto& s : scale_candidates()) {
    if (scale_label_name(s.label) == name) return s;
  }
  return std::nullopt;
}

std::string_view verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::correct: return "correct";
    case Verdict::incorrect: return "incorrect";
    case Verdict::failed: return "failed";
  }
  return "?";
}

std::optional<Verdict> verdict_from_name(std::string_view name) {
  for (auto v : {Verdict::correct, Verdict::incorrect, Verdict::failed}) {
    if (verdict_name(v) == name) return v;
  }
  return std::nullopt;
}

std::string_view failure_category_name(FailureCategory category) {
  switch (category) {
    case FailureCategory::extraction: return "extraction";
    case FailureCategory::parse: return "parse";
    case FailureCategory::execution: return "execution";
    case FailureCategory::answer_mismatch: return "answer_mismatch";
  }
  return "?";
}

std::optional<FailureCategory> failure_category_from_name(std::string_view name) {
  for (auto c : {FailureCategory::extraction, FailureCategory::parse, FailureCategory::execution,
                 FailureCategory::answer_mismatch}) {
    if (failure_category_name(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view match_mode_name(MatchMode mode) {
  return mode == MatchMode::exact ? "exact" : "relaxed";
}

std::optional<MatchMode> match_mode_from_name(std::string_view name) {
  if (name == "exact") return MatchMode::exact;
  if (name == "relaxed") return MatchMode::relaxed;
  return std::nullopt;
}

EvalOutcome match(const Prediction& pred, const dataset::GoldAnswer& gold, MatchMode mode) {
  if (!pred.value) {
    return {Verdict::failed, std::nullopt, pred.failure.value_or(FailureCategory::extraction), mode,
            pred.detail};
  }

  if (const bool* truth = std::get_if<bool>(&*pred.value)) {
    if (!gold.truth) return mismatch(mode, "boolean prediction against numeric gold");
    if (*truth == *gold.truth) return {Verdict::correct, std::nullopt, std::nullopt, mode, {}};
    return mismatch(mode, "boolean mismatch");
  }

  const double value = std::get<double>(*pred.value);
  if (gold.truth) return mismatch(mode, "numeric prediction against boolean gold");
  if (!gold.number) return mismatch(mode, "gold answer '" + gold.text + "' is not a number or yes/no");
  if (!finite(value)) return mismatch(mode, "prediction is not finite");

  auto scale = scaled_match(value, *gold.number, kDefaultRelTol, false);
  if (!scale && mode == MatchMode::relaxed) {
    scale = scaled_match(value, *gold.number, kRelaxedRelTol, false);
    if (!scale) scale = scaled_match(value, *gold.number, kRelaxedRelTol, true);
  }
  if (scale) return {Verdict::correct, scale, std::nullopt, mode, {}};
  return mismatch(mode, "predicted " + format_shortest(value) + ", gold " + gold.text);
}

RecordMeta meta_of(const dataset::QARecord& record) {
  return {record.id, record.facts_location, dataset::gold_steps(record), record.question_kind};
}

std::optional<double> Bucket::accuracy() const {
  if (total == 0) return std::nullopt;
  return 100.0 * correct / total;
}

std::string format_accuracy(const Bucket& bucket) {
  const auto acc = bucket.accuracy();
  return acc ? format_fixed(*acc, 2) : "n/a";
}

RunReport score_run(const std::vector<ScoredItem>& items) {
  RunReport report;
  report.overall.name = "overall";

  Breakdown facts{"facts location", {{"table-only"}, {"text-only"}, {"table-text"}, {"unknown"}}, {}};
  Breakdown steps{"gold program steps", {{"1"}, {"2"}, {">2"}, {"unavailable"}}, {}};
  Breakdown kinds{"question kind", {{"boolean"}, {"numerical"}}, {}};

  bool any_exact = false, any_relaxed = false, any_steps = false;
  for (const auto& item : items) {
    const bool ok = item.outcome.verdict == Verdict::correct;
    tally(report.overall, ok);
    tally(*find_bucket(facts, bucket_name(item.meta.facts_location)), ok);

    std::string step_bucket = "unavailable";
    if (item.meta.gold_steps) {
      any_steps = true;
      const int n = *item.meta.gold_steps;
      step_bucket = n <= 1 ? "1" : n == 2 ? "2" : ">2";
    }
    tally(*find_bucket(steps, step_bucket), ok);
    tally(*find_bucket(kinds, item.meta.question_kind == QuestionKind::boolean ? "boolean" : "numerical"),
          ok);

    if (item.outcome.failure_category && !ok) {
      ++report.failures[std::string(failure_category_name(*item.outcome.failure_category))];
    }
    (item.outcome.mode == MatchMode::exact ? any_exact : any_relaxed) = true;
  }

  drop_empty_extras(facts, 3);
  drop_empty_extras(steps, 3);
  if (!any_steps && !items.empty()) {
    steps.notice = "no record carries a gold program; step-count breakdown is empty";
  }
  report.breakdowns = {facts, steps, kinds};
  report.mode = any_exact && any_relaxed ? "mixed" : any_exact ? "exact" : any_relaxed ? "relaxed" : "none";
  if (items.empty()) report.notice = "no records were scored; accuracy is 0/0";
  return report;
}

json report_to_json(const RunReport& report) {
  auto bucket_json = [](const Bucket& b) {
    json j = {{"name", b.name}, {"correct", b.correct}, {"total", b.total}};
    const auto acc = b.accuracy();
    j["accuracy"] = acc ? json(std::round(*acc * 100.0) / 100.0) : json(nullptr);
    j["accuracy_text"] = format_accuracy(b);
    return j;
  };
  json out;
  out["mode"] = report.mode;
  out["overall"] = bucket_json(report.overall);
  out["breakdowns"] = json::array();
  for (const auto& breakdown : report.breakdowns) {
    json rows = json::array();
    for (const auto& b : breakdown.buckets) rows.push_back(bucket_json(b));
    json entry = {{"title", breakdown.title}, {"rows", rows}};
    if (!breakdown.notice.empty()) entry["notice"] = breakdown.notice;
    out["breakdowns"].push_back(entry);
  }
  out["failures"] = report.failures;
  if (!report.notice.empty()) out["notice"] = report.notice;
  return out;
}

std::string report_to_text(const RunReport& report) {
  std::ostringstream out;
  auto row = [&](const std::string& label, const Bucket& b) {
    out << "  " << std::left << std::setw(22) << label << std::right << std::setw(9) << count_cell(b)
        << std::setw(10) << format_accuracy(b) << "  " << report.mode << "\n";
  };
  out << "  " << std::left << std::setw(22) << "" << std::right << std::setw(9) << "correct"
      << std::setw(10) << "accuracy" << "  mode\n";
  row("overall", report.overall);
  if (!report.notice.empty()) out << "  note: " << report.notice << "\n";
  for (const auto& breakdown : report.breakdowns) {
    out << "\n" << breakdown.title << "\n";
    if (!breakdown.notice.empty()) {
      out << "  note: " << breakdown.notice << "\n";
      continue;
    }
    for (const auto& b : breakdown.buckets) row(b.name, b);
  }
  out << "\nfailures\n";
  if (report.failures.empty()) out << "  none\n";
  for (const auto& [category, count] : report.failures) {
    out << "  " << std::left << std::setw(22) << category << std::right << std::setw(9) << count << "\n";
  }
  return out.str();
}

json outcome_to_json(const EvalOutcome& outcome) {
  json j = {{"verdict", verdict_name(outcome.verdict)}, {"mode", match_mode_name(outcome.mode)}};
  j["matched_scale"] = outcome.matched_scale
                           ? json(scale_label_name(outcome.matched_scale->label))
                           : json(nullptr);
  j["failure_category"] = outcome.failure_category
                              ? json(failure_category_name(*outcome.failure_category))
                              : json(nullptr);
  if (!outcome.detail.empty()) j["detail"] = outcome.detail;
  return j;
}

EvalOutcome outcome_from_json(const json& j) {
  if (!j.is_object()) throw EvaluationError("eval outcome is not an object");
  EvalOutcome outcome;
  try {
    const auto verdict = verdict_from_name(j.at("verdict").get<std::string>());
    const auto mode = match_mode_from_name(j.at("mode").get<std::string>());
    if (!verdict || !mode) throw EvaluationError("unknown verdict or mode");
    outcome.verdict = *verdict;
    outcome.mode = *mode;
    if (j.contains("matched_scale") && j["matched_scale"].is_string()) {
      outcome.matched_scale = scale_from_label(j["matched_scale"].get<std::string>());
      if (!outcome.matched_scale) throw EvaluationError("unknown scale label");
    }
    if (j.contains("failure_category") && j["failure_category"].is_string()) {
      outcome.failure_category = failure_category_from_name(j["failure_category"].get<std::string>());
      if (!outcome.failure_category) throw EvaluationError("unknown failure category");
    }
    if (j.contains("detail") && j["detail"].is_string()) outcome.detail = j["detail"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw EvaluationError(std::string("malformed eval outcome: ") + e.what());
  }
  return outcome;
}

}  // namespace finqa::eval
