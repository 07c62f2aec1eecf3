// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "finqa/dsl.hpp"
#include "finqa/evaluator.hpp"
#include "finqa/extractor.hpp"
#include "finqa/pipeline.hpp"
#include "test_support.hpp"

using namespace finqa;
using finqa::testing::fixture;
using finqa::testing::slurp;
using finqa::testing::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why = what;
    }
  }
};

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Fixture programs and their expected results.
Check dsl_fixture_programs() {
  struct Case {
    const char* program;
    const char* expected;
  };
  const std::vector<Case> cases = {
      {"divide(1334, 23556)", "0.05663"},
      {"subtract(39.2, 28.2), divide(#0, 28.2)", "0.39007"},
      {"multiply(2770, 21.96)", "60829.2"},
      {"add(2.86, 2.87)", "5.73"},
      {"subtract(1925, 1131), divide(#0, 1131)", "0.70203"},
      {"subtract(34.3, 38.9), divide(#0, 38.9)", "-0.11825"},
      {"subtract(516, 234)", "282"},
      {"greater(57.7, 68.9)", "no"},
      {"subtract(98.05, 95.11), divide(#0, 95.11)", "0.03091"},
  };
  Check c;
  const auto start = Clock::now();
  for (const auto& k : cases) {
    try {
      const auto value = dsl::execute(dsl::parse_program(k.program));
      const auto out = eval::match(eval::Prediction::of(value), dataset::parse_gold_answer(k.expected),
                                   eval::MatchMode::exact);
      c.require(out.verdict == eval::Verdict::correct && (!out.matched_scale || out.matched_scale->factor == 1.0),
                std::string(k.program) + " gave " + dsl::value_to_string(value));
    } catch (const std::exception& e) {
      c.require(false, std::string(k.program) + ": " + e.what());
    }
  }
  const double elapsed = ms_since(start);
  c.require(elapsed < 1000.0, "took " + std::to_string(elapsed) + " ms");
  return c;
}

Check failure_modes() {
  Check c;
  const auto unp = eval::match(eval::Prediction::of(dsl::execute(dsl::parse_program("subtract(516, 234), add(#0, 282)"))),
                               dataset::parse_gold_answer("282"), eval::MatchMode::exact);
  c.require(unp.verdict == eval::Verdict::incorrect, "UNP 564 not incorrect");

  auto adbe_block = extract::extract_dsl(
      "{\"Program\": {\"#0\":{operation:\"subtract\", arg1:\"68.9\", arg2:\"57.7\"},\n \"Answer\": \"False\"}");
  c.require(adbe_block.ok(), "ADBE program not extracted");
  if (adbe_block.ok()) {
    const auto value = dsl::execute(dsl::from_extraction(adbe_block.raw_program()));
    const auto adbe = eval::match(eval::Prediction::of(value), dataset::parse_gold_answer("no"), eval::MatchMode::exact);
    c.require(adbe.verdict == eval::Verdict::incorrect &&
                  adbe.failure_category == eval::FailureCategory::answer_mismatch,
              "ADBE 11.2 against boolean gold not an answer mismatch");
  }

  const auto holx = extract::extract_final_answer("float");
  c.require(!holx.ok() && holx.failure == extract::Failure::unparseable_answer, "HOLX 'float' parsed");
  const auto holx_eval = eval::match(eval::Prediction::failed(eval::FailureCategory::extraction, "unparseable_answer"),
                                     dataset::parse_gold_answer("60829.2"), eval::MatchMode::relaxed);
  c.require(holx_eval.verdict == eval::Verdict::failed, "HOLX not failed");
  return c;
}

Check evaluator_normalization() {
  Check c;
  auto exact = [](double p, const char* g) {
    return eval::match(eval::Prediction::of(p), dataset::parse_gold_answer(g), eval::MatchMode::exact);
  };
  const auto pct = exact(0.23, "23");
  c.require(pct.verdict == eval::Verdict::correct && pct.matched_scale &&
                pct.matched_scale->label == eval::ScaleLabel::percent_up,
            "0.23 vs 23 not matched at x100");
  const auto mil = exact(7e6, "7 million");
  c.require(mil.verdict == eval::Verdict::correct && mil.matched_scale &&
                mil.matched_scale->label == eval::ScaleLabel::identity,
            "7e6 vs 7 million not identity");
  c.require(exact(0, "5").verdict == eval::Verdict::incorrect, "0 vs 5 matched");
  c.require(eval::tolerant_equal(0.0566309, 0.05663), "0.0566309 vs 0.05663");
  c.require(!eval::tolerant_equal(564, 282), "564 vs 282");
  c.require(eval::tolerant_equal(0, 0), "0 vs 0");

  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> mant(-10.0, 10.0);
  std::uniform_int_distribution<int> expo(-8, 8);
  std::uniform_real_distribution<double> nudge(-0.003, 0.003);
  int checked = 0;
  for (int i = 0; i < 10000 && c.ok; ++i) {
    const double a = mant(rng) * std::pow(10.0, expo(rng));
    const double b = i % 2 ? a * (1 + nudge(rng)) : mant(rng) * std::pow(10.0, expo(rng));
    const long double diff = std::fabs(static_cast<long double>(a) - b);
    const long double bound = 0.001L * std::max(std::fabs(static_cast<long double>(a)), std::fabs(static_cast<long double>(b)));
    if (std::fabs(diff - bound) <= 1e-12L * (bound + 1e-300L)) continue;
    ++checked;
    c.require(eval::tolerant_equal(a, b) == (diff < bound), "tolerance disagrees at " + std::to_string(a));
  }
  c.require(checked > 9900, "too few brute-force cases");
  return c;
}

Check dsl_properties() {
  Check c;
  finqa::testing::ProgramGen gen(20240611);
  for (int i = 0; i < 10000 && c.ok; ++i) {
    const auto p = gen.next(4, i % 10 == 0);
    c.require(finqa::testing::agrees_with_oracle(p), "oracle disagrees on " + dsl::to_canonical_string(p));
  }
  finqa::testing::ProgramGen round(99);
  for (int i = 0; i < 1000 && c.ok; ++i) {
    const auto p = round.next(6, true);
    const auto text = dsl::to_canonical_string(p);
    c.require(dsl::parse_program(text) == p, "round trip failed for " + text);
  }
  return c;
}

Check replay_end_to_end() {
  Check c;
  TempDir dir("accept");
  std::vector<std::string> outputs;
  for (const char* name : {"a", "b"}) {
    pipeline::RunOptions opt;
    opt.dataset = fixture("sample_finqa.json");
    opt.mode = {prompt::Mode::findsl};
    opt.gateway.replay_file = fixture("replay_findsl.jsonl");
    // no runner: a program mode must not need one
    opt.runner.command = {"/nonexistent/runner"};
    opt.out_dir = dir.path() / name;
    const auto start = Clock::now();
    const auto summary = pipeline::run(opt);
    const double elapsed = ms_since(start);
    c.require(!summary.aborted, "aborted: " + summary.abort_reason);
    c.require(eval::format_accuracy(summary.report.overall) == "75.00",
              "accuracy " + eval::format_accuracy(summary.report.overall));
    c.require(elapsed < 5000.0, "took " + std::to_string(elapsed) + " ms");
    outputs.push_back(slurp(opt.out_dir / "traces.jsonl") + slurp(opt.out_dir / "report.json"));
  }
  c.require(outputs[0] == outputs[1], "runs differ");
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"dsl executes the fixture programs to their expected values", dsl_fixture_programs},
      {"documented failure modes are classified", failure_modes},
      {"evaluator tolerance and unit normalization", evaluator_normalization},
      {"dsl differential and canonical round trip", dsl_properties},
      {"replay run reproduces 75.00 deterministically", replay_end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why = std::string("exception: ") + e.what();
    }
    std::cout << (c.ok ? "PASS " : "FAIL ") << name;
    if (!c.ok) std::cout << " (" << c.why << ")";
    std::cout << "\n";
    failed += !c.ok;
  }
  return failed == 0 ? 0 : 1;
}
