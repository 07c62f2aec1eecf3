#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "finqa/codeexec.hpp"
#include "finqa/dsl.hpp"
#include "finqa/evaluator.hpp"
#include "test_support.hpp"

using namespace finqa;
using namespace finqa::codeexec;
using finqa::testing::ProgramGen;

namespace {

CodeExecutor fake_executor(int workers = 4) {
  RunnerConfig cfg;
  cfg.command = {FINQA_FAKE_RUNNER};
  cfg.max_workers = workers;
  return CodeExecutor(cfg);
}

ExecutionResult run(const std::string& source, std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
  auto exec = fake_executor();
  return exec.run_code({source, timeout});
}

double num(const ExecutionResult& r) { return std::get<double>(*r.value); }

}  // namespace

TEST(RunCode, HolxSource) {
  const auto r = run(
      "non_vested_shares = 2770\n"
      "weighted_average_grant_date_fair_value = 21.96\n"
      "ans = non_vested_shares * weighted_average_grant_date_fair_value\n"
      "print(ans) # prints 60,532.2");
  ASSERT_EQ(r.status, Status::ok) << r.stderr_excerpt;
  EXPECT_TRUE(eval::tolerant_equal(num(r), 60829.2));
}

TEST(RunCode, GsSourceWithComments) {
  const auto r = run("total_2015 = 2.86 #in billions\ntotal_2014 = 2.87 #in billions\n"
                     "ans = total_2015 + total_2014 #in billions\n");
  ASSERT_EQ(r.status, Status::ok) << r.stderr_excerpt;
  EXPECT_TRUE(eval::tolerant_equal(num(r), 5.73));
}

TEST(RunCode, BooleanAnswer) {
  const auto r = run("ans = 57.7 > 68.9");
  ASSERT_EQ(r.status, Status::ok) << r.stderr_excerpt;
  EXPECT_EQ(std::get<bool>(*r.value), false);
}

TEST(RunCode, InfiniteLoopTimesOut) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = run("while True:\n    pass\n", std::chrono::seconds(1));
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_EQ(r.status, Status::timeout);
  EXPECT_FALSE(r.value);
  EXPECT_LT(elapsed, std::chrono::seconds(2));
}

TEST(RunCode, MissingAndNonNumericAns) {
  EXPECT_EQ(run("x = 1").status, Status::missing_ans);
  EXPECT_EQ(run("ans = 'twelve'").status, Status::missing_ans);
  EXPECT_EQ(run("").status, Status::missing_ans);
}

TEST(RunCode, RuntimeErrors) {
  auto r = run("raise ValueError('boom')");
  EXPECT_EQ(r.status, Status::runtime_error);
  EXPECT_NE(r.stderr_excerpt.find("boom"), std::string::npos);
  EXPECT_EQ(run("ans = 1 / 0").status, Status::runtime_error);
}

TEST(RunCode, DisallowedConstructsNeverSpawn) {
  RunnerConfig cfg;
  cfg.command = {"/nonexistent/runner"};
  CodeExecutor exec(cfg);
  // a spawn would report launcher_error, so these prove no child was started
  for (const char* src : {"import os\nans = 1", "from subprocess import run\nans = 1",
                          "ans = open('/etc/passwd').read()", "ans = __import__('os')",
                          "ans = eval('1+1')", "x = ().__class__\nans = 1"}) {
    EXPECT_EQ(exec.run_code({src}).status, Status::disallowed_construct) << src;
  }
}

TEST(RunCode, MathImportAllowed) {
  const auto r = run("import math\nans = math.sqrt(4)");
  ASSERT_EQ(r.status, Status::ok) << r.stderr_excerpt;
  EXPECT_EQ(num(r), 2.0);
}

TEST(Preflight, IgnoresCommentsAndStrings) {
  EXPECT_TRUE(preflight("ans = 1 # import os and open files").ok);
  EXPECT_TRUE(preflight("label = 'eval the subprocess'\nans = 2").ok);
  EXPECT_TRUE(preflight("opening = 3\nans = opening").ok);
  EXPECT_FALSE(preflight("import math, os").ok);
  EXPECT_FALSE(preflight("  import sys").ok);
}

TEST(RunCode, LauncherFailures) {
  RunnerConfig cfg;
  cfg.command = {"/nonexistent/runner"};
  EXPECT_EQ(CodeExecutor(cfg).run_code({"ans = 1"}).status, Status::launcher_error);
  cfg.command = {};
  EXPECT_EQ(CodeExecutor(cfg).run_code({"ans = 1"}).status, Status::launcher_error);
}

TEST(RunCode, RunnerWithoutReportIsRuntimeError) {
  RunnerConfig cfg;
  cfg.command = {"/bin/sh", "-c", "cat >/dev/null; echo oops >&2; exit 3"};
  const auto r = CodeExecutor(cfg).run_code({"ans = 1"});
  EXPECT_EQ(r.status, Status::runtime_error);
  EXPECT_NE(r.stderr_excerpt.find("oops"), std::string::npos) << r.stderr_excerpt;
}

TEST(RunCode, ConcurrentCallsAreIndependent) {
  auto exec = fake_executor(3);
  std::vector<std::thread> threads;
  std::vector<double> got(8, 0.0);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      const auto r = exec.run_code({"ans = " + std::to_string(i) + " * 2"});
      if (r.status == Status::ok) got[static_cast<std::size_t>(i)] = std::get<double>(*r.value);
    });
  }
  for (auto& t : threads) t.join();
  for (int i = 0; i < 8; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)], 2.0 * i);
}

TEST(Protocol, EncodeRequest) {
  EXPECT_EQ(encode_request("ans = \"a\"\n"), "{\"source\":\"ans = \\\"a\\\"\\n\"}");
}

TEST(Protocol, DecodeReport) {
  auto r = decode_report("hello\n##RESULT##\n{\"ok\":true,\"ans\":5.73,\"type\":\"float\",\"error\":null}\n");
  ASSERT_TRUE(r);
  EXPECT_TRUE(r->ok);
  EXPECT_EQ(std::get<double>(*r->ans), 5.73);

  // user output that mimics the sentinel is superseded by the real one
  r = decode_report(
      "##RESULT##\n{\"ok\":true,\"ans\":1,\"type\":\"float\",\"error\":null}\n"
      "##RESULT##\n{\"ok\":true,\"ans\":2,\"type\":\"float\",\"error\":null}\n");
  ASSERT_TRUE(r);
  EXPECT_EQ(std::get<double>(*r->ans), 2.0);

  r = decode_report("##RESULT##\n{\"ok\":true,\"ans\":true,\"type\":\"bool\",\"error\":null}");
  ASSERT_TRUE(r);
  EXPECT_EQ(std::get<bool>(*r->ans), true);

  EXPECT_FALSE(decode_report("no sentinel here"));
  EXPECT_FALSE(decode_report("##RESULT##\nnot json"));
  EXPECT_FALSE(decode_report("##RESULT##\n"));
  EXPECT_FALSE(decode_report("x ##RESULT##\n{\"ok\":true,\"ans\":1,\"type\":\"float\",\"error\":null}"));
}

TEST(Protocol, InterpretReport) {
  RunnerReport ok{true, dsl::Value{1.5}, "float", std::nullopt};
  EXPECT_EQ(interpret_report(ok).status, Status::ok);
  RunnerReport err{false, std::nullopt, "missing", "NameError: x"};
  EXPECT_EQ(interpret_report(err).status, Status::runtime_error);
  EXPECT_EQ(interpret_report(err).stderr_excerpt, "NameError: x");
  RunnerReport missing{false, std::nullopt, "missing", std::nullopt};
  EXPECT_EQ(interpret_report(missing).status, Status::missing_ans);
}

TEST(DslToPython, Shape) {
  const auto p = dsl::parse_program("subtract(39.2, 28.2), divide(#0, 28.2)");
  EXPECT_EQ(dsl_to_python(p),
            "import math\nstep_0 = 39.2 - 28.2\nstep_1 = step_0 / 28.2\nans = step_1\n");
}

// The same program run by the DSL interpreter and, translated, by the runner
// must agree: both engines see identical IEEE-754 operations.
TEST(CrossEngine, DslAndPythonAgree) {
  ProgramGen gen(321);
  auto exec = fake_executor();
  int compared = 0;
  for (int i = 0; i < 200; ++i) {
    const dsl::Program p = gen.next(4);
    dsl::Value expected;
    try {
      expected = dsl::execute(p);
    } catch (const dsl::ExecutionError&) {
      continue;
    }
    const auto r = exec.run_code({dsl_to_python(p)});
    ASSERT_EQ(r.status, Status::ok) << dsl_to_python(p) << r.stderr_excerpt;
    if (std::holds_alternative<bool>(expected)) {
      EXPECT_EQ(std::get<bool>(*r.value), std::get<bool>(expected)) << dsl::to_canonical_string(p);
    } else {
      const double a = std::get<double>(expected);
      const double b = std::get<double>(*r.value);
      EXPECT_LE(std::fabs(a - b), 1e-9 * std::max(std::fabs(a), std::fabs(b)) + 1e-300)
          << dsl::to_canonical_string(p);
    }
    ++compared;
  }
  EXPECT_GT(compared, 150);
}

TEST(RunCode, Deterministic) {
  auto exec = fake_executor();
  const std::string src = "a = 98.05 - 95.11\nans = a / 95.11";
  const auto first = exec.run_code({src});
  for (int i = 0; i < 5; ++i) {
    const auto again = exec.run_code({src});
    ASSERT_EQ(again.status, Status::ok);
    EXPECT_EQ(std::get<double>(*again.value), std::get<double>(*first.value));
  }
}
