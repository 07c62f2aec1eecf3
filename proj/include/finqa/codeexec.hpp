#pragma once

// Runs generated Python in a child process (the sandbox runner) and harvests
// the `ans` variable.
//
// Child protocol:
//   stdin  : one JSON object {"source": string}, UTF-8
//   stdout : passthrough lines from user code, then a line "##RESULT##",
//            then one JSON object
//            {"ok": bool, "ans": number|bool|null,
//             "type": "float"|"bool"|"missing", "error": string|null}
//   exit 0 whenever the protocol itself succeeded.

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "finqa/dsl.hpp"

namespace finqa::codeexec {

inline constexpr std::string_view kResultSentinel = "##RESULT##";

struct ExecRequest {
  std::string source;
  std::chrono::milliseconds timeout{10'000};
  std::size_t memory_cap = std::size_t{256} << 20;
};

enum class Status { ok, timeout, runtime_error, missing_ans, disallowed_construct, launcher_error };
std::string_view status_name(Status status);

struct ExecutionResult {
  Status status = Status::launcher_error;
  std::optional<dsl::Value> value;  // present iff status == ok
  std::string stderr_excerpt;       // runner error message or child stderr tail
};

struct Preflight {
  bool ok = true;
  std::string reason;
};

/// Static scan: imports outside {math}, file/network/process primitives by
/// name, dunder identifiers. Comments and string literals are ignored.
Preflight preflight(std::string_view source);

struct RunnerReport {
  bool ok = false;
  std::optional<dsl::Value> ans;
  std::string type;  // "float" | "bool" | "missing"
  std::optional<std::string> error;
};

/// {"source": ...}
std::string encode_request(std::string_view source);

/// Finds the last sentinel line and parses the JSON line after it.
std::optional<RunnerReport> decode_report(std::string_view stdout_text);

/// Maps a report onto the gateway's result categories.
ExecutionResult interpret_report(const RunnerReport& report);

/// Straight-line Python equivalent of a DSL program, ending in `ans = ...`.
std::string dsl_to_python(const dsl::Program& program);

struct RunnerConfig {
  /// argv of the runner; the request is written to its stdin.
  std::vector<std::string> command{"python3", "sandbox_runner.py"};
  int max_workers = 4;
};

class CodeExecutor {
 public:
  explicit CodeExecutor(RunnerConfig config);

  /// Thread-safe; at most max_workers children run at once. Never blocks
  /// longer than the request timeout plus a small reaping margin.
  ExecutionResult run_code(const ExecRequest& request);

  const RunnerConfig& config() const { return config_; }

 private:
  ExecutionResult spawn_and_wait(const ExecRequest& request);

  RunnerConfig config_;
  std::unique_ptr<std::counting_semaphore<>> workers_;
};

}  // namespace finqa::codeexec
