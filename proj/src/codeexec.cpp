#include "finqa/codeexec.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <regex>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "finqa/numeric.hpp"

namespace finqa::codeexec {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kMaxCapture = std::size_t{1} << 20;
constexpr std::size_t kExcerpt = 2000;

const std::set<std::string, std::less<>> kAllowedModules = {"math"};

const std::set<std::string, std::less<>> kBannedNames = {
    "open",     "exec",      "eval",       "compile",  "__import__", "input",
    "breakpoint", "globals", "locals",     "vars",     "getattr",    "setattr",
    "delattr",  "os",        "sys",        "subprocess", "socket",   "shutil",
    "pathlib",  "importlib", "builtins",   "ctypes",   "urllib",     "http",
    "requests", "signal",    "threading",  "multiprocessing",
};

// Replaces comments and string-literal contents with spaces so the scans below
// only see code. Handles ', ", and triple-quoted strings.
std::string code_only(std::string_view source) {
  std::string out(source);
  std::size_t i = 0;
  while (i < out.size()) {
    const char c = out[i];
    if (c == '#') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
      continue;
    }
    if (c == '\'' || c == '"') {
      const bool triple = i + 2 < out.size() && out[i + 1] == c && out[i + 2] == c;
      const std::size_t quote_len = triple ? 3 : 1;
      i += quote_len;
      while (i < out.size()) {
        if (out[i] == '\\' && i + 1 < out.size()) {
          out[i] = out[i + 1] == '\n' ? '\n' : ' ';
          if (out[i + 1] != '\n') out[i + 1] = ' ';
          i += 2;
          continue;
        }
        if (out[i] == c && (!triple || (i + 2 < out.size() && out[i + 1] == c && out[i + 2] == c))) {
          i += quote_len;
          break;
        }
        if (!triple && out[i] == '\n') break;
        if (out[i] != '\n') out[i] = ' ';
        ++i;
      }
      continue;
    }
    ++i;
  }
  return out;
}

std::string top_module(std::string name) {
  name = trim(name);
  if (auto as = name.find(" as "); as != std::string::npos) name = trim(name.substr(0, as));
  if (auto dot = name.find('.'); dot != std::string::npos) name = name.substr(0, dot);
  return name;
}

std::string excerpt(std::string_view text) {
  if (text.size() <= kExcerpt) return std::string(text);
  return std::string(text.substr(text.size() - kExcerpt));
}

std::string literal(double value) {
  std::string s = format_shortest(value);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

void append_capped(std::string& buffer, const char* data, std::size_t n) {
  buffer.append(data, n);
  if (buffer.size() > kMaxCapture) buffer.erase(0, buffer.size() - kMaxCapture / 2);
}

}  // namespace

std::string_view status_name(Status status) {
  switch (status) {
    case Status::ok: return "ok";
    case Status::timeout: return "timeout";
    case Status::runtime_error: return "runtime_error";
    case Status::missing_ans: return "missing_ans";
    case Status::disallowed_construct: return "disallowed_construct";
    case Status::launcher_error: return "launcher_error";
  }
  return "?";
}

Preflight preflight(std::string_view source) {
  const std::string code = code_only(source);

  static const std::regex import_re(R"((^|[;\n])\s*import\s+([^;\n]+))");
  static const std::regex from_re(R"((^|[;\n])\s*from\s+([A-Za-z_][\w.]*)\s+import\b)");
  for (auto it = std::sregex_iterator(code.begin(), code.end(), import_re);
       it != std::sregex_iterator(); ++it) {
    std::stringstream names((*it)[2].str());
    std::string name;
    while (std::getline(names, name, ',')) {
      const std::string module = top_module(name);
      if (!kAllowedModules.contains(module)) return {false, "import of '" + module + "' is not allowed"};
    }
  }
  for (auto it = std::sregex_iterator(code.begin(), code.end(), from_re);
       it != std::sregex_iterator(); ++it) {
    const std::string module = top_module((*it)[2].str());
    if (!kAllowedModules.contains(module)) return {false, "import from '" + module + "' is not allowed"};
  }

  static const std::regex ident_re(R"([A-Za-z_]\w*)");
  for (auto it = std::sregex_iterator(code.begin(), code.end(), ident_re);
       it != std::sregex_iterator(); ++it) {
    const std::string name = it->str();
    if (kBannedNames.contains(name)) return {false, "use of '" + name + "' is not allowed"};
    if (name.size() > 4 && name.starts_with("__") && name.ends_with("__")) {
      return {false, "dunder name '" + name + "' is not allowed"};
    }
  }
  return {};
}

std::string encode_request(std::string_view source) {
  return json{{"source", std::string(source)}}.dump();
}

std::optional<RunnerReport> decode_report(std::string_view stdout_text) {
  // last line that is exactly the sentinel
  std::size_t search_end = stdout_text.size();
  std::size_t sentinel = std::string_view::npos;
  while (search_end > 0) {
    const std::size_t pos = stdout_text.rfind(kResultSentinel, search_end - 1);
    if (pos == std::string_view::npos) break;
    const bool line_start = pos == 0 || stdout_text[pos - 1] == '\n';
    const std::size_t after = pos + kResultSentinel.size();
    const bool line_end = after == stdout_text.size() || stdout_text[after] == '\n' ||
                          stdout_text[after] == '\r';
    if (line_start && line_end) {
      sentinel = pos;
      break;
    }
    if (pos == 0) break;
    search_end = pos;
  }
  if (sentinel == std::string_view::npos) return std::nullopt;

  std::size_t line_begin = stdout_text.find('\n', sentinel);
  if (line_begin == std::string_view::npos) return std::nullopt;
  ++line_begin;
  std::size_t line_end = stdout_text.find('\n', line_begin);
  const std::string_view line = stdout_text.substr(
      line_begin, line_end == std::string_view::npos ? std::string_view::npos : line_end - line_begin);

  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
  if (!j.is_object()) return std::nullopt;

  RunnerReport report;
  report.ok = j.value("ok", false);
  report.type = j.contains("type") && j["type"].is_string() ? j["type"].get<std::string>() : "";
  if (j.contains("error") && j["error"].is_string()) report.error = j["error"].get<std::string>();
  if (j.contains("ans")) {
    const json& ans = j["ans"];
    if (ans.is_boolean()) report.ans = ans.get<bool>();
    else if (ans.is_number()) report.ans = ans.get<double>();
  }
  return report;
}

ExecutionResult interpret_report(const RunnerReport& report) {
  ExecutionResult result;
  if (report.ok && report.ans) {
    result.status = Status::ok;
    result.value = report.ans;
    return result;
  }
  result.stderr_excerpt = report.error.value_or("");
  // an exception wins over the type field; without one, no usable scalar
  // (absent, None, string, list) means missing
  result.status = report.error && !report.ok ? Status::runtime_error : Status::missing_ans;
  return result;
}

std::string dsl_to_python(const dsl::Program& program) {
  std::ostringstream out;
  out << "import math\n";
  auto arg = [](const dsl::Arg& a) {
    if (const auto* ref = std::get_if<dsl::Ref>(&a)) return "step_" + std::to_string(ref->index);
    return literal(std::get<double>(a));
  };
  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    const auto& s = program.steps[i];
    const std::string a = arg(s.arg1), b = arg(s.arg2);
    out << "step_" << i << " = ";
    switch (s.op) {
      case dsl::Op::add: out << a << " + " << b; break;
      case dsl::Op::subtract: out << a << " - " << b; break;
      case dsl::Op::multiply: out << a << " * " << b; break;
      case dsl::Op::divide: out << a << " / " << b; break;
      case dsl::Op::exponent: out << "math.pow(" << a << ", " << b << ")"; break;
      case dsl::Op::greater: out << a << " > " << b; break;
      case dsl::Op::max: out << "max(" << a << ", " << b << ")"; break;
      case dsl::Op::min: out << "min(" << a << ", " << b << ")"; break;
    }
    out << "\n";
  }
  out << "ans = step_" << (program.steps.empty() ? 0 : program.steps.size() - 1) << "\n";
  return out.str();
}

CodeExecutor::CodeExecutor(RunnerConfig config)
    : config_(std::move(config)),
      workers_(std::make_unique<std::counting_semaphore<>>(std::max(1, config_.max_workers))) {}

ExecutionResult CodeExecutor::run_code(const ExecRequest& request) {
  if (trim(request.source).empty()) {
    return {Status::missing_ans, std::nullopt, "empty source"};
  }
  if (auto verdict = preflight(request.source); !verdict.ok) {
    return {Status::disallowed_construct, std::nullopt, verdict.reason};
  }
  if (config_.command.empty()) return {Status::launcher_error, std::nullopt, "no runner command"};

  workers_->acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*workers_};
  return spawn_and_wait(request);
}

ExecutionResult CodeExecutor::spawn_and_wait(const ExecRequest& request) {
  int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) return {Status::launcher_error, std::nullopt, std::strerror(errno)};
  if (pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0 ||
      pipe2(exec_pipe, O_CLOEXEC) != 0) {
    return {Status::launcher_error, std::nullopt, std::strerror(errno)};
  }

  std::vector<std::string> args = config_.command;
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1],
                   exec_pipe[0], exec_pipe[1]}) {
      close(fd);
    }
    return {Status::launcher_error, std::nullopt, std::string("fork: ") + std::strerror(errno)};
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    if (request.memory_cap > 0) {
      rlimit limit{request.memory_cap, request.memory_cap};
      setrlimit(RLIMIT_AS, &limit);
    }
    execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = write(exec_pipe[1], &err, sizeof err);
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  close(exec_pipe[1]);

  int exec_errno = 0;
  const bool exec_failed = read(exec_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno;
  close(exec_pipe[0]);
  if (exec_failed) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(err_pipe[0]);
    waitpid(pid, nullptr, 0);
    return {Status::launcher_error, std::nullopt,
            "cannot start '" + config_.command.front() + "': " + std::strerror(exec_errno)};
  }

  fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
  const std::string payload = encode_request(request.source) + "\n";
  std::size_t written = 0;
  int stdin_fd = in_pipe[1];
  std::string out_buf, err_buf;
  bool out_open = true, err_open = true;
  const auto deadline = Clock::now() + request.timeout;
  bool timed_out = false;

  while (out_open || err_open) {
    std::array<pollfd, 3> fds{};
    nfds_t n = 0;
    if (out_open) fds[n++] = {out_pipe[0], POLLIN, 0};
    if (err_open) fds[n++] = {err_pipe[0], POLLIN, 0};
    if (stdin_fd >= 0) fds[n++] = {stdin_fd, POLLOUT, 0};

    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      timed_out = true;
      break;
    }
    const int ready = poll(fds.data(), n, static_cast<int>(std::min<long long>(remaining, 100)));
    if (ready < 0 && errno != EINTR) break;
    for (nfds_t i = 0; i < n; ++i) {
      if (fds[i].revents == 0) continue;
      if (fds[i].fd == stdin_fd) {
        const ssize_t w = write(stdin_fd, payload.data() + written, payload.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = payload.size();
        if (written >= payload.size()) {
          close(stdin_fd);
          stdin_fd = -1;
        }
        continue;
      }
      std::array<char, 4096> buf;
      const ssize_t r = read(fds[i].fd, buf.data(), buf.size());
      const bool is_out = fds[i].fd == out_pipe[0];
      if (r > 0) {
        append_capped(is_out ? out_buf : err_buf, buf.data(), static_cast<std::size_t>(r));
      } else if (r == 0 || (r < 0 && errno != EINTR && errno != EAGAIN)) {
        (is_out ? out_open : err_open) = false;
      }
    }
  }

  if (stdin_fd >= 0) close(stdin_fd);
  close(out_pipe[0]);
  close(err_pipe[0]);

  if (timed_out) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    return {Status::timeout, std::nullopt,
            "killed after " + std::to_string(request.timeout.count()) + " ms"};
  }

  int wstatus = 0;
  waitpid(pid, &wstatus, 0);

  if (auto report = decode_report(out_buf)) {
    ExecutionResult result = interpret_report(*report);
    if (result.status != Status::ok && result.stderr_excerpt.empty()) {
      result.stderr_excerpt = excerpt(err_buf);
    }
    return result;
  }
  std::string why = WIFSIGNALED(wstatus) ? "runner killed by signal " + std::to_string(WTERMSIG(wstatus))
                                         : "runner exited with status " +
                                               std::to_string(WEXITSTATUS(wstatus)) +
                                               " without a result line";
  return {Status::runtime_error, std::nullopt, why + (err_buf.empty() ? "" : ": " + excerpt(err_buf))};
}

}  // namespace finqa::codeexec
