#pragma once

// Shared by the unit tests and the acceptance binary: fixture paths, a random
// DSL program generator and an independent reference evaluator for it.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <unistd.h>

#include "finqa/dsl.hpp"

namespace finqa::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(FINQA_FIXTURE_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("finqa-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---- random programs -------------------------------------------------------

// Literals in [-1e6, 1e6]; literal divisors have magnitude >= 1e-6. Step count
// 1..max_steps. `greater` only appears as the final step unless allow_bool_mid.
class ProgramGen {
 public:
  explicit ProgramGen(std::uint64_t seed) : rng_(seed) {}

  dsl::Program next(int max_steps = 4, bool allow_bool_mid = false) {
    std::uniform_int_distribution<int> n_steps(1, max_steps);
    std::uniform_int_distribution<int> op_pick(0, 7);
    const int n = n_steps(rng_);
    dsl::Program p;
    for (int i = 0; i < n; ++i) {
      auto op = static_cast<dsl::Op>(op_pick(rng_));
      if (op == dsl::Op::greater && i + 1 < n && !allow_bool_mid) op = dsl::Op::add;
      dsl::Step s;
      s.op = op;
      s.arg1 = arg(i, false);
      s.arg2 = arg(i, op == dsl::Op::divide);
      if (op == dsl::Op::exponent) {
        // keep most exponents small enough to stay finite
        if (std::holds_alternative<double>(s.arg2) && coin(0.8)) s.arg2 = small_literal();
      }
      p.steps.push_back(s);
    }
    return p;
  }

 private:
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  double small_literal() {
    return static_cast<double>(std::uniform_int_distribution<int>(-3, 3)(rng_));
  }

  double literal(bool divisor) {
    switch (std::uniform_int_distribution<int>(0, 3)(rng_)) {
      case 0: return static_cast<double>(std::uniform_int_distribution<int>(-1000, 1000)(rng_));
      case 1: return std::round(std::uniform_real_distribution<double>(-1e4, 1e4)(rng_) * 100) / 100;
      case 2: {
        double v = std::uniform_real_distribution<double>(-1e6, 1e6)(rng_);
        return divisor && std::abs(v) < 1e-6 ? 1e-6 : v;
      }
      default: {
        const double mag = std::pow(10.0, std::uniform_real_distribution<double>(-6, 6)(rng_));
        return coin(0.5) ? mag : -mag;
      }
    }
  }

  dsl::Arg arg(int step_index, bool divisor) {
    if (step_index > 0 && coin(0.5)) {
      return dsl::Ref{std::uniform_int_distribution<int>(0, step_index - 1)(rng_)};
    }
    double v = literal(divisor);
    if (divisor && v == 0.0) v = 1.0;
    return v;
  }

  std::mt19937_64 rng_;
};

// ---- reference evaluator ---------------------------------------------------

struct OracleResult {
  bool error = false;
  bool is_bool = false;
  double number = 0.0;
  bool truth = false;
};

// Evaluates step k by recursively re-evaluating every step it references.
// Written from the language rules, not from the interpreter.
class RecursiveOracle {
 public:
  explicit RecursiveOracle(const dsl::Program& p) : p_(p) {}

  OracleResult run() const {
    if (p_.steps.empty()) return {true};
    // every step runs, so a failing step fails the program even if unused
    OracleResult last;
    for (int k = 0; k < static_cast<int>(p_.steps.size()); ++k) {
      last = eval(k);
      if (last.error) return last;
    }
    return last;
  }

 private:
  OracleResult eval(int k) const {
    const dsl::Step& s = p_.steps[static_cast<std::size_t>(k)];
    double a = 0, b = 0;
    if (!operand(s.arg1, k, a) || !operand(s.arg2, k, b)) return {true};
    OracleResult r;
    switch (s.op) {
      case dsl::Op::add: r.number = a + b; break;
      case dsl::Op::subtract: r.number = a - b; break;
      case dsl::Op::multiply: r.number = a * b; break;
      case dsl::Op::divide:
        if (b == 0) return {true};
        r.number = a / b;
        break;
      case dsl::Op::exponent: r.number = std::pow(a, b); break;
      case dsl::Op::greater:
        r.is_bool = true;
        r.truth = a > b;
        return r;
      case dsl::Op::max:
        if (a == b) r.number = std::signbit(a) && std::signbit(b) ? a : std::abs(a);
        else r.number = a > b ? a : b;
        break;
      case dsl::Op::min:
        if (a == b) r.number = std::signbit(a) || std::signbit(b) ? -std::abs(a) : a;
        else r.number = a < b ? a : b;
        break;
    }
    if (std::isnan(r.number) || std::isinf(r.number)) return {true};
    return r;
  }

  bool operand(const dsl::Arg& arg, int k, double& out) const {
    if (const double* d = std::get_if<double>(&arg)) {
      out = *d;
      return true;
    }
    const int j = std::get<dsl::Ref>(arg).index;
    if (j < 0 || j >= k) return false;
    const OracleResult r = eval(j);
    if (r.error || r.is_bool) return false;
    out = r.number;
    return true;
  }

  const dsl::Program& p_;
};

// True when interpreter and oracle agree bit-for-bit, including on errors.
inline bool agrees_with_oracle(const dsl::Program& p) {
  const OracleResult expect = RecursiveOracle(p).run();
  dsl::Value got;
  try {
    got = dsl::execute(p);
  } catch (const dsl::ExecutionError&) {
    return expect.error;
  }
  if (expect.error) return false;
  if (expect.is_bool) return std::holds_alternative<bool>(got) && std::get<bool>(got) == expect.truth;
  if (!std::holds_alternative<double>(got)) return false;
  const double v = std::get<double>(got);
  return std::memcmp(&v, &expect.number, sizeof v) == 0;
}

}  // namespace finqa::testing
