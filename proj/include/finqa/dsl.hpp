#pragma once

// The arithmetic program language: an ordered list of binary steps whose
// arguments are literals or "#k" references to earlier step results.
//
//   program := step ("," step)*
//   step    := ident "(" arg "," arg ")"
//   arg     := number | "#" integer
//
// Eight operators, no table operators and no named constants.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace finqa::dsl {

enum class Op { add, subtract, multiply, divide, exponent, greater, max, min };

std::string_view op_name(Op op);
/// Accepts the canonical names plus "greater-than"/"greater_than"; case-insensitive.
std::optional<Op> op_from_name(std::string_view name);

struct Ref {
  int index = 0;
  bool operator==(const Ref&) const = default;
};

using Arg = std::variant<double, Ref>;

struct Step {
  Op op = Op::add;
  Arg arg1 = 0.0;
  Arg arg2 = 0.0;
  bool operator==(const Step&) const = default;
};

enum class AnswerKind { numerical, boolean };

struct Program {
  std::vector<Step> steps;

  /// boolean iff the final step is `greater`.
  AnswerKind answer_kind() const;
  bool operator==(const Program&) const = default;
};

/// number or truth value; only `greater` produces a truth value.
using Value = std::variant<double, bool>;

std::string value_to_string(const Value& value, int decimals = 5);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class ConversionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inline form "subtract(39.2, 28.2), divide(#0, 28.2)".
Program parse_program(std::string_view text);

/// Inverse of parse_program: ", " between steps and arguments, shortest
/// round-trip number formatting.
std::string to_canonical_string(const Program& program);

/// Throws ExecutionError on division by zero, non-finite results and on a
/// boolean intermediate feeding a later step.
Value execute(const Program& program);

/// Step structure as pulled out of an LLM "Program" block, before validation.
/// Argument strings are already stripped of commas, "$" and "%".
struct RawStep {
  int key = 0;  // k of "#k"
  std::string operation;
  std::optional<std::string> arg1;
  std::optional<std::string> arg2;
};

struct RawProgram {
  std::vector<RawStep> steps;  // ordered by key
  std::optional<std::string> declared_answer;
};

Program from_extraction(const RawProgram& raw);

/// Counts top-level steps of a gold program without requiring it to be in
/// this DSL (upstream gold programs may use table_* operators or const_*
/// arguments). Returns nullopt for empty or structurally broken text.
std::optional<int> count_steps_lenient(std::string_view text);

}  // namespace finqa::dsl
