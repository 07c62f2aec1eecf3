#pragma once

// Pulls structured artifacts out of free-form completion text. None of these
// functions throw on input text: every input maps to a payload or to a
// categorized failure.

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "finqa/dsl.hpp"
#include "finqa/numeric.hpp"

namespace finqa::extract {

enum class Kind { python_source, dsl_structure, scalar_answer, boolean_answer };
enum class Failure { no_code_found, no_program_found, unparseable_answer };

std::string_view kind_name(Kind kind);
std::string_view failure_name(Failure failure);

struct ScalarAnswer {
  double value = 0.0;
  UnitHint hint;
};

using Payload = std::variant<std::string, dsl::RawProgram, ScalarAnswer, bool>;

struct Outcome {
  Kind kind = Kind::scalar_answer;
  std::optional<Payload> payload;
  std::optional<Failure> failure;
  std::string diagnostic;

  bool ok() const { return payload.has_value(); }
  const std::string& source() const { return std::get<std::string>(*payload); }
  const dsl::RawProgram& raw_program() const { return std::get<dsl::RawProgram>(*payload); }
  const ScalarAnswer& scalar() const { return std::get<ScalarAnswer>(*payload); }
  bool truth() const { return std::get<bool>(*payload); }
};

/// Python source following a "#Python" marker or inside a markdown fence;
/// without either, everything from the first assignment line onward.
Outcome extract_python(std::string_view text);

/// The last brace-delimited region holding a "Program" key, parsed
/// tolerantly (bare keys, quoted or bare values, unclosed trailing braces).
Outcome extract_dsl(std::string_view text);

/// First scalar or yes/no/true/false token of an answer-extraction reply.
Outcome extract_final_answer(std::string_view text);

/// Renders a program back into the {"Program": {"#0": {...}}} block the
/// program-extraction prompt asks for.
std::string to_program_block(const dsl::Program& program,
                             const std::optional<std::string>& declared_answer = std::nullopt);

}  // namespace finqa::extract
