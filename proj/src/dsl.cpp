#include "finqa/dsl.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "finqa/numeric.hpp"

namespace finqa::dsl {
namespace {

struct OpName {
  Op op;
  std::string_view name;
};
constexpr std::array<OpName, 8> kOps = {{
    {Op::add, "add"},
    {Op::subtract, "subtract"},
    {Op::multiply, "multiply"},
    {Op::divide, "divide"},
    {Op::exponent, "exponent"},
    {Op::greater, "greater"},
    {Op::max, "max"},
    {Op::min, "min"},
}};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c) || c == '-'; }

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Program parse() {
    Program program;
    skip_ws();
    if (at_end()) fail("empty program");
    for (;;) {
      program.steps.push_back(parse_step(static_cast<int>(program.steps.size())));
      skip_ws();
      if (at_end()) break;
      expect(',');
    }
    return program;
  }

 private:
  Step parse_step(int index) {
    skip_ws();
    const std::size_t start = pos_;
    if (at_end() || !is_ident_start(text_[pos_])) fail("expected operator name");
    while (!at_end() && is_ident_char(text_[pos_])) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    auto op = op_from_name(name);
    if (!op) fail("unknown operator '" + std::string(name) + "'", start);

    Step step;
    step.op = *op;
    expect('(');
    step.arg1 = parse_arg(index);
    expect(',');
    step.arg2 = parse_arg(index);
    skip_ws();
    if (!at_end() && text_[pos_] == ',') fail("operator takes exactly two arguments");
    expect(')');
    return step;
  }

  Arg parse_arg(int index) {
    skip_ws();
    const std::size_t start = pos_;
    if (!at_end() && text_[pos_] == '#') {
      ++pos_;
      const std::size_t digits = pos_;
      while (!at_end() && is_digit(text_[pos_])) ++pos_;
      if (digits == pos_) fail("expected step index after '#'", start);
      int ref = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + digits, text_.data() + pos_, ref);
      if (ec != std::errc{} || ref >= index) {
        fail("reference #" + std::string(text_.substr(digits, pos_ - digits)) +
                 " does not point to an earlier step",
             start);
      }
      return Ref{ref};
    }
    std::size_t p = pos_;
    if (p < text_.size() && (text_[p] == '-' || text_[p] == '+')) ++p;
    if (p >= text_.size() || !(is_digit(text_[p]) || text_[p] == '.')) fail("malformed number", start);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + p, text_.data() + text_.size(), value);
    if (ec != std::errc{} || !std::isfinite(value)) fail("malformed number", start);
    if (text_[pos_] == '-') value = -value;
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  void expect(char c) {
    skip_ws();
    if (at_end() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (!at_end() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                         text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool at_end() const { return pos_ >= text_.size(); }

  [[noreturn]] void fail(const std::string& message) { fail(message, pos_); }
  [[noreturn]] void fail(const std::string& message, std::size_t at) {
    throw ParseError(message + " at position " + std::to_string(at), at);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string arg_to_string(const Arg& arg) {
  if (const auto* ref = std::get_if<Ref>(&arg)) return "#" + std::to_string(ref->index);
  return format_shortest(std::get<double>(arg));
}

// Equal operands can still differ in sign bit (0.0 vs -0.0); pick by sign so
// that swapping arguments never changes the result bits.
double max_commutative(double a, double b) {
  if (a == b) return std::signbit(a) ? b : a;
  return a > b ? a : b;
}

double min_commutative(double a, double b) {
  if (a == b) return std::signbit(a) ? a : b;
  return a < b ? a : b;
}

}  // namespace

std::string_view op_name(Op op) {
  for (const auto& entry : kOps) {
    if (entry.op == op) return entry.name;
  }
  return "?";
}

std::optional<Op> op_from_name(std::string_view name) {
  std::string lowered = to_lower(trim(name));
  if (lowered == "greater-than" || lowered == "greater_than") lowered = "greater";
  for (const auto& entry : kOps) {
    if (entry.name == lowered) return entry.op;
  }
  return std::nullopt;
}

AnswerKind Program::answer_kind() const {
  return !steps.empty() && steps.back().op == Op::greater ? AnswerKind::boolean
                                                          : AnswerKind::numerical;
}

std::string value_to_string(const Value& value, int decimals) {
  if (const auto* truth = std::get_if<bool>(&value)) return *truth ? "yes" : "no";
  return format_fixed(std::get<double>(value), decimals);
}

ParseError::ParseError(const std::string& what, std::size_t position)
    : std::runtime_error(what), position_(position) {}

Program parse_program(std::string_view text) { return Parser(text).parse(); }

std::string to_canonical_string(const Program& program) {
  std::string out;
  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    const auto& step = program.steps[i];
    if (i > 0) out += ", ";
    out += op_name(step.op);
    out += '(';
    out += arg_to_string(step.arg1);
    out += ", ";
    out += arg_to_string(step.arg2);
    out += ')';
  }
  return out;
}

Value execute(const Program& program) {
  if (program.steps.empty()) throw ExecutionError("empty program");
  std::vector<Value> results;
  results.reserve(program.steps.size());

  auto resolve = [&](const Arg& arg, std::size_t step_index) -> double {
    if (const auto* literal = std::get_if<double>(&arg)) return *literal;
    const int k = std::get<Ref>(arg).index;
    if (k < 0 || static_cast<std::size_t>(k) >= step_index) {
      throw ExecutionError("step " + std::to_string(step_index) + " references #" +
                           std::to_string(k) + " which is not an earlier step");
    }
    const auto* number = std::get_if<double>(&results[static_cast<std::size_t>(k)]);
    if (!number) {
      throw ExecutionError("step " + std::to_string(step_index) +
                           " uses boolean result #" + std::to_string(k));
    }
    return *number;
  };

  for (std::size_t i = 0; i < program.steps.size(); ++i) {
    const Step& step = program.steps[i];
    const double a = resolve(step.arg1, i);
    const double b = resolve(step.arg2, i);
    double out = 0.0;
    switch (step.op) {
      case Op::add: out = a + b; break;
      case Op::subtract: out = a - b; break;
      case Op::multiply: out = a * b; break;
      case Op::divide:
        if (b == 0.0) throw ExecutionError("division by zero in step " + std::to_string(i));
        out = a / b;
        break;
      case Op::exponent: out = std::pow(a, b); break;
      case Op::max: out = max_commutative(a, b); break;
      case Op::min: out = min_commutative(a, b); break;
      case Op::greater:
        results.emplace_back(a > b);
        continue;
    }
    if (!std::isfinite(out)) {
      throw ExecutionError("non-finite result in step " + std::to_string(i) + " (" +
                           std::string(op_name(step.op)) + ")");
    }
    results.emplace_back(out);
  }
  return results.back();
}

Program from_extraction(const RawProgram& raw) {
  if (raw.steps.empty()) throw ConversionError("program has no steps");
  Program program;
  for (std::size_t i = 0; i < raw.steps.size(); ++i) {
    const RawStep& rs = raw.steps[i];
    if (rs.key != static_cast<int>(i)) {
      throw ConversionError("step keys must run #0..#" + std::to_string(raw.steps.size() - 1) +
                            " without gaps; found #" + std::to_string(rs.key) +
                            " at position " + std::to_string(i));
    }
    auto op = op_from_name(rs.operation);
    if (!op) throw ConversionError("step #" + std::to_string(i) + ": unknown operation '" +
                                   rs.operation + "'");

    auto convert = [&](const std::optional<std::string>& text, const char* which) -> Arg {
      if (!text || trim(*text).empty()) {
        throw ConversionError("step #" + std::to_string(i) + ": missing " + which);
      }
      const std::string t = trim(*text);
      if (t.front() == '#') {
        const std::string digits = t.substr(1);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), is_digit)) {
          throw ConversionError("step #" + std::to_string(i) + ": malformed reference '" + t +
                                "' in " + which);
        }
        const int k = std::stoi(digits);
        if (k >= static_cast<int>(i)) {
          throw ConversionError("step #" + std::to_string(i) + ": " + which + " references #" +
                                digits + " which is not an earlier step");
        }
        return Ref{k};
      }
      auto number = parse_number(t);
      if (!number || !std::isfinite(*number)) {
        throw ConversionError("step #" + std::to_string(i) + ": " + which + " '" + t +
                              "' is not a number");
      }
      return *number;
    };

    program.steps.push_back(Step{*op, convert(rs.arg1, "arg1"), convert(rs.arg2, "arg2")});
  }
  return program;
}

std::optional<int> count_steps_lenient(std::string_view text) {
  int depth = 0;
  int steps = 0;
  bool open_seen = false;
  bool name_seen = false;
  for (char c : text) {
    if (c == '(') {
      if (depth == 0) {
        if (!name_seen) return std::nullopt;
        open_seen = true;
      }
      ++depth;
    } else if (c == ')') {
      if (--depth < 0) return std::nullopt;
      if (depth == 0) {
        ++steps;
        open_seen = false;
        name_seen = false;
      }
    } else if (depth == 0) {
      if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        if (name_seen && c == ',') return std::nullopt;
        continue;
      }
      if (open_seen) return std::nullopt;
      name_seen = true;
    }
  }
  if (depth != 0 || name_seen || steps == 0) return std::nullopt;
  return steps;
}

}  // namespace finqa::dsl
